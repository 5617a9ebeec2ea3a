#include "stimkit/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "stimkit/csv.hpp"

namespace stimkit::panel {

namespace {

std::vector<ConsumerRecord> load_consumers(const std::string& path, IngestReport& rep) {
  CsvReader csv(path);
  const auto cols = csv.require_columns(
      {"consumer_id", "age", "female", "member", "phone_price", "housing_price", "n_orders_6m",
       "spend_per_order_6m", "n_restaurants_3km", "nonsme_share_3km", "grid_x", "grid_y",
       "treat"});
  std::vector<ConsumerRecord> out;
  std::vector<std::string> f;
  while (csv.next(f)) {
    bool missing = false;
    for (const size_t c : cols) {
      if (CsvReader::is_missing(f[c])) {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++rep.dropped_consumers_missing;
      continue;
    }
    ConsumerRecord r;
    r.consumer_id = f[cols[0]];
    r.age = csv.as_double(f, cols[1]);
    r.female = csv.as_double(f, cols[2]);
    r.member = csv.as_double(f, cols[3]);
    r.phone_price = csv.as_double(f, cols[4]);
    r.housing_price = csv.as_double(f, cols[5]);
    r.n_orders_6m = csv.as_double(f, cols[6]);
    r.spend_per_order_6m = csv.as_double(f, cols[7]);
    r.n_restaurants_3km = csv.as_double(f, cols[8]);
    r.nonsme_share_3km = csv.as_double(f, cols[9]);
    r.grid_x = csv.as_double(f, cols[10]);
    r.grid_y = csv.as_double(f, cols[11]);
    r.treat = static_cast<int>(csv.as_long(f, cols[12]));
    if (r.female != 0 && r.female != 1) csv.fail(cols[2], "must be 0 or 1");
    if (r.member != 0 && r.member != 1) csv.fail(cols[3], "must be 0 or 1");
    if (r.treat != 0 && r.treat != 1) csv.fail(cols[12], "must be 0 or 1");
    if (r.nonsme_share_3km < 0 || r.nonsme_share_3km > 1)
      csv.fail(cols[9], "share outside [0,1]");
    if (r.age < 0 || r.phone_price < 0 || r.housing_price < 0 || r.n_orders_6m < 0 ||
        r.spend_per_order_6m < 0 || r.n_restaurants_3km < 0)
      csv.fail(cols[1], "negative attribute");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError(path + ": no consumers");
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.consumer_id < b.consumer_id; });
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i].consumer_id == out[i - 1].consumer_id)
      throw DataError(path + ": duplicate consumer_id '" + out[i].consumer_id + "'");
  }
  return out;
}

std::vector<EstablishmentRecord> load_establishments(const std::string& path) {
  CsvReader csv(path);
  const auto cols = csv.require_columns({"establishment_id", "avg_monthly_sales_6m",
                                         "avg_order_price_6m", "sme_flag", "grid_x", "grid_y"});
  std::vector<EstablishmentRecord> out;
  std::vector<std::string> f;
  while (csv.next(f)) {
    EstablishmentRecord r;
    r.establishment_id = f[cols[0]];
    r.avg_monthly_sales_6m = csv.as_double(f, cols[1]);
    r.avg_order_price_6m = csv.as_double(f, cols[2]);
    r.sme_flag = static_cast<int>(csv.as_long(f, cols[3]));
    r.grid_x = csv.as_double(f, cols[4]);
    r.grid_y = csv.as_double(f, cols[5]);
    if (r.sme_flag != 0 && r.sme_flag != 1) csv.fail(cols[3], "must be 0 or 1");
    if (r.avg_monthly_sales_6m <= 0) csv.fail(cols[1], "must be positive");
    if (r.avg_order_price_6m <= 0) csv.fail(cols[2], "must be positive");
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.establishment_id < b.establishment_id; });
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i].establishment_id == out[i - 1].establishment_id)
      throw DataError(path + ": duplicate establishment_id '" + out[i].establishment_id + "'");
  }
  return out;
}

std::vector<OrderEvent> load_orders(const std::string& path, const PeriodConfig& period,
                                    const std::unordered_set<std::string>& consumer_ids,
                                    const std::unordered_set<std::string>& establishment_ids,
                                    IngestReport& rep) {
  CsvReader csv(path);
  const auto cols =
      csv.require_columns({"order_id", "consumer_id", "establishment_id", "date", "gross_amount",
                           "coupon_discount", "n_sku", "n_utensil_sets", "category"});
  std::vector<OrderEvent> out;
  std::vector<std::string> f;
  while (csv.next(f)) {
    OrderEvent o;
    o.order_id = f[cols[0]];
    o.consumer_id = f[cols[1]];
    o.establishment_id = f[cols[2]];
    o.date = csv.as_date(f, cols[3]);
    o.gross_amount = csv.as_double(f, cols[4]);
    o.coupon_discount = csv.as_double(f, cols[5]);
    o.n_sku = static_cast<int>(csv.as_long(f, cols[6]));
    o.n_utensil_sets = static_cast<int>(csv.as_long(f, cols[7]));
    const std::string& cat = f[cols[8]];
    if (cat == "restaurant") o.category = OrderCategory::restaurant;
    else if (cat == "grocery") o.category = OrderCategory::grocery;
    else csv.fail(cols[8], "unknown category '" + cat + "'");

    if (!consumer_ids.count(o.consumer_id))
      throw DataError(path + ": order '" + o.order_id + "' references unknown consumer '" +
                      o.consumer_id + "'");
    if (!establishment_ids.count(o.establishment_id))
      throw DataError(path + ": order '" + o.order_id + "' references unknown establishment '" +
                      o.establishment_id + "'");
    if (o.gross_amount <= 0)
      throw DataError(path + ": order '" + o.order_id + "' has non-positive gross_amount");
    if (o.n_sku < 0 || o.n_utensil_sets < 0)
      throw DataError(path + ": order '" + o.order_id + "' has negative counts");
    const double disc = o.coupon_discount;
    if (disc != 0 && disc != 15 && disc != 30)
      throw DataError(path + ": order '" + o.order_id + "' has coupon_discount " +
                      CsvWriter::num(disc) + " outside {0,15,30}");
    if (disc == 15 && o.gross_amount < 50)
      throw DataError(path + ": order '" + o.order_id +
                      "' redeems a 50-minus-15 coupon below the 50 threshold");
    if (disc == 30 && o.gross_amount < 100)
      throw DataError(path + ": order '" + o.order_id +
                      "' redeems a 100-minus-30 coupon below the 100 threshold");
    if (disc > 0 && o.category != OrderCategory::restaurant)
      throw DataError(path + ": order '" + o.order_id + "' redeems a coupon on a non-restaurant order");
    if (!period.contains(o.date)) {
      ++rep.orders_outside_window;
      continue;
    }
    out.push_back(std::move(o));
  }
  std::sort(out.begin(), out.end(), [](const OrderEvent& a, const OrderEvent& b) {
    if (a.consumer_id != b.consumer_id) return a.consumer_id < b.consumer_id;
    if (a.date != b.date) return a.date < b.date;
    return a.order_id < b.order_id;
  });
  return out;
}

std::vector<ClaimRecord> load_claims(const std::string& path, const PeriodConfig& period,
                                     const std::unordered_set<std::string>& consumer_ids,
                                     IngestReport& rep) {
  CsvReader csv(path);
  const auto cols = csv.require_columns({"consumer_id", "date", "claimed"});
  std::vector<ClaimRecord> out;
  std::vector<std::string> f;
  while (csv.next(f)) {
    if (csv.as_long(f, cols[2]) == 0) continue;
    ClaimRecord c;
    c.consumer_id = f[cols[0]];
    c.date = csv.as_date(f, cols[1]);
    if (!consumer_ids.count(c.consumer_id))
      throw DataError(path + ": claim references unknown consumer '" + c.consumer_id + "'");
    if (c.date < period.treat_start || c.date > period.treat_end) {
      ++rep.claims_outside_window;
      continue;
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const ClaimRecord& a, const ClaimRecord& b) {
    if (a.consumer_id != b.consumer_id) return a.consumer_id < b.consumer_id;
    return a.date < b.date;
  });
  return out;
}

}  // namespace

WealthIndex wealth_index(const std::vector<double>& phone_price,
                         const std::vector<double>& housing_price) {
  if (phone_price.size() != housing_price.size() || phone_price.size() < 2)
    throw EstimationError("wealth index needs two equal-length columns, n >= 2");
  std::vector<double> p = phone_price, h = housing_price;
  standardize(p, "phone_price");
  standardize(h, "housing_price");
  long double sph = 0;
  for (size_t i = 0; i < p.size(); ++i) sph += p[i] * h[i];
  const double r = static_cast<double>(sph / (static_cast<double>(p.size()) - 1.0));

  // Correlation matrix [[1, r], [r, 1]]: leading eigenvector is (1, 1)/sqrt(2)
  // for r >= 0 and (1, -1)/sqrt(2) otherwise. Sign-normalize so the index
  // correlates positively with housing price.
  WealthIndex w;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  if (r >= 0) {
    w.loading_phone = inv_sqrt2;
    w.loading_housing = inv_sqrt2;
  } else {
    w.loading_phone = -inv_sqrt2;
    w.loading_housing = inv_sqrt2;
  }
  w.index.resize(p.size());
  for (size_t i = 0; i < p.size(); ++i)
    w.index[i] = w.loading_phone * p[i] + w.loading_housing * h[i];
  standardize(w.index, "wealth");
  return w;
}

Dataset ingest_dataset(const IngestPaths& paths, const PeriodConfig& period,
                       IngestReport* report) {
  period.validate();
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  Dataset data;
  data.period = period;
  data.consumers = load_consumers(paths.consumers, rep);
  data.establishments = load_establishments(paths.establishments);

  std::unordered_set<std::string> cids, eids;
  for (const auto& c : data.consumers) cids.insert(c.consumer_id);
  for (const auto& e : data.establishments) eids.insert(e.establishment_id);

  data.orders = load_orders(paths.orders, period, cids, eids, rep);
  if (!paths.claims.empty()) data.claims = load_claims(paths.claims, period, cids, rep);

  // Derived wealth index over the retained consumers.
  std::vector<double> phone, housing;
  phone.reserve(data.consumers.size());
  housing.reserve(data.consumers.size());
  for (const auto& c : data.consumers) {
    phone.push_back(c.phone_price);
    housing.push_back(c.housing_price);
  }
  const WealthIndex w = wealth_index(phone, housing);
  for (size_t i = 0; i < data.consumers.size(); ++i) data.consumers[i].wealth = w.index[i];

  rep.n_consumers = data.consumers.size();
  rep.n_orders = data.orders.size();
  rep.n_establishments = data.establishments.size();
  rep.n_claims = data.claims.size();
  if (rep.dropped_consumers_missing > 0)
    rep.warnings.push_back("dropped " + std::to_string(rep.dropped_consumers_missing) +
                           " consumers with missing attributes");
  if (rep.orders_outside_window > 0)
    rep.warnings.push_back("excluded " + std::to_string(rep.orders_outside_window) +
                           " orders outside the evaluation window");
  if (rep.claims_outside_window > 0)
    rep.warnings.push_back("excluded " + std::to_string(rep.claims_outside_window) +
                           " claims outside the treatment window");
  return data;
}

DailyPanel build_daily_panel(const Dataset& data, CategoryFilter filter, bool include_post) {
  data.period.validate();
  if (data.consumers.empty()) throw DataError("no consumers");

  DailyPanel p;
  p.day0 = data.period.pre_start;
  const int64_t last = include_post ? data.period.post_end : data.period.treat_end;
  p.n_days = static_cast<int>(last - p.day0 + 1);
  if (p.n_days <= 0) throw ConfigError("empty panel window");

  p.consumer_ids.reserve(data.consumers.size());
  p.treat.reserve(data.consumers.size());
  for (const auto& c : data.consumers) {
    p.consumer_ids.push_back(c.consumer_id);
    p.treat.push_back(static_cast<uint8_t>(c.treat));
  }
  p.day_tag.resize(p.n_days);
  for (int d = 0; d < p.n_days; ++d) p.day_tag[d] = data.period.tag(p.day0 + d);

  const size_t n_cells = data.consumers.size() * static_cast<size_t>(p.n_days);
  p.oop.assign(n_cells, 0.0);
  p.total.assign(n_cells, 0.0);
  p.unsub.assign(n_cells, 0.0);
  p.n_orders.assign(n_cells, 0.0);
  p.n_sku.assign(n_cells, 0.0);
  p.n_utensils.assign(n_cells, 0.0);

  const auto cmap = data.consumer_index_map();
  for (const auto& o : data.orders) {
    if (filter == CategoryFilter::restaurant && o.category != OrderCategory::restaurant) continue;
    if (filter == CategoryFilter::grocery && o.category != OrderCategory::grocery) continue;
    if (o.date < p.day0 || o.date > last) continue;
    const size_t c = cmap.at(o.consumer_id);
    const size_t cell = p.cell(c, static_cast<int>(o.date - p.day0));
    p.total[cell] += o.gross_amount;
    p.oop[cell] += o.gross_amount - o.coupon_discount;
    if (o.coupon_discount == 0) p.unsub[cell] += o.gross_amount;
    p.n_orders[cell] += 1;
    p.n_sku[cell] += o.n_sku;
    p.n_utensils[cell] += o.n_utensil_sets;
  }
  return p;
}

std::vector<GridCell> grid_aggregate(const std::vector<ConsumerRecord>& consumers,
                                     const std::vector<double>& values,
                                     const std::vector<uint8_t>& include, double cell_km) {
  if (values.size() != consumers.size() || include.size() != consumers.size())
    throw ConfigError("grid_aggregate: values/include must align with consumers");
  if (!(cell_km > 0)) throw ConfigError("grid_aggregate: cell size must be positive");

  std::map<std::pair<int64_t, int64_t>, GridCell> cells;
  for (size_t i = 0; i < consumers.size(); ++i) {
    if (!include[i]) continue;
    const int64_t ix = static_cast<int64_t>(std::floor(consumers[i].grid_x / cell_km));
    const int64_t iy = static_cast<int64_t>(std::floor(consumers[i].grid_y / cell_km));
    auto& cell = cells[{ix, iy}];
    cell.ix = ix;
    cell.iy = iy;
    cell.n += 1;
    if (consumers[i].treat) cell.n_treated += 1;
    cell.total += values[i];
  }
  std::vector<GridCell> out;
  out.reserve(cells.size());
  for (auto& [key, cell] : cells) {
    cell.mean = cell.total / static_cast<double>(cell.n);
    cell.flagged = cell.n_treated < 2;
    out.push_back(cell);
  }
  return out;
}

std::vector<double> realized_subsidy(const Dataset& data) {
  std::vector<double> out(data.consumers.size(), 0.0);
  const auto index = data.consumer_index_map();
  for (const auto& o : data.orders) {
    if (o.coupon_discount <= 0) continue;
    if (data.period.tag(o.date) != PeriodTag::treat) continue;
    out[index.at(o.consumer_id)] += o.coupon_discount;
  }
  return out;
}

}  // namespace stimkit::panel

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stimkit/incidence.hpp"

namespace stimkit::incidence {

namespace {

bool in_treat_window(const Dataset& data, int64_t day) {
  return data.period.tag(day) == PeriodTag::treat;
}

}  // namespace

AllocationMatrix allocation_matrix(const Dataset& data) {
  AllocationMatrix out;
  out.establishment_ids.reserve(data.establishments.size());
  for (const auto& e : data.establishments) out.establishment_ids.push_back(e.establishment_id);
  const auto est_index = data.establishment_index_map();

  std::vector<size_t> treated_rows;  // indices into data.consumers
  std::vector<size_t> row_of_consumer(data.consumers.size(), SIZE_MAX);
  for (size_t c = 0; c < data.consumers.size(); ++c) {
    if (!data.consumers[c].treat) continue;
    row_of_consumer[c] = treated_rows.size();
    treated_rows.push_back(c);
    out.consumer_ids.push_back(data.consumers[c].consumer_id);
  }

  // Orders are sorted by (consumer, date, order_id); accumulate spend per
  // (row, establishment) into dense per-row maps collected in index order.
  std::vector<std::vector<std::pair<uint32_t, double>>> spend(treated_rows.size());
  const auto consumer_index = data.consumer_index_map();
  for (const auto& o : data.orders) {
    if (o.category != OrderCategory::restaurant) continue;
    if (!in_treat_window(data, o.date)) continue;
    const size_t c = consumer_index.at(o.consumer_id);
    const size_t row = row_of_consumer[c];
    if (row == SIZE_MAX) continue;  // control consumer
    const auto eit = est_index.find(o.establishment_id);
    if (eit == est_index.end())
      throw DataError("allocation: unknown establishment '" + o.establishment_id + "'");
    const auto k = static_cast<uint32_t>(eit->second);
    auto& entries = spend[row];
    auto pos = std::lower_bound(entries.begin(), entries.end(), k,
                                [](const auto& a, uint32_t key) { return a.first < key; });
    if (pos != entries.end() && pos->first == k) pos->second += o.gross_amount;
    else entries.insert(pos, {k, o.gross_amount});
  }

  out.rows.resize(treated_rows.size());
  out.zero_row.assign(treated_rows.size(), 0);
  for (size_t r = 0; r < treated_rows.size(); ++r) {
    long double total = 0;
    for (const auto& [k, v] : spend[r]) total += v;
    if (!(total > 0)) {
      out.zero_row[r] = 1;
      ++out.n_zero_rows;
      continue;
    }
    out.rows[r].reserve(spend[r].size());
    for (const auto& [k, v] : spend[r])
      out.rows[r].emplace_back(k, static_cast<double>(v / total));
  }
  return out;
}

EstablishmentGains map_effects(const std::vector<double>& phi, const AllocationMatrix& alloc) {
  if (phi.size() != alloc.rows.size())
    throw ConfigError("map_effects: phi does not align with allocation rows");
  EstablishmentGains out;
  out.establishment_ids = alloc.establishment_ids;
  std::vector<long double> tau(alloc.establishment_ids.size(), 0.0L);
  long double allocated = 0;
  for (size_t r = 0; r < alloc.rows.size(); ++r) {
    if (alloc.zero_row[r]) {
      ++out.n_unallocated;
      continue;
    }
    allocated += phi[r];
    for (const auto& [k, share] : alloc.rows[r]) tau[k] += phi[r] * share;
  }
  out.tau.resize(tau.size());
  long double total = 0;
  for (size_t k = 0; k < tau.size(); ++k) {
    out.tau[k] = static_cast<double>(tau[k]);
    total += tau[k];
  }
  out.total = static_cast<double>(total);
  out.allocated_phi = static_cast<double>(allocated);
  return out;
}

std::vector<double> market_shares(const Dataset& data,
                                  const std::vector<std::string>& establishment_ids) {
  if (establishment_ids.size() != data.establishments.size())
    throw ConfigError("market shares: establishment list does not match the dataset");
  const auto est_index = data.establishment_index_map();
  std::vector<long double> spend(establishment_ids.size(), 0.0L);
  long double total = 0;
  for (const auto& o : data.orders) {
    if (o.category != OrderCategory::restaurant) continue;
    if (!in_treat_window(data, o.date)) continue;
    const auto eit = est_index.find(o.establishment_id);
    if (eit == est_index.end())
      throw DataError("market shares: unknown establishment '" + o.establishment_id + "'");
    spend[eit->second] += o.gross_amount;
    total += o.gross_amount;
  }
  if (!(total > 0))
    throw EstimationError("market shares: no treatment-window restaurant spending");
  std::vector<double> out(spend.size());
  for (size_t k = 0; k < spend.size(); ++k) out[k] = static_cast<double>(spend[k] / total);
  return out;
}

UniformComparison uniform_counterfactual(const EstablishmentGains& gains,
                                         const std::vector<double>& shares) {
  if (shares.size() != gains.tau.size())
    throw ConfigError("uniform counterfactual: shares do not align with establishments");
  if (gains.tau.size() < 2)
    throw EstimationError("uniform counterfactual: need at least 2 establishments");
  long double share_sum = 0;
  for (const double s : shares) share_sum += s;
  if (std::abs(static_cast<double>(share_sum) - 1.0) > 1e-8)
    throw ConfigError("uniform counterfactual: market shares do not sum to 1");

  std::vector<double> uniform(shares.size());
  for (size_t k = 0; k < shares.size(); ++k) uniform[k] = shares[k] * gains.allocated_phi;

  UniformComparison out;
  out.var_actual = variance(gains.tau);
  out.var_uniform = variance(uniform);
  if (out.var_actual > 0) {
    out.reduction_pct = 1.0 - out.var_uniform / out.var_actual;
  } else if (out.var_uniform > 0) {
    throw EstimationError("uniform counterfactual: actual gains have zero variance");
  } else {
    out.reduction_pct = 0.0;
  }
  return out;
}

std::vector<int> attribute_quantiles(const std::vector<EstablishmentRecord>& establishments,
                                     EstablishmentAttribute attribute, int n_q) {
  if (n_q < 2) throw ConfigError("attribute_quantiles: n_q must be >= 2");
  const size_t n = establishments.size();
  if (n == 0) return {};
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  auto value = [&](size_t k) {
    return attribute == EstablishmentAttribute::sales ? establishments[k].avg_monthly_sales_6m
                                                      : establishments[k].avg_order_price_6m;
  };
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (value(a) != value(b)) return value(a) < value(b);
    return establishments[a].establishment_id < establishments[b].establishment_id;
  });
  std::vector<int> labels(n, 0);
  for (size_t rank = 0; rank < n; ++rank) {
    const auto q = std::min<size_t>(n_q - 1, rank * static_cast<size_t>(n_q) / n);
    labels[order[rank]] = static_cast<int>(q) + 1;
  }
  return labels;
}

std::vector<QuantileRow> gains_by_quantile(const EstablishmentGains& gains,
                                           const std::vector<EstablishmentRecord>& establishments,
                                           EstablishmentAttribute attribute, int n_q,
                                           const std::vector<double>& redemptions) {
  if (establishments.size() != gains.tau.size())
    throw ConfigError("gains_by_quantile: establishments do not align with gains");
  if (!redemptions.empty() && redemptions.size() != gains.tau.size())
    throw ConfigError("gains_by_quantile: redemptions do not align with gains");

  const auto labels = attribute_quantiles(establishments, attribute, n_q);
  std::vector<QuantileRow> rows(n_q);
  for (int q = 0; q < n_q; ++q) rows[q].quantile = q + 1;
  for (size_t k = 0; k < labels.size(); ++k) {
    auto& row = rows[labels[k] - 1];
    ++row.n;
    row.mean_tau += gains.tau[k];
    if (!redemptions.empty()) row.mean_redemptions += redemptions[k];
  }
  for (auto& row : rows) {
    if (row.n == 0) continue;
    row.mean_tau /= static_cast<double>(row.n);
    row.mean_redemptions /= static_cast<double>(row.n);
  }
  return rows;
}

std::vector<double> redemption_counts(const Dataset& data,
                                      const std::vector<std::string>& establishment_ids) {
  if (establishment_ids.size() != data.establishments.size())
    throw ConfigError("redemption counts: establishment list does not match the dataset");
  const auto est_index = data.establishment_index_map();
  std::vector<double> out(establishment_ids.size(), 0.0);
  for (const auto& o : data.orders) {
    if (o.coupon_discount <= 0) continue;
    if (!in_treat_window(data, o.date)) continue;
    const auto eit = est_index.find(o.establishment_id);
    if (eit == est_index.end()) continue;
    out[eit->second] += 1.0;
  }
  return out;
}

}  // namespace stimkit::incidence

#include "stimkit/did.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace stimkit::did {

namespace {

// Cell value; NaN when the cell is excluded from a conditional panel.
double cell_value(const panel::DailyPanel& p, size_t cell, Outcome o) {
  switch (o) {
    case Outcome::oop: return p.oop[cell];
    case Outcome::total: return p.total[cell];
    case Outcome::unsub: return p.unsub[cell];
    case Outcome::order_freq: return p.n_orders[cell];
    case Outcome::oop_per_order:
      return p.n_orders[cell] > 0 ? p.oop[cell] / p.n_orders[cell] : std::nan("");
    case Outcome::sku_per_order:
      return p.n_orders[cell] > 0 ? p.n_sku[cell] / p.n_orders[cell] : std::nan("");
    case Outcome::oop_per_sku:
      return p.n_sku[cell] > 0 ? p.oop[cell] / p.n_sku[cell] : std::nan("");
    case Outcome::utensils_per_order:
      return p.n_orders[cell] > 0 ? p.n_utensils[cell] / p.n_orders[cell] : std::nan("");
  }
  return std::nan("");
}

std::vector<double> resolve_weights(const panel::DailyPanel& p,
                                    const std::vector<double>& weights) {
  if (weights.empty()) return std::vector<double>(p.n_consumers(), 1.0);
  if (weights.size() != p.n_consumers())
    throw ConfigError("weights do not align with panel consumers");
  for (const double w : weights)
    if (w < 0) throw ConfigError("negative consumer weight");
  return weights;
}

struct CellSelection {
  FePanelData fe;
  std::vector<uint8_t> unit_treat;  // per dense unit
};

// Assembles the included cells with dense unit/time indices. `use_post`
// selects pre+post (skipping treat); default is pre+treat.
CellSelection select_cells(const panel::DailyPanel& p, Outcome outcome,
                           const std::vector<double>& weights, bool use_post) {
  const PeriodTag post_tag = use_post ? PeriodTag::post : PeriodTag::treat;
  CellSelection sel;
  auto& fe = sel.fe;

  std::vector<int> unit_of(p.n_consumers(), -1);
  std::vector<int> time_of(p.n_days, -1);
  for (size_t c = 0; c < p.n_consumers(); ++c) {
    if (weights[c] <= 0) continue;
    for (int d = 0; d < p.n_days; ++d) {
      const PeriodTag tag = p.day_tag[d];
      if (tag != PeriodTag::pre && tag != post_tag) continue;
      const double v = cell_value(p, p.cell(c, d), outcome);
      if (std::isnan(v)) continue;
      if (unit_of[c] < 0) {
        unit_of[c] = fe.n_units++;
        sel.unit_treat.push_back(p.treat[c]);
      }
      if (time_of[d] < 0) time_of[d] = fe.n_times++;
      fe.y.push_back(v);
      fe.unit.push_back(unit_of[c]);
      fe.time.push_back(time_of[d]);
      fe.weight.push_back(weights[c]);
      fe.cluster.push_back(unit_of[c]);
      fe.z.resize(1);
      fe.z[0].push_back(p.treat[c] && tag == post_tag ? 1.0 : 0.0);
    }
  }
  fe.n_clusters = fe.n_units;
  if (fe.y.empty()) throw EstimationError("no cells available for outcome " + outcome_name(outcome));
  return sel;
}

TwfeResult finish_single(const std::string& name, const FeRegressionResult& r) {
  TwfeResult out;
  out.outcome = name;
  out.alpha = r.beta[0];
  out.se = r.se(0);
  out.t = out.se > 0 ? out.alpha / out.se : 0;
  out.weighted_n = r.weighted_n;
  out.n_clusters = r.n_clusters;
  return out;
}

}  // namespace

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::oop: return "oop";
    case Outcome::total: return "total";
    case Outcome::unsub: return "unsub";
    case Outcome::order_freq: return "order_freq";
    case Outcome::oop_per_order: return "oop_per_order";
    case Outcome::sku_per_order: return "sku_per_order";
    case Outcome::oop_per_sku: return "oop_per_sku";
    case Outcome::utensils_per_order: return "utensils_per_order";
  }
  return "?";
}

TwfeResult estimate_twfe(const panel::DailyPanel& p, Outcome outcome,
                         const std::vector<double>& weights, bool post_as_post) {
  const auto w = resolve_weights(p, weights);
  auto sel = select_cells(p, outcome, w, post_as_post);
  return finish_single(outcome_name(outcome), fe_regress(sel.fe));
}

PretrendResult pretrend_test(const panel::DailyPanel& p, const std::vector<double>& weights) {
  const auto w = resolve_weights(p, weights);

  // Pre-period days present in the panel.
  std::vector<int> pre_days;
  for (int d = 0; d < p.n_days; ++d)
    if (p.day_tag[d] == PeriodTag::pre) pre_days.push_back(d);
  if (pre_days.size() < 2)
    throw ConfigError("pre-trend test needs at least 2 pre-period days");
  const int ref_day = pre_days.back();  // reference: last pre-period day

  FePanelData fe;
  std::vector<int> unit_of(p.n_consumers(), -1);
  std::vector<int> time_of(p.n_days, -1);
  const size_t q = pre_days.size() - 1;
  fe.z.resize(q);
  for (size_t c = 0; c < p.n_consumers(); ++c) {
    if (w[c] <= 0) continue;
    for (const int d : pre_days) {
      if (unit_of[c] < 0) unit_of[c] = fe.n_units++;
      if (time_of[d] < 0) time_of[d] = fe.n_times++;
      fe.y.push_back(p.oop[p.cell(c, d)]);
      fe.unit.push_back(unit_of[c]);
      fe.time.push_back(time_of[d]);
      fe.weight.push_back(w[c]);
      fe.cluster.push_back(unit_of[c]);
      for (size_t s = 0; s < q; ++s)
        fe.z[s].push_back(p.treat[c] && d == pre_days[s] && d != ref_day ? 1.0 : 0.0);
    }
  }
  fe.n_clusters = fe.n_units;
  const auto r = fe_regress(fe);
  const auto test = wald_all_zero(r);

  PretrendResult out;
  out.F = test.F;
  out.p = test.p;
  out.q = test.q;
  out.weighted_n = r.weighted_n;
  out.n_clusters = r.n_clusters;
  return out;
}

std::vector<TwfeResult> decompose_margins(const panel::DailyPanel& p,
                                          const std::vector<double>& weights) {
  std::vector<TwfeResult> out;
  for (const Outcome o : {Outcome::oop_per_order, Outcome::order_freq, Outcome::sku_per_order,
                          Outcome::oop_per_sku})
    out.push_back(estimate_twfe(p, o, weights));
  return out;
}

SubstitutionResult substitution_tests(const Dataset& data, const std::vector<double>& weights) {
  SubstitutionResult out;
  const auto grocery_panel = panel::build_daily_panel(data, panel::CategoryFilter::grocery);
  out.grocery = estimate_twfe(grocery_panel, Outcome::oop, weights);
  out.grocery.outcome = "grocery_oop";

  const auto restaurant_panel = panel::build_daily_panel(data, panel::CategoryFilter::restaurant);
  out.utensils = estimate_twfe(restaurant_panel, Outcome::utensils_per_order, weights);

  if (data.period.n_post_days() > 0) {
    const auto full = panel::build_daily_panel(data, panel::CategoryFilter::restaurant, true);
    auto post = estimate_twfe(full, Outcome::oop, weights, true);
    post.outcome = "post_window_oop";
    out.post_window = post;
  }
  return out;
}

TwfeResult daily_did(const panel::DailyPanel& p, const std::vector<ClaimRecord>& claims,
                     const std::vector<double>& weights) {
  const auto w = resolve_weights(p, weights);

  // (consumer, day) claim lookup.
  std::unordered_set<int64_t> claimed;
  claimed.reserve(claims.size() * 2);
  {
    std::unordered_map<std::string, size_t> cmap;
    cmap.reserve(p.n_consumers() * 2);
    for (size_t c = 0; c < p.n_consumers(); ++c) cmap.emplace(p.consumer_ids[c], c);
    for (const auto& cl : claims) {
      const auto it = cmap.find(cl.consumer_id);
      if (it == cmap.end()) throw DataError("claim references unknown consumer '" + cl.consumer_id + "'");
      const int d = static_cast<int>(cl.date - p.day0);
      if (d < 0 || d >= p.n_days) continue;
      claimed.insert(static_cast<int64_t>(it->second) * p.n_days + d);
    }
  }

  FePanelData fe;
  std::vector<int> unit_of(p.n_consumers(), -1);
  std::vector<int> time_of(p.n_days, -1);
  fe.z.resize(1);
  for (size_t c = 0; c < p.n_consumers(); ++c) {
    if (w[c] <= 0) continue;
    for (int d = 0; d < p.n_days; ++d) {
      const PeriodTag tag = p.day_tag[d];
      if (tag != PeriodTag::pre && tag != PeriodTag::treat) continue;
      if (unit_of[c] < 0) unit_of[c] = fe.n_units++;
      if (time_of[d] < 0) time_of[d] = fe.n_times++;
      fe.y.push_back(p.oop[p.cell(c, d)]);
      fe.unit.push_back(unit_of[c]);
      fe.time.push_back(time_of[d]);
      fe.weight.push_back(w[c]);
      fe.cluster.push_back(unit_of[c]);
      fe.z[0].push_back(claimed.count(static_cast<int64_t>(c) * p.n_days + d) ? 1.0 : 0.0);
    }
  }
  fe.n_clusters = fe.n_units;
  auto r = finish_single("claim_day_oop", fe_regress(fe));
  return r;
}

double coupon_mpc(double effect, double subsidy) {
  if (!(subsidy > 0))
    throw EstimationError("coupon MPC undefined: subsidy must be positive");
  return 1.0 + effect / subsidy;
}

double BunchingHistogram::spike_ratio(const std::vector<size_t>& series, double threshold) const {
  const auto bin_of = [&](double v) {
    return static_cast<size_t>(std::clamp(v / bin_width, 0.0,
                                          static_cast<double>(series.size() - 1)));
  };
  const double above = static_cast<double>(series[bin_of(threshold)]);
  const double below = static_cast<double>(series[bin_of(threshold - bin_width)]);
  if (below == 0) return above > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  return above / below;
}

BunchingHistogram bunching_histogram(const Dataset& data, double bin_width, double max_amount) {
  if (!(bin_width > 0)) throw ConfigError("bunching: bin width must be positive");
  if (!(max_amount > bin_width)) throw ConfigError("bunching: max_amount must exceed bin width");

  BunchingHistogram h;
  h.bin_width = bin_width;
  h.max_amount = max_amount;
  const size_t n_bins = static_cast<size_t>(std::ceil(max_amount / bin_width));
  h.edges.resize(n_bins);
  for (size_t b = 0; b < n_bins; ++b) h.edges[b] = static_cast<double>(b) * bin_width;
  h.pre.assign(n_bins, 0);
  h.redemption_day.assign(n_bins, 0);
  h.other_day.assign(n_bins, 0);

  // Redemption days: (consumer, day) pairs with at least one discounted order.
  std::unordered_set<std::string> redemption;
  for (const auto& o : data.orders)
    if (o.coupon_discount > 0) redemption.insert(o.consumer_id + "@" + std::to_string(o.date));

  for (const auto& o : data.orders) {
    if (o.category != OrderCategory::restaurant) continue;
    const PeriodTag tag = data.period.tag(o.date);
    const size_t bin = static_cast<size_t>(
        std::clamp(o.gross_amount / bin_width, 0.0, static_cast<double>(n_bins - 1)));
    if (tag == PeriodTag::pre) {
      ++h.pre[bin];
    } else if (tag == PeriodTag::treat) {
      if (redemption.count(o.consumer_id + "@" + std::to_string(o.date)))
        ++h.redemption_day[bin];
      else
        ++h.other_day[bin];
    }
  }
  return h;
}

}  // namespace stimkit::did

#include <algorithm>
#include <cmath>
#include <map>

#include "stimkit/welfare.hpp"

namespace stimkit::welfare {

std::vector<EstablishmentDay> demand_panel(const Dataset& data) {
  std::map<std::pair<std::string, int64_t>, std::pair<double, size_t>> cells;  // sum, count
  for (const auto& o : data.orders) {
    if (o.category != OrderCategory::restaurant) continue;
    if (data.period.tag(o.date) != PeriodTag::pre) continue;
    auto& cell = cells[{o.establishment_id, o.date}];
    cell.first += o.gross_amount;
    cell.second += 1;
  }
  std::vector<EstablishmentDay> out;
  out.reserve(cells.size());
  for (const auto& [key, cell] : cells) {
    EstablishmentDay row;
    row.day = key.second;
    row.quantity = static_cast<double>(cell.second);
    row.price = cell.first / static_cast<double>(cell.second);
    out.push_back(row);
  }
  return out;
}

DemandFit estimate_demand(std::vector<EstablishmentDay> rows) {
  if (rows.size() < 30)
    throw EstimationError("demand: need at least 30 establishment-days, have " +
                          std::to_string(rows.size()));
  for (const auto& r : rows)
    if (!(r.price > 0) || !(r.quantity > 0))
      throw DataError("demand: nonpositive price or quantity");

  // Winsorize prices at the per-day 5th/95th percentiles.
  std::map<int64_t, std::vector<double>> by_day;
  for (const auto& r : rows) by_day[r.day].push_back(r.price);
  std::map<int64_t, std::pair<double, double>> bounds;
  DemandFit fit;
  for (auto& [day, prices] : by_day) {
    std::sort(prices.begin(), prices.end());
    const double lo = quantile_sorted(prices, 0.05);
    const double hi = quantile_sorted(prices, 0.95);
    bounds[day] = {lo, hi};
    fit.winsor_bounds.push_back({day, lo, hi});
  }

  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const auto& [lo, hi] = bounds[r.day];
    const double p = std::clamp(r.price, lo, hi);
    const double x = std::log(p);
    const double y = std::log(r.quantity);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto n = static_cast<double>(rows.size());
  const double vxx = static_cast<double>(sxx - sx * sx / n);
  if (!(vxx > 1e-12))
    throw EstimationError("demand: no price variation after winsorization");
  const double slope = static_cast<double>(sxy - sx * sy / n) / vxx;
  fit.beta1 = -slope;
  fit.beta0 = static_cast<double>(sy / n) + fit.beta1 * static_cast<double>(sx / n);
  fit.n_obs = rows.size();
  if (fit.beta1 <= 0)
    throw EstimationError("demand: upward-sloping demand (beta1 = " +
                          std::to_string(fit.beta1) + ")");
  fit.markup_warning = fit.beta1 <= 1.0;
  return fit;
}

ProducerSurplus producer_surplus_delta(const DemandFit& fit,
                                       const incidence::EstablishmentGains& gains) {
  if (!(fit.beta1 > 1.0))
    throw EstimationError("producer surplus: markup undefined for beta1 <= 1");
  ProducerSurplus out;
  out.kappa = 1.0 / fit.beta1;
  out.delta_pi.resize(gains.tau.size());
  long double total = 0;
  for (size_t k = 0; k < gains.tau.size(); ++k) {
    out.delta_pi[k] = out.kappa * gains.tau[k];
    total += out.delta_pi[k];
  }
  out.total = static_cast<double>(total);
  return out;
}

ConsumerGain consumer_gain(const std::vector<double>& catt, const std::vector<double>& subsidy,
                           double threshold) {
  if (catt.size() != subsidy.size())
    throw ConfigError("consumer gain: catt does not align with subsidies");
  ConsumerGain out;
  long double gain = 0;
  for (size_t i = 0; i < catt.size(); ++i) {
    if (catt[i] <= threshold) {
      gain += subsidy[i];
      ++out.n_nonadjusters;
    }
  }
  out.gain = static_cast<double>(gain);
  return out;
}

WelfareAccount mvpf(double consumer_gain, double producer_gain, double gov_cost) {
  if (!(gov_cost > 0)) throw EstimationError("mvpf: government cost must be positive");
  WelfareAccount out;
  out.consumer_gain = consumer_gain;
  out.producer_gain = producer_gain;
  out.gov_cost = gov_cost;
  out.mvpf = (consumer_gain + producer_gain) / gov_cost;
  return out;
}

}  // namespace stimkit::welfare

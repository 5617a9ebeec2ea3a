#pragma once
// Welfare accounting: log-linear demand estimation on pre-period
// establishment-day data, producer surplus via the implied markup, the
// envelope-theorem consumer gain, and the MVPF ratio.

#include <string>
#include <vector>

#include "stimkit/incidence.hpp"
#include "stimkit/types.hpp"

namespace stimkit::welfare {

struct EstablishmentDay {
  int64_t day = 0;
  double quantity = 0;  // restaurant orders that day
  double price = 0;     // average gross amount that day
};

// Pre-period restaurant orders grouped by (establishment, day).
std::vector<EstablishmentDay> demand_panel(const Dataset& data);

struct WinsorBound {
  int64_t day = 0;
  double lo = 0;
  double hi = 0;
};

struct DemandFit {
  double beta0 = 0;  // ln Q = beta0 - beta1 ln p
  double beta1 = 0;  // price elasticity, positive sign convention
  size_t n_obs = 0;
  bool markup_warning = false;  // beta1 <= 1: implied markup not positive
  std::vector<WinsorBound> winsor_bounds;
};

// Per-day winsorization of prices at the 5th/95th percentiles, then pooled
// least squares of ln Q on ln p. Throws on fewer than 30 establishment-days,
// nonpositive price/quantity, or an upward-sloping fit (beta1 <= 0).
DemandFit estimate_demand(std::vector<EstablishmentDay> rows);

struct ProducerSurplus {
  double kappa = 0;  // profit margin 1/beta1
  std::vector<double> delta_pi;
  double total = 0;
};

// Margin times allocated revenue gain per establishment; requires beta1 > 1.
ProducerSurplus producer_surplus_delta(const DemandFit& fit,
                                       const incidence::EstablishmentGains& gains);

struct ConsumerGain {
  double gain = 0;            // summed subsidies of non-adjusters
  size_t n_nonadjusters = 0;  // catt <= threshold
};

// Non-adjusters (catt <= threshold) keep their subsidy as a cash transfer;
// adjusters contribute zero first-order utility change.
ConsumerGain consumer_gain(const std::vector<double>& catt, const std::vector<double>& subsidy,
                           double threshold = 0.0);

struct WelfareAccount {
  double consumer_gain = 0;
  double producer_gain = 0;
  double gov_cost = 0;
  double mvpf = 0;
};

// mvpf = (consumer_gain + producer_gain) / gov_cost; gov_cost must be > 0.
WelfareAccount mvpf(double consumer_gain, double producer_gain, double gov_cost);

}  // namespace stimkit::welfare

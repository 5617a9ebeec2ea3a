#pragma once
// Difference-in-differences estimators on the daily panel: the headline
// two-way fixed-effects ATT, pre-trend diagnostics, margin decomposition,
// substitution tests, the claim-day event regression, the coupon MPC
// transform, and the bunching histogram.

#include <optional>
#include <string>
#include <vector>

#include "stimkit/fe_regress.hpp"
#include "stimkit/panel.hpp"

namespace stimkit::did {

enum class Outcome {
  oop,                 // out-of-pocket spending per cell
  total,               // gross spending per cell
  unsub,               // unsubsidized (no-coupon) spending per cell
  order_freq,          // orders per cell
  oop_per_order,       // conditional on ordering cells
  sku_per_order,       // conditional on ordering cells
  oop_per_sku,         // conditional on cells with any SKU
  utensils_per_order,  // conditional on ordering cells
};

std::string outcome_name(Outcome o);

struct TwfeResult {
  std::string outcome;
  double alpha = 0;  // Treat x Post coefficient
  double se = 0;     // consumer-clustered, CR1
  double t = 0;
  double weighted_n = 0;  // weighted cell count
  int n_clusters = 0;
};

// y_it = alpha Treat_i Post_t + gamma_i + lambda_t + e_it over pre+treat
// cells (or pre+post when post_as_post is set, skipping the treat window).
// `weights` is per consumer (frequency weights from matching); empty = 1.
// Conditional outcomes restrict to cells where the denominator is positive.
TwfeResult estimate_twfe(const panel::DailyPanel& p, Outcome outcome,
                         const std::vector<double>& weights = {}, bool post_as_post = false);

struct PretrendResult {
  double F = 0;
  double p = 1;
  int q = 0;            // number of lead interactions tested
  double weighted_n = 0;
  int n_clusters = 0;
};

// Joint cluster-robust F-test that treated-by-day interactions over the
// pre-period are all zero (reference day: the last pre-period day).
PretrendResult pretrend_test(const panel::DailyPanel& p,
                             const std::vector<double>& weights = {});

// ATT split across adjustment margins.
std::vector<TwfeResult> decompose_margins(const panel::DailyPanel& p,
                                          const std::vector<double>& weights = {});

struct SubstitutionResult {
  TwfeResult grocery;                 // grocery OOP, full window
  TwfeResult utensils;                // utensil sets per order
  std::optional<TwfeResult> post_window;  // pre vs post OOP; absent without post days
};

SubstitutionResult substitution_tests(const Dataset& data,
                                      const std::vector<double>& weights = {});

// OOP on a claim-day indicator with the same two-way fixed effects.
TwfeResult daily_did(const panel::DailyPanel& p, const std::vector<ClaimRecord>& claims,
                     const std::vector<double>& weights = {});

// Marginal propensity to consume out of the coupon: 1 + effect/subsidy, both
// measured over the same horizon. Throws EstimationError when subsidy <= 0.
double coupon_mpc(double effect, double subsidy);

struct BunchingHistogram {
  double bin_width = 5;
  double max_amount = 250;
  std::vector<double> edges;          // bin left edges: 0, w, 2w, ...
  std::vector<size_t> pre;            // pre-period restaurant orders
  std::vector<size_t> redemption_day; // treat-window orders on redemption days
  std::vector<size_t> other_day;      // treat-window orders on other days

  // mass[t, t+w) / mass[t-w, t) for a threshold t; inf when empty below.
  double spike_ratio(const std::vector<size_t>& series, double threshold) const;
};

BunchingHistogram bunching_histogram(const Dataset& data, double bin_width = 5.0,
                                     double max_amount = 250.0);

}  // namespace stimkit::did

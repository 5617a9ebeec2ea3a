#pragma once
// Counterfactual policy engines: the per-consumer cost model, rank-weighted
// targeting curves, SME-weighted depth-2 policy trees, and the hybrid
// coupon-plus-transfer budget planner.

#include <string>
#include <vector>

#include "stimkit/rforest.hpp"

namespace stimkit::policy {

// Regression forest of realized treatment-window subsidy cost on covariates,
// trained on treated consumers only; predicts cost_hat for every row of x.
std::vector<double> fit_cost_model(const forest::ColMatrix& x, const std::vector<uint8_t>& treat,
                                   const std::vector<double>& realized_cost,
                                   const forest::ForestParams& params);

struct RateCurve {
  std::string strategy;
  std::vector<double> q;    // targeted fraction grid
  std::vector<double> att;  // mean DR score over the top-q fraction
};

// Mean of psi over the top-q fraction ranked by `priority` (descending; ties
// broken by consumer_id). q = 1 reproduces the overall mean of psi.
RateCurve rate_curve(const std::vector<double>& priority, const std::vector<double>& psi,
                     const std::vector<std::string>& consumer_ids,
                     const std::vector<double>& q_grid, const std::string& strategy);

inline std::vector<double> decile_grid() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

struct PolicyTree {
  // Depth-2 axis-aligned tree; feature -1 marks a collapsed (leaf) node.
  int root_feature = -1;
  double root_threshold = 0;
  int left_feature = -1;
  double left_threshold = 0;
  int right_feature = -1;
  double right_threshold = 0;
  // Treat flags for the four cells: (left-left, left-right, right-left,
  // right-right); collapsed children use index 0 of their pair.
  bool action[4] = {false, false, false, false};
  double lambda = 0.5;
  double objective = 0;  // sum of lambda*r_sme + (1-lambda)*r_large over treated
  double r_sme = 0;      // sum of r_sme over consumers the tree treats
  double r_large = 0;

  bool treats(const std::vector<double>& row) const;
};

// Exhaustive search over depth-2 axis-aligned trees. Candidate thresholds per
// covariate: all midpoints between consecutive distinct values when there are
// at most 21 distinct values, else 20 quantile cut points. Each cell is
// treated exactly when its summed weighted reward is positive. Ties prefer
// higher r_sme, then lexicographically smaller splits.
PolicyTree policy_tree(const std::vector<double>& r_sme, const std::vector<double>& r_large,
                       double lambda, const forest::ColMatrix& x, int depth = 2);

struct HybridPlan {
  size_t n_targeted = 0;
  double gov_coupon_cost = 0;
  double consumer_oop = 0;
  double sme_transfer = 0;    // budget - gov_coupon_cost
  double total_stimulus = 0;  // consumer_oop + gov_coupon_cost + sme_transfer
  std::vector<size_t> selected;  // indices into the input pool
};

// Greedy targeting: add consumers in descending catt (ties: cheaper cost,
// then consumer_id) until cumulative OOP effect plus coupon cost reaches
// `stimulus_target`, spending at most `budget` on coupons; the remaining
// budget is transferred to SMEs. Throws when the target is not reachable
// within the budget, reporting the achievable frontier.
HybridPlan hybrid_plan(const std::vector<double>& catt, const std::vector<double>& cost_hat,
                       const std::vector<std::string>& consumer_ids, int treat_days,
                       double budget, double stimulus_target);

}  // namespace stimkit::policy

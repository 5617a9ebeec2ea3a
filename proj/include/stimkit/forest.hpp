#pragma once
// Heterogeneous treatment effects: first differences, cross-fitted nuisance
// functions, the honest causal forest, doubly robust scores, the best linear
// projection of effects, and the conditional MPC transform.

#include <string>
#include <vector>

#include "stimkit/panel.hpp"
#include "stimkit/rforest.hpp"
#include "stimkit/types.hpp"

namespace stimkit::forest {

// Per-consumer outcome change: mean daily OOP over the treat window minus
// mean daily OOP over the pre window.
std::vector<double> first_difference(const panel::DailyPanel& p);

struct NuisanceFit {
  std::vector<double> m_hat;  // E[dy | X]
  std::vector<double> e_hat;  // P(treat | X), clipped to [0.01, 0.99]
  std::vector<int> fold;      // cross-fitting fold per row
};

// K-fold cross-fitted regression-forest nuisances; each row's prediction
// comes from the forests trained without its fold. Folds with a single
// treatment class raise EstimationError.
NuisanceFit fit_nuisances(const ColMatrix& x, const std::vector<double>& dy,
                          const std::vector<uint8_t>& treat, int k_folds,
                          const ForestParams& params);

// Honest causal forest on residualized outcome/treatment. Trees split on a
// gradient pseudo-outcome criterion (between-child heterogeneity of the
// local residual-on-residual slope); leaf statistics come from the held-out
// estimation half of each tree's subsample.
class CausalForest {
 public:
  // y_tilde = dy - m_hat, w_tilde = treat - e_hat.
  static CausalForest train(const ColMatrix& x, const std::vector<double>& y_tilde,
                            const std::vector<double>& w_tilde,
                            const std::vector<uint8_t>& treat, const ForestParams& params);

  // Forest-weighted local slope at each query row.
  std::vector<double> predict(const ColMatrix& x) const;

  // Depth-weighted split frequencies, normalized to sum to 1.
  std::vector<double> split_importance() const;

  size_t n_trees() const { return trees_.size(); }

 private:
  struct Leaf {
    // Estimation-half sums scaled by leaf size; s1 == 0 marks an empty leaf.
    double s1 = 0, sw = 0, sy = 0, sww = 0, swy = 0;
  };
  struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<Leaf> leaves;
  };

  friend struct ForestTrainer;

  std::vector<Tree> trees_;
  std::vector<double> importance_;
  size_t p_ = 0;
};

// Doubly robust score per row:
//   psi = catt + (T - e)/(e(1-e)) * (dy - m - (T - e) * catt).
std::vector<double> dr_scores(const std::vector<double>& catt, const std::vector<double>& dy,
                              const std::vector<uint8_t>& treat, const std::vector<double>& m_hat,
                              const std::vector<double>& e_hat);

struct BlpRow {
  std::string covariate;
  double beta = 0;
  double se = 0;  // heteroskedasticity-robust (HC1)
  double t = 0;
};

struct BlpResult {
  double intercept = 0;  // equals mean(psi) by construction
  double intercept_se = 0;
  std::vector<BlpRow> rows;
  size_t n = 0;
};

// OLS of psi on standardized covariates plus intercept. Near-collinear
// covariate pairs raise EstimationError naming both columns.
BlpResult blp(const std::vector<double>& psi, const ColMatrix& x,
              const std::vector<std::string>& names);

struct MpcResult {
  std::vector<double> mpc;       // 1 + catt * treat_days / cost_hat
  std::vector<uint8_t> flagged;  // cost_hat <= 0: mpc undefined (NaN)
};

MpcResult conditional_mpc(const std::vector<double>& catt, const std::vector<double>& cost_hat,
                          int treat_days);

}  // namespace stimkit::forest

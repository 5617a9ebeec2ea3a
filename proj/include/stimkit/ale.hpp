#pragma once
// Accumulated local effects over the fitted effect surface, plus the
// demand/supply variance decomposition of effect heterogeneity.

#include <string>
#include <utility>
#include <vector>

#include "stimkit/rforest.hpp"

namespace stimkit::ale {

struct SurfaceFit {
  forest::RegressionForest forest;
  double oob_r2 = 0;  // 0 when the target is constant
};

// Smooth predictor of the per-consumer effect scores on the covariates.
SurfaceFit fit_psi_surface(const std::vector<double>& psi, const forest::ColMatrix& x,
                           const forest::ForestParams& params);

struct AleCurve {
  std::string covariate;
  std::vector<double> bin_edges;  // n_bins+1 edges; for binary, the 2 levels
  std::vector<double> h_tilde;    // centered curve value at each edge
  double var_component = 0;       // variance of the evaluated curve over the sample
  int merged_bins = 0;            // empty bins folded into the next occupied one
  bool binary = false;

  // Curve value assigned to a sample point: its bin's right-edge value
  // (for binary covariates, the value at its level).
  double evaluate(double xk) const;
};

// First-order ALE of the surface along covariate k: per-bin mean local
// differences of the prediction at the bin edges, accumulated and centered so
// the sample-weighted mean of the evaluated curve is 0. Covariates with two
// distinct values get the two-level analog; with fewer distinct values than
// bins the bin count shrinks to (distinct - 1).
AleCurve ale_curve(const forest::RegressionForest& surface, const forest::ColMatrix& x,
                   size_t k, const std::string& name, int n_bins = 25);

struct Decomposition {
  double omega_d = 0;  // demand share of ALE variance
  double omega_s = 0;
  std::vector<std::pair<std::string, double>> components;  // covariate -> variance
  std::string scheme;
};

// omega_d = sum(Var demand curves) / (sum demand + sum supply). Covariates in
// neither set do not enter the ratio.
Decomposition variance_decomposition(const std::vector<AleCurve>& curves,
                                     const std::vector<std::string>& demand,
                                     const std::vector<std::string>& supply,
                                     const std::string& scheme_name);

// Covariate grouping for the decomposition. Default: demand = {wealth,
// member, n_orders_6m, spend_per_order_6m}, supply = {n_restaurants_3km,
// nonsme_share_3km}. The alternate scheme drops membership and ordering
// habits from the demand side.
struct Scheme {
  std::string name;
  std::vector<std::string> demand;
  std::vector<std::string> supply;
};

Scheme decomposition_scheme(const std::string& name);  // "default" or "alt"

}  // namespace stimkit::ale

#pragma once
// Propensity-score matching: logit propensity fit, nearest-neighbor matching
// with replacement on the score, and covariate balance diagnostics.

#include <optional>
#include <string>
#include <vector>

#include "stimkit/types.hpp"

namespace stimkit::psm {

struct PropensityFit {
  std::vector<double> score;  // fitted P(treat | X), aligned with consumers
  std::vector<double> coef;   // [intercept, standardized-covariate coefs]
  std::vector<std::string> covariates;
  int iterations = 0;
};

// Default matching covariates: demographics, membership, wealth and ordering
// habits (amenity covariates are matched on downstream heterogeneity only).
const std::vector<std::string>& default_psm_covariates();

// IRLS logit of treat on standardized covariates plus intercept. Throws
// EstimationError on failure to converge or (quasi-)separation, naming the
// most implicated covariate.
PropensityFit fit_propensity(const std::vector<ConsumerRecord>& consumers,
                             const std::vector<std::string>& covariates);

struct MatchedSample {
  std::vector<size_t> treated;      // indices into consumers
  std::vector<size_t> control_for;  // matched control per treated entry
  std::vector<double> weight;       // per consumer: 1 for matched treated,
                                    // multiplicity for matched controls, else 0
  size_t n_unique_controls = 0;
  size_t dropped_no_support = 0;  // treated left unmatched by the caliper
};

// 1:1 nearest-neighbor matching on the propensity score, with replacement.
// Distance ties break toward the smaller consumer_id so results are
// reproducible. An optional caliper (absolute score distance) drops treated
// units without support.
MatchedSample match_nn(const PropensityFit& fit, const std::vector<ConsumerRecord>& consumers,
                       std::optional<double> caliper = std::nullopt);

struct BalanceRow {
  std::string covariate;
  double mean_treated = 0;
  double mean_control = 0;
  double diff = 0;
  double t = 0;        // Welch t statistic (weighted on the control side)
  bool flagged = false;  // t undefined (no variance on either side)
};

// Balance table for treated vs (weighted) controls. `control_weight` is per
// consumer; pass all-ones for the pre-matching table or MatchedSample::weight
// for the post-matching one.
std::vector<BalanceRow> balance_table(const std::vector<ConsumerRecord>& consumers,
                                      const std::vector<std::string>& covariates,
                                      const std::vector<double>& control_weight);

}  // namespace stimkit::psm

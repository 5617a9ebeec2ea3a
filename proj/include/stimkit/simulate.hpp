#pragma once
// Seeded synthetic program generator with planted, exactly-computable ground
// truth. Every treated consumer carries a known daily treatment effect
// alpha_true (on restaurant out-of-pocket spending, averaged over the treat
// window) and a known expected subsidy cost cost_true; realized behavior is
// constructed so the conditional expectation of the generated outcome change
// equals alpha_true exactly, which is what the estimator-recovery tests and
// the acceptance gate lean on.

#include <cstdint>
#include <string>
#include <vector>

#include "stimkit/types.hpp"

namespace stimkit::sim {

// Linear/threshold effect surface on standardized covariates.
struct EffectTerm {
  std::string covariate;
  double coef = 0;
};

struct EffectStep {
  std::string covariate;
  double threshold = 0;  // on the standardized scale
  double coef = 0;       // added when std value > threshold
};

struct EffectSpec {
  double base = 1.8;  // constant daily effect (currency per day)
  std::vector<EffectTerm> linear;
  std::vector<EffectStep> steps;
  double noise_sd = 0.0;  // consumer-level idiosyncratic effect spread
};

// How treated consumers realize their planted effect.
//   redemption:      claim-day coupon redemptions (default; full mechanics)
//   order_upsize:    existing claim-day orders grow by upsize_amount, no coupons
//   extra_frequency: extra plain claim-day orders, unchanged basket, no coupons
enum class EffectChannel { redemption, order_upsize, extra_frequency };

struct BehaviorMix {
  double mental = 0.55;       // spends the coupon plus extra (mental accounting)
  double buncher = 0.30;      // bunches just above the threshold
  double nonredeemer = 0.15;  // claims but never redeems; zero true effect
};

struct SimConfig {
  uint64_t seed = 42;
  size_t n_consumers = 5000;
  size_t n_establishments = 150;
  PeriodConfig period;  // defaults to the 69-day program calendar

  double quota_share = 0.5;      // targeted treated share
  double assignment_bias = 0.0;  // > 0 tilts assignment toward habitual/wealthy users
  double sorting_rho = 0.35;     // planted corr(wealth, nonsme_share_3km)
  double claim_rate = 0.5;       // per-day claim probability while treated

  BehaviorMix behavior;
  EffectSpec effect;
  EffectChannel channel = EffectChannel::redemption;
  double upsize_amount = 10.0;    // order_upsize channel
  double extra_order_rate = 1.0;  // extra_frequency channel, x baseline rate

  // Baseline spending process.
  double order_rate = 0.35;        // mean restaurant orders per consumer-day
  double order_rate_sd_log = 0.55; // consumer-level lognormal spread of the rate
  double amount_mean = 45.0;       // mean gross per restaurant order
  double amount_sd_log = 0.40;     // consumer-level spread of mean order size
  double amount_sigma = 0.45;      // within-consumer lognormal sigma
  double grocery_rate = 0.10;      // grocery orders per consumer-day
  double grocery_mean = 35.0;

  double grocery_offset = 0.0;   // planted grocery OOP drop per claim day (>= 0)
  double pretrend_drift = 0.0;   // per-day treated pre-period drift (violates trends)
  double matching_strength = 0.25;  // effect-to-large-business sorting in shop choice
  int favorites = 8;                // per-consumer establishment choice set

  SimConfig();
  void validate() const;
};

struct TruthRecord {
  std::string consumer_id;
  double alpha_true = 0;  // planted daily treat-window effect on restaurant OOP
  double cost_true = 0;   // expected total subsidy over the treat window
};

struct SimOutput {
  Dataset data;
  std::vector<TruthRecord> truth;  // aligned with data.consumers
};

// Fully deterministic in (cfg.seed, cfg): identical output records under any
// thread count.
SimOutput simulate(const SimConfig& cfg);

// Writes consumers/orders/establishments/claims/truth CSVs into `dir`.
void write_dataset(const SimOutput& out, const std::string& dir);

}  // namespace stimkit::sim

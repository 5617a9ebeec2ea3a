#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "stimkit/did.hpp"
#include "stimkit/panel.hpp"
#include "stimkit/simulate.hpp"

using namespace stimkit;

namespace {

double planted_mean_over_treated(const sim::SimOutput& out) {
  long double s = 0;
  size_t n = 0;
  for (size_t i = 0; i < out.truth.size(); ++i) {
    if (!out.data.consumers[i].treat) continue;
    s += out.truth[i].alpha_true;
    ++n;
  }
  return static_cast<double>(s / static_cast<long double>(n));
}

did::TwfeResult att_estimate(const Dataset& data) {
  const auto p = panel::build_daily_panel(data, panel::CategoryFilter::restaurant, false);
  return did::estimate_twfe(p, did::Outcome::oop);
}

}  // namespace

TEST_CASE("simulation is deterministic in the seed") {
  sim::SimConfig cfg;
  cfg.seed = 5;
  cfg.n_consumers = 400;
  cfg.n_establishments = 30;
  const auto a = sim::simulate(cfg);
  const auto b = sim::simulate(cfg);
  REQUIRE(a.data.orders.size() == b.data.orders.size());
  for (size_t i = 0; i < a.data.orders.size(); i += 97) {
    CHECK(a.data.orders[i].order_id == b.data.orders[i].order_id);
    CHECK(a.data.orders[i].gross_amount == b.data.orders[i].gross_amount);
  }
  REQUIRE(a.truth.size() == b.truth.size());
  for (size_t i = 0; i < a.truth.size(); ++i) {
    CHECK(a.truth[i].alpha_true == b.truth[i].alpha_true);
    CHECK(a.truth[i].cost_true == b.truth[i].cost_true);
  }

  cfg.seed = 6;
  const auto c = sim::simulate(cfg);
  CHECK(c.data.orders.size() != a.data.orders.size());
}

TEST_CASE("treated share tracks the quota and controls carry zero truth") {
  sim::SimConfig cfg;
  cfg.seed = 3;
  cfg.n_consumers = 4000;
  cfg.n_establishments = 40;
  cfg.quota_share = 0.3;
  const auto out = sim::simulate(cfg);
  size_t treated = 0;
  for (size_t i = 0; i < out.data.consumers.size(); ++i) {
    const bool t = out.data.consumers[i].treat != 0;
    treated += t;
    if (!t) {
      CHECK(out.truth[i].alpha_true == 0.0);
      CHECK(out.truth[i].cost_true == 0.0);
    }
  }
  const double share = static_cast<double>(treated) / 4000.0;
  CHECK(share == doctest::Approx(0.3).epsilon(0.08));  // ~3.5 binomial sds
}

TEST_CASE("redemption channel plants exact per-consumer truths") {
  sim::SimConfig cfg;
  cfg.seed = 9;
  cfg.n_consumers = 2000;
  cfg.n_establishments = 30;
  // Defaults: base effect 1.8, no noise, claim rate 0.5, 41 treat days.
  const auto out = sim::simulate(cfg);
  const double net = 1.8 / cfg.claim_rate;                        // 3.6 per claim day
  const double cost_day = 15.0 * net / 37.5;                      // small-coupon share
  const double expect_cost = cfg.claim_rate * 41 * cost_day;      // 29.52
  size_t nonredeemers = 0, carriers = 0;
  for (size_t i = 0; i < out.truth.size(); ++i) {
    if (!out.data.consumers[i].treat) continue;
    const auto& tr = out.truth[i];
    if (tr.alpha_true == 0.0) {
      ++nonredeemers;
      CHECK(tr.cost_true == 0.0);
    } else {
      ++carriers;
      CHECK(tr.alpha_true == doctest::Approx(1.8).epsilon(1e-12));
      CHECK(tr.cost_true == doctest::Approx(expect_cost).epsilon(1e-12));
    }
  }
  // Non-redeemers are 15% of treated by default.
  const double frac = static_cast<double>(nonredeemers) /
                      static_cast<double>(nonredeemers + carriers);
  CHECK(frac == doctest::Approx(0.15).epsilon(0.25));
}

TEST_CASE("floored negative effects keep the exact cost identity") {
  sim::SimConfig cfg;
  cfg.seed = 21;
  cfg.n_consumers = 1500;
  cfg.n_establishments = 25;
  cfg.effect.base = -40.0;  // far below the redemption floor
  cfg.behavior.mental = 1.0;
  cfg.behavior.buncher = 0.0;
  cfg.behavior.nonredeemer = 0.0;
  const auto out = sim::simulate(cfg);
  const int days = cfg.period.n_treat_days();
  for (size_t i = 0; i < out.truth.size(); ++i) {
    if (!out.data.consumers[i].treat) continue;
    const auto& tr = out.truth[i];
    CHECK(tr.alpha_true > -15.0 * cfg.claim_rate);
    CHECK(tr.alpha_true < 0.0);
    // Floored discounts cost the government exactly what consumers save.
    CHECK(tr.cost_true ==
          doctest::Approx(-static_cast<double>(days) * tr.alpha_true).epsilon(1e-9));
  }
}

TEST_CASE("upsize channel truth averages claim rate x upsize x order rate") {
  sim::SimConfig cfg;
  cfg.seed = 13;
  cfg.n_consumers = 6000;
  cfg.n_establishments = 40;
  cfg.channel = sim::EffectChannel::order_upsize;
  const auto out = sim::simulate(cfg);
  std::vector<double> alphas;
  for (size_t i = 0; i < out.truth.size(); ++i) {
    if (!out.data.consumers[i].treat) continue;
    CHECK(out.truth[i].cost_true == 0.0);
    CHECK(out.truth[i].alpha_true > 0.0);
    alphas.push_back(out.truth[i].alpha_true);
  }
  // alpha = claim_rate * upsize * lambda_i with E[lambda] = order_rate.
  CHECK(mean(alphas) ==
        doctest::Approx(cfg.claim_rate * cfg.upsize_amount * cfg.order_rate).epsilon(0.05));
}

TEST_CASE("estimator recovers the planted mean effect per channel") {
  for (const auto channel : {sim::EffectChannel::redemption, sim::EffectChannel::order_upsize,
                             sim::EffectChannel::extra_frequency}) {
    sim::SimConfig cfg;
    cfg.seed = 31;
    cfg.n_consumers = 4000;
    cfg.channel = channel;
    cfg.behavior.mental = 0.6;
    cfg.behavior.buncher = 0.4;
    cfg.behavior.nonredeemer = 0.0;
    const auto out = sim::simulate(cfg);
    const double planted = planted_mean_over_treated(out);
    const auto att = att_estimate(out.data);
    INFO("channel ", static_cast<int>(channel), ": att ", att.alpha, " planted ", planted,
         " se ", att.se);
    CHECK(std::abs(att.alpha - planted) < 3.0 * att.se);
  }
}

TEST_CASE("planted pre-trend drift is detected and claims stay in window") {
  sim::SimConfig cfg;
  cfg.seed = 17;
  cfg.n_consumers = 3000;
  cfg.pretrend_drift = 0.4;
  const auto out = sim::simulate(cfg);
  const auto p = panel::build_daily_panel(out.data, panel::CategoryFilter::restaurant, false);
  const auto pre = did::pretrend_test(p);
  CHECK(pre.q > 0);
  CHECK(pre.p < 0.01);

  std::set<std::string> treated_ids;
  for (const auto& c : out.data.consumers)
    if (c.treat) treated_ids.insert(c.consumer_id);
  for (const auto& cl : out.data.claims) {
    CHECK(out.data.period.tag(cl.date) == PeriodTag::treat);
    CHECK(treated_ids.count(cl.consumer_id) == 1);
  }
}

TEST_CASE("bunchers concentrate redemption orders at the threshold") {
  sim::SimConfig cfg;
  cfg.seed = 23;
  cfg.n_consumers = 4000;
  cfg.behavior.mental = 0.1;
  cfg.behavior.buncher = 0.9;
  cfg.behavior.nonredeemer = 0.0;
  const auto out = sim::simulate(cfg);
  const auto hist = did::bunching_histogram(out.data);
  const double redemption_spike = hist.spike_ratio(hist.redemption_day, 50.0);
  const double pre_spike = hist.spike_ratio(hist.pre, 50.0);
  INFO("redemption spike ", redemption_spike, " pre spike ", pre_spike);
  CHECK(redemption_spike > 2.0 * pre_spike);
  CHECK(redemption_spike > 3.0);
}

TEST_CASE("spatial sorting plants the wealth gradient") {
  sim::SimConfig cfg;
  cfg.seed = 29;
  cfg.n_consumers = 8000;
  const auto out = sim::simulate(cfg);
  std::vector<double> wealth, share;
  for (const auto& c : out.data.consumers) {
    wealth.push_back(c.wealth);
    share.push_back(c.nonsme_share_3km);
  }
  CHECK(pearson_corr(wealth, share) > 0.2);

  cfg.sorting_rho = 0.0;
  cfg.n_consumers = 4000;
  const auto flat = sim::simulate(cfg);
  wealth.clear();
  share.clear();
  for (const auto& c : flat.data.consumers) {
    wealth.push_back(c.wealth);
    share.push_back(c.nonsme_share_3km);
  }
  CHECK(std::abs(pearson_corr(wealth, share)) < 0.06);
}

TEST_CASE("config validation rejects malformed inputs") {
  sim::SimConfig cfg;
  cfg.n_consumers = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.quota_share = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.behavior.mental = 0.9;
  cfg.behavior.buncher = 0.2;  // sums to 1.25
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.favorites = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.period.treat_start = cfg.period.pre_start;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

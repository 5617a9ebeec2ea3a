#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "stimkit/psm.hpp"

using namespace stimkit;
using testutil::consumer;

namespace {

// Grouped design: 100 non-members with 30 treated, 100 members with 60
// treated. The saturated logistic MLE fits the group shares exactly, so the
// fitted scores have a closed form independent of the optimizer.
std::vector<ConsumerRecord> grouped_members() {
  std::vector<ConsumerRecord> cs;
  size_t id = 0;
  auto add = [&](double member, int treat, int count) {
    for (int k = 0; k < count; ++k) {
      auto c = consumer("c" + std::to_string(100 + id++), treat);
      c.member = member;
      cs.push_back(c);
    }
  };
  add(0.0, 1, 30);
  add(0.0, 0, 70);
  add(1.0, 1, 60);
  add(1.0, 0, 40);
  return cs;
}

}  // namespace

TEST_CASE("propensity fit reproduces the saturated group MLE") {
  const auto cs = grouped_members();
  const auto fit = psm::fit_propensity(cs, {"member"});
  REQUIRE(fit.score.size() == cs.size());
  CHECK(fit.covariates == std::vector<std::string>{"member"});
  CHECK(fit.iterations > 0);
  for (size_t i = 0; i < cs.size(); ++i) {
    const double expect = cs[i].member > 0 ? 0.6 : 0.3;
    CHECK(fit.score[i] == doctest::Approx(expect).epsilon(1e-6));
  }
  // Positive association: members are more likely treated.
  REQUIRE(fit.coef.size() == 2);
  CHECK(fit.coef[1] > 0);
}

TEST_CASE("propensity fit rejects empty groups and unknown covariates") {
  auto cs = grouped_members();
  CHECK_THROWS_AS(psm::fit_propensity(cs, {"no_such_covariate"}), ConfigError);
  for (auto& c : cs) c.treat = 1;
  CHECK_THROWS(psm::fit_propensity(cs, {"member"}));
}

TEST_CASE("nearest neighbor matching picks closest scores with replacement") {
  // Treated scores 0.50 and 0.90; controls at 0.48, 0.60, 0.95.
  std::vector<ConsumerRecord> cs = {consumer("c1", 1), consumer("c2", 1), consumer("c3", 0),
                                    consumer("c4", 0), consumer("c5", 0)};
  psm::PropensityFit fit;
  fit.score = {0.50, 0.90, 0.48, 0.60, 0.95};

  const auto m = psm::match_nn(fit, cs);
  REQUIRE(m.treated.size() == 2);
  CHECK(m.treated[0] == 0);
  CHECK(m.control_for[0] == 2);  // |0.50-0.48| = 0.02 beats |0.60-0.50| = 0.10
  CHECK(m.treated[1] == 1);
  CHECK(m.control_for[1] == 4);  // |0.95-0.90| beats |0.60-0.90|
  CHECK(m.n_unique_controls == 2);
  CHECK(m.dropped_no_support == 0);
  CHECK(m.weight == std::vector<double>{1, 1, 1, 0, 1});

  // A moderate caliper keeps the close pair (0.02) and drops the far one (0.05).
  const auto capped = psm::match_nn(fit, cs, 0.03);
  CHECK(capped.dropped_no_support == 1);
  REQUIRE(capped.treated.size() == 1);
  CHECK(capped.treated[0] == 0);

  // A caliper below every distance leaves nobody matched.
  CHECK_THROWS_AS(psm::match_nn(fit, cs, 0.001), EstimationError);

  // Ties resolve to the smallest consumer index.
  psm::PropensityFit tied;
  tied.score = {0.50, 0.90, 0.45, 0.55, 0.90};
  const auto t = psm::match_nn(tied, cs);
  CHECK(t.control_for[0] == 2);  // 0.45 and 0.55 equidistant; c3 wins

  // Reused controls accumulate weight.
  psm::PropensityFit reuse;
  reuse.score = {0.50, 0.52, 0.51, 0.99, 0.999};
  const auto r = psm::match_nn(reuse, cs);
  CHECK(r.weight[2] == 2.0);
  CHECK(r.n_unique_controls == 1);

  CHECK_THROWS_AS(psm::match_nn(fit, cs, 0.0), ConfigError);
}

TEST_CASE("balance table means and welch t on hand values") {
  std::vector<ConsumerRecord> cs = {consumer("t1", 1), consumer("t2", 1), consumer("u1", 0),
                                    consumer("u2", 0), consumer("u3", 0)};
  const double ages[] = {10, 20, 12, 30, 50};
  for (size_t i = 0; i < 5; ++i) cs[i].age = ages[i];

  SUBCASE("unit weights") {
    const std::vector<double> w = {0, 0, 1, 1, 1};
    const auto rows = psm::balance_table(cs, {"age"}, w);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mean_treated == doctest::Approx(15.0).epsilon(1e-15));
    CHECK(rows[0].mean_control == doctest::Approx(92.0 / 3.0).epsilon(1e-12));
    CHECK(rows[0].diff == doctest::Approx(15.0 - 92.0 / 3.0).epsilon(1e-12));
    // Welch denominator: var_t/n_t + var_c/n_c with sample variances.
    const auto sq = [](double x) { return x * x; };
    const double var_t = 50.0;  // {10,20}
    const double var_c =
        (sq(12 - 92.0 / 3.0) + sq(30 - 92.0 / 3.0) + sq(50 - 92.0 / 3.0)) / 2.0;
    const double t = (15.0 - 92.0 / 3.0) / std::sqrt(var_t / 2 + var_c / 3);
    CHECK(rows[0].t == doctest::Approx(t).epsilon(1e-12));
    CHECK(!rows[0].flagged);
  }

  SUBCASE("dropping a control via zero weight moves the mean") {
    const std::vector<double> w = {0, 0, 1, 1, 0};
    const auto rows = psm::balance_table(cs, {"age"}, w);
    CHECK(rows[0].mean_control == doctest::Approx(21.0).epsilon(1e-12));
  }

  SUBCASE("degenerate variance flags the row") {
    std::vector<ConsumerRecord> flat = {consumer("t1", 1), consumer("t2", 1),
                                        consumer("u1", 0), consumer("u2", 0)};
    for (auto& c : flat) c.age = 7.0;
    const std::vector<double> w = {0, 0, 1, 1};
    const auto rows = psm::balance_table(flat, {"age"}, w);
    CHECK(rows[0].flagged);
    CHECK(rows[0].t == 0.0);
  }

  CHECK_THROWS_AS(psm::balance_table(cs, {"age"}, {1.0}), ConfigError);
}

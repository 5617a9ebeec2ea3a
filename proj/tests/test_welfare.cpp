#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "stimkit/welfare.hpp"

using namespace stimkit;
using testutil::consumer;
using testutil::establishment;
using testutil::order;

namespace {

// Noiseless log-linear establishment-days: ln Q = beta0 - beta1 ln p, with a
// single price per day so winsorization cannot move anything.
std::vector<welfare::EstablishmentDay> loglinear_rows(double beta0, double beta1, int n_days,
                                                      int per_day) {
  std::vector<welfare::EstablishmentDay> rows;
  for (int d = 0; d < n_days; ++d) {
    const double price = 20.0 + d;
    const double q = std::exp(beta0 - beta1 * std::log(price));
    for (int k = 0; k < per_day; ++k) rows.push_back({1000 + d, q, price});
  }
  return rows;
}

}  // namespace

TEST_CASE("demand panel groups pre-period restaurant orders by shop and day") {
  Dataset d;
  d.period = testutil::small_period();
  const int64_t jul = days_from_civil(2022, 7, 1) - 1;
  d.consumers = {consumer("c1", 1), consumer("c2", 0)};
  d.establishments = {establishment("e1", 10, 40, 1), establishment("e2", 20, 60, 0)};
  d.orders = {
      order("o1", "c1", "e1", jul + 4, 30),
      order("o2", "c2", "e1", jul + 4, 50),
      order("o3", "c1", "e1", jul + 5, 20),
      order("o4", "c2", "e2", jul + 4, 60),
      order("o5", "c1", "e2", jul + 4, 99, 0, OrderCategory::grocery),  // excluded
      order("o6", "c1", "e1", jul + 9, 80),                             // treat window
  };
  const auto rows = welfare::demand_panel(d);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].day == jul + 4);
  CHECK(rows[0].quantity == 2.0);
  CHECK(rows[0].price == doctest::Approx(40.0).epsilon(1e-15));
  CHECK(rows[1].day == jul + 5);
  CHECK(rows[1].quantity == 1.0);
  CHECK(rows[1].price == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(rows[2].quantity == 1.0);
  CHECK(rows[2].price == doctest::Approx(60.0).epsilon(1e-15));
}

TEST_CASE("noiseless log-linear rows are recovered exactly") {
  const auto fit = welfare::estimate_demand(loglinear_rows(7.0, 1.5, 40, 2));
  CHECK(std::abs(fit.beta1 - 1.5) < 1e-8);
  CHECK(std::abs(fit.beta0 - 7.0) < 1e-8);
  CHECK(fit.n_obs == 80);
  CHECK(!fit.markup_warning);
  REQUIRE(fit.winsor_bounds.size() == 40);
  for (const auto& b : fit.winsor_bounds) CHECK(b.lo == b.hi);

  // Inelastic but downward-sloping demand only warns.
  const auto soft = welfare::estimate_demand(loglinear_rows(5.0, 0.8, 40, 1));
  CHECK(soft.markup_warning);
  CHECK(std::abs(soft.beta1 - 0.8) < 1e-8);
}

TEST_CASE("demand estimation failure modes") {
  CHECK_THROWS_AS(welfare::estimate_demand(loglinear_rows(7.0, 1.5, 10, 1)), EstimationError);
  CHECK_THROWS_AS(welfare::estimate_demand(loglinear_rows(7.0, -0.5, 40, 1)), EstimationError);

  auto bad = loglinear_rows(7.0, 1.5, 40, 1);
  bad[3].price = 0.0;
  CHECK_THROWS_AS(welfare::estimate_demand(bad), DataError);

  std::vector<welfare::EstablishmentDay> flat;
  for (int d = 0; d < 40; ++d) flat.push_back({1000 + d, 5.0, 30.0});
  CHECK_THROWS_AS(welfare::estimate_demand(flat), EstimationError);
}

TEST_CASE("winsorization clamps within-day price outliers") {
  // 19 shops at price 10 and one at 1000 on every day; quantities follow the
  // clean price. Type-7 bounds on each day: hi = 10 + 0.05 * 990 = 59.5.
  std::vector<welfare::EstablishmentDay> rows;
  for (int d = 0; d < 2; ++d) {
    const double base = d == 0 ? 10.0 : 40.0;
    for (int k = 0; k < 19; ++k) rows.push_back({2000 + d, std::exp(4.0) / base, base});
    rows.push_back({2000 + d, std::exp(4.0) / base, base * 100.0});
  }
  const auto fit = welfare::estimate_demand(rows);
  REQUIRE(fit.winsor_bounds.size() == 2);
  CHECK(fit.winsor_bounds[0].lo == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(fit.winsor_bounds[0].hi == doctest::Approx(59.5).epsilon(1e-12));

  // Replicate the pooled OLS on hand-clamped prices.
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double hi = (r.day == 2000 ? 59.5 : 238.0);
    const double lo = (r.day == 2000 ? 10.0 : 40.0);
    const double x = std::log(std::clamp(r.price, lo, hi));
    const double y = std::log(r.quantity);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(rows.size());
  const double slope =
      static_cast<double>(sxy - sx * sy / n) / static_cast<double>(sxx - sx * sx / n);
  CHECK(fit.beta1 == doctest::Approx(-slope).epsilon(1e-10));
}

TEST_CASE("producer surplus applies the implied margin to allocated gains") {
  welfare::DemandFit fit;
  fit.beta1 = 1.5;
  incidence::EstablishmentGains gains;
  gains.establishment_ids = {"e1", "e2"};
  gains.tau = {12.0, 3.0};
  const auto ps = welfare::producer_surplus_delta(fit, gains);
  CHECK(ps.kappa == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(ps.delta_pi.size() == 2);
  CHECK(ps.delta_pi[0] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(ps.delta_pi[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ps.total == doctest::Approx(10.0).epsilon(1e-12));

  // Scaling the gains scales the surplus one for one.
  incidence::EstablishmentGains doubled = gains;
  doubled.tau = {24.0, 6.0};
  CHECK(welfare::producer_surplus_delta(fit, doubled).total ==
        doctest::Approx(20.0).epsilon(1e-12));

  fit.beta1 = 1.0;
  CHECK_THROWS_AS(welfare::producer_surplus_delta(fit, gains), EstimationError);
}

TEST_CASE("consumer gain sums subsidies of non-adjusters") {
  const std::vector<double> catt = {-1.0, 0.0, 0.5, 2.0};
  const std::vector<double> subsidy = {10.0, 20.0, 30.0, 40.0};
  const auto g0 = welfare::consumer_gain(catt, subsidy);
  CHECK(g0.gain == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(g0.n_nonadjusters == 2);
  const auto g1 = welfare::consumer_gain(catt, subsidy, 0.5);
  CHECK(g1.gain == doctest::Approx(60.0).epsilon(1e-15));
  CHECK(g1.n_nonadjusters == 3);
  CHECK_THROWS_AS(welfare::consumer_gain(catt, {1.0}), ConfigError);
}

TEST_CASE("mvpf ratio, homogeneity, and the published decomposition") {
  const auto w = welfare::mvpf(2.0, 2.88, 1.0);
  CHECK(w.mvpf == doctest::Approx(4.88).epsilon(1e-12));

  // Degree-zero homogeneity: scaling all money flows leaves the ratio alone.
  const auto scaled = welfare::mvpf(2.0 * 7.3, 2.88 * 7.3, 7.3);
  CHECK(scaled.mvpf == doctest::Approx(w.mvpf).epsilon(1e-12));

  const auto pub = welfare::mvpf(7701.772, 2856.284, 2856.284);
  CHECK(pub.mvpf == doctest::Approx((7701.772 + 2856.284) / 2856.284).epsilon(1e-15));
  CHECK(std::abs(pub.mvpf - 3.70) < 0.005);

  CHECK_THROWS_AS(welfare::mvpf(1.0, 1.0, 0.0), EstimationError);
  CHECK_THROWS_AS(welfare::mvpf(1.0, 1.0, -2.0), EstimationError);
}

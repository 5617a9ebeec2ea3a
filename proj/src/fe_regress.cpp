#include "stimkit/fe_regress.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>

namespace stimkit::did {

namespace {

// Absorb unit and time means (weighted) from `v` in place by alternating
// projection. Exact in one round on balanced panels; iterated otherwise.
void demean_two_way(std::vector<double>& v, const FePanelData& d) {
  const size_t n = v.size();
  std::vector<long double> unit_sum(d.n_units), unit_w(d.n_units, 0);
  std::vector<long double> time_sum(d.n_times), time_w(d.n_times, 0);
  for (size_t i = 0; i < n; ++i) {
    unit_w[d.unit[i]] += d.weight[i];
    time_w[d.time[i]] += d.weight[i];
  }
  for (int iter = 0; iter < 100; ++iter) {
    long double shift = 0;
    std::fill(unit_sum.begin(), unit_sum.end(), 0.0L);
    for (size_t i = 0; i < n; ++i) unit_sum[d.unit[i]] += d.weight[i] * v[i];
    for (int u = 0; u < d.n_units; ++u) {
      unit_sum[u] /= unit_w[u];
      shift = std::max(shift, std::abs(unit_sum[u]));
    }
    for (size_t i = 0; i < n; ++i) v[i] -= static_cast<double>(unit_sum[d.unit[i]]);

    std::fill(time_sum.begin(), time_sum.end(), 0.0L);
    for (size_t i = 0; i < n; ++i) time_sum[d.time[i]] += d.weight[i] * v[i];
    for (int t = 0; t < d.n_times; ++t) {
      time_sum[t] /= time_w[t];
      shift = std::max(shift, std::abs(time_sum[t]));
    }
    for (size_t i = 0; i < n; ++i) v[i] -= static_cast<double>(time_sum[d.time[i]]);

    if (shift < 1e-11) break;
  }
}

}  // namespace

double FeRegressionResult::se(size_t j) const { return std::sqrt(vcov[j][j]); }

FeRegressionResult fe_regress(const FePanelData& data) {
  const size_t n = data.y.size();
  const size_t k = data.z.size();
  if (n == 0) throw EstimationError("fixed-effects regression: no cells");
  if (k == 0) throw EstimationError("fixed-effects regression: no regressors");
  for (const auto& col : data.z)
    if (col.size() != n) throw EstimationError("fixed-effects regression: ragged columns");
  if (data.n_units < 2 || data.n_times < 2)
    throw EstimationError("fixed-effects regression: need at least 2 units and 2 time periods");
  if (data.n_clusters < 2)
    throw EstimationError("fixed-effects regression: need at least 2 clusters");

  std::vector<double> y = data.y;
  std::vector<std::vector<double>> z = data.z;
  demean_two_way(y, data);
  for (auto& col : z) demean_two_way(col, data);

  // Weighted OLS on the within-transformed columns.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  for (size_t i = 0; i < n; ++i) {
    const double w = data.weight[i];
    for (size_t r = 0; r < k; ++r) {
      b(r) += w * z[r][i] * y[i];
      for (size_t c = r; c < k; ++c) a(r, c) += w * z[r][i] * z[c][i];
    }
  }
  for (size_t r = 0; r < k; ++r)
    for (size_t c = 0; c < r; ++c) a(r, c) = a(c, r);

  const double scale = a.diagonal().maxCoeff();
  if (!(scale > 0))
    throw EstimationError("fixed-effects regression: no identifying variation after demeaning");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array().abs() < 1e-12 * scale).any())
    throw EstimationError("fixed-effects regression: collinear regressors after demeaning");
  const Eigen::VectorXd beta = ldlt.solve(b);

  // CR1 cluster-robust covariance.
  std::vector<double> resid(n);
  for (size_t i = 0; i < n; ++i) {
    double fit = 0;
    for (size_t r = 0; r < k; ++r) fit += beta(r) * z[r][i];
    resid[i] = y[i] - fit;
  }
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(data.n_clusters, k);
  for (size_t i = 0; i < n; ++i) {
    const double we = data.weight[i] * resid[i];
    for (size_t r = 0; r < k; ++r) scores(data.cluster[i], r) += we * z[r][i];
  }
  const Eigen::MatrixXd meat = scores.transpose() * scores;
  const Eigen::MatrixXd a_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));

  long double weighted_n = 0;
  for (size_t i = 0; i < n; ++i) weighted_n += data.weight[i];
  const double nn = static_cast<double>(weighted_n);
  const double g = data.n_clusters;
  // Absorbed fixed effects count toward the regression's parameters.
  const double kk = static_cast<double>(data.n_units + data.n_times - 1 + static_cast<int>(k));
  double c = g / (g - 1.0);
  if (nn > kk + 1) c *= (nn - 1.0) / (nn - kk);
  const Eigen::MatrixXd v = c * a_inv * meat * a_inv;

  FeRegressionResult out;
  out.beta.assign(beta.data(), beta.data() + k);
  out.vcov.assign(k, std::vector<double>(k));
  for (size_t r = 0; r < k; ++r)
    for (size_t cidx = 0; cidx < k; ++cidx) out.vcov[r][cidx] = v(r, cidx);
  out.weighted_n = nn;
  out.n_cells = n;
  out.n_clusters = data.n_clusters;
  return out;
}

WaldTest wald_all_zero(const FeRegressionResult& r) {
  const size_t k = r.beta.size();
  Eigen::MatrixXd v(k, k);
  Eigen::VectorXd beta(k);
  for (size_t i = 0; i < k; ++i) {
    beta(i) = r.beta[i];
    for (size_t j = 0; j < k; ++j) v(i, j) = r.vcov[i][j];
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  if (ldlt.info() != Eigen::Success)
    throw EstimationError("joint test: singular coefficient covariance");
  const double wald = beta.dot(ldlt.solve(beta));
  WaldTest t;
  t.q = static_cast<int>(k);
  t.F = wald / static_cast<double>(k);
  const double df2 = static_cast<double>(r.n_clusters - 1);
  if (df2 < 1) throw EstimationError("joint test: too few clusters");
  boost::math::fisher_f dist(static_cast<double>(k), df2);
  t.p = 1.0 - boost::math::cdf(dist, std::max(0.0, t.F));
  return t;
}

}  // namespace stimkit::did

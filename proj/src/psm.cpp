#include "stimkit/psm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace stimkit::psm {

const std::vector<std::string>& default_psm_covariates() {
  static const std::vector<std::string> names = {"age",    "female",      "member",
                                                 "wealth", "n_orders_6m", "spend_per_order_6m"};
  return names;
}

PropensityFit fit_propensity(const std::vector<ConsumerRecord>& consumers,
                             const std::vector<std::string>& covariates) {
  const size_t n = consumers.size();
  if (n < 2) throw EstimationError("propensity fit needs at least 2 consumers");
  if (covariates.empty()) throw ConfigError("propensity fit needs at least one covariate");
  size_t n_treated = 0;
  for (const auto& c : consumers) n_treated += c.treat;
  if (n_treated == 0 || n_treated == n)
    throw EstimationError("propensity fit needs both treated and control consumers");

  auto cols = covariate_columns(consumers, covariates);
  for (size_t j = 0; j < cols.size(); ++j) standardize(cols[j], covariates[j]);

  const size_t k = covariates.size() + 1;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n);
  for (size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (size_t j = 0; j < covariates.size(); ++j) x(i, j + 1) = cols[j][i];
    y(i) = consumers[i].treat;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd eta(n), p(n);
  int iter = 0;
  bool converged = false;
  for (; iter < 60; ++iter) {
    eta = x * beta;
    for (size_t i = 0; i < n; ++i) p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
    for (size_t i = 0; i < n; ++i) {
      const double w = std::max(p(i) * (1.0 - p(i)), 1e-12);
      grad += (y(i) - p(i)) * x.row(i).transpose();
      xtwx += w * x.row(i).transpose() * x.row(i);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success)
      throw EstimationError("propensity fit: singular information matrix");
    const Eigen::VectorXd step = ldlt.solve(grad);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) {
      converged = true;
      break;
    }
    if (beta.lpNorm<Eigen::Infinity>() > 50.0) break;  // diverging: separation
  }
  if (!converged) {
    size_t worst = 0;
    for (size_t j = 1; j < covariates.size(); ++j)
      if (std::abs(beta(j + 1)) > std::abs(beta(worst + 1))) worst = j;
    throw EstimationError("propensity fit did not converge: possible separation on '" +
                          covariates[worst] + "'");
  }

  PropensityFit out;
  out.covariates = covariates;
  out.coef.assign(beta.data(), beta.data() + k);
  out.iterations = iter + 1;
  out.score.resize(n);
  eta = x * beta;
  for (size_t i = 0; i < n; ++i) out.score[i] = 1.0 / (1.0 + std::exp(-eta(i)));
  return out;
}

MatchedSample match_nn(const PropensityFit& fit, const std::vector<ConsumerRecord>& consumers,
                       std::optional<double> caliper) {
  const size_t n = consumers.size();
  if (fit.score.size() != n) throw ConfigError("match_nn: scores do not align with consumers");
  if (caliper && !(*caliper > 0)) throw ConfigError("match_nn: caliper must be positive");

  // Controls sorted by (score, consumer index); index order equals id order.
  std::vector<size_t> controls;
  for (size_t i = 0; i < n; ++i)
    if (!consumers[i].treat) controls.push_back(i);
  if (controls.empty()) throw EstimationError("match_nn: no control consumers");
  std::sort(controls.begin(), controls.end(), [&](size_t a, size_t b) {
    if (fit.score[a] != fit.score[b]) return fit.score[a] < fit.score[b];
    return a < b;
  });
  std::vector<double> sorted_scores(controls.size());
  for (size_t j = 0; j < controls.size(); ++j) sorted_scores[j] = fit.score[controls[j]];

  // Smallest consumer index within each run of tied scores, so distance ties
  // resolve to the smallest consumer_id deterministically.
  std::vector<size_t> run_min(controls.size());
  for (size_t j = 0; j < controls.size(); ++j) {
    if (j > 0 && sorted_scores[j] == sorted_scores[j - 1])
      run_min[j] = run_min[j - 1];
    else
      run_min[j] = controls[j];
  }

  MatchedSample out;
  out.weight.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    if (!consumers[i].treat) continue;
    const double s = fit.score[i];
    const auto it = std::lower_bound(sorted_scores.begin(), sorted_scores.end(), s);
    const size_t right = static_cast<size_t>(it - sorted_scores.begin());

    size_t best = controls.size();
    double best_dist = 0;
    auto consider = [&](size_t pos) {
      if (pos >= controls.size()) return;
      const double dist = std::abs(sorted_scores[pos] - s);
      const size_t cand = run_min[pos];
      if (best == controls.size() || dist < best_dist ||
          (dist == best_dist && cand < best)) {
        best = cand;
        best_dist = dist;
      }
    };
    if (right > 0) consider(right - 1);
    consider(right);
    // `right` may sit inside a tie run whose representative is to its left;
    // also check the next distinct score upward.
    if (right + 1 < controls.size() && sorted_scores[right + 1] == sorted_scores[right])
      consider(right);  // no-op, run_min already handled
    if (best == controls.size()) continue;
    if (caliper && best_dist > *caliper) {
      ++out.dropped_no_support;
      continue;
    }
    out.treated.push_back(i);
    out.control_for.push_back(best);
    out.weight[i] = 1.0;
    out.weight[best] += 1.0;
  }
  if (out.treated.empty()) throw EstimationError("match_nn: no treated consumer matched");

  std::vector<size_t> uniq = out.control_for;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  out.n_unique_controls = uniq.size();
  return out;
}

std::vector<BalanceRow> balance_table(const std::vector<ConsumerRecord>& consumers,
                                      const std::vector<std::string>& covariates,
                                      const std::vector<double>& control_weight) {
  const size_t n = consumers.size();
  if (control_weight.size() != n)
    throw ConfigError("balance_table: weights do not align with consumers");
  const auto cols = covariate_columns(consumers, covariates);

  std::vector<BalanceRow> rows;
  rows.reserve(covariates.size());
  for (size_t j = 0; j < covariates.size(); ++j) {
    const auto& col = cols[j];
    long double sum_t = 0, sum_c = 0, w_c = 0;
    size_t n_t = 0;
    for (size_t i = 0; i < n; ++i) {
      if (consumers[i].treat) {
        sum_t += col[i];
        ++n_t;
      } else if (control_weight[i] > 0) {
        sum_c += control_weight[i] * col[i];
        w_c += control_weight[i];
      }
    }
    if (n_t == 0 || w_c <= 0)
      throw EstimationError("balance_table: need treated and weighted control consumers");
    const double mt = static_cast<double>(sum_t / n_t);
    const double mc = static_cast<double>(sum_c / w_c);
    long double ss_t = 0, ss_c = 0;
    for (size_t i = 0; i < n; ++i) {
      if (consumers[i].treat) {
        ss_t += (col[i] - mt) * (col[i] - mt);
      } else if (control_weight[i] > 0) {
        ss_c += control_weight[i] * (col[i] - mc) * (col[i] - mc);
      }
    }
    BalanceRow row;
    row.covariate = covariates[j];
    row.mean_treated = mt;
    row.mean_control = mc;
    row.diff = mt - mc;
    const double var_t = n_t > 1 ? static_cast<double>(ss_t / (n_t - 1)) : 0.0;
    const double var_c = w_c > 1 ? static_cast<double>(ss_c / (w_c - 1)) : 0.0;
    const double denom = var_t / static_cast<double>(n_t) + var_c / static_cast<double>(w_c);
    if (denom > 0) {
      row.t = row.diff / std::sqrt(denom);
    } else {
      row.t = 0;
      row.flagged = true;  // no variance on either side: t undefined
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stimkit::psm

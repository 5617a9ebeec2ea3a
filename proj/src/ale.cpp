#include <algorithm>
#include <cmath>
#include <map>

#include "stimkit/ale.hpp"

namespace stimkit::ale {

SurfaceFit fit_psi_surface(const std::vector<double>& psi, const forest::ColMatrix& x,
                           const forest::ForestParams& params) {
  SurfaceFit out;
  out.forest = forest::RegressionForest::train(x, psi, params);
  out.oob_r2 = variance(psi) > 0 ? out.forest.oob_r2() : 0.0;
  return out;
}

double AleCurve::evaluate(double xk) const {
  if (binary) return xk == bin_edges[1] ? h_tilde[1] : h_tilde[0];
  const size_t n_bins = bin_edges.size() - 1;
  const double lo = bin_edges.front();
  const double width = (bin_edges.back() - lo) / static_cast<double>(n_bins);
  auto bin = static_cast<long>(std::floor((xk - lo) / width));
  bin = std::clamp<long>(bin, 0, static_cast<long>(n_bins) - 1);
  return h_tilde[static_cast<size_t>(bin) + 1];
}

AleCurve ale_curve(const forest::RegressionForest& surface, const forest::ColMatrix& x,
                   size_t k, const std::string& name, int n_bins) {
  x.check();
  if (k >= x.p()) throw ConfigError("ale: covariate index out of range");
  if (n_bins < 1) throw ConfigError("ale: n_bins must be >= 1");
  const auto& col = x.cols[k];

  std::vector<double> distinct = col;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2)
    throw EstimationError("ale: covariate '" + name + "' is constant");

  AleCurve out;
  out.covariate = name;

  auto predict_at = [&](const std::vector<uint32_t>& rows, double value) {
    forest::ColMatrix q;
    q.n = rows.size();
    q.cols.resize(x.p());
    for (size_t f = 0; f < x.p(); ++f) {
      q.cols[f].resize(rows.size());
      for (size_t r = 0; r < rows.size(); ++r)
        q.cols[f][r] = f == k ? value : x.cols[f][rows[r]];
    }
    return surface.predict(q);
  };

  if (distinct.size() == 2) {
    // Two-level analog: average local difference over the whole sample,
    // centered by the level frequencies.
    std::vector<uint32_t> all(x.n);
    for (size_t i = 0; i < x.n; ++i) all[i] = static_cast<uint32_t>(i);
    const auto hi = predict_at(all, distinct[1]);
    const auto lo = predict_at(all, distinct[0]);
    long double dsum = 0;
    for (size_t i = 0; i < x.n; ++i) dsum += hi[i] - lo[i];
    const double delta = static_cast<double>(dsum / x.n);
    size_t n1 = 0;
    for (const double v : col) n1 += v == distinct[1];
    const double pbar = static_cast<double>(n1) / static_cast<double>(x.n);
    out.binary = true;
    out.bin_edges = {distinct[0], distinct[1]};
    out.h_tilde = {-pbar * delta, (1.0 - pbar) * delta};
    out.var_component = pbar * (1.0 - pbar) * delta * delta;
    return out;
  }

  const int kb = std::min<int>(n_bins, static_cast<int>(distinct.size()) - 1);
  const double lo = distinct.front(), hi = distinct.back();
  const double width = (hi - lo) / kb;
  out.bin_edges.resize(kb + 1);
  for (int j = 0; j <= kb; ++j) out.bin_edges[j] = lo + width * j;
  out.bin_edges[kb] = hi;

  std::vector<std::vector<uint32_t>> bins(kb);
  for (size_t i = 0; i < x.n; ++i) {
    auto b = static_cast<long>(std::floor((col[i] - lo) / width));
    b = std::clamp<long>(b, 0, kb - 1);
    bins[b].push_back(static_cast<uint32_t>(i));
  }

  // Accumulate per-bin mean local differences; empty bins contribute no jump
  // and fold into the next occupied bin, whose difference spans the gap.
  std::vector<double> g(kb + 1, 0.0);
  int pending = 0;  // left edge index of the current difference span
  for (int j = 0; j < kb; ++j) {
    if (bins[j].empty()) {
      ++out.merged_bins;
      g[j + 1] = g[pending];
      continue;
    }
    const auto f_hi = predict_at(bins[j], out.bin_edges[j + 1]);
    const auto f_lo = predict_at(bins[j], out.bin_edges[pending]);
    long double d = 0;
    for (size_t r = 0; r < bins[j].size(); ++r) d += f_hi[r] - f_lo[r];
    g[j + 1] = g[pending] + static_cast<double>(d / bins[j].size());
    pending = j + 1;
  }

  // Center by the sample-weighted right-edge values.
  long double csum = 0;
  for (int j = 0; j < kb; ++j) csum += static_cast<long double>(bins[j].size()) * g[j + 1];
  const double center = static_cast<double>(csum / x.n);
  out.h_tilde.resize(kb + 1);
  for (int j = 0; j <= kb; ++j) out.h_tilde[j] = g[j] - center;

  long double vsum = 0;
  for (int j = 0; j < kb; ++j)
    vsum += static_cast<long double>(bins[j].size()) * out.h_tilde[j + 1] * out.h_tilde[j + 1];
  out.var_component = static_cast<double>(vsum / x.n);
  return out;
}

Decomposition variance_decomposition(const std::vector<AleCurve>& curves,
                                     const std::vector<std::string>& demand,
                                     const std::vector<std::string>& supply,
                                     const std::string& scheme_name) {
  std::map<std::string, double> var;
  for (const auto& c : curves) var[c.covariate] = c.var_component;
  auto lookup = [&](const std::string& name) {
    const auto it = var.find(name);
    if (it == var.end())
      throw ConfigError("decomposition: no ALE curve for covariate '" + name + "'");
    return it->second;
  };

  Decomposition out;
  out.scheme = scheme_name;
  long double vd = 0, vs = 0;
  for (const auto& name : demand) {
    const double v = lookup(name);
    out.components.emplace_back(name, v);
    vd += v;
  }
  for (const auto& name : supply) {
    const double v = lookup(name);
    out.components.emplace_back(name, v);
    vs += v;
  }
  if (!(vd + vs > 0))
    throw EstimationError("decomposition: all ALE variance components are zero");
  out.omega_d = static_cast<double>(vd / (vd + vs));
  out.omega_s = static_cast<double>(vs / (vd + vs));
  return out;
}

Scheme decomposition_scheme(const std::string& name) {
  if (name == "default") {
    return {"default",
            {"wealth", "member", "n_orders_6m", "spend_per_order_6m"},
            {"n_restaurants_3km", "nonsme_share_3km"}};
  }
  if (name == "alt") {
    // Membership and ordering-habit covariates dropped from the demand side.
    return {"alt", {"wealth"}, {"n_restaurants_3km", "nonsme_share_3km"}};
  }
  throw ConfigError("unknown decomposition scheme '" + name + "' (use default|alt)");
}

}  // namespace stimkit::ale

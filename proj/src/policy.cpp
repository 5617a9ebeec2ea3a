#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stimkit/policy.hpp"

namespace stimkit::policy {

std::vector<double> fit_cost_model(const forest::ColMatrix& x, const std::vector<uint8_t>& treat,
                                   const std::vector<double>& realized_cost,
                                   const forest::ForestParams& params) {
  x.check();
  if (treat.size() != x.n || realized_cost.size() != x.n)
    throw ConfigError("cost model: inputs do not align with rows");
  std::vector<uint32_t> rows;
  for (size_t i = 0; i < x.n; ++i)
    if (treat[i]) rows.push_back(static_cast<uint32_t>(i));
  if (rows.empty()) throw EstimationError("cost model: no treated consumers");

  forest::ColMatrix xt;
  xt.n = rows.size();
  xt.cols.resize(x.p());
  std::vector<double> cost;
  cost.reserve(rows.size());
  for (size_t c = 0; c < x.p(); ++c) {
    xt.cols[c].reserve(rows.size());
    for (const uint32_t i : rows) xt.cols[c].push_back(x.cols[c][i]);
  }
  for (const uint32_t i : rows) cost.push_back(realized_cost[i]);
  const auto model = forest::RegressionForest::train(xt, cost, params);
  return model.predict(x);
}

RateCurve rate_curve(const std::vector<double>& priority, const std::vector<double>& psi,
                     const std::vector<std::string>& consumer_ids,
                     const std::vector<double>& q_grid, const std::string& strategy) {
  const size_t n = priority.size();
  if (psi.size() != n || consumer_ids.size() != n)
    throw ConfigError("rate curve: inputs do not align");
  if (n == 0) throw EstimationError("rate curve: empty sample");
  for (const double q : q_grid)
    if (!(q > 0 && q <= 1)) throw ConfigError("rate curve: q outside (0, 1]");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (priority[a] != priority[b]) return priority[a] > priority[b];
    return consumer_ids[a] < consumer_ids[b];
  });
  std::vector<long double> prefix(n + 1, 0.0L);
  for (size_t r = 0; r < n; ++r) prefix[r + 1] = prefix[r] + psi[order[r]];

  RateCurve out;
  out.strategy = strategy;
  for (const double q : q_grid) {
    const auto k = std::clamp<size_t>(
        static_cast<size_t>(std::llround(q * static_cast<double>(n))), 1, n);
    out.q.push_back(q);
    out.att.push_back(static_cast<double>(prefix[k] / static_cast<long double>(k)));
  }
  return out;
}

namespace {

// Candidate thresholds: exhaustive midpoints for small supports, else cuts
// between the distinct values bracketing 20 interior quantiles.
std::vector<double> candidate_cuts(const std::vector<double>& col) {
  std::vector<double> distinct = col;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> cuts;
  if (distinct.size() < 2) return cuts;
  if (distinct.size() <= 21) {
    for (size_t i = 0; i + 1 < distinct.size(); ++i)
      cuts.push_back(distinct[i] + 0.5 * (distinct[i + 1] - distinct[i]));
    return cuts;
  }
  std::vector<double> sorted = col;
  std::sort(sorted.begin(), sorted.end());
  for (int j = 1; j <= 20; ++j) {
    const double v = quantile_sorted(sorted, j / 21.0);
    const auto it = std::upper_bound(distinct.begin(), distinct.end(), v);
    if (it == distinct.end()) continue;  // everything at or below v: no right side
    const double below = *(it - 1);
    cuts.push_back(below + 0.5 * (*it - below));
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

struct SubtreeChoice {
  double value = 0;
  double sme = 0;
  double large = 0;
  int feature = -1;  // -1: leaf
  double threshold = 0;
  bool act_lo = false;
  bool act_hi = false;
};

// Deterministic preference: value, then achieved SME reward, then the
// lexicographically smallest split (leaf first).
bool better(const SubtreeChoice& a, const SubtreeChoice& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.sme != b.sme) return a.sme > b.sme;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

struct CellSums {
  double w = 0, sme = 0, large = 0;
};

// Best depth-1 policy on one side: either a single leaf or one split, each
// cell treated exactly when its summed weighted reward is positive.
SubtreeChoice best_subtree(const std::vector<std::vector<uint32_t>>& side_ord,
                           const std::vector<std::vector<double>>& cuts,
                           const forest::ColMatrix& x, const std::vector<double>& w,
                           const std::vector<double>& r_sme, const std::vector<double>& r_large,
                           bool allow_split) {
  CellSums total;
  for (const uint32_t i : side_ord[0]) {
    total.w += w[i];
    total.sme += r_sme[i];
    total.large += r_large[i];
  }
  SubtreeChoice best;
  best.value = std::max(0.0, total.w);
  const bool act = total.w > 0;
  best.sme = act ? total.sme : 0;
  best.large = act ? total.large : 0;
  best.act_lo = best.act_hi = act;
  if (!allow_split) return best;

  for (size_t g = 0; g < x.p(); ++g) {
    const auto& col = x.cols[g];
    const auto& ord = side_ord[g];
    size_t idx = 0;
    CellSums lo;
    for (const double cut : cuts[g]) {
      while (idx < ord.size() && col[ord[idx]] <= cut) {
        lo.w += w[ord[idx]];
        lo.sme += r_sme[ord[idx]];
        lo.large += r_large[ord[idx]];
        ++idx;
      }
      SubtreeChoice cand;
      cand.feature = static_cast<int>(g);
      cand.threshold = cut;
      cand.act_lo = lo.w > 0;
      cand.act_hi = total.w - lo.w > 0;
      cand.value = std::max(0.0, lo.w) + std::max(0.0, total.w - lo.w);
      cand.sme = (cand.act_lo ? lo.sme : 0.0) + (cand.act_hi ? total.sme - lo.sme : 0.0);
      cand.large = (cand.act_lo ? lo.large : 0.0) + (cand.act_hi ? total.large - lo.large : 0.0);
      if (better(cand, best)) best = cand;
    }
  }
  return best;
}

}  // namespace

bool PolicyTree::treats(const std::vector<double>& row) const {
  if (root_feature < 0) return action[0];
  if (row[root_feature] <= root_threshold) {
    if (left_feature < 0) return action[0];
    return row[left_feature] <= left_threshold ? action[0] : action[1];
  }
  if (right_feature < 0) return action[2];
  return row[right_feature] <= right_threshold ? action[2] : action[3];
}

PolicyTree policy_tree(const std::vector<double>& r_sme, const std::vector<double>& r_large,
                       double lambda, const forest::ColMatrix& x, int depth) {
  x.check();
  if (r_sme.size() != x.n || r_large.size() != x.n)
    throw ConfigError("policy tree: rewards do not align with rows");
  if (!(lambda >= 0.5 && lambda <= 1.0))
    throw ConfigError("policy tree: lambda outside [0.5, 1]");
  if (depth > 2) throw ConfigError("policy tree: depth > 2 unsupported");
  if (depth < 1) throw ConfigError("policy tree: depth must be 1 or 2");
  for (size_t i = 0; i < x.n; ++i)
    if (!std::isfinite(r_sme[i]) || !std::isfinite(r_large[i]))
      throw DataError("policy tree: nonfinite reward");

  std::vector<double> w(x.n);
  for (size_t i = 0; i < x.n; ++i) w[i] = lambda * r_sme[i] + (1.0 - lambda) * r_large[i];

  std::vector<std::vector<double>> cuts(x.p());
  std::vector<std::vector<uint32_t>> global_ord(x.p());
  for (size_t f = 0; f < x.p(); ++f) {
    cuts[f] = candidate_cuts(x.cols[f]);
    auto& ord = global_ord[f];
    ord.resize(x.n);
    std::iota(ord.begin(), ord.end(), 0u);
    std::sort(ord.begin(), ord.end(), [&](uint32_t a, uint32_t b) {
      if (x.cols[f][a] != x.cols[f][b]) return x.cols[f][a] < x.cols[f][b];
      return a < b;
    });
  }

  // Full-order preference: value, then achieved SME reward, then the
  // lexicographically smallest tree (no split precedes any split).
  auto tree_better = [](const PolicyTree& a, const PolicyTree& b) {
    if (a.objective != b.objective) return a.objective > b.objective;
    if (a.r_sme != b.r_sme) return a.r_sme > b.r_sme;
    if (a.root_feature != b.root_feature) return a.root_feature < b.root_feature;
    if (a.root_threshold != b.root_threshold) return a.root_threshold < b.root_threshold;
    if (a.left_feature != b.left_feature) return a.left_feature < b.left_feature;
    if (a.left_threshold != b.left_threshold) return a.left_threshold < b.left_threshold;
    if (a.right_feature != b.right_feature) return a.right_feature < b.right_feature;
    return a.right_threshold < b.right_threshold;
  };

  PolicyTree best;
  best.lambda = lambda;
  {  // Baseline candidate: a single global cell.
    double tw = 0, ts = 0, tl = 0;
    for (size_t i = 0; i < x.n; ++i) {
      tw += w[i];
      ts += r_sme[i];
      tl += r_large[i];
    }
    const bool act = tw > 0;
    best.action[0] = best.action[1] = best.action[2] = best.action[3] = act;
    best.objective = std::max(0.0, tw);
    best.r_sme = act ? ts : 0;
    best.r_large = act ? tl : 0;
  }

  const bool allow_child_split = depth == 2;
  std::vector<uint8_t> go_left(x.n);
  std::vector<std::vector<uint32_t>> left_ord(x.p()), right_ord(x.p());
  for (size_t f = 0; f < x.p(); ++f) {
    const auto& col = x.cols[f];
    for (const double cut : cuts[f]) {
      for (size_t i = 0; i < x.n; ++i) go_left[i] = col[i] <= cut;
      for (size_t g = 0; g < x.p(); ++g) {
        left_ord[g].clear();
        right_ord[g].clear();
        for (const uint32_t i : global_ord[g])
          (go_left[i] ? left_ord[g] : right_ord[g]).push_back(i);
      }
      const auto left = best_subtree(left_ord, cuts, x, w, r_sme, r_large, allow_child_split);
      const auto right = best_subtree(right_ord, cuts, x, w, r_sme, r_large, allow_child_split);

      PolicyTree cand;
      cand.lambda = lambda;
      cand.root_feature = static_cast<int>(f);
      cand.root_threshold = cut;
      cand.left_feature = left.feature;
      cand.left_threshold = left.threshold;
      cand.right_feature = right.feature;
      cand.right_threshold = right.threshold;
      cand.action[0] = left.act_lo;
      cand.action[1] = left.act_hi;
      cand.action[2] = right.act_lo;
      cand.action[3] = right.act_hi;
      cand.objective = left.value + right.value;
      cand.r_sme = left.sme + right.sme;
      cand.r_large = left.large + right.large;

      if (tree_better(cand, best)) best = cand;
    }
  }
  return best;
}

HybridPlan hybrid_plan(const std::vector<double>& catt, const std::vector<double>& cost_hat,
                       const std::vector<std::string>& consumer_ids, int treat_days,
                       double budget, double stimulus_target) {
  const size_t n = catt.size();
  if (cost_hat.size() != n || consumer_ids.size() != n)
    throw ConfigError("hybrid: inputs do not align");
  if (treat_days <= 0) throw ConfigError("hybrid: treat_days must be positive");
  if (!(budget > 0)) throw ConfigError("hybrid: budget must be positive");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (catt[a] != catt[b]) return catt[a] > catt[b];
    if (cost_hat[a] != cost_hat[b]) return cost_hat[a] < cost_hat[b];
    return consumer_ids[a] < consumer_ids[b];
  });

  HybridPlan plan;
  long double cum_oop = 0, cum_cost = 0;
  double best_frontier = 0;
  bool reached = false;
  size_t pos = 0;
  while (true) {
    if (static_cast<double>(cum_oop + cum_cost) >= stimulus_target) {
      reached = true;
      break;
    }
    if (pos == n) break;
    const size_t i = order[pos++];
    if (static_cast<double>(cum_cost) + cost_hat[i] > budget) break;
    cum_oop += catt[i] * treat_days;
    cum_cost += cost_hat[i];
    plan.selected.push_back(i);
    best_frontier = std::max(best_frontier, static_cast<double>(cum_oop + cum_cost));
  }
  if (!reached) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "hybrid: stimulus target %.3f unreachable within budget %.3f "
                  "(best achievable coupon stimulus %.3f with %zu consumers)",
                  stimulus_target, budget, best_frontier, plan.selected.size());
    throw EstimationError(msg);
  }
  plan.n_targeted = plan.selected.size();
  plan.consumer_oop = static_cast<double>(cum_oop);
  plan.gov_coupon_cost = static_cast<double>(cum_cost);
  plan.sme_transfer = budget - plan.gov_coupon_cost;
  plan.total_stimulus = plan.consumer_oop + plan.gov_coupon_cost + plan.sme_transfer;
  return plan;
}

}  // namespace stimkit::policy

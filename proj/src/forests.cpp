#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stimkit/forest.hpp"
#include "stimkit/parallel.hpp"
#include "stimkit/rng.hpp"

namespace stimkit::forest {

void ForestParams::validate(size_t p) const {
  if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
  if (min_leaf < 1) throw ConfigError("forest: min_leaf must be >= 1");
  if (!(subsample_rate > 0 && subsample_rate <= 1))
    throw ConfigError("forest: subsample_rate outside (0,1]");
  if (!(honesty_fraction > 0 && honesty_fraction < 1))
    throw ConfigError("forest: honesty_fraction outside (0,1)");
  if (mtry < 0 || static_cast<size_t>(mtry) > p)
    throw ConfigError("forest: mtry outside [0, p]");
}

int ForestParams::resolve_mtry(size_t p, bool causal) const {
  if (mtry > 0) return std::min<int>(mtry, static_cast<int>(p));
  if (causal) return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  return std::max(1, static_cast<int>(p) / 3);
}

namespace {

// Content-based row order: training is invariant to input row permutation.
std::vector<uint32_t> canonical_order(const ColMatrix& x,
                                      const std::vector<const std::vector<double>*>& extras) {
  std::vector<uint32_t> idx(x.n);
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
    for (const auto& col : x.cols) {
      if (col[a] != col[b]) return col[a] < col[b];
    }
    for (const auto* e : extras) {
      if ((*e)[a] != (*e)[b]) return (*e)[a] < (*e)[b];
    }
    return a < b;  // identical rows: exchangeable, keep stable order
  });
  return idx;
}

ColMatrix reorder(const ColMatrix& x, const std::vector<uint32_t>& perm) {
  ColMatrix out;
  out.n = perm.size();
  out.cols.resize(x.p());
  for (size_t f = 0; f < x.p(); ++f) {
    out.cols[f].resize(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) out.cols[f][i] = x.cols[f][perm[i]];
  }
  return out;
}

template <typename T>
std::vector<T> reorder_vec(const std::vector<T>& v, const std::vector<uint32_t>& perm) {
  std::vector<T> out(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out[i] = v[perm[i]];
  return out;
}

// Per-feature row orders for the full training set, computed once and
// filtered per tree.
std::vector<std::vector<uint32_t>> presort(const ColMatrix& x) {
  std::vector<std::vector<uint32_t>> ord(x.p());
  for (size_t f = 0; f < x.p(); ++f) {
    ord[f].resize(x.n);
    std::iota(ord[f].begin(), ord[f].end(), 0u);
    const auto& col = x.cols[f];
    std::sort(ord[f].begin(), ord[f].end(), [&](uint32_t a, uint32_t b) {
      if (col[a] != col[b]) return col[a] < col[b];
      return a < b;
    });
  }
  return ord;
}

struct SplitChoice {
  double crit = -1;
  int feature = -1;
  double threshold = 0;
};

// One tree's growth workspace; shared by the regression and causal growers.
struct Grower {
  Grower(const ColMatrix& x_in, const std::vector<std::vector<uint32_t>>& ord_in)
      : x(x_in), global_ord(ord_in) {}

  const ColMatrix& x;
  const std::vector<std::vector<uint32_t>>& global_ord;
  int min_leaf = 5;
  int mtry = 1;
  CounterRng* rng = nullptr;

  // causal mode inputs (null for regression)
  const std::vector<double>* yt = nullptr;
  const std::vector<double>* wt = nullptr;
  const std::vector<uint8_t>* treat = nullptr;
  // regression mode target
  const std::vector<double>* y = nullptr;

  std::vector<std::vector<uint32_t>> ord;  // per-feature order over structure rows
  std::vector<uint32_t> tmp;
  std::vector<double> rho;        // split pseudo-target, per canonical row
  std::vector<uint8_t> go_left;   // partition scratch
  std::vector<TreeNode> nodes;
  std::vector<double> leaf_mean;  // regression leaves
  std::vector<uint32_t> leaf_n;
  std::vector<double>* importance = nullptr;  // (depth+1)^-2 per split, by feature
  std::vector<int> feat_scratch;

  bool causal() const { return yt != nullptr; }

  void init(const std::vector<uint32_t>& structure_sorted_flags, size_t n_structure) {
    ord.assign(x.p(), {});
    for (size_t f = 0; f < x.p(); ++f) {
      ord[f].reserve(n_structure);
      for (const uint32_t i : global_ord[f])
        if (structure_sorted_flags[i]) ord[f].push_back(i);
    }
    tmp.resize(n_structure);
    rho.resize(x.n);
    go_left.resize(x.n);
    nodes.clear();
    leaf_mean.clear();
    leaf_n.clear();
    if (!causal()) {
      for (const uint32_t i : ord[0]) rho[i] = (*y)[i];
    }
    feat_scratch.resize(x.p());
  }

  int make_leaf(int lo, int hi) {
    TreeNode node;
    node.leaf = static_cast<int>(leaf_mean.size());
    long double s = 0;
    for (int j = lo; j < hi; ++j) s += causal() ? 0.0 : (*y)[ord[0][j]];
    leaf_mean.push_back(hi > lo ? static_cast<double>(s / (hi - lo)) : 0.0);
    leaf_n.push_back(static_cast<uint32_t>(hi - lo));
    nodes.push_back(node);
    return static_cast<int>(nodes.size()) - 1;
  }

  int grow(int lo, int hi, int depth) {
    const int n_node = hi - lo;
    int nt = 0;
    if (causal()) {
      long double sw = 0, sy = 0, sww = 0, swy = 0;
      for (int j = lo; j < hi; ++j) {
        const uint32_t i = ord[0][j];
        const double w = (*wt)[i], yy = (*yt)[i];
        sw += w;
        sy += yy;
        sww += w * w;
        swy += w * yy;
        nt += (*treat)[i];
      }
      const int nc = n_node - nt;
      if (nt < 2 * min_leaf || nc < 2 * min_leaf) return make_leaf(lo, hi);
      const double wbar = static_cast<double>(sw) / n_node;
      const double ybar = static_cast<double>(sy) / n_node;
      const double a = static_cast<double>(sww) - n_node * wbar * wbar;
      if (a <= 1e-10) return make_leaf(lo, hi);
      const double alpha_parent = (static_cast<double>(swy) - n_node * wbar * ybar) / a;
      for (int j = lo; j < hi; ++j) {
        const uint32_t i = ord[0][j];
        const double wc = (*wt)[i] - wbar;
        rho[i] = wc * (((*yt)[i] - ybar) - alpha_parent * wc);
      }
    } else {
      if (n_node < 2 * min_leaf) return make_leaf(lo, hi);
    }

    long double rho_total = 0;
    for (int j = lo; j < hi; ++j) rho_total += rho[ord[0][j]];

    // Feature subset for this node.
    const int p = static_cast<int>(x.p());
    std::iota(feat_scratch.begin(), feat_scratch.end(), 0);
    const int m = std::min(mtry, p);
    for (int i = 0; i < m; ++i) {
      const int j = i + static_cast<int>(rng->bounded(static_cast<uint32_t>(p - i)));
      std::swap(feat_scratch[i], feat_scratch[j]);
    }
    std::sort(feat_scratch.begin(), feat_scratch.begin() + m);

    SplitChoice best;
    for (int fi = 0; fi < m; ++fi) {
      const int f = feat_scratch[fi];
      const auto& col = x.cols[f];
      const auto& of = ord[f];
      long double sl = 0;
      int nl = 0, tl = 0;
      for (int j = lo; j < hi - 1; ++j) {
        const uint32_t i = of[j];
        sl += rho[i];
        ++nl;
        if (causal()) tl += (*treat)[i];
        const uint32_t nx = of[j + 1];
        if (!(col[nx] > col[i])) continue;  // split only at distinct values
        const int nr = n_node - nl;
        if (causal()) {
          const int cl = nl - tl, tr = nt - tl, cr2 = n_node - nt - cl;
          if (tl < min_leaf || cl < min_leaf || tr < min_leaf || cr2 < min_leaf) continue;
        } else {
          if (nl < min_leaf || nr < min_leaf) continue;
        }
        const double sr = static_cast<double>(rho_total - sl);
        const double crit =
            static_cast<double>(sl) * static_cast<double>(sl) / nl + sr * sr / nr;
        if (crit > best.crit) {
          best.crit = crit;
          best.feature = f;
          best.threshold = col[i] + 0.5 * (col[nx] - col[i]);
        }
      }
    }
    if (best.feature < 0) return make_leaf(lo, hi);

    // Stable partition of every feature order by the chosen split.
    const auto& scol = x.cols[best.feature];
    int n_left = 0;
    for (int j = lo; j < hi; ++j) {
      const uint32_t i = ord[0][j];
      const bool l = scol[i] <= best.threshold;
      go_left[i] = l;
      n_left += l;
    }
    for (size_t f = 0; f < x.p(); ++f) {
      auto& of = ord[f];
      int a = 0, b = n_left;
      for (int j = lo; j < hi; ++j) {
        const uint32_t i = of[j];
        tmp[go_left[i] ? a++ : b++] = i;
      }
      std::copy(tmp.begin(), tmp.begin() + (hi - lo), of.begin() + lo);
    }

    if (importance) {
      const double d = static_cast<double>(depth + 1);
      (*importance)[best.feature] += 1.0 / (d * d);
    }

    const int self = static_cast<int>(nodes.size());
    nodes.push_back({});  // reserve slot; children may reallocate
    nodes[self].feature = best.feature;
    nodes[self].threshold = best.threshold;
    const int left = grow(lo, lo + n_left, depth + 1);
    const int right = grow(lo + n_left, hi, depth + 1);
    nodes[self].left = left;
    nodes[self].right = right;
    return self;
  }
};

int walk_tree(const std::vector<TreeNode>& nodes, const ColMatrix& x, size_t row) {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x.cols[nodes[node].feature][row] <= nodes[node].threshold ? nodes[node].left
                                                                     : nodes[node].right;
  }
  return nodes[node].leaf;
}

int walk_tree_row(const std::vector<TreeNode>& nodes, const double* row) {
  int node = 0;
  while (nodes[node].feature >= 0)
    node = row[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                             : nodes[node].right;
  return nodes[node].leaf;
}

// Subsample without replacement: first `take` entries of a partial
// Fisher-Yates shuffle of [0, n).
std::vector<uint32_t> subsample(CounterRng& rng, size_t n, size_t take) {
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (size_t i = 0; i < take; ++i) {
    const size_t j = i + rng.bounded(static_cast<uint32_t>(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

}  // namespace

// ------------------------------------------------------------------------
// Shared trainer with access to both forests' internals.
struct ForestTrainer {
  static RegressionForest train_regression(const ColMatrix& x, const std::vector<double>& y,
                                           const ForestParams& params) {
    x.check();
    if (y.size() != x.n) throw ConfigError("forest: y does not align with rows");
    params.validate(x.p());
    if (x.n < static_cast<size_t>(2 * params.min_leaf))
      throw EstimationError("forest: not enough rows for min_leaf");

    RegressionForest fr;
    fr.perm_ = canonical_order(x, {&y});
    fr.train_x_ = reorder(x, fr.perm_);
    fr.train_y_ = reorder_vec(y, fr.perm_);
    const auto global_ord = presort(fr.train_x_);
    const int mtry = params.resolve_mtry(x.p(), false);
    const size_t take = std::max<size_t>(
        static_cast<size_t>(2 * params.min_leaf),
        static_cast<size_t>(std::floor(params.subsample_rate * static_cast<double>(x.n))));

    fr.trees_.resize(params.n_trees);
    parallel::parallel_for(static_cast<size_t>(params.n_trees), [&](size_t t) {
      CounterRng rng(params.seed, rng_stream::forest_tree, t);
      auto rows = subsample(rng, x.n, std::min(take, x.n));
      std::sort(rows.begin(), rows.end());

      std::vector<uint32_t> flags(x.n, 0);
      for (const uint32_t i : rows) flags[i] = 1;

      Grower g{fr.train_x_, global_ord};
      g.min_leaf = params.min_leaf;
      g.mtry = mtry;
      g.rng = &rng;
      g.y = &fr.train_y_;
      g.init(flags, rows.size());
      g.grow(0, static_cast<int>(rows.size()), 0);

      auto& tree = fr.trees_[t];
      tree.nodes = std::move(g.nodes);
      tree.leaves.resize(g.leaf_mean.size());
      for (size_t l = 0; l < g.leaf_mean.size(); ++l)
        tree.leaves[l] = {g.leaf_mean[l], g.leaf_n[l]};
      tree.inbag = std::move(rows);
    });
    return fr;
  }

  static CausalForest train_causal(const ColMatrix& x, const std::vector<double>& y_tilde,
                                   const std::vector<double>& w_tilde,
                                   const std::vector<uint8_t>& treat,
                                   const ForestParams& params) {
    x.check();
    if (y_tilde.size() != x.n || w_tilde.size() != x.n || treat.size() != x.n)
      throw ConfigError("causal forest: inputs do not align with rows");
    params.validate(x.p());
    size_t n_treated = 0;
    for (const uint8_t t : treat) n_treated += t;
    if (n_treated < static_cast<size_t>(2 * params.min_leaf) ||
        x.n - n_treated < static_cast<size_t>(2 * params.min_leaf))
      throw EstimationError("causal forest: need treated and control rows (min_leaf each)");

    std::vector<double> treat_d(treat.begin(), treat.end());
    CausalForest cf;
    cf.p_ = x.p();
    const auto perm = canonical_order(x, {&y_tilde, &w_tilde, &treat_d});
    const ColMatrix cx = reorder(x, perm);
    const auto cy = reorder_vec(y_tilde, perm);
    const auto cw = reorder_vec(w_tilde, perm);
    const auto ct = reorder_vec(treat, perm);
    const auto global_ord = presort(cx);
    const int mtry = params.resolve_mtry(x.p(), true);
    const size_t take = std::max<size_t>(
        static_cast<size_t>(4 * params.min_leaf),
        static_cast<size_t>(std::floor(params.subsample_rate * static_cast<double>(x.n))));

    cf.trees_.resize(params.n_trees);
    std::vector<std::vector<double>> tree_importance(params.n_trees);
    parallel::parallel_for(static_cast<size_t>(params.n_trees), [&](size_t t) {
      CounterRng rng(params.seed, rng_stream::forest_tree, t);
      const auto rows = subsample(rng, x.n, std::min(take, x.n));
      // Honesty: front of the shuffled draw grows the tree, the remainder
      // fills the leaves.
      size_t n_struct = static_cast<size_t>(
          std::floor(params.honesty_fraction * static_cast<double>(rows.size())));
      n_struct = std::clamp<size_t>(n_struct, 1, rows.size() - 1);

      std::vector<uint32_t> flags(x.n, 0);
      for (size_t i = 0; i < n_struct; ++i) flags[rows[i]] = 1;

      tree_importance[t].assign(x.p(), 0.0);
      Grower g{cx, global_ord};
      g.min_leaf = params.min_leaf;
      g.mtry = mtry;
      g.rng = &rng;
      g.yt = &cy;
      g.wt = &cw;
      g.treat = &ct;
      g.importance = &tree_importance[t];
      g.init(flags, n_struct);
      g.grow(0, static_cast<int>(n_struct), 0);

      auto& tree = cf.trees_[t];
      tree.nodes = std::move(g.nodes);
      tree.leaves.assign(g.leaf_mean.size(), {});
      std::vector<uint32_t> counts(tree.leaves.size(), 0);
      for (size_t i = n_struct; i < rows.size(); ++i) {
        const uint32_t row = rows[i];
        const int leaf = walk_tree(tree.nodes, cx, row);
        auto& acc = tree.leaves[leaf];
        const double w = cw[row], yy = cy[row];
        acc.sw += w;
        acc.sy += yy;
        acc.sww += w * w;
        acc.swy += w * yy;
        ++counts[leaf];
      }
      for (size_t l = 0; l < tree.leaves.size(); ++l) {
        auto& leaf = tree.leaves[l];
        if (counts[l] == 0) {
          leaf = {};  // empty estimation leaf: skipped at prediction
          continue;
        }
        const double inv = 1.0 / static_cast<double>(counts[l]);
        leaf.s1 = 1.0;
        leaf.sw *= inv;
        leaf.sy *= inv;
        leaf.sww *= inv;
        leaf.swy *= inv;
      }
    });

    cf.importance_.assign(x.p(), 0.0);
    for (const auto& ti : tree_importance)
      for (size_t f = 0; f < x.p(); ++f) cf.importance_[f] += ti[f];
    double total = 0;
    for (const double v : cf.importance_) total += v;
    if (total > 0)
      for (double& v : cf.importance_) v /= total;
    return cf;
  }
};

RegressionForest RegressionForest::train(const ColMatrix& x, const std::vector<double>& y,
                                         const ForestParams& params) {
  return ForestTrainer::train_regression(x, y, params);
}

double RegressionForest::predict_tree(const Tree& t, const double* row, size_t,
                                      bool& ok) const {
  const int leaf = walk_tree_row(t.nodes, row);
  ok = t.leaves[leaf].n > 0;
  return t.leaves[leaf].mean;
}

std::vector<double> RegressionForest::predict(const ColMatrix& x) const {
  x.check();
  if (x.p() != train_x_.p()) throw ConfigError("forest: query has wrong column count");
  std::vector<double> out(x.n, 0.0);
  parallel::parallel_for(x.n, [&](size_t i) {
    long double sum = 0;
    size_t used = 0;
    for (const auto& tree : trees_) {
      const int leaf = walk_tree(tree.nodes, x, i);
      if (tree.leaves[leaf].n == 0) continue;
      sum += tree.leaves[leaf].mean;
      ++used;
    }
    out[i] = used > 0 ? static_cast<double>(sum / used) : 0.0;
  });
  return out;
}

double RegressionForest::predict_row(const std::vector<double>& row) const {
  if (row.size() != train_x_.p()) throw ConfigError("forest: query has wrong column count");
  long double sum = 0;
  size_t used = 0;
  for (const auto& tree : trees_) {
    bool ok = false;
    const double v = predict_tree(tree, row.data(), 1, ok);
    if (!ok) continue;
    sum += v;
    ++used;
  }
  return used > 0 ? static_cast<double>(sum / used) : 0.0;
}

std::vector<double> RegressionForest::predict_oob(size_t* n_never_oob) const {
  const size_t n = train_x_.n;
  std::vector<long double> sum(n, 0.0L);
  std::vector<uint32_t> count(n, 0);
  std::vector<uint8_t> inbag(n);
  for (const auto& tree : trees_) {
    std::fill(inbag.begin(), inbag.end(), 0);
    for (const uint32_t i : tree.inbag) inbag[i] = 1;
    for (size_t i = 0; i < n; ++i) {
      if (inbag[i]) continue;
      const int leaf = walk_tree(tree.nodes, train_x_, i);
      if (tree.leaves[leaf].n == 0) continue;
      sum[i] += tree.leaves[leaf].mean;
      ++count[i];
    }
  }
  size_t never = 0;
  std::vector<double> canonical(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    if (count[i] > 0) {
      canonical[i] = static_cast<double>(sum[i] / count[i]);
    } else {
      ++never;
      std::vector<double> row(train_x_.p());
      for (size_t f = 0; f < train_x_.p(); ++f) row[f] = train_x_.cols[f][i];
      canonical[i] = predict_row(row);
    }
  }
  if (n_never_oob) *n_never_oob = never;
  std::vector<double> out(n, 0.0);
  for (size_t c = 0; c < n; ++c) out[perm_[c]] = canonical[c];
  return out;
}

double RegressionForest::oob_r2() const {
  const auto pred = predict_oob();
  std::vector<double> y(train_y_.size());
  for (size_t c = 0; c < train_y_.size(); ++c) y[perm_[c]] = train_y_[c];
  const double ybar = mean(y);
  long double ss_res = 0, ss_tot = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - pred[i]) * (y[i] - pred[i]);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  if (ss_tot <= 0) throw EstimationError("oob r2 undefined: constant outcome");
  return static_cast<double>(1.0L - ss_res / ss_tot);
}

CausalForest CausalForest::train(const ColMatrix& x, const std::vector<double>& y_tilde,
                                 const std::vector<double>& w_tilde,
                                 const std::vector<uint8_t>& treat, const ForestParams& params) {
  return ForestTrainer::train_causal(x, y_tilde, w_tilde, treat, params);
}

std::vector<double> CausalForest::predict(const ColMatrix& x) const {
  x.check();
  if (x.p() != p_) throw ConfigError("causal forest: query has wrong column count");
  std::vector<double> out(x.n, 0.0);
  parallel::parallel_for(x.n, [&](size_t i) {
    long double t1 = 0, tw = 0, ty = 0, tww = 0, twy = 0;
    for (const auto& tree : trees_) {
      const int leaf = walk_tree(tree.nodes, x, i);
      const auto& l = tree.leaves[leaf];
      if (l.s1 == 0) continue;
      t1 += l.s1;
      tw += l.sw;
      ty += l.sy;
      tww += l.sww;
      twy += l.swy;
    }
    if (t1 <= 0) {
      out[i] = 0;
      return;
    }
    const double denom = static_cast<double>(tww - tw * tw / t1);
    if (denom <= 1e-12) {
      out[i] = tww > 0 ? static_cast<double>(twy / tww) : 0.0;
      return;
    }
    out[i] = static_cast<double>((twy - tw * ty / t1) / denom);
  });
  return out;
}

std::vector<double> CausalForest::split_importance() const { return importance_; }

// ------------------------------------------------------------------------

std::vector<double> first_difference(const panel::DailyPanel& p) {
  int n_pre = 0, n_treat = 0;
  for (int d = 0; d < p.n_days; ++d) {
    n_pre += p.day_tag[d] == PeriodTag::pre;
    n_treat += p.day_tag[d] == PeriodTag::treat;
  }
  if (n_pre == 0 || n_treat == 0)
    throw EstimationError("first difference needs pre and treat days in the panel");

  std::vector<double> dy(p.n_consumers());
  for (size_t c = 0; c < p.n_consumers(); ++c) {
    long double pre = 0, treat = 0;
    for (int d = 0; d < p.n_days; ++d) {
      const double v = p.oop[p.cell(c, d)];
      if (p.day_tag[d] == PeriodTag::pre) pre += v;
      else if (p.day_tag[d] == PeriodTag::treat) treat += v;
    }
    dy[c] = static_cast<double>(treat / n_treat - pre / n_pre);
  }
  return dy;
}

NuisanceFit fit_nuisances(const ColMatrix& x, const std::vector<double>& dy,
                          const std::vector<uint8_t>& treat, int k_folds,
                          const ForestParams& params) {
  x.check();
  if (dy.size() != x.n || treat.size() != x.n)
    throw ConfigError("fit_nuisances: inputs do not align with rows");
  if (k_folds < 2) throw ConfigError("fit_nuisances: k_folds must be >= 2");
  if (static_cast<size_t>(k_folds) > x.n)
    throw ConfigError("fit_nuisances: more folds than rows");

  // Canonical shuffled fold assignment: invariant to row order.
  std::vector<double> treat_d(treat.begin(), treat.end());
  auto order = canonical_order(x, {&dy, &treat_d});
  CounterRng rng(params.seed, rng_stream::fold_split, 0);
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    const size_t j = i + rng.bounded(static_cast<uint32_t>(order.size() - i));
    std::swap(order[i], order[j]);
  }
  NuisanceFit out;
  out.fold.resize(x.n);
  for (size_t pos = 0; pos < order.size(); ++pos)
    out.fold[order[pos]] = static_cast<int>(pos % static_cast<size_t>(k_folds));

  out.m_hat.assign(x.n, 0.0);
  out.e_hat.assign(x.n, 0.0);
  for (int f = 0; f < k_folds; ++f) {
    std::vector<uint32_t> train_rows, test_rows;
    for (size_t i = 0; i < x.n; ++i)
      (out.fold[i] == f ? test_rows : train_rows).push_back(static_cast<uint32_t>(i));
    if (test_rows.empty()) continue;
    size_t fold_treated = 0;
    for (const uint32_t i : train_rows) fold_treated += treat[i];
    if (fold_treated == 0 || fold_treated == train_rows.size())
      throw EstimationError("fit_nuisances: cross-fitting fold " + std::to_string(f) +
                            " has a single treatment class; reduce k_folds");

    ColMatrix xt;
    xt.n = train_rows.size();
    xt.cols.resize(x.p());
    ColMatrix xq;
    xq.n = test_rows.size();
    xq.cols.resize(x.p());
    for (size_t c = 0; c < x.p(); ++c) {
      xt.cols[c].reserve(train_rows.size());
      for (const uint32_t i : train_rows) xt.cols[c].push_back(x.cols[c][i]);
      xq.cols[c].reserve(test_rows.size());
      for (const uint32_t i : test_rows) xq.cols[c].push_back(x.cols[c][i]);
    }
    std::vector<double> yt, tt;
    yt.reserve(train_rows.size());
    tt.reserve(train_rows.size());
    for (const uint32_t i : train_rows) {
      yt.push_back(dy[i]);
      tt.push_back(treat_d[i]);
    }
    ForestParams fold_params = params;
    fold_params.seed = detail::mix64(params.seed ^ (0xF01Du + static_cast<uint64_t>(f)));
    const auto m_forest = RegressionForest::train(xt, yt, fold_params);
    fold_params.seed = detail::mix64(fold_params.seed ^ 0xE4A7u);
    const auto e_forest = RegressionForest::train(xt, tt, fold_params);
    const auto m_pred = m_forest.predict(xq);
    const auto e_pred = e_forest.predict(xq);
    for (size_t j = 0; j < test_rows.size(); ++j) {
      out.m_hat[test_rows[j]] = m_pred[j];
      out.e_hat[test_rows[j]] = std::clamp(e_pred[j], 0.01, 0.99);
    }
  }
  return out;
}

std::vector<double> dr_scores(const std::vector<double>& catt, const std::vector<double>& dy,
                              const std::vector<uint8_t>& treat, const std::vector<double>& m_hat,
                              const std::vector<double>& e_hat) {
  const size_t n = catt.size();
  if (dy.size() != n || treat.size() != n || m_hat.size() != n || e_hat.size() != n)
    throw ConfigError("dr_scores: inputs do not align");
  std::vector<double> psi(n);
  for (size_t i = 0; i < n; ++i) {
    const double e = e_hat[i];
    if (!(e > 0 && e < 1)) throw EstimationError("dr_scores: e_hat outside (0,1)");
    const double t = treat[i] ? 1.0 : 0.0;
    const double eps = dy[i] - m_hat[i] - (t - e) * catt[i];
    psi[i] = catt[i] + (t - e) / (e * (1.0 - e)) * eps;
  }
  return psi;
}

BlpResult blp(const std::vector<double>& psi, const ColMatrix& x,
              const std::vector<std::string>& names) {
  x.check();
  if (psi.size() != x.n) throw ConfigError("blp: psi does not align with rows");
  if (names.size() != x.p()) throw ConfigError("blp: names do not align with columns");
  const size_t p = x.p();
  if (x.n < p + 2) throw EstimationError("blp: not enough rows");

  std::vector<std::vector<double>> cols = x.cols;
  for (size_t j = 0; j < p; ++j) standardize(cols[j], names[j]);
  for (size_t a = 0; a < p; ++a) {
    for (size_t b = a + 1; b < p; ++b) {
      const double r = pearson_corr(cols[a], cols[b]);
      if (std::abs(r) > 1.0 - 1e-8)
        throw EstimationError("blp: collinear covariates '" + names[a] + "' and '" + names[b] +
                              "'");
    }
  }

  const size_t k = p + 1;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
  std::vector<double> row(k);
  for (size_t i = 0; i < x.n; ++i) {
    row[0] = 1.0;
    for (size_t j = 0; j < p; ++j) row[j + 1] = cols[j][i];
    for (size_t a = 0; a < k; ++a) {
      xty(a) += row[a] * psi[i];
      for (size_t b = a; b < k; ++b) xtx(a, b) += row[a] * row[b];
    }
  }
  for (size_t a = 0; a < k; ++a)
    for (size_t b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success ||
      (ldlt.vectorD().array().abs() < 1e-10 * xtx.diagonal().maxCoeff()).any())
    throw EstimationError("blp: singular design matrix");
  const Eigen::VectorXd beta = ldlt.solve(xty);

  // HC1 sandwich.
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (size_t i = 0; i < x.n; ++i) {
    row[0] = 1.0;
    for (size_t j = 0; j < p; ++j) row[j + 1] = cols[j][i];
    double fit = 0;
    for (size_t a = 0; a < k; ++a) fit += beta(a) * row[a];
    const double e2 = (psi[i] - fit) * (psi[i] - fit);
    for (size_t a = 0; a < k; ++a)
      for (size_t b = a; b < k; ++b) meat(a, b) += e2 * row[a] * row[b];
  }
  for (size_t a = 0; a < k; ++a)
    for (size_t b = 0; b < a; ++b) meat(a, b) = meat(b, a);
  const Eigen::MatrixXd xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  const double dof = static_cast<double>(x.n) / std::max(1.0, static_cast<double>(x.n - k));
  const Eigen::MatrixXd v = dof * xtx_inv * meat * xtx_inv;

  BlpResult out;
  out.n = x.n;
  out.intercept = beta(0);
  out.intercept_se = std::sqrt(v(0, 0));
  for (size_t j = 0; j < p; ++j) {
    BlpRow r;
    r.covariate = names[j];
    r.beta = beta(j + 1);
    r.se = std::sqrt(v(j + 1, j + 1));
    r.t = r.se > 0 ? r.beta / r.se : 0;
    out.rows.push_back(r);
  }
  return out;
}

MpcResult conditional_mpc(const std::vector<double>& catt, const std::vector<double>& cost_hat,
                          int treat_days) {
  if (catt.size() != cost_hat.size()) throw ConfigError("conditional_mpc: inputs do not align");
  if (treat_days <= 0) throw ConfigError("conditional_mpc: treat_days must be positive");
  MpcResult out;
  out.mpc.resize(catt.size());
  out.flagged.assign(catt.size(), 0);
  for (size_t i = 0; i < catt.size(); ++i) {
    if (cost_hat[i] > 0) {
      out.mpc[i] = 1.0 + catt[i] * treat_days / cost_hat[i];
    } else {
      out.mpc[i] = std::nan("");
      out.flagged[i] = 1;
    }
  }
  return out;
}

}  // namespace stimkit::forest

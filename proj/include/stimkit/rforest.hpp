#pragma once
// Subsampled regression forest used for nuisance functions, effect surfaces
// and cost prediction. Deterministic: per-tree counter RNG streams plus a
// canonical (content-based) row ordering make training invariant to both
// thread count and the order of input rows.

#include <cstdint>
#include <vector>

#include "stimkit/common.hpp"

namespace stimkit::forest {

// Column-major feature matrix.
struct ColMatrix {
  size_t n = 0;
  std::vector<std::vector<double>> cols;

  size_t p() const { return cols.size(); }
  void check() const {
    for (const auto& c : cols)
      if (c.size() != n) throw ConfigError("feature matrix has ragged columns");
    if (n == 0 || cols.empty()) throw ConfigError("empty feature matrix");
  }
};

struct ForestParams {
  int n_trees = 2000;
  int min_leaf = 5;             // regression: min rows per leaf;
                                // causal: min treated AND control per leaf
  double subsample_rate = 0.5;  // without replacement
  double honesty_fraction = 0.5;  // causal forest split/estimate partition
  int mtry = 0;  // 0 = default: ceil(sqrt(p)) causal, max(1, p/3) regression
  uint64_t seed = 42;

  void validate(size_t p) const;
  int resolve_mtry(size_t p, bool causal) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  int leaf = -1;
};

class RegressionForest {
 public:
  static RegressionForest train(const ColMatrix& x, const std::vector<double>& y,
                                const ForestParams& params);

  std::vector<double> predict(const ColMatrix& x) const;
  double predict_row(const std::vector<double>& row) const;

  // Out-of-bag predictions on the training rows (original row order); rows
  // never out of bag get the in-bag prediction and are counted.
  std::vector<double> predict_oob(size_t* n_never_oob = nullptr) const;
  double oob_r2() const;

  size_t n_trees() const { return trees_.size(); }

 private:
  struct Leaf {
    double mean = 0;
    uint32_t n = 0;
  };
  struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<Leaf> leaves;
    std::vector<uint32_t> inbag;  // canonical row ids, sorted
  };

  friend struct ForestTrainer;
  double predict_tree(const Tree& t, const double* row, size_t stride, bool& ok) const;

  std::vector<Tree> trees_;
  ColMatrix train_x_;           // canonical order
  std::vector<double> train_y_;  // canonical order
  std::vector<uint32_t> perm_;   // canonical position -> original row
};

}  // namespace stimkit::forest

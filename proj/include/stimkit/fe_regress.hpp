#pragma once
// Two-way fixed-effects regression core: alternating weighted demeaning to
// absorb unit and time effects (exact for balanced panels, iterated to
// convergence for unbalanced ones), OLS on the within-transformed columns,
// and CR1 cluster-robust covariance.

#include <cstddef>
#include <vector>

#include "stimkit/common.hpp"

namespace stimkit::did {

struct FePanelData {
  // One entry per included cell.
  std::vector<double> y;
  std::vector<std::vector<double>> z;  // regressor columns, same length as y
  std::vector<int> unit;               // dense unit index
  std::vector<int> time;               // dense time index
  std::vector<double> weight;          // frequency weight (> 0)
  std::vector<int> cluster;            // dense cluster index (usually == unit)
  int n_units = 0, n_times = 0, n_clusters = 0;
};

struct FeRegressionResult {
  std::vector<double> beta;
  std::vector<std::vector<double>> vcov;  // CR1 cluster-robust
  double weighted_n = 0;                  // sum of weights over included cells
  size_t n_cells = 0;
  int n_clusters = 0;

  double se(size_t j) const;
};

FeRegressionResult fe_regress(const FePanelData& data);

// Cluster-robust Wald joint test that all coefficients are zero; p-value from
// F(q, n_clusters - 1).
struct WaldTest {
  double F = 0;
  double p = 1;
  int q = 0;
};
WaldTest wald_all_zero(const FeRegressionResult& r);

}  // namespace stimkit::did

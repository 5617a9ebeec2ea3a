// Benchmark: serial reference execution vs OpenMP-parallel execution of the
// forest kernels (training and prediction), verifying along the way that
// both modes produce identical results. Usage: bench [n] [trees] [threads].

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "stimkit/forest.hpp"
#include "stimkit/parallel.hpp"
#include "stimkit/rforest.hpp"
#include "stimkit/rng.hpp"

using namespace stimkit;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Problem {
  forest::ColMatrix x;
  std::vector<double> y_tilde;
  std::vector<double> w_tilde;
  std::vector<uint8_t> treat;
};

Problem make_problem(size_t n, size_t p, uint64_t seed) {
  CounterRng rng(seed, 0xBE7C, 0);
  Problem pr;
  pr.x.n = n;
  pr.x.cols.assign(p, std::vector<double>(n));
  for (size_t j = 0; j < p; ++j)
    for (size_t i = 0; i < n; ++i) pr.x.cols[j][i] = rng.normal();
  pr.y_tilde.resize(n);
  pr.w_tilde.resize(n);
  pr.treat.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const bool t = rng.uniform() < 0.5;
    pr.treat[i] = t;
    const double alpha = 2.0 + (pr.x.cols[0][i] > 0 ? 2.0 : 0.0) + pr.x.cols[1][i];
    pr.w_tilde[i] = (t ? 1.0 : 0.0) - 0.5;
    pr.y_tilde[i] = alpha * pr.w_tilde[i] + rng.normal();
  }
  return pr;
}

struct RunResult {
  double train_s = 0;
  double predict_s = 0;
  std::vector<double> catt;
};

RunResult run_once(const Problem& pr, const forest::ForestParams& params, int threads) {
  parallel::set_max_threads(threads);
  RunResult r;
  double t0 = now_seconds();
  const auto cf = forest::CausalForest::train(pr.x, pr.y_tilde, pr.w_tilde, pr.treat, params);
  r.train_s = now_seconds() - t0;
  t0 = now_seconds();
  r.catt = cf.predict(pr.x);
  r.predict_s = now_seconds() - t0;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 4000;
  int trees = argc > 2 ? std::atoi(argv[2]) : 400;
  int threads = argc > 3 ? std::atoi(argv[3]) : 0;  // 0 = OpenMP default
  if (n == 0 || trees <= 0) {
    std::printf("usage: bench [n] [trees] [threads]\n");
    std::printf("  n       training rows, > 0        (default 4000)\n");
    std::printf("  trees   forest size, > 0          (default 400)\n");
    std::printf("  threads parallel threads, 0=auto  (default 0)\n");
    return argc > 1 && std::string(argv[1]) == "--help" ? 0 : 2;
  }

  forest::ForestParams params;
  params.n_trees = trees;
  params.seed = 42;

  std::printf("causal forest benchmark: n=%zu p=8 trees=%d\n", n, trees);
  const auto pr = make_problem(n, 8, 42);

  const auto serial = run_once(pr, params, 1);
  std::printf("  serial   train %7.3fs  predict %7.3fs\n", serial.train_s, serial.predict_s);

  const auto par = run_once(pr, params, threads);
  std::printf("  parallel train %7.3fs  predict %7.3fs\n", par.train_s, par.predict_s);

  double max_diff = 0;
  for (size_t i = 0; i < n; ++i)
    max_diff = std::max(max_diff, std::fabs(serial.catt[i] - par.catt[i]));
  std::printf("  speedup  train %.2fx    predict %.2fx\n",
              serial.train_s / std::max(par.train_s, 1e-9),
              serial.predict_s / std::max(par.predict_s, 1e-9));
  std::printf("  max |serial - parallel| = %.3g\n", max_diff);
  if (max_diff != 0.0) {
    std::printf("  MISMATCH: parallel execution is not bit-identical to serial\n");
    return 1;
  }
  std::printf("  results identical across execution modes\n");
  return 0;
}

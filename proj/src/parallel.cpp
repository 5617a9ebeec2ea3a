#include "stimkit/parallel.hpp"

namespace stimkit::parallel {

namespace {
int g_max_threads = 0;  // 0 = library default
}

int set_max_threads(int n) {
  const int prev = g_max_threads;
  g_max_threads = n < 0 ? 0 : n;
  return prev;
}

int max_threads() { return g_max_threads; }

}  // namespace stimkit::parallel

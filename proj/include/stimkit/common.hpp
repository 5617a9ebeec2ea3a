#pragma once
// Shared basics: error taxonomy, calendar dates, small numeric helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stimkit {

// ---------------------------------------------------------------- errors ---
// Three failure families, mapped by the CLI onto distinct exit codes:
//   ConfigError     -> bad or contradictory configuration        (exit 2)
//   DataError       -> malformed or inconsistent input data      (exit 3)
//   EstimationError -> estimator cannot run or is ill-conditioned (exit 4)

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// ----------------------------------------------------------------- dates ---
// Dates are carried internally as a day count since 1970-01-01 (civil).
// Only ISO-8601 (YYYY-MM-DD) is accepted on input.

constexpr int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

constexpr void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

// Parses strict YYYY-MM-DD; returns day index. Throws DataError on anything else.
int64_t parse_date(const std::string& s);
std::string format_date(int64_t day);

// --------------------------------------------------------------- periods ---

enum class PeriodTag { pre, treat, post };

// Four calendar anchors defining the evaluation window:
//   pre:    [pre_start, treat_start)
//   treat:  [treat_start, treat_end]   (inclusive of both ends)
//   post:   (treat_end, post_end]
struct PeriodConfig {
  int64_t pre_start = 0;
  int64_t treat_start = 0;
  int64_t treat_end = 0;
  int64_t post_end = 0;

  void validate() const;
  int n_pre_days() const { return static_cast<int>(treat_start - pre_start); }
  int n_treat_days() const { return static_cast<int>(treat_end - treat_start + 1); }
  int n_post_days() const { return static_cast<int>(post_end - treat_end); }
  PeriodTag tag(int64_t day) const {
    if (day < treat_start) return PeriodTag::pre;
    if (day <= treat_end) return PeriodTag::treat;
    return PeriodTag::post;
  }
  bool contains(int64_t day) const { return day >= pre_start && day <= post_end; }
};

// ------------------------------------------------------------- numerics ---

// Type-7 (linear interpolation) quantile of an unsorted copy. q in [0,1].
double quantile(std::vector<double> v, double q);

// Quantile on already-sorted data, no copy.
double quantile_sorted(const std::vector<double>& sorted, double q);

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

// Sample variance (n-1 denominator); 0 for n < 2.
inline double variance(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(s / (n - 1));
}

// Population variance (n denominator); 0 for empty input.
inline double variance_pop(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n == 0) return 0.0;
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(s / n);
}

inline double stdev(const std::vector<double>& v) { return std::sqrt(variance(v)); }

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b);

// Standardize in place to mean 0, sample sd 1. Throws EstimationError on a
// constant column (names it via `label`).
void standardize(std::vector<double>& v, const std::string& label);

}  // namespace stimkit

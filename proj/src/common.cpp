#include "stimkit/common.hpp"

#include <charconv>
#include <cstdio>

namespace stimkit {

int64_t parse_date(const std::string& s) {
  // Strict YYYY-MM-DD.
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw DataError("bad date '" + s + "' (expected YYYY-MM-DD)");
  auto digits = [&](size_t pos, size_t len, int& out) {
    const auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    if (res.ec != std::errc() || res.ptr != s.data() + pos + len)
      throw DataError("bad date '" + s + "' (expected YYYY-MM-DD)");
  };
  int y, m, d;
  digits(0, 4, y);
  digits(5, 2, m);
  digits(8, 2, d);
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("bad date '" + s + "' (month/day out of range)");
  const int64_t day = days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
  // Round-trip check catches impossible dates like 2022-02-30.
  int y2;
  unsigned m2, d2;
  civil_from_days(day, y2, m2, d2);
  if (y2 != y || static_cast<int>(m2) != m || static_cast<int>(d2) != d)
    throw DataError("bad date '" + s + "' (no such calendar day)");
  return day;
}

std::string format_date(int64_t day) {
  int y;
  unsigned m, d;
  civil_from_days(day, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
  return buf;
}

void PeriodConfig::validate() const {
  if (!(pre_start < treat_start))
    throw ConfigError("period: pre_start must precede treat_start");
  if (!(treat_start <= treat_end))
    throw ConfigError("period: treat_start must not exceed treat_end");
  if (!(treat_end <= post_end))
    throw ConfigError("period: treat_end must not exceed post_end");
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw EstimationError("quantile of empty vector");
  if (q <= 0) return sorted.front();
  if (q >= 1) return sorted.back();
  const double h = q * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(h);
  const size_t hi = lo + 1 < sorted.size() ? lo + 1 : lo;
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, q);
}

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw EstimationError("correlation needs two equal-length vectors, n >= 2");
  const double ma = mean(a), mb = mean(b);
  long double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) throw EstimationError("correlation undefined: constant input");
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

void standardize(std::vector<double>& v, const std::string& label) {
  const double sd = stdev(v);
  if (!(sd > 0)) throw EstimationError("cannot standardize constant column '" + label + "'");
  const double m = mean(v);
  for (double& x : v) x = (x - m) / sd;
}

}  // namespace stimkit

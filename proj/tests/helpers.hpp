#pragma once
// Shared builders for hand-sized fixtures. Oracles in the test files are
// computed independently (by hand or from closed forms) and frozen there.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "stimkit/common.hpp"
#include "stimkit/rforest.hpp"
#include "stimkit/rng.hpp"
#include "stimkit/types.hpp"

namespace testutil {

inline stimkit::PeriodConfig small_period() {
  stimkit::PeriodConfig p;
  p.pre_start = stimkit::days_from_civil(2022, 7, 4);
  p.treat_start = stimkit::days_from_civil(2022, 7, 8);
  p.treat_end = stimkit::days_from_civil(2022, 7, 11);
  p.post_end = stimkit::days_from_civil(2022, 7, 13);
  return p;  // 4 pre days, 4 treat days, 2 post days
}

inline stimkit::ConsumerRecord consumer(const std::string& id, int treat) {
  stimkit::ConsumerRecord c;
  c.consumer_id = id;
  c.treat = treat;
  return c;
}

inline stimkit::EstablishmentRecord establishment(const std::string& id, double sales,
                                                  double price, int sme) {
  stimkit::EstablishmentRecord e;
  e.establishment_id = id;
  e.avg_monthly_sales_6m = sales;
  e.avg_order_price_6m = price;
  e.sme_flag = sme;
  return e;
}

inline stimkit::OrderEvent order(const std::string& oid, const std::string& cid,
                                 const std::string& eid, int64_t date, double gross,
                                 double discount = 0,
                                 stimkit::OrderCategory cat = stimkit::OrderCategory::restaurant,
                                 int sku = 1, int utensils = 0) {
  stimkit::OrderEvent o;
  o.order_id = oid;
  o.consumer_id = cid;
  o.establishment_id = eid;
  o.date = date;
  o.gross_amount = gross;
  o.coupon_discount = discount;
  o.n_sku = sku;
  o.n_utensil_sets = utensils;
  o.category = cat;
  return o;
}

// Standard-normal feature matrix with one independent column per name slot.
inline stimkit::forest::ColMatrix normal_matrix(size_t n, size_t p, uint64_t seed) {
  stimkit::forest::ColMatrix x;
  x.n = n;
  x.cols.resize(p);
  for (size_t c = 0; c < p; ++c) {
    stimkit::CounterRng rng(seed, 900 + c, 0);
    x.cols[c].resize(n);
    for (size_t i = 0; i < n; ++i) x.cols[c][i] = rng.normal();
  }
  return x;
}

inline std::string fresh_dir(const std::string& tag) {
  const std::string root = std::string(TEST_TMP_DIR);
  const std::string dir = root + "/" + tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool files_identical(const std::string& a, const std::string& b) {
  std::FILE* fa = std::fopen(a.c_str(), "rb");
  std::FILE* fb = std::fopen(b.c_str(), "rb");
  if (!fa || !fb) {
    if (fa) std::fclose(fa);
    if (fb) std::fclose(fb);
    return false;
  }
  bool same = true;
  char ba[8192], bb[8192];
  while (same) {
    const size_t na = std::fread(ba, 1, sizeof ba, fa);
    const size_t nb = std::fread(bb, 1, sizeof bb, fb);
    same = na == nb && std::equal(ba, ba + na, bb);
    if (na == 0) break;
  }
  std::fclose(fa);
  std::fclose(fb);
  return same;
}

}  // namespace testutil

#pragma once
// Dataset ingestion, derived variables, and the balanced consumer-by-day
// panel every estimator downstream consumes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stimkit/types.hpp"

namespace stimkit::panel {

struct IngestPaths {
  std::string consumers;
  std::string orders;
  std::string establishments;
  std::string claims;  // optional; empty = none
};

struct IngestReport {
  size_t n_consumers = 0;
  size_t n_orders = 0;
  size_t n_establishments = 0;
  size_t n_claims = 0;
  size_t dropped_consumers_missing = 0;  // rows dropped for missing attributes
  size_t orders_outside_window = 0;      // orders excluded as out of period
  size_t claims_outside_window = 0;
  std::vector<std::string> warnings;
};

// Loads and validates the four tables, derives the wealth index, and returns
// records sorted canonically. Violated invariants raise DataError naming the
// offending file/line or record id.
Dataset ingest_dataset(const IngestPaths& paths, const PeriodConfig& period,
                       IngestReport* report = nullptr);

struct WealthIndex {
  std::vector<double> index;   // standardized scores, mean 0 / sd 1
  double loading_phone = 0;    // loadings of the standardized inputs
  double loading_housing = 0;  // sign-normalized: corr(index, housing) >= 0
};

// First principal component of (standardized phone price, standardized
// housing price). With two standardized inputs the component is the
// (anti-)diagonal direction; computed here from the correlation directly.
WealthIndex wealth_index(const std::vector<double>& phone_price,
                         const std::vector<double>& housing_price);

enum class CategoryFilter { restaurant, grocery, all };

// Balanced consumer-by-day outcome grid. Cell accounting:
//   total = gross spending, oop = gross - coupon discounts,
//   unsub = gross spending on orders without a coupon.
struct DailyPanel {
  std::vector<std::string> consumer_ids;  // sorted
  std::vector<uint8_t> treat;             // per consumer
  int64_t day0 = 0;
  int n_days = 0;
  std::vector<PeriodTag> day_tag;  // per day offset
  std::vector<double> oop, total, unsub, n_orders, n_sku, n_utensils;

  size_t n_consumers() const { return consumer_ids.size(); }
  size_t cell(size_t c, int d) const { return c * static_cast<size_t>(n_days) + d; }
  int64_t day_at(int d) const { return day0 + d; }
};

// Builds the panel over [pre_start, treat_end], or through post_end when
// include_post is set. Orders are filtered by category.
DailyPanel build_daily_panel(const Dataset& data,
                             CategoryFilter filter = CategoryFilter::restaurant,
                             bool include_post = false);

struct GridCell {
  int64_t ix = 0;
  int64_t iy = 0;
  size_t n = 0;          // included consumers in the cell
  size_t n_treated = 0;  // treated among them
  double total = 0;      // sum of values
  double mean = 0;
  bool flagged = false;  // fewer than two treated consumers
};

// Spatial aggregation of per-consumer values onto square cells of side
// cell_km. `include` masks which consumers enter; sum over cells of `total`
// equals the sum of included values exactly.
std::vector<GridCell> grid_aggregate(const std::vector<ConsumerRecord>& consumers,
                                     const std::vector<double>& values,
                                     const std::vector<uint8_t>& include, double cell_km);

// Total coupon discounts received in the treatment window, per consumer
// (aligned with data.consumers).
std::vector<double> realized_subsidy(const Dataset& data);

}  // namespace stimkit::panel

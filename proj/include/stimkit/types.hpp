#pragma once
// Domain records shared across the pipeline.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stimkit/common.hpp"

namespace stimkit {

struct ConsumerRecord {
  std::string consumer_id;
  double age = 0;
  double female = 0;  // 0/1
  double member = 0;  // 0/1 platform membership
  double phone_price = 0;
  double housing_price = 0;
  double n_orders_6m = 0;
  double spend_per_order_6m = 0;
  double n_restaurants_3km = 0;
  double nonsme_share_3km = 0;
  double grid_x = 0;
  double grid_y = 0;
  int treat = 0;
  double wealth = 0;  // derived on ingest: first principal component of
                      // standardized phone_price and housing_price
};

enum class OrderCategory { restaurant, grocery };

struct OrderEvent {
  std::string order_id;
  std::string consumer_id;
  std::string establishment_id;
  int64_t date = 0;  // day index
  double gross_amount = 0;
  double coupon_discount = 0;  // 0, 15 or 30
  int n_sku = 0;
  int n_utensil_sets = 0;
  OrderCategory category = OrderCategory::restaurant;
};

struct EstablishmentRecord {
  std::string establishment_id;
  double avg_monthly_sales_6m = 0;
  double avg_order_price_6m = 0;
  int sme_flag = 0;
  double grid_x = 0;
  double grid_y = 0;
};

struct ClaimRecord {
  std::string consumer_id;
  int64_t date = 0;
};

struct Dataset {
  std::vector<ConsumerRecord> consumers;  // sorted by consumer_id
  std::vector<OrderEvent> orders;         // sorted by (consumer_id, date, order_id)
  std::vector<EstablishmentRecord> establishments;  // sorted by establishment_id
  std::vector<ClaimRecord> claims;                  // sorted by (consumer_id, date)
  PeriodConfig period;

  // Index of consumer_id in `consumers`; throws DataError when absent.
  size_t consumer_index(const std::string& id) const;
  std::unordered_map<std::string, size_t> consumer_index_map() const;
  std::unordered_map<std::string, size_t> establishment_index_map() const;
};

// Names of the analysis covariates, in canonical order.
const std::vector<std::string>& covariate_names();

// Column-major covariate matrix over `consumers` for the given names.
// Unknown names throw ConfigError.
std::vector<std::vector<double>> covariate_columns(const std::vector<ConsumerRecord>& consumers,
                                                   const std::vector<std::string>& names);

}  // namespace stimkit

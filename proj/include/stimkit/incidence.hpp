#pragma once
// Buyer-to-seller incidence: allocation of per-consumer spending effects to
// establishments through observed treatment-window spending shares, the
// uniform-allocation counterfactual, and quantile profiles of the gains.

#include <string>
#include <utility>
#include <vector>

#include "stimkit/types.hpp"

namespace stimkit::incidence {

struct AllocationMatrix {
  std::vector<std::string> consumer_ids;       // treated consumers, sorted
  std::vector<std::string> establishment_ids;  // all establishments, sorted
  // Sparse rows: (establishment index, share); each nonzero row sums to 1.
  std::vector<std::vector<std::pair<uint32_t, double>>> rows;
  std::vector<uint8_t> zero_row;  // no treatment-window restaurant spending
  size_t n_zero_rows = 0;
};

// Shares of each treated consumer's treatment-window restaurant spending
// across establishments.
AllocationMatrix allocation_matrix(const Dataset& data);

struct EstablishmentGains {
  std::vector<std::string> establishment_ids;
  std::vector<double> tau;     // allocated revenue gain per establishment
  double total = 0;            // sum of tau
  double allocated_phi = 0;    // sum of phi over consumers with spending
  size_t n_unallocated = 0;    // zero-row consumers left out
};

// Gains = allocation-weighted column sums of phi (the per-consumer
// total-spend effect over the window). Conservation: total == allocated_phi.
EstablishmentGains map_effects(const std::vector<double>& phi, const AllocationMatrix& alloc);

// Overall market share of each establishment in treatment-window restaurant
// spending (all consumers); sums to 1.
std::vector<double> market_shares(const Dataset& data,
                                  const std::vector<std::string>& establishment_ids);

struct UniformComparison {
  double var_actual = 0;   // sample variance of tau across establishments
  double var_uniform = 0;  // same with every consumer allocating at market shares
  double reduction_pct = 0;  // 1 - var_uniform / var_actual
};

UniformComparison uniform_counterfactual(const EstablishmentGains& gains,
                                         const std::vector<double>& market_shares);

enum class EstablishmentAttribute { sales, price };

// 1-based quantile label per establishment by the attribute (ties ranked by
// establishment_id).
std::vector<int> attribute_quantiles(const std::vector<EstablishmentRecord>& establishments,
                                     EstablishmentAttribute attribute, int n_q);

struct QuantileRow {
  int quantile = 0;  // 1-based
  size_t n = 0;
  double mean_tau = 0;
  double mean_redemptions = 0;  // discounted treat-window orders per establishment
};

// Mean gains by attribute quantile (pre-period sales or average price).
// `redemptions` aligns with gains.establishment_ids; pass {} to skip.
std::vector<QuantileRow> gains_by_quantile(const EstablishmentGains& gains,
                                           const std::vector<EstablishmentRecord>& establishments,
                                           EstablishmentAttribute attribute, int n_q,
                                           const std::vector<double>& redemptions = {});

// Count of treatment-window discounted orders per establishment, aligned
// with `establishment_ids`.
std::vector<double> redemption_counts(const Dataset& data,
                                      const std::vector<std::string>& establishment_ids);

}  // namespace stimkit::incidence

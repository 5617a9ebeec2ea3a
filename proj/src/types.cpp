#include "stimkit/types.hpp"

#include <algorithm>

namespace stimkit {

size_t Dataset::consumer_index(const std::string& id) const {
  const auto it = std::lower_bound(
      consumers.begin(), consumers.end(), id,
      [](const ConsumerRecord& c, const std::string& key) { return c.consumer_id < key; });
  if (it == consumers.end() || it->consumer_id != id)
    throw DataError("unknown consumer_id '" + id + "'");
  return static_cast<size_t>(it - consumers.begin());
}

std::unordered_map<std::string, size_t> Dataset::consumer_index_map() const {
  std::unordered_map<std::string, size_t> map;
  map.reserve(consumers.size());
  for (size_t i = 0; i < consumers.size(); ++i) map.emplace(consumers[i].consumer_id, i);
  return map;
}

std::unordered_map<std::string, size_t> Dataset::establishment_index_map() const {
  std::unordered_map<std::string, size_t> map;
  map.reserve(establishments.size());
  for (size_t i = 0; i < establishments.size(); ++i)
    map.emplace(establishments[i].establishment_id, i);
  return map;
}

const std::vector<std::string>& covariate_names() {
  static const std::vector<std::string> names = {
      "age",           "female",
      "member",        "wealth",
      "n_orders_6m",   "spend_per_order_6m",
      "n_restaurants_3km", "nonsme_share_3km"};
  return names;
}

std::vector<std::vector<double>> covariate_columns(const std::vector<ConsumerRecord>& consumers,
                                                   const std::vector<std::string>& names) {
  std::vector<std::vector<double>> cols(names.size());
  for (size_t j = 0; j < names.size(); ++j) {
    const std::string& name = names[j];
    auto& col = cols[j];
    col.reserve(consumers.size());
    for (const auto& c : consumers) {
      double v;
      if (name == "age") v = c.age;
      else if (name == "female") v = c.female;
      else if (name == "member") v = c.member;
      else if (name == "wealth") v = c.wealth;
      else if (name == "n_orders_6m") v = c.n_orders_6m;
      else if (name == "spend_per_order_6m") v = c.spend_per_order_6m;
      else if (name == "n_restaurants_3km") v = c.n_restaurants_3km;
      else if (name == "nonsme_share_3km") v = c.nonsme_share_3km;
      else if (name == "phone_price") v = c.phone_price;
      else if (name == "housing_price") v = c.housing_price;
      else throw ConfigError("unknown covariate '" + name + "'");
      col.push_back(v);
    }
  }
  return cols;
}

}  // namespace stimkit

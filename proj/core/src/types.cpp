#include "rcpo/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rcpo {

Assortment::Assortment(std::vector<ItemId> items) : items_(std::move(items)) {
  if (items_.empty()) {
    throw ValidationError("assortment must contain at least one item");
  }
  std::set<ItemId> seen(items_.begin(), items_.end());
  if (seen.size() != items_.size()) {
    throw ValidationError("assortment items must be distinct");
  }
}

bool Assortment::contains(ItemId y) const {
  return std::find(items_.begin(), items_.end(), y) != items_.end();
}

TopKRanking::TopKRanking(std::vector<ItemId> ranked) : ranked_(std::move(ranked)) {
  if (ranked_.empty()) {
    throw ValidationError("invalid-ranking: top-k list must be non-empty");
  }
  std::set<ItemId> seen(ranked_.begin(), ranked_.end());
  if (seen.size() != ranked_.size()) {
    throw ValidationError("invalid-ranking: duplicate item in top-k list");
  }
}

bool TopKRanking::contains(ItemId y) const {
  return std::find(ranked_.begin(), ranked_.end(), y) != ranked_.end();
}

void TopKRanking::validate_against(const Assortment& s) const {
  if (ranked_.size() > s.size()) {
    throw ValidationError("invalid-ranking: k exceeds assortment size");
  }
  for (ItemId y : ranked_) {
    if (!s.contains(y)) {
      throw ValidationError("invalid-ranking: item " + std::to_string(y) +
                            " not in assortment");
    }
  }
}

UtilityVector::UtilityVector(std::map<ItemId, double> values)
    : values_(std::move(values)) {
  for (const auto& [id, v] : values_) {
    if (!std::isfinite(v)) {
      throw ValidationError("utility for item " + std::to_string(id) +
                            " must be finite");
    }
  }
}

double UtilityVector::at(ItemId y) const {
  auto it = values_.find(y);
  if (it == values_.end()) {
    throw ValidationError("utility-missing: no utility for item " +
                          std::to_string(y));
  }
  return it->second;
}

void UtilityVector::set(ItemId y, double value) {
  if (!std::isfinite(value)) {
    throw ValidationError("utility for item " + std::to_string(y) +
                          " must be finite");
  }
  values_[y] = value;
}

void UtilityVector::mean_center() {
  if (values_.empty()) return;
  double sum = 0.0;
  for (const auto& [id, v] : values_) sum += v;
  const double mean = sum / static_cast<double>(values_.size());
  for (auto& [id, v] : values_) v -= mean;
}

MallowsRmjModel::MallowsRmjModel(std::vector<ItemId> central_order,
                                 double dispersion)
    : order_(std::move(central_order)), dispersion_(dispersion) {
  if (order_.empty()) {
    throw ValidationError("central ranking must cover at least one item");
  }
  check_dispersion(dispersion_);
  for (std::size_t pos = 0; pos < order_.size(); ++pos) {
    auto [it, inserted] = rank_.emplace(order_[pos], pos + 1);
    if (!inserted) {
      throw ValidationError("central ranking repeats item " +
                            std::to_string(order_[pos]));
    }
  }
}

std::size_t MallowsRmjModel::rank_of(ItemId y) const {
  auto it = rank_.find(y);
  if (it == rank_.end()) {
    throw ValidationError("item-outside-universe: item " + std::to_string(y) +
                          " not in central ranking");
  }
  return it->second;
}

void check_dispersion(double phi) {
  if (!(phi > 0.0) || !(phi < 1.0)) {
    throw ValidationError("dispersion-out-of-range: phi must lie in (0,1), got " +
                          std::to_string(phi));
  }
}

}  // namespace rcpo

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcpo {

/// Opaque item identifier, unique within one universe.
using ItemId = std::uint32_t;

/// Precondition or argument violations (bad rankings, out-of-range
/// dispersion, missing utilities, incompatible configs).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// I/O and malformed-data failures (unreadable files, bad JSONL lines).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A candidate set presented for one choice: distinct items, size >= 1.
class Assortment {
 public:
  explicit Assortment(std::vector<ItemId> items);

  std::size_t size() const { return items_.size(); }
  bool contains(ItemId y) const;
  const std::vector<ItemId>& items() const { return items_; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<ItemId> items_;
};

/// An ordered top-k list over an assortment; position 0 is the most
/// preferred item.
class TopKRanking {
 public:
  explicit TopKRanking(std::vector<ItemId> ranked);

  std::size_t k() const { return ranked_.size(); }
  ItemId at(std::size_t pos) const { return ranked_.at(pos); }
  const std::vector<ItemId>& ranked() const { return ranked_; }
  bool contains(ItemId y) const;

  /// Throws ValidationError unless every entry belongs to `s` and
  /// k <= |s|.
  void validate_against(const Assortment& s) const;

 private:
  std::vector<ItemId> ranked_;
};

/// Per-item mean utilities. Every item referenced by an assortment this
/// vector is used with must be present.
class UtilityVector {
 public:
  UtilityVector() = default;
  explicit UtilityVector(std::map<ItemId, double> values);

  double at(ItemId y) const;
  void set(ItemId y, double value);
  bool defined_for(ItemId y) const { return values_.count(y) != 0; }
  const std::map<ItemId, double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Subtracts the mean so the entries sum to zero.
  void mean_center();

 private:
  std::map<ItemId, double> values_;
};

/// Rank-based choice model: a central total order over a universe of
/// items plus a dispersion in (0,1). Rank 1 is the most preferred item;
/// smaller dispersion concentrates mass near the central ranking.
class MallowsRmjModel {
 public:
  /// `central_order` lists the universe best-first; dispersion must lie
  /// strictly inside (0,1).
  MallowsRmjModel(std::vector<ItemId> central_order, double dispersion);

  /// Position of `y` in the central ranking (1 = best). Throws
  /// ValidationError for items outside the universe.
  std::size_t rank_of(ItemId y) const;

  double dispersion() const { return dispersion_; }
  std::size_t universe_size() const { return order_.size(); }
  const std::vector<ItemId>& central_order() const { return order_; }

 private:
  std::vector<ItemId> order_;
  std::map<ItemId, std::size_t> rank_;
  double dispersion_;
};

/// Throws ValidationError unless phi lies strictly inside (0,1).
void check_dispersion(double phi);

}  // namespace rcpo

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "rcpo/types.hpp"

namespace rcpo {

/// Per-item implicit rewards for one observation, plus the reward scale
/// used when chaining gradients back into a policy.
struct RewardSlate {
  std::map<ItemId, double> rewards;
  double beta = 1.0;

  double reward(ItemId y) const;
  void validate() const;
};

/// Slope of the sigmoid that replaces indicator penalties in the Mallows
/// objectives. The default of 1 applies the sigmoid to the raw reward
/// margin.
struct SmoothingConfig {
  double temperature = 1.0;

  void validate() const;
};

/// Objective value plus the derivative of the loss with respect to each
/// item's reward. Coefficients over one observation sum to zero because
/// every objective depends on reward differences only.
struct LossEval {
  double value = 0.0;
  std::map<ItemId, double> reward_grad;
};

struct PairwiseObservation {
  std::string prompt_id;
  ItemId winner = 0;
  ItemId loser = 0;
  std::optional<double> dispersion;
};

struct ChoiceObservation {
  std::string prompt_id;
  Assortment assortment;
  ItemId winner = 0;
  std::optional<double> dispersion;
};

struct TopKObservation {
  std::string prompt_id;
  Assortment assortment;
  TopKRanking ranking;
  std::optional<double> dispersion;
};

using Observation =
    std::variant<PairwiseObservation, ChoiceObservation, TopKObservation>;

const std::string& observation_prompt(const Observation& obs);

enum class LossKind {
  Dpo,
  MnlDiscrete,
  MnlTopK,
  RmjPairwise,
  RmjDiscrete,
  RmjTopK,
};

std::string_view loss_kind_name(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);
bool is_mallows_loss(LossKind kind);

// ---------------------------------------------------------------------------
// Smoothed objectives
// ---------------------------------------------------------------------------

/// -log sigmoid(r_w - r_l).
LossEval dpo_loss(const RewardSlate& slate, const PairwiseObservation& obs);

/// Negative log softmax probability of the winner over the assortment.
LossEval mnl_po_discrete_loss(const RewardSlate& slate,
                              const ChoiceObservation& obs);

/// Sum of sequential-stage losses; equals the negative log of the
/// top-k choice probability with rewards as utilities.
LossEval mnl_po_topk_loss(const RewardSlate& slate, const TopKObservation& obs);

/// -log phi * sigmoid(gamma * (r_l - r_w)).
LossEval rmj_po_pairwise_loss(const RewardSlate& slate,
                              const PairwiseObservation& obs,
                              const SmoothingConfig& smooth,
                              std::optional<double> fallback_phi = std::nullopt);

/// -log phi * sum over competitors of sigmoid(gamma * (r_i - r_w)).
LossEval rmj_po_discrete_loss(const RewardSlate& slate,
                              const ChoiceObservation& obs,
                              const SmoothingConfig& smooth,
                              std::optional<double> fallback_phi = std::nullopt);

/// -log phi * [sum_i (|S|-i) sigmoid(gamma * (r_{i+1} - r_i)) over adjacent
/// ranked pairs + sum over unchosen of sigmoid(gamma * (r_j - r_k))].
LossEval rmj_po_topk_loss(const RewardSlate& slate, const TopKObservation& obs,
                          const SmoothingConfig& smooth,
                          std::optional<double> fallback_phi = std::nullopt);

/// Unsmoothed Mallows objective with exact indicators (ties count as
/// non-violations). The gradient is zero almost everywhere, so the eval
/// is diagnostic only and never used for training.
LossEval hard_rmj_loss(const RewardSlate& slate, const Observation& obs,
                       LossKind kind,
                       std::optional<double> fallback_phi = std::nullopt);

/// Dispatch on kind; the observation type must match the loss family.
LossEval evaluate_loss(LossKind kind, const RewardSlate& slate,
                       const Observation& obs, const SmoothingConfig& smooth,
                       std::optional<double> fallback_phi = std::nullopt);

// ---------------------------------------------------------------------------
// Batch aggregation
// ---------------------------------------------------------------------------

struct ObservationLoss {
  std::string prompt_id;
  LossEval eval;
};

/// Mean loss with reward gradients aggregated per (prompt, item).
struct BatchLossEval {
  double value = 0.0;
  std::map<std::pair<std::string, ItemId>, double> reward_grad;
};

/// Arithmetic mean over the batch. Summation is compensated and runs in
/// a canonical sorted order, so the result is independent of the
/// observation order presented.
BatchLossEval batch_loss(std::span<const ObservationLoss> batch);

}  // namespace rcpo

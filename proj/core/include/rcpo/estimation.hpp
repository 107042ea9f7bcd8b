#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rcpo/datagen.hpp"
#include "rcpo/losses.hpp"
#include "rcpo/policy.hpp"
#include "rcpo/types.hpp"

namespace rcpo {

struct FitConfig {
  double learning_rate = 0.5;
  std::size_t max_iters = 500;
  /// Stop when the infinity norm of the per-observation mean gradient
  /// falls below this.
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
  /// Sigmoid slope of the smoothed surrogate used when fitting the
  /// rank-based model's central ranking.
  double smoothing_gamma = 1.0;

  void validate() const;
};

struct MnlFitResult {
  UtilityVector utilities;  // mean-centered
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct RmjFitResult {
  std::vector<ItemId> central_ranking;  // best first
  double phi_hat = 0.5;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  /// False when the score stage hit its iteration cap or the dispersion
  /// search was pushed to a boundary of (0,1).
  bool converged = false;
};

struct TrainReport {
  /// Batch loss before training followed by the loss after each step.
  std::vector<double> loss_trajectory;
  /// Implicit-reward pairwise accuracy over the ordered pairs the
  /// training rankings imply.
  double final_accuracy = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
};

struct HeldoutPair {
  PromptId prompt;
  ResponseSequence better;
  ResponseSequence worse;
};

/// Exact maximum likelihood for the softmax family: gradient ascent with
/// a halving line search on the concave log-likelihood, mean-centered
/// output. Accepts choice, top-k and pairwise observations. An absent
/// initializer starts from zero utilities.
MnlFitResult fit_mnl_mle(std::span<const Observation> observations,
                         std::span<const ItemId> universe, const FitConfig& cfg,
                         const std::optional<UtilityVector>& init = std::nullopt);

/// Two-stage fit for the rank-based model: latent scores by gradient
/// descent on the smoothed surrogate, ranking by sorting scores, then the
/// exact likelihood maximized over the dispersion by golden-section
/// search on logit(phi) in (0.001, 0.999).
RmjFitResult fit_rmj_mle(std::span<const Observation> observations,
                         std::span<const ItemId> universe, const FitConfig& cfg);

/// Interprets a dataset record as the observation shape the given loss
/// expects (pairwise losses need |assortment| = 2 and k = 1, discrete
/// losses need k = 1).
Observation record_to_observation(const DatasetRecord& record, LossKind kind);

/// Full-batch gradient descent of the chosen objective over the policy
/// logits, against a frozen reference. For the Mallows losses, each
/// record's dispersion comes from its dataset field, then `phi_override`,
/// then the reference policy's entropy proxy (computed once, frozen).
TrainReport train_rcpo(MarkovPolicy& theta, const MarkovPolicy& ref,
                       std::span<const DatasetRecord> dataset, LossKind kind,
                       const SmoothingConfig& smooth,
                       const ImplicitRewardConfig& reward_cfg,
                       const FitConfig& fit_cfg,
                       std::optional<double> phi_override = std::nullopt);

/// Fraction of held-out pairs the implicit reward orders correctly;
/// ties score one half.
double evaluate_alignment(const MarkovPolicy& theta, const MarkovPolicy& ref,
                          const ImplicitRewardConfig& reward_cfg,
                          std::span<const HeldoutPair> heldout);

}  // namespace rcpo

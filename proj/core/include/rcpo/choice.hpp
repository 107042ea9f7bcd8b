#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rcpo/types.hpp"

namespace rcpo {

// ---------------------------------------------------------------------------
// Multinomial logit
// ---------------------------------------------------------------------------

/// Softmax choice probability of picking `y` out of `s` under mean
/// utilities `nu`. Computed max-shifted, so utilities up to |700| are safe.
double mnl_choice_prob(const UtilityVector& nu, const Assortment& s, ItemId y);

/// log of mnl_choice_prob, for downstream likelihoods.
double mnl_log_choice_prob(const UtilityVector& nu, const Assortment& s,
                           ItemId y);

/// Probability of observing the ordered top-k list `mu` from `s`: the
/// sequential product of softmax choices over the remaining items.
double mnl_topk_prob(const UtilityVector& nu, const Assortment& s,
                     const TopKRanking& mu);

double mnl_log_topk_prob(const UtilityVector& nu, const Assortment& s,
                         const TopKRanking& mu);

// ---------------------------------------------------------------------------
// Mallows-RMJ
// ---------------------------------------------------------------------------

/// Number of items in `s` the central ranking places above `y`; the
/// relative rank position of `y` within `s`, in [0, |s|-1].
std::size_t rmj_rank_distance(const MallowsRmjModel& model, const Assortment& s,
                              ItemId y);

/// Discrete choice probability phi^d(y,s) / (1 + phi + ... + phi^{|s|-1}).
double rmj_choice_prob(const MallowsRmjModel& model, const Assortment& s,
                       ItemId y);

/// Two-item special case: 1/(1+phi) for the centrally-preferred item,
/// phi/(1+phi) otherwise.
double rmj_pairwise_prob(const MallowsRmjModel& model, ItemId winner,
                         ItemId loser);

/// Displacement of the ordered list `mu` within `s`: adjacent inversions
/// weighted by (|s|-i) plus unchosen items the list's last entry is
/// ranked below.
std::size_t rmj_topk_distance(const MallowsRmjModel& model, const Assortment& s,
                              const TopKRanking& mu);

/// psi(n, phi) = prod_{i=1..n} (1 + phi + ... + phi^{i-1}); psi(0) = 1.
double psi(std::size_t n, double phi);

/// Top-k ranked choice probability
/// psi(|s|-k, phi) / psi(|s|, phi) * phi^d(mu, s).
double rmj_topk_prob(const MallowsRmjModel& model, const Assortment& s,
                     const TopKRanking& mu);

double rmj_log_topk_prob(const MallowsRmjModel& model, const Assortment& s,
                         const TopKRanking& mu);

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// All ordered k-lists drawn from `s`, each exactly once, in a fixed
/// deterministic order. Capped at |s| <= 8 (40,320 full permutations).
std::vector<TopKRanking> enumerate_topk(const Assortment& s, std::size_t k);

struct GumbelOracleConfig {
  std::size_t sample_count = 100000;
  std::uint64_t seed = 0;
};

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo evaluation of the random-utility choice probability with
/// i.i.d. Gumbel shocks. Deterministic for a fixed seed; the standard
/// error is sqrt(p(1-p)/m).
McEstimate rum_choice_prob_mc(const UtilityVector& nu, const Assortment& s,
                              ItemId y, const GumbelOracleConfig& cfg);

/// Monte Carlo probability that the k largest perturbed utilities occur
/// at mu's entries in order. Consumes randomness identically to
/// rum_choice_prob_mc, so k=1 reproduces it exactly on the same seed.
McEstimate rum_topk_prob_mc(const UtilityVector& nu, const Assortment& s,
                            const TopKRanking& mu,
                            const GumbelOracleConfig& cfg);

}  // namespace rcpo

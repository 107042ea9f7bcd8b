#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rcpo/rng.hpp"
#include "rcpo/types.hpp"

namespace rcpo {

using Token = std::uint32_t;
using PromptId = std::string;

/// A response as a fixed, externally supplied token list. Termination is
/// not modelled; lengths are set by whoever produced the data.
struct ResponseSequence {
  std::vector<Token> tokens;

  bool operator==(const ResponseSequence&) const = default;
};

struct ImplicitRewardConfig {
  double beta = 1.0;
};

struct DispersionProxyConfig {
  double entropy_floor = 1e-8;
  double proxy_cap = 20.0;
};

/// Per-prompt first-order Markov token model: start logits (length V)
/// plus a dense V x V transition logit table. Rows become categorical
/// distributions under softmax.
class MarkovPolicy {
 public:
  explicit MarkovPolicy(std::uint32_t vocab_size);

  std::uint32_t vocab_size() const { return vocab_; }

  void add_prompt(const PromptId& prompt);
  bool has_prompt(const PromptId& prompt) const;
  std::vector<PromptId> prompt_ids() const;
  std::size_t prompt_count() const { return tables_.size(); }

  std::span<double> start_logits(const PromptId& prompt);
  std::span<const double> start_logits(const PromptId& prompt) const;
  std::span<double> transition_logits(const PromptId& prompt, Token prev);
  std::span<const double> transition_logits(const PromptId& prompt,
                                            Token prev) const;

  /// Fresh policy with i.i.d. normal(0, scale) logits on every row.
  static MarkovPolicy random(std::uint32_t vocab_size,
                             std::span<const PromptId> prompts, double scale,
                             Rng& rng);

  bool operator==(const MarkovPolicy&) const = default;

 private:
  struct Table {
    std::vector<double> start;
    std::vector<double> trans;

    bool operator==(const Table&) const = default;
  };

  const Table& table(const PromptId& prompt) const;
  Table& table(const PromptId& prompt);

  std::uint32_t vocab_;
  std::map<PromptId, Table> tables_;
};

/// Sparse gradient of log_prob with respect to one prompt's logits:
/// the start row plus every visited transition row.
struct PolicyGrad {
  std::vector<double> start;
  std::map<Token, std::vector<double>> rows;
};

/// Log probability of generating `y`: start log-softmax of the first
/// token plus transition log-softmax terms. Always <= 0.
double log_prob(const MarkovPolicy& policy, const PromptId& prompt,
                const ResponseSequence& y);

/// beta * (log pi_theta - log pi_ref); exactly zero when theta == ref.
double implicit_reward(const MarkovPolicy& theta, const MarkovPolicy& ref,
                       const ImplicitRewardConfig& cfg, const PromptId& prompt,
                       const ResponseSequence& y);

/// For each visited row, one-hot(next token) - softmax(row), summed over
/// visits.
PolicyGrad grad_log_prob(const MarkovPolicy& policy, const PromptId& prompt,
                         const ResponseSequence& y);

/// Shannon entropy (nats) of the transition row conditioned on `prev`.
double row_entropy(const MarkovPolicy& policy, const PromptId& prompt,
                   Token prev);

/// Entropy-based estimate of -log phi for a prompt: one minus-log of the
/// average per-transition entropy normalized by N log V, where N is the
/// longest presented response. Clamped into (0, proxy_cap] by the config
/// so exp(-proxy) is always a usable dispersion.
double dispersion_proxy(const MarkovPolicy& policy, const PromptId& prompt,
                        std::span<const ResponseSequence> responses,
                        const DispersionProxyConfig& cfg);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// JSON round-trip reproduces every logit exactly.
std::string policy_to_json(const MarkovPolicy& policy);
MarkovPolicy policy_from_json(const std::string& text);
void save_policy(const MarkovPolicy& policy, const std::string& path);
MarkovPolicy load_policy(const std::string& path);

}  // namespace rcpo

#include "rcpo/policy.hpp"

#include <algorithm>
#include <cmath>

#include "rcpo/numeric.hpp"

namespace rcpo {

MarkovPolicy::MarkovPolicy(std::uint32_t vocab_size) : vocab_(vocab_size) {
  if (vocab_ < 2) {
    throw ValidationError("vocab size must be at least 2");
  }
}

void MarkovPolicy::add_prompt(const PromptId& prompt) {
  Table t;
  t.start.assign(vocab_, 0.0);
  t.trans.assign(static_cast<std::size_t>(vocab_) * vocab_, 0.0);
  tables_.emplace(prompt, std::move(t));
}

bool MarkovPolicy::has_prompt(const PromptId& prompt) const {
  return tables_.count(prompt) != 0;
}

std::vector<PromptId> MarkovPolicy::prompt_ids() const {
  std::vector<PromptId> ids;
  ids.reserve(tables_.size());
  for (const auto& [id, t] : tables_) ids.push_back(id);
  return ids;
}

const MarkovPolicy::Table& MarkovPolicy::table(const PromptId& prompt) const {
  auto it = tables_.find(prompt);
  if (it == tables_.end()) {
    throw ValidationError("unknown-prompt: " + prompt);
  }
  return it->second;
}

MarkovPolicy::Table& MarkovPolicy::table(const PromptId& prompt) {
  auto it = tables_.find(prompt);
  if (it == tables_.end()) {
    throw ValidationError("unknown-prompt: " + prompt);
  }
  return it->second;
}

std::span<double> MarkovPolicy::start_logits(const PromptId& prompt) {
  return table(prompt).start;
}

std::span<const double> MarkovPolicy::start_logits(const PromptId& prompt) const {
  return table(prompt).start;
}

std::span<double> MarkovPolicy::transition_logits(const PromptId& prompt,
                                                  Token prev) {
  if (prev >= vocab_) {
    throw ValidationError("token-out-of-vocab: token " + std::to_string(prev));
  }
  Table& t = table(prompt);
  return {t.trans.data() + static_cast<std::size_t>(prev) * vocab_, vocab_};
}

std::span<const double> MarkovPolicy::transition_logits(const PromptId& prompt,
                                                        Token prev) const {
  if (prev >= vocab_) {
    throw ValidationError("token-out-of-vocab: token " + std::to_string(prev));
  }
  const Table& t = table(prompt);
  return {t.trans.data() + static_cast<std::size_t>(prev) * vocab_, vocab_};
}

MarkovPolicy MarkovPolicy::random(std::uint32_t vocab_size,
                                  std::span<const PromptId> prompts,
                                  double scale, Rng& rng) {
  MarkovPolicy policy(vocab_size);
  for (const PromptId& prompt : prompts) {
    policy.add_prompt(prompt);
    for (double& v : policy.start_logits(prompt)) v = scale * rng.normal();
    for (Token t = 0; t < vocab_size; ++t) {
      for (double& v : policy.transition_logits(prompt, t)) {
        v = scale * rng.normal();
      }
    }
  }
  return policy;
}

namespace {

void check_tokens(const MarkovPolicy& policy, const ResponseSequence& y) {
  if (y.tokens.empty()) {
    throw ValidationError("response must contain at least one token");
  }
  for (Token t : y.tokens) {
    if (t >= policy.vocab_size()) {
      throw ValidationError("token-out-of-vocab: token " + std::to_string(t));
    }
  }
}

double log_softmax_at(std::span<const double> logits, Token t) {
  return logits[t] - log_sum_exp(logits);
}

}  // namespace

double log_prob(const MarkovPolicy& policy, const PromptId& prompt,
                const ResponseSequence& y) {
  check_tokens(policy, y);
  double total = log_softmax_at(policy.start_logits(prompt), y.tokens[0]);
  for (std::size_t j = 0; j + 1 < y.tokens.size(); ++j) {
    total += log_softmax_at(policy.transition_logits(prompt, y.tokens[j]),
                            y.tokens[j + 1]);
  }
  return total;
}

double implicit_reward(const MarkovPolicy& theta, const MarkovPolicy& ref,
                       const ImplicitRewardConfig& cfg, const PromptId& prompt,
                       const ResponseSequence& y) {
  if (!(cfg.beta > 0.0)) {
    throw ValidationError("reward scale beta must be positive");
  }
  return cfg.beta * (log_prob(theta, prompt, y) - log_prob(ref, prompt, y));
}

PolicyGrad grad_log_prob(const MarkovPolicy& policy, const PromptId& prompt,
                         const ResponseSequence& y) {
  check_tokens(policy, y);
  const std::uint32_t vocab = policy.vocab_size();
  PolicyGrad grad;
  grad.start.assign(vocab, 0.0);
  softmax_into(policy.start_logits(prompt), grad.start);
  for (double& g : grad.start) g = -g;
  grad.start[y.tokens[0]] += 1.0;

  std::vector<double> probs(vocab);
  for (std::size_t j = 0; j + 1 < y.tokens.size(); ++j) {
    const Token prev = y.tokens[j];
    auto [it, inserted] = grad.rows.try_emplace(prev);
    if (inserted) it->second.assign(vocab, 0.0);
    softmax_into(policy.transition_logits(prompt, prev), probs);
    for (std::uint32_t t = 0; t < vocab; ++t) it->second[t] -= probs[t];
    it->second[y.tokens[j + 1]] += 1.0;
  }
  return grad;
}

double row_entropy(const MarkovPolicy& policy, const PromptId& prompt,
                   Token prev) {
  std::vector<double> probs(policy.vocab_size());
  softmax_into(policy.transition_logits(prompt, prev), probs);
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double dispersion_proxy(const MarkovPolicy& policy, const PromptId& prompt,
                        std::span<const ResponseSequence> responses,
                        const DispersionProxyConfig& cfg) {
  if (!(cfg.entropy_floor > 0.0) || !(cfg.proxy_cap > 0.0)) {
    throw ValidationError("dispersion proxy config values must be positive");
  }
  if (responses.empty()) {
    throw ValidationError("empty-response-set: proxy needs at least one response");
  }
  std::size_t max_len = 0;
  for (const auto& y : responses) {
    check_tokens(policy, y);
    max_len = std::max(max_len, y.tokens.size());
  }
  if (max_len < 2) {
    throw ValidationError(
        "all-responses-length-one: proxy needs a transition to measure");
  }
  double entropy_sum = 0.0;
  for (const auto& y : responses) {
    for (std::size_t j = 0; j + 1 < y.tokens.size(); ++j) {
      entropy_sum += row_entropy(policy, prompt, y.tokens[j]);
    }
  }
  const double log_n =
      static_cast<double>(max_len) * std::log(static_cast<double>(policy.vocab_size()));
  const double average =
      entropy_sum / (static_cast<double>(responses.size()) * log_n);
  // Averages below the floor are degenerate (a near-deterministic policy)
  // and pin the proxy at its cap.
  if (average < cfg.entropy_floor) return cfg.proxy_cap;
  return std::min(-std::log(average), cfg.proxy_cap);
}

}  // namespace rcpo

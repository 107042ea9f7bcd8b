#include "rcpo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "rcpo/numeric.hpp"

namespace rcpo {

double RewardSlate::reward(ItemId y) const {
  auto it = rewards.find(y);
  if (it == rewards.end()) {
    throw ValidationError("missing-reward: no reward for item " +
                          std::to_string(y));
  }
  return it->second;
}

void RewardSlate::validate() const {
  if (!(beta > 0.0)) {
    throw ValidationError("reward scale beta must be positive");
  }
  for (const auto& [id, r] : rewards) {
    if (!std::isfinite(r)) {
      throw ValidationError("reward for item " + std::to_string(id) +
                            " must be finite");
    }
  }
}

void SmoothingConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw ValidationError("smoothing temperature must be positive");
  }
}

const std::string& observation_prompt(const Observation& obs) {
  return std::visit([](const auto& o) -> const std::string& { return o.prompt_id; },
                    obs);
}

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Dpo: return "dpo";
    case LossKind::MnlDiscrete: return "mnl-discrete";
    case LossKind::MnlTopK: return "mnl-topk";
    case LossKind::RmjPairwise: return "rmj-pairwise";
    case LossKind::RmjDiscrete: return "rmj-discrete";
    case LossKind::RmjTopK: return "rmj-topk";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  for (LossKind kind :
       {LossKind::Dpo, LossKind::MnlDiscrete, LossKind::MnlTopK,
        LossKind::RmjPairwise, LossKind::RmjDiscrete, LossKind::RmjTopK}) {
    if (loss_kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

bool is_mallows_loss(LossKind kind) {
  return kind == LossKind::RmjPairwise || kind == LossKind::RmjDiscrete ||
         kind == LossKind::RmjTopK;
}

namespace {

double resolve_phi(const std::optional<double>& from_obs,
                   const std::optional<double>& fallback) {
  if (from_obs) {
    check_dispersion(*from_obs);
    return *from_obs;
  }
  if (fallback) {
    check_dispersion(*fallback);
    return *fallback;
  }
  throw ValidationError(
      "missing-dispersion: Mallows loss needs phi from the observation or a "
      "fallback");
}

void check_choice_obs(const RewardSlate& slate, const ChoiceObservation& obs) {
  slate.validate();
  if (obs.assortment.size() < 2) {
    throw ValidationError("choice observation needs an assortment of size >= 2");
  }
  if (!obs.assortment.contains(obs.winner)) {
    throw ValidationError("winner-not-in-assortment: item " +
                          std::to_string(obs.winner));
  }
}

}  // namespace

LossEval dpo_loss(const RewardSlate& slate, const PairwiseObservation& obs) {
  slate.validate();
  if (obs.winner == obs.loser) {
    throw ValidationError("identical-items: winner equals loser");
  }
  const double rw = slate.reward(obs.winner);
  const double rl = slate.reward(obs.loser);
  const double margin = rw - rl;
  LossEval out;
  out.value = softplus(-margin);
  const double w = sigmoid(-margin);  // weight grows when the estimate is wrong
  out.reward_grad[obs.winner] = -w;
  out.reward_grad[obs.loser] = w;
  return out;
}

LossEval mnl_po_discrete_loss(const RewardSlate& slate,
                              const ChoiceObservation& obs) {
  check_choice_obs(slate, obs);
  const auto& items = obs.assortment.items();
  std::vector<double> r(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) r[i] = slate.reward(items[i]);
  const double lse = log_sum_exp(r);
  LossEval out;
  out.value = lse - slate.reward(obs.winner);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double p = std::exp(r[i] - lse);
    out.reward_grad[items[i]] = p - (items[i] == obs.winner ? 1.0 : 0.0);
  }
  return out;
}

LossEval mnl_po_topk_loss(const RewardSlate& slate, const TopKObservation& obs) {
  slate.validate();
  obs.ranking.validate_against(obs.assortment);
  std::vector<ItemId> remaining(obs.assortment.items());
  LossEval out;
  for (ItemId id : remaining) out.reward_grad[id] = 0.0;
  std::vector<double> r;
  for (std::size_t stage = 0; stage < obs.ranking.k(); ++stage) {
    const ItemId chosen = obs.ranking.at(stage);
    r.clear();
    for (ItemId id : remaining) r.push_back(slate.reward(id));
    const double lse = log_sum_exp(r);
    out.value += lse - slate.reward(chosen);
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      out.reward_grad[remaining[i]] +=
          std::exp(r[i] - lse) - (remaining[i] == chosen ? 1.0 : 0.0);
    }
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
  }
  return out;
}

LossEval rmj_po_pairwise_loss(const RewardSlate& slate,
                              const PairwiseObservation& obs,
                              const SmoothingConfig& smooth,
                              std::optional<double> fallback_phi) {
  slate.validate();
  smooth.validate();
  if (obs.winner == obs.loser) {
    throw ValidationError("identical-items: winner equals loser");
  }
  const double weight = -std::log(resolve_phi(obs.dispersion, fallback_phi));
  const double gamma = smooth.temperature;
  const double margin = slate.reward(obs.loser) - slate.reward(obs.winner);
  const double sig = sigmoid(gamma * margin);
  LossEval out;
  out.value = weight * sig;
  const double coeff = weight * gamma * sig * (1.0 - sig);
  out.reward_grad[obs.loser] = coeff;
  out.reward_grad[obs.winner] = -coeff;
  return out;
}

LossEval rmj_po_discrete_loss(const RewardSlate& slate,
                              const ChoiceObservation& obs,
                              const SmoothingConfig& smooth,
                              std::optional<double> fallback_phi) {
  check_choice_obs(slate, obs);
  smooth.validate();
  const double weight = -std::log(resolve_phi(obs.dispersion, fallback_phi));
  const double gamma = smooth.temperature;
  const double rw = slate.reward(obs.winner);
  LossEval out;
  out.reward_grad[obs.winner] = 0.0;
  for (ItemId other : obs.assortment) {
    if (other == obs.winner) continue;
    const double sig = sigmoid(gamma * (slate.reward(other) - rw));
    out.value += weight * sig;
    const double coeff = weight * gamma * sig * (1.0 - sig);
    out.reward_grad[other] = coeff;
    out.reward_grad[obs.winner] -= coeff;
  }
  return out;
}

LossEval rmj_po_topk_loss(const RewardSlate& slate, const TopKObservation& obs,
                          const SmoothingConfig& smooth,
                          std::optional<double> fallback_phi) {
  slate.validate();
  smooth.validate();
  obs.ranking.validate_against(obs.assortment);
  const double weight = -std::log(resolve_phi(obs.dispersion, fallback_phi));
  const double gamma = smooth.temperature;
  const std::size_t n = obs.assortment.size();
  const std::size_t k = obs.ranking.k();
  LossEval out;
  for (ItemId id : obs.assortment) out.reward_grad[id] = 0.0;
  // Adjacent ranked pairs carry position weight |S| - i.
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const ItemId upper = obs.ranking.at(i);
    const ItemId lower = obs.ranking.at(i + 1);
    const double pos = static_cast<double>(n - (i + 1));
    const double sig =
        sigmoid(gamma * (slate.reward(lower) - slate.reward(upper)));
    out.value += weight * pos * sig;
    const double coeff = weight * pos * gamma * sig * (1.0 - sig);
    out.reward_grad[lower] += coeff;
    out.reward_grad[upper] -= coeff;
  }
  // Every unchosen item competes against the last ranked entry.
  const ItemId last = obs.ranking.at(k - 1);
  const double r_last = slate.reward(last);
  for (ItemId other : obs.assortment) {
    if (obs.ranking.contains(other)) continue;
    const double sig = sigmoid(gamma * (slate.reward(other) - r_last));
    out.value += weight * sig;
    const double coeff = weight * gamma * sig * (1.0 - sig);
    out.reward_grad[other] += coeff;
    out.reward_grad[last] -= coeff;
  }
  return out;
}

LossEval hard_rmj_loss(const RewardSlate& slate, const Observation& obs,
                       LossKind kind, std::optional<double> fallback_phi) {
  slate.validate();
  if (!is_mallows_loss(kind)) {
    throw ValidationError("hard loss is defined for the Mallows objectives only");
  }
  // I{x < 0}: a tie is not a violation.
  const auto violated = [](double margin) { return margin < 0.0 ? 1.0 : 0.0; };
  LossEval out;
  switch (kind) {
    case LossKind::RmjPairwise: {
      const auto& o = std::get<PairwiseObservation>(obs);
      if (o.winner == o.loser) {
        throw ValidationError("identical-items: winner equals loser");
      }
      const double weight = -std::log(resolve_phi(o.dispersion, fallback_phi));
      out.value = weight * violated(slate.reward(o.winner) - slate.reward(o.loser));
      out.reward_grad[o.winner] = 0.0;
      out.reward_grad[o.loser] = 0.0;
      break;
    }
    case LossKind::RmjDiscrete: {
      const auto& o = std::get<ChoiceObservation>(obs);
      check_choice_obs(slate, o);
      const double weight = -std::log(resolve_phi(o.dispersion, fallback_phi));
      const double rw = slate.reward(o.winner);
      for (ItemId other : o.assortment) {
        out.reward_grad[other] = 0.0;
        if (other != o.winner) {
          out.value += weight * violated(rw - slate.reward(other));
        }
      }
      break;
    }
    case LossKind::RmjTopK: {
      const auto& o = std::get<TopKObservation>(obs);
      o.ranking.validate_against(o.assortment);
      const double weight = -std::log(resolve_phi(o.dispersion, fallback_phi));
      const std::size_t n = o.assortment.size();
      const std::size_t k = o.ranking.k();
      for (ItemId id : o.assortment) out.reward_grad[id] = 0.0;
      for (std::size_t i = 0; i + 1 < k; ++i) {
        const double margin =
            slate.reward(o.ranking.at(i)) - slate.reward(o.ranking.at(i + 1));
        out.value += weight * static_cast<double>(n - (i + 1)) * violated(margin);
      }
      const double r_last = slate.reward(o.ranking.at(k - 1));
      for (ItemId other : o.assortment) {
        if (!o.ranking.contains(other)) {
          out.value += weight * violated(r_last - slate.reward(other));
        }
      }
      break;
    }
    default:
      break;
  }
  return out;
}

LossEval evaluate_loss(LossKind kind, const RewardSlate& slate,
                       const Observation& obs, const SmoothingConfig& smooth,
                       std::optional<double> fallback_phi) {
  switch (kind) {
    case LossKind::Dpo:
      return dpo_loss(slate, std::get<PairwiseObservation>(obs));
    case LossKind::MnlDiscrete:
      return mnl_po_discrete_loss(slate, std::get<ChoiceObservation>(obs));
    case LossKind::MnlTopK:
      return mnl_po_topk_loss(slate, std::get<TopKObservation>(obs));
    case LossKind::RmjPairwise:
      return rmj_po_pairwise_loss(slate, std::get<PairwiseObservation>(obs),
                                  smooth, fallback_phi);
    case LossKind::RmjDiscrete:
      return rmj_po_discrete_loss(slate, std::get<ChoiceObservation>(obs),
                                  smooth, fallback_phi);
    case LossKind::RmjTopK:
      return rmj_po_topk_loss(slate, std::get<TopKObservation>(obs), smooth,
                              fallback_phi);
  }
  throw ValidationError("unknown loss kind");
}

BatchLossEval batch_loss(std::span<const ObservationLoss> batch) {
  if (batch.empty()) {
    throw ValidationError("empty-batch: batch loss needs at least one observation");
  }
  const double n = static_cast<double>(batch.size());

  // Canonical order: sort copies of the summands so the reduction does
  // not depend on how the batch was presented.
  std::vector<std::pair<std::string, double>> values;
  values.reserve(batch.size());
  for (const auto& item : batch) values.emplace_back(item.prompt_id, item.eval.value);
  std::sort(values.begin(), values.end());
  KahanSum value_sum;
  for (const auto& [prompt, v] : values) value_sum.add(v);

  std::vector<std::tuple<std::string, ItemId, double>> grads;
  for (const auto& item : batch) {
    for (const auto& [id, g] : item.eval.reward_grad) {
      grads.emplace_back(item.prompt_id, id, g);
    }
  }
  std::sort(grads.begin(), grads.end());

  BatchLossEval out;
  out.value = value_sum.value() / n;
  std::size_t i = 0;
  while (i < grads.size()) {
    const auto key = std::make_pair(std::get<0>(grads[i]), std::get<1>(grads[i]));
    KahanSum sum;
    while (i < grads.size() && std::get<0>(grads[i]) == key.first &&
           std::get<1>(grads[i]) == key.second) {
      sum.add(std::get<2>(grads[i]));
      ++i;
    }
    out.reward_grad[key] = sum.value() / n;
  }
  return out;
}

}  // namespace rcpo

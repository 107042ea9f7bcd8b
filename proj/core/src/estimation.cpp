#include "rcpo/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rcpo/choice.hpp"
#include "rcpo/numeric.hpp"
#include "rcpo/parallel.hpp"

namespace rcpo {

void FitConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ValidationError("learning rate must be positive");
  }
  if (!(grad_tol > 0.0)) {
    throw ValidationError("gradient tolerance must be positive");
  }
  if (!(smoothing_gamma > 0.0)) {
    throw ValidationError("smoothing gamma must be positive");
  }
}

namespace {

// Compact per-observation view used by both fitters: assortment as
// universe indices plus the chosen prefix in preference order.
struct IndexedObservation {
  std::vector<std::size_t> items;
  std::vector<std::size_t> chosen;
};

struct IndexedData {
  std::vector<ItemId> universe;
  std::map<ItemId, std::size_t> index_of;
  std::vector<IndexedObservation> observations;
};

IndexedData index_observations(std::span<const Observation> observations,
                               std::span<const ItemId> universe) {
  if (observations.empty()) {
    throw ValidationError("empty-data: fitting needs at least one observation");
  }
  if (universe.size() < 2) {
    throw ValidationError("universe must contain at least 2 items");
  }
  IndexedData data;
  data.universe.assign(universe.begin(), universe.end());
  for (std::size_t i = 0; i < data.universe.size(); ++i) {
    if (!data.index_of.emplace(data.universe[i], i).second) {
      throw ValidationError("universe repeats item " +
                            std::to_string(data.universe[i]));
    }
  }
  const auto lookup = [&](ItemId y) {
    auto it = data.index_of.find(y);
    if (it == data.index_of.end()) {
      throw ValidationError("observed item " + std::to_string(y) +
                            " missing from the universe");
    }
    return it->second;
  };
  for (const Observation& obs : observations) {
    IndexedObservation io;
    if (const auto* p = std::get_if<PairwiseObservation>(&obs)) {
      io.items = {lookup(p->winner), lookup(p->loser)};
      io.chosen = {io.items[0]};
    } else if (const auto* c = std::get_if<ChoiceObservation>(&obs)) {
      for (ItemId y : c->assortment) io.items.push_back(lookup(y));
      io.chosen = {lookup(c->winner)};
    } else {
      const auto& t = std::get<TopKObservation>(obs);
      t.ranking.validate_against(t.assortment);
      for (ItemId y : t.assortment) io.items.push_back(lookup(y));
      for (ItemId y : t.ranking.ranked()) io.chosen.push_back(lookup(y));
    }
    data.observations.push_back(std::move(io));
  }
  return data;
}

// Sequential softmax log-likelihood; fills `grad` with d LL / d utility
// when non-null.
double pl_loglik(const IndexedData& data, const std::vector<double>& util,
                 std::vector<double>* grad) {
  if (grad) grad->assign(util.size(), 0.0);
  KahanSum ll;
  std::vector<std::size_t> remaining;
  std::vector<double> r;
  for (const IndexedObservation& obs : data.observations) {
    remaining = obs.items;
    for (std::size_t chosen : obs.chosen) {
      r.clear();
      for (std::size_t idx : remaining) r.push_back(util[idx]);
      const double lse = log_sum_exp(r);
      ll.add(util[chosen] - lse);
      if (grad) {
        for (std::size_t i = 0; i < remaining.size(); ++i) {
          (*grad)[remaining[i]] -= std::exp(r[i] - lse);
        }
        (*grad)[chosen] += 1.0;
      }
      remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
    }
  }
  return ll.value();
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void mean_center(std::vector<double>& v) {
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

constexpr int kMaxHalvings = 60;

}  // namespace

MnlFitResult fit_mnl_mle(std::span<const Observation> observations,
                         std::span<const ItemId> universe, const FitConfig& cfg,
                         const std::optional<UtilityVector>& init) {
  cfg.validate();
  const IndexedData data = index_observations(observations, universe);
  const double n = static_cast<double>(data.observations.size());
  std::vector<double> util(data.universe.size(), 0.0);
  if (init) {
    for (std::size_t i = 0; i < data.universe.size(); ++i) {
      util[i] = init->at(data.universe[i]);
    }
  }
  // Center immediately and after every accepted step; the likelihood is
  // shift-invariant, so this pins the identifiable representative and
  // keeps the gradient tolerance meaningful per observation.
  mean_center(util);
  std::vector<double> grad;
  double ll = pl_loglik(data, util, &grad) / n;
  for (double& g : grad) g /= n;

  MnlFitResult result;
  std::vector<double> candidate(util.size());
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    if (inf_norm(grad) < cfg.grad_tol) {
      result.converged = true;
      break;
    }
    // Ascent step, halved until the concave likelihood does not decrease.
    double step = cfg.learning_rate;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      for (std::size_t i = 0; i < util.size(); ++i) {
        candidate[i] = util[i] + step * grad[i];
      }
      const double candidate_ll = pl_loglik(data, candidate, nullptr) / n;
      if (candidate_ll >= ll) {
        util = candidate;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;  // no ascent direction at double precision
      break;
    }
    ++result.iterations;
    mean_center(util);
    ll = pl_loglik(data, util, &grad) / n;
    for (double& g : grad) g /= n;
  }
  if (!result.converged && inf_norm(grad) < cfg.grad_tol) {
    result.converged = true;
  }

  std::map<ItemId, double> centered;
  for (std::size_t i = 0; i < util.size(); ++i) {
    centered[data.universe[i]] = util[i];
  }
  result.utilities = UtilityVector(std::move(centered));
  result.log_likelihood = pl_loglik(data, util, nullptr);
  return result;
}

namespace {

// Smoothed rank-based surrogate: every comparison the observation pins
// down contributes sigmoid(gamma * (score_low - score_high)), adjacent
// ranked pairs weighted by their position.
double rmj_surrogate(const IndexedData& data, double gamma,
                     const std::vector<double>& score,
                     std::vector<double>* grad) {
  if (grad) grad->assign(score.size(), 0.0);
  KahanSum total;
  for (const IndexedObservation& obs : data.observations) {
    const std::size_t n = obs.items.size();
    const std::size_t k = obs.chosen.size();
    const auto add_term = [&](std::size_t high, std::size_t low, double weight) {
      const double sig = sigmoid(gamma * (score[low] - score[high]));
      total.add(weight * sig);
      if (grad) {
        const double coeff = weight * gamma * sig * (1.0 - sig);
        (*grad)[low] += coeff;
        (*grad)[high] -= coeff;
      }
    };
    for (std::size_t i = 0; i + 1 < k; ++i) {
      add_term(obs.chosen[i], obs.chosen[i + 1],
               static_cast<double>(n - (i + 1)));
    }
    const std::size_t last = obs.chosen[k - 1];
    for (std::size_t idx : obs.items) {
      if (std::find(obs.chosen.begin(), obs.chosen.end(), idx) ==
          obs.chosen.end()) {
        add_term(last, idx, 1.0);
      }
    }
  }
  return total.value();
}

struct PhiSearchResult {
  double phi = 0.5;
  double loglik = 0.0;
  bool boundary = false;
};

// Exact rank-model log-likelihood in phi once the ranking is fixed:
// total displacement * log(phi) minus per-observation normalizers.
PhiSearchResult maximize_phi(double total_distance,
                             const std::map<std::pair<std::size_t, std::size_t>,
                                            std::size_t>& shape_counts) {
  const auto loglik = [&](double phi) {
    double value = total_distance * std::log(phi);
    for (const auto& [shape, count] : shape_counts) {
      const auto [n, k] = shape;
      value -= static_cast<double>(count) *
               (std::log(psi(n, phi)) - std::log(psi(n - k, phi)));
    }
    return value;
  };
  const auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  double lo = logit(0.001);
  double hi = logit(0.999);
  const double resolution = 1e-4;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = loglik(sigmoid(x1));
  double f2 = loglik(sigmoid(x2));
  while (hi - lo > resolution) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = loglik(sigmoid(x2));
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = loglik(sigmoid(x1));
    }
  }
  PhiSearchResult out;
  const double t = 0.5 * (lo + hi);
  out.phi = sigmoid(t);
  out.loglik = loglik(out.phi);
  out.boundary = t - logit(0.001) < 2.0 * resolution ||
                 logit(0.999) - t < 2.0 * resolution;
  return out;
}

}  // namespace

RmjFitResult fit_rmj_mle(std::span<const Observation> observations,
                         std::span<const ItemId> universe, const FitConfig& cfg) {
  cfg.validate();
  const IndexedData data = index_observations(observations, universe);
  const double n = static_cast<double>(data.observations.size());

  // Scores descending, ties broken by ascending item id.
  const auto rank_order = [&](const std::vector<double>& score) {
    std::vector<std::size_t> order(data.universe.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return data.universe[a] < data.universe[b];
    });
    return order;
  };

  // Stage one: latent scores by descent on the smoothed surrogate,
  // scaled per observation. The surrogate keeps rewarding ever-larger
  // margins, so the stop rule is the one that matters for this stage:
  // the induced ranking holding still over a trailing window.
  constexpr std::size_t kRankingStableWindow = 50;
  std::vector<double> score(data.universe.size(), 0.0);
  std::vector<double> grad;
  double value = rmj_surrogate(data, cfg.smoothing_gamma, score, &grad) / n;
  for (double& g : grad) g /= n;
  RmjFitResult result;
  bool scores_converged = false;
  std::vector<std::size_t> order = rank_order(score);
  std::size_t stable_steps = 0;
  std::vector<double> candidate(score.size());
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    if (inf_norm(grad) < cfg.grad_tol) {
      scores_converged = true;
      break;
    }
    double step = cfg.learning_rate;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      for (std::size_t i = 0; i < score.size(); ++i) {
        candidate[i] = score[i] - step * grad[i];
      }
      const double candidate_value =
          rmj_surrogate(data, cfg.smoothing_gamma, candidate, nullptr) / n;
      if (candidate_value <= value) {
        score = candidate;
        value = candidate_value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      scores_converged = true;
      break;
    }
    ++result.iterations;
    mean_center(score);
    value = rmj_surrogate(data, cfg.smoothing_gamma, score, &grad) / n;
    for (double& g : grad) g /= n;
    std::vector<std::size_t> new_order = rank_order(score);
    if (new_order == order) {
      if (++stable_steps >= kRankingStableWindow) {
        scores_converged = true;
        break;
      }
    } else {
      order = std::move(new_order);
      stable_steps = 0;
    }
  }
  if (!scores_converged && inf_norm(grad) < cfg.grad_tol) {
    scores_converged = true;
  }

  order = rank_order(score);
  result.central_ranking.reserve(order.size());
  for (std::size_t idx : order) result.central_ranking.push_back(data.universe[idx]);

  // Stage two: exact likelihood over phi with the ranking fixed. The
  // sufficient statistics are the total displacement and the observation
  // shape counts.
  std::vector<std::size_t> rank_of(data.universe.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank_of[order[pos]] = pos;
  double total_distance = 0.0;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shape_counts;
  for (const IndexedObservation& obs : data.observations) {
    const std::size_t n = obs.items.size();
    const std::size_t k = obs.chosen.size();
    std::size_t d = 0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      if (rank_of[obs.chosen[i]] > rank_of[obs.chosen[i + 1]]) d += n - (i + 1);
    }
    const std::size_t last = obs.chosen[k - 1];
    for (std::size_t idx : obs.items) {
      if (std::find(obs.chosen.begin(), obs.chosen.end(), idx) ==
              obs.chosen.end() &&
          rank_of[last] > rank_of[idx]) {
        ++d;
      }
    }
    total_distance += static_cast<double>(d);
    ++shape_counts[{n, k}];
  }
  const PhiSearchResult search = maximize_phi(total_distance, shape_counts);
  result.phi_hat = search.phi;
  result.log_likelihood = search.loglik;
  result.converged = scores_converged && !search.boundary;
  return result;
}

Observation record_to_observation(const DatasetRecord& record, LossKind kind) {
  record.validate();
  switch (kind) {
    case LossKind::Dpo:
    case LossKind::RmjPairwise: {
      if (record.assortment.size() != 2 || record.ranking.size() != 1) {
        throw ValidationError(
            "pairwise losses need records with |assortment| = 2 and k = 1");
      }
      PairwiseObservation obs;
      obs.prompt_id = record.prompt_id;
      obs.winner = record.ranking[0];
      obs.loser = record.assortment[0] == obs.winner ? record.assortment[1]
                                                     : record.assortment[0];
      obs.dispersion = record.dispersion;
      return obs;
    }
    case LossKind::MnlDiscrete:
    case LossKind::RmjDiscrete: {
      if (record.ranking.size() != 1) {
        throw ValidationError("discrete losses need records with k = 1");
      }
      ChoiceObservation obs{record.prompt_id, Assortment(record.assortment),
                            record.ranking[0], record.dispersion};
      return obs;
    }
    case LossKind::MnlTopK:
    case LossKind::RmjTopK: {
      TopKObservation obs{record.prompt_id, Assortment(record.assortment),
                          TopKRanking(record.ranking), record.dispersion};
      return obs;
    }
  }
  throw ValidationError("unknown loss kind");
}

namespace {

struct TrainItem {
  PromptId prompt;
  ItemId id = 0;
  ResponseSequence response;
  double ref_log_prob = 0.0;
};

// Per-prompt logit gradient accumulator matching the policy tables.
struct LogitGrad {
  std::vector<double> start;
  std::map<Token, std::vector<double>> rows;
};

}  // namespace

double evaluate_alignment(const MarkovPolicy& theta, const MarkovPolicy& ref,
                          const ImplicitRewardConfig& reward_cfg,
                          std::span<const HeldoutPair> heldout) {
  if (heldout.empty()) {
    throw ValidationError("empty-heldout: evaluation needs at least one pair");
  }
  double score = 0.0;
  for (const HeldoutPair& pair : heldout) {
    const double margin =
        implicit_reward(theta, ref, reward_cfg, pair.prompt, pair.better) -
        implicit_reward(theta, ref, reward_cfg, pair.prompt, pair.worse);
    if (margin > 0.0) {
      score += 1.0;
    } else if (margin == 0.0) {
      score += 0.5;
    }
  }
  return score / static_cast<double>(heldout.size());
}

TrainReport train_rcpo(MarkovPolicy& theta, const MarkovPolicy& ref,
                       std::span<const DatasetRecord> dataset, LossKind kind,
                       const SmoothingConfig& smooth,
                       const ImplicitRewardConfig& reward_cfg,
                       const FitConfig& fit_cfg,
                       std::optional<double> phi_override) {
  fit_cfg.validate();
  smooth.validate();
  if (!(reward_cfg.beta > 0.0)) {
    throw ValidationError("reward scale beta must be positive");
  }
  if (theta.vocab_size() != ref.vocab_size()) {
    throw ValidationError("vocab mismatch between policy and reference");
  }
  if (dataset.empty()) {
    throw ValidationError("empty-data: training needs at least one record");
  }

  // Freeze everything that does not move during training: observations,
  // per-record response lookups, reference log-probs, and dispersions.
  std::vector<Observation> observations;
  std::vector<std::vector<TrainItem>> record_items(dataset.size());
  std::map<std::pair<PromptId, ItemId>, const TrainItem*> item_index;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const DatasetRecord& record = dataset[i];
    Observation obs = record_to_observation(record, kind);
    if (is_mallows_loss(kind)) {
      std::optional<double> phi = record.dispersion;
      if (!phi) phi = phi_override;
      if (!phi) {
        std::vector<ResponseSequence> responses;
        for (const auto& item : record.items) responses.push_back({item.tokens});
        phi = std::exp(-dispersion_proxy(ref, record.prompt_id, responses,
                                         DispersionProxyConfig{}));
      }
      check_dispersion(*phi);
      std::visit([&](auto& o) { o.dispersion = phi; }, obs);
    }
    std::map<ItemId, const ResponseRecord*> by_id;
    for (const auto& item : record.items) by_id[item.item_id] = &item;
    for (ItemId id : record.assortment) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ValidationError("record " + std::to_string(i) +
                              ": assortment item " + std::to_string(id) +
                              " carries no token sequence");
      }
      TrainItem entry;
      entry.prompt = record.prompt_id;
      entry.id = id;
      entry.response = {it->second->tokens};
      entry.ref_log_prob = log_prob(ref, record.prompt_id, entry.response);
      record_items[i].push_back(std::move(entry));
    }
    observations.push_back(std::move(obs));
  }
  for (const auto& items : record_items) {
    for (const TrainItem& item : items) {
      item_index.try_emplace({item.prompt, item.id}, &item);
    }
  }

  const auto evaluate_batch = [&](std::vector<ObservationLoss>& out) {
    out.resize(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        RewardSlate slate;
        slate.beta = reward_cfg.beta;
        for (const TrainItem& item : record_items[i]) {
          slate.rewards[item.id] =
              reward_cfg.beta *
              (log_prob(theta, item.prompt, item.response) - item.ref_log_prob);
        }
        out[i] = {dataset[i].prompt_id,
                  evaluate_loss(kind, slate, observations[i], smooth)};
      }
    });
  };

  TrainReport report;
  report.seed = fit_cfg.seed;
  std::vector<ObservationLoss> evals;
  evaluate_batch(evals);
  BatchLossEval batch = batch_loss(evals);
  report.loss_trajectory.push_back(batch.value);

  for (std::size_t step = 0; step < fit_cfg.max_iters; ++step) {
    // Chain mean reward gradients into logit space.
    std::map<PromptId, LogitGrad> grads;
    double grad_norm = 0.0;
    for (const auto& [key, coeff] : batch.reward_grad) {
      const PromptId& prompt = key.first;
      auto found = item_index.find(key);
      if (found == item_index.end()) continue;
      const TrainItem* item = found->second;
      const PolicyGrad g = grad_log_prob(theta, prompt, item->response);
      LogitGrad& acc = grads[prompt];
      if (acc.start.empty()) acc.start.assign(theta.vocab_size(), 0.0);
      const double scale = coeff * reward_cfg.beta;
      for (std::size_t t = 0; t < g.start.size(); ++t) {
        acc.start[t] += scale * g.start[t];
      }
      for (const auto& [row, values] : g.rows) {
        auto [it, inserted] = acc.rows.try_emplace(row);
        if (inserted) it->second.assign(theta.vocab_size(), 0.0);
        for (std::size_t t = 0; t < values.size(); ++t) {
          it->second[t] += scale * values[t];
        }
      }
    }
    for (const auto& [prompt, acc] : grads) {
      for (double v : acc.start) grad_norm = std::max(grad_norm, std::abs(v));
      for (const auto& [row, values] : acc.rows) {
        for (double v : values) grad_norm = std::max(grad_norm, std::abs(v));
      }
    }
    if (grad_norm < fit_cfg.grad_tol) break;

    for (const auto& [prompt, acc] : grads) {
      auto start = theta.start_logits(prompt);
      for (std::size_t t = 0; t < start.size(); ++t) {
        start[t] -= fit_cfg.learning_rate * acc.start[t];
      }
      for (const auto& [row, values] : acc.rows) {
        auto logits = theta.transition_logits(prompt, row);
        for (std::size_t t = 0; t < values.size(); ++t) {
          logits[t] -= fit_cfg.learning_rate * values[t];
        }
      }
    }
    ++report.iterations;
    evaluate_batch(evals);
    batch = batch_loss(evals);
    report.loss_trajectory.push_back(batch.value);
  }

  // Accuracy over every ordered pair the training rankings imply.
  std::vector<HeldoutPair> implied;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const DatasetRecord& record = dataset[i];
    std::map<ItemId, const ResponseSequence*> responses;
    for (const TrainItem& item : record_items[i]) {
      responses[item.id] = &item.response;
    }
    for (std::size_t a = 0; a < record.ranking.size(); ++a) {
      for (std::size_t b = a + 1; b < record.ranking.size(); ++b) {
        implied.push_back({record.prompt_id, *responses[record.ranking[a]],
                           *responses[record.ranking[b]]});
      }
      for (ItemId other : record.assortment) {
        if (std::find(record.ranking.begin(), record.ranking.end(), other) ==
            record.ranking.end()) {
          implied.push_back({record.prompt_id, *responses[record.ranking[a]],
                             *responses[other]});
        }
      }
    }
  }
  report.final_accuracy =
      implied.empty() ? 0.5 : evaluate_alignment(theta, ref, reward_cfg, implied);
  return report;
}

}  // namespace rcpo

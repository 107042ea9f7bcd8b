// Acceptance suite: one line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <numeric>
#include <string>
#include <vector>

#include "rcpo/choice.hpp"
#include "rcpo/datagen.hpp"
#include "rcpo/estimation.hpp"
#include "rcpo/losses.hpp"
#include "rcpo/policy.hpp"

using nlohmann::ordered_json;
using namespace rcpo;

namespace {

struct Checker {
  bool ok = true;
  std::string first_failure;

  void expect(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      first_failure = what;
    }
  }
};

std::vector<ItemId> iota_items(std::size_t n) {
  std::vector<ItemId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

UtilityVector random_utilities(std::span<const ItemId> ids, Rng& rng,
                               double spread) {
  UtilityVector nu;
  for (ItemId id : ids) nu.set(id, rng.uniform(-spread, spread));
  return nu;
}

constexpr double kPhiGrid[] = {0.1, 0.5, 0.9};

// ---------------------------------------------------------------------------
// 1. Normalization
// ---------------------------------------------------------------------------

bool criterion_normalization(Checker& check) {
  for (std::size_t n = 2; n <= 8; ++n) {
    const std::vector<ItemId> ids = iota_items(n);
    const Assortment s(ids);
    for (std::size_t k = 1; k <= n; ++k) {
      const std::vector<TopKRanking> lists = enumerate_topk(s, k);
      for (double phi : kPhiGrid) {
        const MallowsRmjModel model(ids, phi);
        double total = 0.0;
        for (const TopKRanking& mu : lists) total += rmj_topk_prob(model, s, mu);
        check.expect(std::abs(total - 1.0) < 1e-10,
                     "rmj normalization |S|=" + std::to_string(n) +
                         " k=" + std::to_string(k));
      }
      Rng rng(1000 + n * 16 + k);
      for (int rep = 0; rep < 20; ++rep) {
        const UtilityVector nu = random_utilities(ids, rng, 2.0);
        double total = 0.0;
        for (const TopKRanking& mu : lists) total += mnl_topk_prob(nu, s, mu);
        check.expect(std::abs(total - 1.0) < 1e-10,
                     "mnl normalization |S|=" + std::to_string(n) +
                         " k=" + std::to_string(k));
      }
    }
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 2. Marginalization
// ---------------------------------------------------------------------------

bool criterion_marginalization(Checker& check) {
  for (std::size_t n = 2; n <= 8; ++n) {
    const std::vector<ItemId> ids = iota_items(n);
    const Assortment s(ids);
    for (std::size_t k = 2; k <= n; ++k) {
      const std::vector<TopKRanking> prefixes = enumerate_topk(s, k - 1);
      for (double phi : kPhiGrid) {
        const MallowsRmjModel model(ids, phi);
        for (const TopKRanking& prefix : prefixes) {
          double total = 0.0;
          for (ItemId next : ids) {
            if (prefix.contains(next)) continue;
            std::vector<ItemId> extended = prefix.ranked();
            extended.push_back(next);
            total += rmj_topk_prob(model, s, TopKRanking(extended));
          }
          check.expect(std::abs(total - rmj_topk_prob(model, s, prefix)) < 1e-10,
                       "rmj marginalization |S|=" + std::to_string(n) +
                           " k=" + std::to_string(k));
        }
      }
      Rng rng(2000 + n * 16 + k);
      for (int rep = 0; rep < 20; ++rep) {
        const UtilityVector nu = random_utilities(ids, rng, 2.0);
        for (const TopKRanking& prefix : prefixes) {
          double total = 0.0;
          for (ItemId next : ids) {
            if (prefix.contains(next)) continue;
            std::vector<ItemId> extended = prefix.ranked();
            extended.push_back(next);
            total += mnl_topk_prob(nu, s, TopKRanking(extended));
          }
          check.expect(std::abs(total - mnl_topk_prob(nu, s, prefix)) < 1e-10,
                       "mnl marginalization |S|=" + std::to_string(n) +
                           " k=" + std::to_string(k));
        }
      }
    }
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 3. Oracle agreement (report used for the determinism criterion)
// ---------------------------------------------------------------------------

bool criterion_oracle(Checker& check, std::string* report_out) {
  constexpr std::uint64_t kSeed = 31;
  constexpr std::size_t kSamples = 100000;
  ordered_json instances = ordered_json::array();

  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::substream(kSeed, trial);
    const std::size_t n = 2 + rng.uniform_index(5);
    const std::vector<ItemId> ids = iota_items(n);
    const Assortment s(ids);
    const UtilityVector nu = random_utilities(ids, rng, 1.0);
    const ItemId y = ids[rng.uniform_index(n)];
    const double closed = mnl_choice_prob(nu, s, y);
    const McEstimate mc = rum_choice_prob_mc(nu, s, y, {kSamples, rng.next_u64()});
    check.expect(std::abs(mc.estimate - closed) <= 3.0 * mc.std_error,
                 "choice oracle trial " + std::to_string(trial));
    ordered_json row;
    row["kind"] = "choice";
    row["closed"] = closed;
    row["estimate"] = mc.estimate;
    row["std_error"] = mc.std_error;
    instances.push_back(std::move(row));
  }

  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::substream(kSeed + 1, trial);
    const std::size_t n = 3 + rng.uniform_index(3);
    const std::size_t k = 2 + rng.uniform_index(2);
    const std::vector<ItemId> ids = iota_items(n);
    const Assortment s(ids);
    const UtilityVector nu = random_utilities(ids, rng, 1.0);
    // Modal list: utilities descending, truncated to k. Keeps every tested
    // probability comfortably away from zero.
    std::vector<ItemId> sorted = ids;
    std::sort(sorted.begin(), sorted.end(), [&](ItemId a, ItemId b) {
      return nu.at(a) > nu.at(b);
    });
    sorted.resize(k);
    const TopKRanking mu(sorted);
    const double closed = mnl_topk_prob(nu, s, mu);
    const McEstimate mc = rum_topk_prob_mc(nu, s, mu, {kSamples, rng.next_u64()});
    check.expect(std::abs(mc.estimate - closed) <= 3.0 * mc.std_error,
                 "top-k oracle trial " + std::to_string(trial));
    ordered_json row;
    row["kind"] = "topk";
    row["closed"] = closed;
    row["estimate"] = mc.estimate;
    row["std_error"] = mc.std_error;
    instances.push_back(std::move(row));
  }

  ordered_json report;
  report["seed"] = kSeed;
  report["samples"] = kSamples;
  report["instances"] = std::move(instances);
  if (report_out) *report_out = report.dump();
  return check.ok;
}

// ---------------------------------------------------------------------------
// 4. Reduction identities
// ---------------------------------------------------------------------------

bool criterion_reductions(Checker& check) {
  const SmoothingConfig unit;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = Rng::substream(41, trial);
    const std::size_t n = 2 + rng.uniform_index(5);
    const std::vector<ItemId> ids = iota_items(n);
    const Assortment s(ids);
    const UtilityVector nu = random_utilities(ids, rng, 2.0);
    const double phi = rng.uniform(0.1, 0.9);
    const MallowsRmjModel model(ids, phi);
    const ItemId y = ids[rng.uniform_index(n)];

    check.expect(std::abs(mnl_topk_prob(nu, s, TopKRanking({y})) -
                          mnl_choice_prob(nu, s, y)) < 1e-12,
                 "mnl top-1 reduction");
    check.expect(std::abs(rmj_topk_prob(model, s, TopKRanking({y})) -
                          rmj_choice_prob(model, s, y)) < 1e-12,
                 "rmj top-1 reduction");

    const ItemId a = ids[rng.uniform_index(n)];
    const ItemId b = (a + 1 + rng.uniform_index(n - 1)) % n;
    const Assortment pair({a, b});
    check.expect(std::abs(rmj_choice_prob(model, pair, a) -
                          rmj_pairwise_prob(model, a, b)) < 1e-12,
                 "rmj pairwise reduction");

    RewardSlate slate;
    for (ItemId id : ids) slate.rewards[id] = rng.uniform(-2.0, 2.0);
    const ChoiceObservation choice{"p", s, y, phi};
    const TopKObservation top1{"p", s, TopKRanking({y}), phi};
    check.expect(std::abs(mnl_po_topk_loss(slate, top1).value -
                          mnl_po_discrete_loss(slate, choice).value) < 1e-12,
                 "mnl loss top-1 reduction");
    check.expect(std::abs(rmj_po_topk_loss(slate, top1, unit).value -
                          rmj_po_discrete_loss(slate, choice, unit).value) <
                     1e-12,
                 "rmj loss top-1 reduction");

    const ChoiceObservation pair_choice{"p", pair, a, phi};
    const PairwiseObservation pairwise{"p", a, b, phi};
    check.expect(std::abs(rmj_po_discrete_loss(slate, pair_choice, unit).value -
                          rmj_po_pairwise_loss(slate, pairwise, unit).value) <
                     1e-12,
                 "rmj loss pairwise reduction");
    check.expect(std::abs(mnl_po_discrete_loss(slate, pair_choice).value -
                          dpo_loss(slate, pairwise).value) < 1e-12,
                 "mnl discrete equals dpo at |S|=2");
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 5. Gradient suite
// ---------------------------------------------------------------------------

bool criterion_gradients(Checker& check) {
  const SmoothingConfig unit;
  constexpr LossKind kinds[] = {LossKind::Dpo,         LossKind::MnlDiscrete,
                                LossKind::MnlTopK,     LossKind::RmjPairwise,
                                LossKind::RmjDiscrete, LossKind::RmjTopK};
  for (LossKind kind : kinds) {
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng = Rng::substream(51 + static_cast<int>(kind), trial);
      const bool pairwise =
          kind == LossKind::Dpo || kind == LossKind::RmjPairwise;
      const std::size_t n = pairwise ? 2 : 2 + rng.uniform_index(5);
      const std::vector<ItemId> ids = iota_items(n);
      RewardSlate slate;
      for (ItemId id : ids) slate.rewards[id] = rng.uniform(-2.0, 2.0);
      const std::optional<double> phi = rng.uniform(0.1, 0.9);
      Observation obs;
      if (pairwise) {
        obs = PairwiseObservation{"p", ids[0], ids[1], phi};
      } else if (kind == LossKind::MnlDiscrete || kind == LossKind::RmjDiscrete) {
        obs = ChoiceObservation{"p", Assortment(ids), ids[rng.uniform_index(n)],
                                phi};
      } else {
        const std::size_t k = 1 + rng.uniform_index(n);
        std::vector<ItemId> perm = ids;
        for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
          std::swap(perm[i], perm[i + rng.uniform_index(perm.size() - i)]);
        }
        perm.resize(k);
        obs = TopKObservation{"p", Assortment(ids), TopKRanking(perm), phi};
      }
      const LossEval eval = evaluate_loss(kind, slate, obs, unit);
      const double h = 1e-5;
      double worst = 0.0;
      for (auto& [id, r] : slate.rewards) {
        const double orig = r;
        r = orig + h;
        const double up = evaluate_loss(kind, slate, obs, unit).value;
        r = orig - h;
        const double down = evaluate_loss(kind, slate, obs, unit).value;
        r = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = eval.reward_grad.at(id);
        worst = std::max(worst,
                         std::abs(analytic - numeric) /
                             std::max({1.0, std::abs(analytic),
                                       std::abs(numeric)}));
      }
      check.expect(worst < 1e-5, std::string(loss_kind_name(kind)) +
                                     " gradient trial " + std::to_string(trial));
    }
  }

  // Policy gradients against finite differences of log_prob.
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = Rng::substream(61, trial);
    const std::vector<PromptId> prompts{"p"};
    MarkovPolicy policy = MarkovPolicy::random(4, prompts, 1.0, rng);
    std::vector<Token> tokens(1 + rng.uniform_index(5));
    for (Token& t : tokens) t = static_cast<Token>(rng.uniform_index(4));
    const ResponseSequence y{tokens};
    const PolicyGrad grad = grad_log_prob(policy, "p", y);
    const double h = 1e-5;
    double worst = 0.0;
    const auto check_row = [&](std::span<double> logits,
                               const std::vector<double>* analytic) {
      for (std::size_t t = 0; t < logits.size(); ++t) {
        const double orig = logits[t];
        logits[t] = orig + h;
        const double up = log_prob(policy, "p", y);
        logits[t] = orig - h;
        const double down = log_prob(policy, "p", y);
        logits[t] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic ? (*analytic)[t] : 0.0;
        worst = std::max(worst,
                         std::abs(a - numeric) /
                             std::max({1.0, std::abs(a), std::abs(numeric)}));
      }
    };
    check_row(policy.start_logits("p"), &grad.start);
    for (Token row = 0; row < 4; ++row) {
      auto it = grad.rows.find(row);
      check_row(policy.transition_logits("p", row),
                it == grad.rows.end() ? nullptr : &it->second);
    }
    check.expect(worst < 1e-6, "policy gradient trial " + std::to_string(trial));
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 6. Hand-value spot checks
// ---------------------------------------------------------------------------

bool criterion_hand_values(Checker& check) {
  const double ln2 = std::log(2.0);
  const SmoothingConfig unit;

  {
    RewardSlate slate;
    slate.rewards = {{0, 0.7}, {1, 0.7}};
    check.expect(std::abs(dpo_loss(slate, {"p", 0, 1, {}}).value - ln2) < 1e-12,
                 "dpo at zero margin");
  }
  {
    RewardSlate slate;
    slate.rewards = {{0, 0.0}, {1, 0.0}, {2, 0.0}};
    const ChoiceObservation obs{"p", Assortment({0, 1, 2}), 0, {}};
    check.expect(std::abs(mnl_po_discrete_loss(slate, obs).value -
                          std::log(3.0)) < 1e-12,
                 "mnl discrete equal rewards");
    const TopKObservation top2{"p", Assortment({0, 1, 2}), TopKRanking({0, 1}),
                               {}};
    check.expect(std::abs(mnl_po_topk_loss(slate, top2).value - std::log(6.0)) <
                     1e-12,
                 "mnl top-2 equal rewards");
  }
  {
    RewardSlate slate;
    slate.rewards = {{0, 0.0}, {1, 0.0}, {2, 0.0}, {3, 0.0}};
    const TopKObservation obs{"p", Assortment({0, 1, 2, 3}),
                              TopKRanking({0, 1}), 0.5};
    check.expect(std::abs(rmj_po_topk_loss(slate, obs, unit).value -
                          2.5 * ln2) < 1e-12,
                 "rmj top-2 equal rewards");
  }
  {
    const MallowsRmjModel model({0, 1, 2}, 0.5);
    const Assortment s({0, 1, 2});
    check.expect(std::abs(rmj_choice_prob(model, s, 0) - 4.0 / 7.0) < 1e-12,
                 "rmj choice 4/7");
    check.expect(std::abs(rmj_choice_prob(model, s, 1) - 2.0 / 7.0) < 1e-12,
                 "rmj choice 2/7");
    check.expect(std::abs(rmj_choice_prob(model, s, 2) - 1.0 / 7.0) < 1e-12,
                 "rmj choice 1/7");
    check.expect(std::abs(rmj_topk_prob(model, s, TopKRanking({0, 1})) -
                          1.0 / 2.625) < 1e-12,
                 "rmj top-2 central order");
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 7. MLE recovery (report used for the determinism criterion)
// ---------------------------------------------------------------------------

bool criterion_recovery(Checker& check, std::string* report_out) {
  ordered_json report;

  {
    UtilityVector truth;
    truth.set(0, -1.0);
    truth.set(1, 0.0);
    truth.set(2, 1.0);
    const std::vector<ItemId> universe = iota_items(3);
    const Assortment s(universe);
    Rng rng(71);
    std::vector<Observation> data;
    data.reserve(100000);
    for (std::size_t i = 0; i < 100000; ++i) {
      data.push_back(ChoiceObservation{
          "p", s, sample_pl_topk(truth, s, 1, rng).at(0), std::nullopt});
    }
    FitConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.max_iters = 500;
    cfg.grad_tol = 1e-7;
    cfg.seed = 71;
    const MnlFitResult fit = fit_mnl_mle(data, universe, cfg);
    double worst = 0.0;
    for (ItemId id : universe) {
      worst = std::max(worst, std::abs(fit.utilities.at(id) - truth.at(id)));
    }
    check.expect(worst <= 0.05, "mnl recovery within L-infinity 0.05");
    check.expect(fit.utilities.at(0) < fit.utilities.at(1) &&
                     fit.utilities.at(1) < fit.utilities.at(2),
                 "mnl recovery ordering");
    ordered_json block;
    block["seed"] = cfg.seed;
    block["samples"] = data.size();
    for (ItemId id : universe) {
      block["utilities"][std::to_string(id)] = fit.utilities.at(id);
    }
    block["log_likelihood"] = fit.log_likelihood;
    block["iterations"] = fit.iterations;
    block["worst_abs_error"] = worst;
    report["mnl"] = std::move(block);
  }

  {
    const std::vector<ItemId> universe = iota_items(4);
    const MallowsRmjModel truth(universe, 0.5);
    Rng rng(72);
    std::vector<Observation> data;
    data.reserve(100000);
    for (std::size_t i = 0; i < 100000; ++i) {
      std::vector<ItemId> pool = universe;
      for (std::size_t j = 0; j < 3; ++j) {
        std::swap(pool[j], pool[j + rng.uniform_index(pool.size() - j)]);
      }
      pool.resize(3);
      const Assortment s(pool);
      data.push_back(ChoiceObservation{
          "p", s, sample_rmj_topk(truth, s, 1, rng).at(0), std::nullopt});
    }
    FitConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.max_iters = 500;
    cfg.grad_tol = 1e-7;
    cfg.seed = 72;
    const RmjFitResult fit = fit_rmj_mle(data, universe, cfg);
    check.expect(fit.central_ranking == universe, "rmj ranking recovered");
    check.expect(std::abs(fit.phi_hat - 0.5) <= 0.02, "rmj phi within 0.02");
    ordered_json block;
    block["seed"] = cfg.seed;
    block["samples"] = data.size();
    block["central_ranking"] = fit.central_ranking;
    block["phi_hat"] = fit.phi_hat;
    block["log_likelihood"] = fit.log_likelihood;
    block["iterations"] = fit.iterations;
    report["rmj"] = std::move(block);
  }

  if (report_out) *report_out = report.dump();
  return check.ok;
}

// ---------------------------------------------------------------------------
// 8. End-to-end toy alignment (report used for the determinism criterion)
// ---------------------------------------------------------------------------

struct ToyAlignment {
  MarkovPolicy ref{8};
  std::vector<DatasetRecord> pairwise;
  std::vector<DatasetRecord> single_best;
  std::vector<DatasetRecord> top2;
  std::vector<HeldoutPair> heldout;
};

ToyAlignment build_toy_alignment(std::uint64_t seed) {
  constexpr std::size_t kPrompts = 20;
  constexpr std::size_t kResponses = 5;
  constexpr std::size_t kLength = 4;

  ToyAlignment toy;
  std::vector<PromptId> prompts;
  for (std::size_t p = 0; p < kPrompts; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%02zu", p);
    prompts.emplace_back(buf);
  }
  Rng policy_rng = Rng::substream(seed, 0);
  toy.ref = MarkovPolicy::random(8, prompts, 0.8, policy_rng);

  for (std::size_t p = 0; p < kPrompts; ++p) {
    Rng rng = Rng::substream(seed, 100 + p);
    const SampledResponses sampled =
        sample_responses(toy.ref, prompts[p], kResponses, kLength, rng);
    // Ground truth: a random utility per response slot, ranking descending.
    std::vector<double> utility(kResponses);
    for (double& u : utility) u = rng.normal();
    std::vector<std::size_t> order(kResponses);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return utility[a] > utility[b];
    });

    DatasetRecord base;
    base.prompt_id = prompts[p];
    for (std::size_t slot = 0; slot < kResponses; ++slot) {
      base.items.push_back(
          {static_cast<ItemId>(slot), sampled.responses[slot].tokens});
    }

    DatasetRecord pair = base;
    pair.assortment = {static_cast<ItemId>(order.front()),
                       static_cast<ItemId>(order.back())};
    pair.ranking = {static_cast<ItemId>(order.front())};
    toy.pairwise.push_back(std::move(pair));

    DatasetRecord best = base;
    for (std::size_t slot = 0; slot < kResponses; ++slot) {
      best.assortment.push_back(static_cast<ItemId>(slot));
    }
    best.ranking = {static_cast<ItemId>(order[0])};
    toy.single_best.push_back(best);

    DatasetRecord ranked = best;
    ranked.ranking = {static_cast<ItemId>(order[0]),
                      static_cast<ItemId>(order[1])};
    toy.top2.push_back(std::move(ranked));

    // Held out: the ground-truth best against every other response.
    for (std::size_t j = 1; j < kResponses; ++j) {
      toy.heldout.push_back({prompts[p], sampled.responses[order[0]],
                             sampled.responses[order[j]]});
    }
  }
  return toy;
}

bool criterion_alignment(Checker& check, std::string* report_out) {
  constexpr std::uint64_t kSeed = 81;
  const ToyAlignment toy = build_toy_alignment(kSeed);
  const ImplicitRewardConfig reward{1.0};
  const SmoothingConfig smooth;

  FitConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.max_iters = 2000;
  cfg.grad_tol = 1e-10;
  cfg.seed = kSeed;

  ordered_json runs = ordered_json::array();
  double dpo_accuracy = 0.0;
  double mnl_topk_accuracy = 0.0;
  double rmj_pairwise_accuracy = 0.0;
  double rmj_topk_accuracy = 0.0;

  const auto train_one = [&](LossKind kind,
                             const std::vector<DatasetRecord>& data) {
    MarkovPolicy theta = toy.ref;
    const TrainReport report =
        train_rcpo(theta, toy.ref, data, kind, smooth, reward, cfg);
    const double accuracy =
        evaluate_alignment(theta, toy.ref, reward, toy.heldout);
    check.expect(report.loss_trajectory.back() < report.loss_trajectory.front(),
                 std::string(loss_kind_name(kind)) + " loss fell");
    check.expect(accuracy >= 0.95, std::string(loss_kind_name(kind)) +
                                       " held-out accuracy >= 0.95 (got " +
                                       std::to_string(accuracy) + ")");
    ordered_json row;
    row["loss"] = std::string(loss_kind_name(kind));
    row["initial_loss"] = report.loss_trajectory.front();
    row["final_loss"] = report.loss_trajectory.back();
    row["iterations"] = report.iterations;
    row["train_accuracy"] = report.final_accuracy;
    row["heldout_accuracy"] = accuracy;
    runs.push_back(std::move(row));
    return accuracy;
  };

  dpo_accuracy = train_one(LossKind::Dpo, toy.pairwise);
  train_one(LossKind::MnlDiscrete, toy.single_best);
  mnl_topk_accuracy = train_one(LossKind::MnlTopK, toy.top2);
  rmj_pairwise_accuracy = train_one(LossKind::RmjPairwise, toy.pairwise);
  train_one(LossKind::RmjDiscrete, toy.single_best);
  rmj_topk_accuracy = train_one(LossKind::RmjTopK, toy.top2);

  check.expect(mnl_topk_accuracy >= dpo_accuracy,
               "top-2 mnl at least matches its pairwise counterpart");
  check.expect(rmj_topk_accuracy >= rmj_pairwise_accuracy,
               "top-2 rmj at least matches its pairwise counterpart");

  ordered_json report;
  report["seed"] = kSeed;
  report["heldout_pairs"] = toy.heldout.size();
  report["runs"] = std::move(runs);
  if (report_out) *report_out = report.dump();
  return check.ok;
}

// ---------------------------------------------------------------------------
// 9. Dispersion proxy
// ---------------------------------------------------------------------------

bool criterion_proxy(Checker& check) {
  const DispersionProxyConfig cfg;

  {
    MarkovPolicy policy(8);
    policy.add_prompt("p");
    for (std::size_t n : {2u, 3u, 4u, 5u}) {
      std::vector<ResponseSequence> responses;
      for (Token first = 0; first < 4; ++first) {
        responses.push_back({std::vector<Token>(n, first)});
      }
      const double expected =
          -std::log((static_cast<double>(n) - 1.0) / static_cast<double>(n));
      check.expect(std::abs(dispersion_proxy(policy, "p", responses, cfg) -
                            expected) < 1e-12,
                   "uniform proxy at length " + std::to_string(n));
    }
  }

  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::substream(91, trial);
    const std::vector<PromptId> prompts{"p"};
    MarkovPolicy policy = MarkovPolicy::random(6, prompts, 1.0, rng);
    std::vector<ResponseSequence> responses;
    for (int i = 0; i < 4; ++i) {
      std::vector<Token> tokens(2 + rng.uniform_index(3));
      for (Token& t : tokens) t = static_cast<Token>(rng.uniform_index(6));
      responses.push_back({tokens});
    }
    const double before = dispersion_proxy(policy, "p", responses, cfg);
    const double alpha = 1.0 + rng.uniform(0.0, 4.0);
    for (Token t = 0; t < 6; ++t) {
      for (double& v : policy.transition_logits("p", t)) v *= alpha;
    }
    check.expect(dispersion_proxy(policy, "p", responses, cfg) >=
                     before - 1e-12,
                 "sharpening trial " + std::to_string(trial));
  }

  {
    MarkovPolicy policy(4);
    policy.add_prompt("p");
    for (Token t = 0; t < 4; ++t) {
      policy.transition_logits("p", t)[(t + 2) % 4] = 3000.0;
    }
    const std::vector<ResponseSequence> responses{{{0, 2, 0}}, {{1, 3, 1}}};
    check.expect(dispersion_proxy(policy, "p", responses, cfg) == cfg.proxy_cap,
                 "deterministic policy pins the cap");
  }
  return check.ok;
}

// ---------------------------------------------------------------------------
// 10. Determinism of the seeded reports
// ---------------------------------------------------------------------------

bool criterion_determinism(Checker& check, const std::string& oracle_report,
                           const std::string& recovery_report,
                           const std::string& alignment_report) {
  Checker scratch;
  std::string oracle_again;
  criterion_oracle(scratch, &oracle_again);
  check.expect(oracle_again == oracle_report, "oracle report bytes");

  std::string recovery_again;
  criterion_recovery(scratch, &recovery_again);
  check.expect(recovery_again == recovery_report, "recovery report bytes");

  std::string alignment_again;
  criterion_alignment(scratch, &alignment_again);
  check.expect(alignment_again == alignment_report, "alignment report bytes");
  return check.ok;
}

int run_criterion(int id, const std::string& name,
                  const std::function<bool(Checker&)>& body) {
  Checker check;
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  try {
    ok = body(check);
  } catch (const std::exception& e) {
    check.ok = false;
    check.first_failure = std::string("exception: ") + e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (ok) {
    std::printf("[PASS] criterion %2d: %s (%.2fs)\n", id, name.c_str(), seconds);
    return 0;
  }
  std::printf("[FAIL] criterion %2d: %s (%.2fs) -- %s\n", id, name.c_str(),
              seconds, check.first_failure.c_str());
  return 1;
}

}  // namespace

int main() {
  int failures = 0;
  std::string oracle_report;
  std::string recovery_report;
  std::string alignment_report;

  failures += run_criterion(1, "top-k normalization over the enumeration grid",
                            criterion_normalization);
  failures += run_criterion(2, "top-k marginalization consistency",
                            criterion_marginalization);
  failures += run_criterion(3, "closed forms vs Gumbel Monte Carlo",
                            [&](Checker& c) {
                              return criterion_oracle(c, &oracle_report);
                            });
  failures += run_criterion(4, "reduction identities", criterion_reductions);
  failures += run_criterion(5, "analytic gradients vs finite differences",
                            criterion_gradients);
  failures += run_criterion(6, "hand-value spot checks", criterion_hand_values);
  failures += run_criterion(7, "maximum-likelihood recovery",
                            [&](Checker& c) {
                              return criterion_recovery(c, &recovery_report);
                            });
  failures += run_criterion(8, "end-to-end toy alignment",
                            [&](Checker& c) {
                              return criterion_alignment(c, &alignment_report);
                            });
  failures += run_criterion(9, "dispersion proxy checks", criterion_proxy);
  failures += run_criterion(10, "seeded reports are byte-identical",
                            [&](Checker& c) {
                              return criterion_determinism(
                                  c, oracle_report, recovery_report,
                                  alignment_report);
                            });

  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria failed\n", failures);
  }
  return failures;
}

#include "rcpo/choice.hpp"

#include <algorithm>
#include <cmath>

#include "rcpo/numeric.hpp"
#include "rcpo/rng.hpp"

namespace rcpo {

namespace {

void require_member(const Assortment& s, ItemId y) {
  if (!s.contains(y)) {
    throw ValidationError("item-not-in-assortment: item " + std::to_string(y));
  }
}

std::vector<double> utilities_of(const UtilityVector& nu, const Assortment& s) {
  std::vector<double> v;
  v.reserve(s.size());
  for (ItemId id : s) v.push_back(nu.at(id));
  return v;
}

constexpr std::size_t kEnumerationCap = 8;

}  // namespace

double mnl_log_choice_prob(const UtilityVector& nu, const Assortment& s,
                           ItemId y) {
  require_member(s, y);
  const std::vector<double> v = utilities_of(nu, s);
  return nu.at(y) - log_sum_exp(v);
}

double mnl_choice_prob(const UtilityVector& nu, const Assortment& s, ItemId y) {
  return std::exp(mnl_log_choice_prob(nu, s, y));
}

double mnl_log_topk_prob(const UtilityVector& nu, const Assortment& s,
                         const TopKRanking& mu) {
  mu.validate_against(s);
  std::vector<ItemId> remaining(s.items());
  std::vector<double> v;
  double total = 0.0;
  for (std::size_t i = 0; i < mu.k(); ++i) {
    const ItemId chosen = mu.at(i);
    v.clear();
    for (ItemId id : remaining) v.push_back(nu.at(id));
    total += nu.at(chosen) - log_sum_exp(v);
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
  }
  return total;
}

double mnl_topk_prob(const UtilityVector& nu, const Assortment& s,
                     const TopKRanking& mu) {
  return std::exp(mnl_log_topk_prob(nu, s, mu));
}

std::size_t rmj_rank_distance(const MallowsRmjModel& model, const Assortment& s,
                              ItemId y) {
  require_member(s, y);
  const std::size_t rank_y = model.rank_of(y);
  std::size_t d = 0;
  for (ItemId other : s) {
    if (other != y && model.rank_of(other) < rank_y) ++d;
  }
  return d;
}

double rmj_choice_prob(const MallowsRmjModel& model, const Assortment& s,
                       ItemId y) {
  const std::size_t d = rmj_rank_distance(model, s, y);
  const double phi = model.dispersion();
  double numer = 1.0;
  for (std::size_t i = 0; i < d; ++i) numer *= phi;
  double denom = 0.0;
  double term = 1.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    denom += term;
    term *= phi;
  }
  return numer / denom;
}

double rmj_pairwise_prob(const MallowsRmjModel& model, ItemId winner,
                         ItemId loser) {
  if (winner == loser) {
    throw ValidationError("identical-items: pairwise comparison needs two items");
  }
  const double phi = model.dispersion();
  const bool central_prefers_winner = model.rank_of(winner) < model.rank_of(loser);
  return (central_prefers_winner ? 1.0 : phi) / (1.0 + phi);
}

std::size_t rmj_topk_distance(const MallowsRmjModel& model, const Assortment& s,
                              const TopKRanking& mu) {
  mu.validate_against(s);
  const std::size_t k = mu.k();
  std::size_t d = 0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (model.rank_of(mu.at(i)) > model.rank_of(mu.at(i + 1))) {
      d += s.size() - (i + 1);
    }
  }
  const std::size_t rank_last = model.rank_of(mu.at(k - 1));
  for (ItemId other : s) {
    if (!mu.contains(other) && rank_last > model.rank_of(other)) ++d;
  }
  return d;
}

double psi(std::size_t n, double phi) {
  check_dispersion(phi);
  double product = 1.0;
  double series = 0.0;
  double term = 1.0;
  for (std::size_t i = 1; i <= n; ++i) {
    series += term;  // 1 + phi + ... + phi^{i-1}
    term *= phi;
    product *= series;
  }
  return product;
}

double rmj_topk_prob(const MallowsRmjModel& model, const Assortment& s,
                     const TopKRanking& mu) {
  const std::size_t d = rmj_topk_distance(model, s, mu);
  const double phi = model.dispersion();
  double shift = 1.0;
  for (std::size_t i = 0; i < d; ++i) shift *= phi;
  return psi(s.size() - mu.k(), phi) / psi(s.size(), phi) * shift;
}

double rmj_log_topk_prob(const MallowsRmjModel& model, const Assortment& s,
                         const TopKRanking& mu) {
  const std::size_t d = rmj_topk_distance(model, s, mu);
  const double phi = model.dispersion();
  return std::log(psi(s.size() - mu.k(), phi)) - std::log(psi(s.size(), phi)) +
         static_cast<double>(d) * std::log(phi);
}

std::vector<TopKRanking> enumerate_topk(const Assortment& s, std::size_t k) {
  if (s.size() > kEnumerationCap) {
    throw ValidationError("assortment-too-large: enumeration capped at 8 items");
  }
  if (k == 0 || k > s.size()) {
    throw ValidationError("invalid-ranking: k must lie in [1, |assortment|]");
  }
  std::vector<TopKRanking> out;
  std::vector<ItemId> prefix;
  std::vector<bool> used(s.size(), false);
  auto recurse = [&](auto&& self) -> void {
    if (prefix.size() == k) {
      out.emplace_back(prefix);
      return;
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      prefix.push_back(s.items()[i]);
      self(self);
      prefix.pop_back();
      used[i] = false;
    }
  };
  recurse(recurse);
  return out;
}

namespace {

// Shared draw logic so the choice and top-k oracles consume the random
// stream identically: one Gumbel per assortment item per trial, in
// assortment order.
template <typename Event>
McEstimate run_gumbel_mc(const UtilityVector& nu, const Assortment& s,
                         const GumbelOracleConfig& cfg, Event&& hit) {
  if (cfg.sample_count == 0) {
    throw ValidationError("sample_count must be at least 1");
  }
  Rng rng(cfg.seed);
  std::vector<double> perturbed(s.size());
  std::vector<double> base = utilities_of(nu, s);
  std::size_t hits = 0;
  for (std::size_t trial = 0; trial < cfg.sample_count; ++trial) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      perturbed[i] = base[i] + rng.gumbel();
    }
    if (hit(perturbed)) ++hits;
  }
  const double m = static_cast<double>(cfg.sample_count);
  const double p = static_cast<double>(hits) / m;
  return {p, std::sqrt(p * (1.0 - p) / m)};
}

}  // namespace

McEstimate rum_choice_prob_mc(const UtilityVector& nu, const Assortment& s,
                              ItemId y, const GumbelOracleConfig& cfg) {
  require_member(s, y);
  const std::size_t target =
      std::find(s.items().begin(), s.items().end(), y) - s.items().begin();
  return run_gumbel_mc(nu, s, cfg, [&](const std::vector<double>& u) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (i != target && u[i] >= u[target]) return false;
    }
    return true;
  });
}

McEstimate rum_topk_prob_mc(const UtilityVector& nu, const Assortment& s,
                            const TopKRanking& mu,
                            const GumbelOracleConfig& cfg) {
  mu.validate_against(s);
  std::vector<std::size_t> order(mu.k());
  for (std::size_t j = 0; j < mu.k(); ++j) {
    order[j] =
        std::find(s.items().begin(), s.items().end(), mu.at(j)) - s.items().begin();
  }
  std::vector<std::size_t> idx(s.size());
  return run_gumbel_mc(nu, s, cfg, [&](const std::vector<double>& u) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + mu.k(), idx.end(),
                      [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });
    for (std::size_t j = 0; j < mu.k(); ++j) {
      if (idx[j] != order[j]) return false;
    }
    return true;
  });
}

}  // namespace rcpo

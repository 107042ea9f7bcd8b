#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcpo/choice.hpp"
#include "rcpo/policy.hpp"
#include "rcpo/rng.hpp"
#include "rcpo/types.hpp"

namespace rcpo {

struct ResponseRecord {
  ItemId item_id = 0;
  std::vector<Token> tokens;

  bool operator==(const ResponseRecord&) const = default;
};

/// One JSONL line: a prompt, its candidate responses, the presented
/// assortment and the observed top-k ranking over it.
struct DatasetRecord {
  std::string prompt_id;
  std::vector<ResponseRecord> items;
  std::vector<ItemId> assortment;
  std::vector<ItemId> ranking;
  std::optional<double> dispersion;

  bool operator==(const DatasetRecord&) const = default;

  /// Throws ValidationError on any schema invariant breach.
  void validate() const;
};

enum class GeneratorModel { Mnl, Rmj };

struct GeneratorConfig {
  GeneratorModel model = GeneratorModel::Mnl;
  std::size_t universe_size = 4;
  std::size_t assortment_size = 3;
  std::size_t k = 1;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  /// Ground truth; filled from the seed when left empty.
  std::vector<double> utilities;      // MNL, one per universe item
  std::vector<ItemId> central_order;  // Mallows, best first
  double phi = 0.5;

  void validate() const;
};

/// Top-k draw from the sequential softmax model via Gumbel-max:
/// perturb every utility, sort descending, truncate.
TopKRanking sample_pl_topk(const UtilityVector& nu, const Assortment& s,
                           std::size_t k, Rng& rng);

/// Exact top-k draw from the rank-based model: categorical sampling over
/// the enumerated lists weighted by their closed-form probabilities.
/// Requires |s| <= 8.
TopKRanking sample_rmj_topk(const MallowsRmjModel& model, const Assortment& s,
                            std::size_t k, Rng& rng);

struct SampledResponses {
  std::vector<ResponseSequence> responses;
  /// Set when distinct sequences could not be found within the retry
  /// budget and duplicates were kept.
  bool duplicate_warning = false;
};

/// Ancestral sampling of `count` fixed-length responses from the policy.
SampledResponses sample_responses(const MarkovPolicy& ref, const PromptId& prompt,
                                  std::size_t count, std::size_t length,
                                  Rng& rng);

/// Full synthetic dataset from a ground-truth choice model; deterministic
/// in the seed via per-record sub-streams. Ground-truth parameters left
/// empty in the config are drawn first and echoed back into the returned
/// config copy.
struct GeneratedDataset {
  std::vector<DatasetRecord> records;
  GeneratorConfig resolved;
};
GeneratedDataset generate_dataset(const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// JSONL codec
// ---------------------------------------------------------------------------

/// One record per line, keys exactly prompt_id, items, assortment,
/// ranking, dispersion (null when absent); floats carry 17 significant
/// digits so rewriting a parsed file is byte-identical.
void write_dataset(const std::string& path, std::span<const DatasetRecord> records);
std::string dataset_to_jsonl(std::span<const DatasetRecord> records);

/// Rejections carry the offending line number.
std::vector<DatasetRecord> read_dataset(const std::string& path);
std::vector<DatasetRecord> dataset_from_jsonl(const std::string& text);

}  // namespace rcpo

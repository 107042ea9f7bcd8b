#include "rcpo/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "rcpo/numeric.hpp"

namespace rcpo {

void DatasetRecord::validate() const {
  std::set<ItemId> item_ids;
  for (const auto& r : items) {
    if (r.tokens.empty()) {
      throw ValidationError("invariant-violation: empty token sequence for item " +
                            std::to_string(r.item_id));
    }
    if (!item_ids.insert(r.item_id).second) {
      throw ValidationError("invariant-violation: duplicate item " +
                            std::to_string(r.item_id) + " in items");
    }
  }
  std::set<ItemId> in_assortment(assortment.begin(), assortment.end());
  if (in_assortment.size() != assortment.size() || assortment.empty()) {
    throw ValidationError("invariant-violation: assortment must be non-empty and distinct");
  }
  if (ranking.empty() || ranking.size() > assortment.size()) {
    throw ValidationError("invariant-violation: ranking length must lie in [1, |assortment|]");
  }
  std::set<ItemId> in_ranking;
  for (ItemId y : ranking) {
    if (!in_assortment.count(y)) {
      throw ValidationError("invariant-violation: ranked item " + std::to_string(y) +
                            " not in assortment");
    }
    if (!in_ranking.insert(y).second) {
      throw ValidationError("invariant-violation: duplicate item " +
                            std::to_string(y) + " in ranking");
    }
  }
  if (dispersion && !std::isfinite(*dispersion)) {
    throw ValidationError("invariant-violation: dispersion must be finite");
  }
}

void GeneratorConfig::validate() const {
  if (universe_size < 2) {
    throw ValidationError("universe must contain at least 2 items");
  }
  if (assortment_size < 2 || assortment_size > universe_size) {
    throw ValidationError("assortment size must lie in [2, universe size]");
  }
  if (k < 1 || k > assortment_size) {
    throw ValidationError("k (" + std::to_string(k) +
                          ") exceeds assortment size (" +
                          std::to_string(assortment_size) + ")");
  }
  if (count == 0) {
    throw ValidationError("record count must be positive");
  }
  if (model == GeneratorModel::Rmj) {
    check_dispersion(phi);
    if (assortment_size > 8) {
      throw ValidationError("assortment-too-large: rank-based sampler is exact "
                            "only up to 8 items");
    }
  }
  if (!utilities.empty() && utilities.size() != universe_size) {
    throw ValidationError("utilities must match the universe size");
  }
  if (!central_order.empty() && central_order.size() != universe_size) {
    throw ValidationError("central order must match the universe size");
  }
}

TopKRanking sample_pl_topk(const UtilityVector& nu, const Assortment& s,
                           std::size_t k, Rng& rng) {
  if (k == 0 || k > s.size()) {
    throw ValidationError("invalid-ranking: k must lie in [1, |assortment|]");
  }
  const auto& items = s.items();
  std::vector<std::pair<double, std::size_t>> perturbed(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    perturbed[i] = {nu.at(items[i]) + rng.gumbel(), i};
  }
  std::partial_sort(perturbed.begin(), perturbed.begin() + k, perturbed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<ItemId> ranked(k);
  for (std::size_t j = 0; j < k; ++j) ranked[j] = items[perturbed[j].second];
  return TopKRanking(std::move(ranked));
}

TopKRanking sample_rmj_topk(const MallowsRmjModel& model, const Assortment& s,
                            std::size_t k, Rng& rng) {
  const std::vector<TopKRanking> lists = enumerate_topk(s, k);
  std::vector<double> cumulative(lists.size());
  double total = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    total += rmj_topk_prob(model, s, lists[i]);
    cumulative[i] = total;
  }
  const double u = rng.uniform_open01() * total;
  const std::size_t pick =
      std::lower_bound(cumulative.begin(), cumulative.end(), u) -
      cumulative.begin();
  return lists[std::min(pick, lists.size() - 1)];
}

namespace {

Token sample_categorical(std::span<const double> logits, Rng& rng) {
  std::vector<double> probs(logits.size());
  softmax_into(logits, probs);
  const double u = rng.uniform_open01();
  double acc = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    acc += probs[t];
    if (u <= acc) return static_cast<Token>(t);
  }
  return static_cast<Token>(probs.size() - 1);
}

ResponseSequence sample_one_response(const MarkovPolicy& ref,
                                     const PromptId& prompt, std::size_t length,
                                     Rng& rng) {
  ResponseSequence y;
  y.tokens.reserve(length);
  y.tokens.push_back(sample_categorical(ref.start_logits(prompt), rng));
  for (std::size_t j = 1; j < length; ++j) {
    y.tokens.push_back(
        sample_categorical(ref.transition_logits(prompt, y.tokens.back()), rng));
  }
  return y;
}

constexpr std::size_t kDuplicateRetries = 32;

}  // namespace

SampledResponses sample_responses(const MarkovPolicy& ref, const PromptId& prompt,
                                  std::size_t count, std::size_t length,
                                  Rng& rng) {
  if (count < 2) {
    throw ValidationError("response sampling needs count >= 2");
  }
  if (length < 1) {
    throw ValidationError("response sampling needs length >= 1");
  }
  SampledResponses out;
  out.responses.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ResponseSequence candidate = sample_one_response(ref, prompt, length, rng);
    std::size_t retries = 0;
    while (retries < kDuplicateRetries &&
           std::find(out.responses.begin(), out.responses.end(), candidate) !=
               out.responses.end()) {
      candidate = sample_one_response(ref, prompt, length, rng);
      ++retries;
    }
    if (std::find(out.responses.begin(), out.responses.end(), candidate) !=
        out.responses.end()) {
      out.duplicate_warning = true;
    }
    out.responses.push_back(std::move(candidate));
  }
  return out;
}

namespace {

std::vector<ItemId> draw_assortment(std::size_t universe, std::size_t size,
                                    Rng& rng) {
  std::vector<ItemId> pool(universe);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(size);
  return pool;
}

}  // namespace

GeneratedDataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedDataset out;
  out.resolved = cfg;
  GeneratorConfig& resolved = out.resolved;

  Rng setup = Rng::substream(cfg.seed, 0);
  if (resolved.model == GeneratorModel::Mnl && resolved.utilities.empty()) {
    resolved.utilities.resize(resolved.universe_size);
    for (double& v : resolved.utilities) v = setup.normal();
  }
  if (resolved.model == GeneratorModel::Rmj && resolved.central_order.empty()) {
    resolved.central_order.resize(resolved.universe_size);
    std::iota(resolved.central_order.begin(), resolved.central_order.end(), 0);
    for (std::size_t i = 0; i + 1 < resolved.central_order.size(); ++i) {
      const std::size_t j =
          i + setup.uniform_index(resolved.central_order.size() - i);
      std::swap(resolved.central_order[i], resolved.central_order[j]);
    }
  }

  UtilityVector nu;
  std::optional<MallowsRmjModel> mallows;
  if (resolved.model == GeneratorModel::Mnl) {
    for (std::size_t i = 0; i < resolved.universe_size; ++i) {
      nu.set(static_cast<ItemId>(i), resolved.utilities[i]);
    }
  } else {
    mallows.emplace(resolved.central_order, resolved.phi);
  }

  out.records.reserve(resolved.count);
  for (std::size_t index = 0; index < resolved.count; ++index) {
    Rng rng = Rng::substream(resolved.seed, index + 1);
    DatasetRecord record;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "g%06zu", index);
      record.prompt_id = buf;
    }
    record.assortment =
        draw_assortment(resolved.universe_size, resolved.assortment_size, rng);
    const Assortment s(record.assortment);
    const TopKRanking mu = resolved.model == GeneratorModel::Mnl
                               ? sample_pl_topk(nu, s, resolved.k, rng)
                               : sample_rmj_topk(*mallows, s, resolved.k, rng);
    record.ranking = mu.ranked();
    for (ItemId id : record.assortment) {
      record.items.push_back({id, {static_cast<Token>(id)}});
    }
    if (resolved.model == GeneratorModel::Rmj) {
      record.dispersion = resolved.phi;
    }
    record.validate();
    out.records.push_back(std::move(record));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL codec
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_record_json(std::string& out, const DatasetRecord& record) {
  out += "{\"prompt_id\":";
  out += nlohmann::json(record.prompt_id).dump();
  out += ",\"items\":[";
  for (std::size_t i = 0; i < record.items.size(); ++i) {
    if (i) out += ',';
    out += "{\"item_id\":";
    out += std::to_string(record.items[i].item_id);
    out += ",\"tokens\":[";
    for (std::size_t j = 0; j < record.items[i].tokens.size(); ++j) {
      if (j) out += ',';
      out += std::to_string(record.items[i].tokens[j]);
    }
    out += "]}";
  }
  out += "],\"assortment\":[";
  for (std::size_t i = 0; i < record.assortment.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(record.assortment[i]);
  }
  out += "],\"ranking\":[";
  for (std::size_t i = 0; i < record.ranking.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(record.ranking[i]);
  }
  out += "],\"dispersion\":";
  out += record.dispersion ? format_double(*record.dispersion) : "null";
  out += "}\n";
}

DatasetRecord parse_record(const nlohmann::json& doc, std::size_t line_no) {
  const auto fail = [line_no](const std::string& what) -> DataError {
    return DataError("malformed-line " + std::to_string(line_no) + ": " + what);
  };
  try {
    DatasetRecord record;
    record.prompt_id = doc.at("prompt_id").get<std::string>();
    for (const auto& item : doc.at("items")) {
      ResponseRecord r;
      r.item_id = item.at("item_id").get<ItemId>();
      r.tokens = item.at("tokens").get<std::vector<Token>>();
      record.items.push_back(std::move(r));
    }
    record.assortment = doc.at("assortment").get<std::vector<ItemId>>();
    record.ranking = doc.at("ranking").get<std::vector<ItemId>>();
    const auto& disp = doc.at("dispersion");
    if (!disp.is_null()) record.dispersion = disp.get<double>();
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
}

}  // namespace

std::string dataset_to_jsonl(std::span<const DatasetRecord> records) {
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      records[i].validate();
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(i) + ": " + e.what());
    }
    append_record_json(out, records[i]);
  }
  return out;
}

void write_dataset(const std::string& path, std::span<const DatasetRecord> records) {
  const std::string text = dataset_to_jsonl(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open " + path + " for writing");
  }
  out << text;
  if (!out) {
    throw DataError("write failure on " + path);
  }
}

std::vector<DatasetRecord> dataset_from_jsonl(const std::string& text) {
  std::vector<DatasetRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed-line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    DatasetRecord record = parse_record(doc, line_no);
    try {
      record.validate();
    } catch (const ValidationError& e) {
      throw DataError("record " + std::to_string(records.size()) + " (line " +
                      std::to_string(line_no) + "): " + e.what());
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return dataset_from_jsonl(text);
}

}  // namespace rcpo

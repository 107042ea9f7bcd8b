#include <fstream>
#include <json.hpp>

#include "rcpo/policy.hpp"

namespace rcpo {

std::string policy_to_json(const MarkovPolicy& policy) {
  nlohmann::ordered_json doc;
  doc["vocab_size"] = policy.vocab_size();
  nlohmann::ordered_json prompts = nlohmann::ordered_json::object();
  for (const PromptId& id : policy.prompt_ids()) {
    nlohmann::ordered_json entry;
    auto start = policy.start_logits(id);
    entry["start_logits"] = std::vector<double>(start.begin(), start.end());
    std::vector<double> trans;
    trans.reserve(static_cast<std::size_t>(policy.vocab_size()) *
                  policy.vocab_size());
    for (Token t = 0; t < policy.vocab_size(); ++t) {
      auto row = policy.transition_logits(id, t);
      trans.insert(trans.end(), row.begin(), row.end());
    }
    entry["transition_logits"] = std::move(trans);
    prompts[id] = std::move(entry);
  }
  doc["prompts"] = std::move(prompts);
  return doc.dump(2) + "\n";
}

MarkovPolicy policy_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("policy JSON parse failure: ") + e.what());
  }
  try {
    MarkovPolicy policy(doc.at("vocab_size").get<std::uint32_t>());
    const std::uint32_t vocab = policy.vocab_size();
    for (const auto& [id, entry] : doc.at("prompts").items()) {
      policy.add_prompt(id);
      const auto start = entry.at("start_logits").get<std::vector<double>>();
      const auto trans = entry.at("transition_logits").get<std::vector<double>>();
      if (start.size() != vocab ||
          trans.size() != static_cast<std::size_t>(vocab) * vocab) {
        throw DataError("policy JSON: logit table for prompt '" + id +
                        "' has the wrong shape");
      }
      std::copy(start.begin(), start.end(), policy.start_logits(id).begin());
      for (Token t = 0; t < vocab; ++t) {
        std::copy(trans.begin() + static_cast<std::size_t>(t) * vocab,
                  trans.begin() + static_cast<std::size_t>(t + 1) * vocab,
                  policy.transition_logits(id, t).begin());
      }
    }
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("policy JSON schema failure: ") + e.what());
  }
}

void save_policy(const MarkovPolicy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open " + path + " for writing");
  }
  out << policy_to_json(policy);
  if (!out) {
    throw DataError("write failure on " + path);
  }
}

MarkovPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return policy_from_json(text);
}

}  // namespace rcpo

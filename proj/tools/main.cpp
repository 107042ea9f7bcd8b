#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
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

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

std::vector<double> parse_double_csv(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string field =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ValidationError("cannot parse '" + field + "' as a number");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<ItemId> parse_item_csv(const std::string& text) {
  std::vector<ItemId> out;
  for (double v : parse_double_csv(text)) {
    if (v < 0 || v != std::floor(v)) {
      throw ValidationError("item ids must be non-negative integers");
    }
    out.push_back(static_cast<ItemId>(v));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("write failure on " + path);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string model;
  std::size_t items = 4;
  std::size_t assortment_size = 3;
  std::size_t k = 1;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
  double phi = 0.5;
  std::string utilities;
  std::string central;
  bool json = false;
};

int run_gen(const GenArgs& args) {
  GeneratorConfig cfg;
  if (args.model == "mnl") {
    cfg.model = GeneratorModel::Mnl;
  } else if (args.model == "rmj") {
    cfg.model = GeneratorModel::Rmj;
  } else {
    throw ValidationError("unknown model '" + args.model + "' (use mnl or rmj)");
  }
  cfg.universe_size = args.items;
  cfg.assortment_size = args.assortment_size;
  cfg.k = args.k;
  cfg.count = args.count;
  cfg.seed = args.seed;
  cfg.phi = args.phi;
  if (!args.utilities.empty()) cfg.utilities = parse_double_csv(args.utilities);
  if (!args.central.empty()) cfg.central_order = parse_item_csv(args.central);

  const GeneratedDataset data = generate_dataset(cfg);
  write_dataset(args.out, data.records);

  ordered_json manifest;
  manifest["model"] = args.model;
  manifest["items"] = data.resolved.universe_size;
  manifest["assortment_size"] = data.resolved.assortment_size;
  manifest["k"] = data.resolved.k;
  manifest["count"] = data.resolved.count;
  manifest["seed"] = data.resolved.seed;
  if (cfg.model == GeneratorModel::Mnl) {
    manifest["utilities"] = data.resolved.utilities;
  } else {
    manifest["central_ranking"] = data.resolved.central_order;
    manifest["phi"] = data.resolved.phi;
  }
  manifest["out"] = args.out;
  const std::string manifest_path =
      args.manifest.empty() ? args.out + ".manifest.json" : args.manifest;
  write_text(manifest_path, manifest.dump(2) + "\n");

  if (args.json) {
    ordered_json summary;
    summary["dataset"] = args.out;
    summary["manifest"] = manifest_path;
    summary["records"] = data.records.size();
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << "wrote " << data.records.size() << " records to " << args.out
              << " (manifest " << manifest_path << ")\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string data;
  std::string out;
  double lr = 0.5;
  std::size_t iters = 500;
  double tol = 1e-6;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  bool json = false;
};

int run_fit(const FitArgs& args) {
  if (args.model != "mnl" && args.model != "rmj") {
    throw ValidationError("unknown model '" + args.model + "' (use mnl or rmj)");
  }
  const std::vector<DatasetRecord> records = read_dataset(args.data);
  if (records.empty()) {
    throw ValidationError("empty-data: " + args.data + " holds no records");
  }
  std::vector<Observation> observations;
  std::vector<ItemId> universe;
  {
    std::set<ItemId> seen;
    for (const DatasetRecord& record : records) {
      for (ItemId id : record.assortment) seen.insert(id);
      observations.push_back(record_to_observation(
          record,
          record.ranking.size() == 1 ? LossKind::MnlDiscrete : LossKind::MnlTopK));
    }
    universe.assign(seen.begin(), seen.end());
  }
  FitConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.max_iters = args.iters;
  cfg.grad_tol = args.tol;
  cfg.smoothing_gamma = args.gamma;
  cfg.seed = args.seed;

  ordered_json report;
  report["model"] = args.model;
  report["data"] = args.data;
  report["observations"] = observations.size();
  if (args.model == "mnl") {
    const MnlFitResult fit = fit_mnl_mle(observations, universe, cfg);
    ordered_json utilities = ordered_json::object();
    for (const auto& [id, v] : fit.utilities.values()) {
      utilities[std::to_string(id)] = v;
    }
    report["utilities"] = std::move(utilities);
    report["log_likelihood"] = fit.log_likelihood;
    report["iterations"] = fit.iterations;
    report["converged"] = fit.converged;
  } else {
    const RmjFitResult fit = fit_rmj_mle(observations, universe, cfg);
    report["central_ranking"] = fit.central_ranking;
    report["phi_hat"] = fit.phi_hat;
    report["log_likelihood"] = fit.log_likelihood;
    report["iterations"] = fit.iterations;
    report["converged"] = fit.converged;
  }
  ordered_json echo;
  echo["lr"] = args.lr;
  echo["iters"] = args.iters;
  echo["tol"] = args.tol;
  echo["gamma"] = args.gamma;
  echo["seed"] = args.seed;
  report["config"] = std::move(echo);

  write_text(args.out, report.dump(2) + "\n");
  if (args.json) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << "fit report written to " << args.out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string loss;
  std::string data;
  std::string ref_policy;
  double beta = 1.0;
  double gamma = 1.0;
  std::optional<double> phi;
  std::size_t iters = 100;
  double lr = 0.1;
  double tol = 1e-9;
  std::uint64_t seed = 0;
  std::string out_policy;
  std::string out_report;
  bool json = false;
};

int run_train(const TrainArgs& args) {
  const std::optional<LossKind> kind = parse_loss_kind(args.loss);
  if (!kind) {
    throw ValidationError(
        "unknown loss '" + args.loss +
        "'; valid names: dpo, mnl-discrete, mnl-topk, rmj-pairwise, "
        "rmj-discrete, rmj-topk");
  }
  const std::vector<DatasetRecord> records = read_dataset(args.data);
  const MarkovPolicy ref = load_policy(args.ref_policy);
  MarkovPolicy theta = ref;

  FitConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.max_iters = args.iters;
  cfg.grad_tol = args.tol;
  cfg.seed = args.seed;
  const SmoothingConfig smooth{args.gamma};
  const ImplicitRewardConfig reward{args.beta};

  const TrainReport report =
      train_rcpo(theta, ref, records, *kind, smooth, reward, cfg, args.phi);

  save_policy(theta, args.out_policy);

  ordered_json doc;
  doc["loss"] = args.loss;
  doc["data"] = args.data;
  doc["records"] = records.size();
  doc["loss_trajectory"] = report.loss_trajectory;
  doc["final_loss"] = report.loss_trajectory.back();
  doc["final_accuracy"] = report.final_accuracy;
  doc["iterations"] = report.iterations;
  doc["seed"] = report.seed;
  ordered_json echo;
  echo["beta"] = args.beta;
  echo["gamma"] = args.gamma;
  if (args.phi) echo["phi"] = *args.phi;
  echo["iters"] = args.iters;
  echo["lr"] = args.lr;
  echo["tol"] = args.tol;
  echo["ref_policy"] = args.ref_policy;
  echo["out_policy"] = args.out_policy;
  doc["config"] = std::move(echo);
  write_text(args.out_report, doc.dump(2) + "\n");

  if (args.json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << "trained policy written to " << args.out_policy
              << "; report written to " << args.out_report << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string loss;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  bool json = false;
};

struct GradcheckInstance {
  RewardSlate slate;
  Observation obs;
};

GradcheckInstance random_gradcheck_instance(LossKind kind, Rng& rng) {
  GradcheckInstance inst;
  const bool pairwise = kind == LossKind::Dpo || kind == LossKind::RmjPairwise;
  const std::size_t n = pairwise ? 2 : 2 + rng.uniform_index(5);
  std::vector<ItemId> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = static_cast<ItemId>(i);
    inst.slate.rewards[ids[i]] = rng.uniform(-2.0, 2.0);
  }
  const std::optional<double> phi = rng.uniform(0.1, 0.9);
  switch (kind) {
    case LossKind::Dpo:
    case LossKind::RmjPairwise:
      inst.obs = PairwiseObservation{"t", ids[0], ids[1], phi};
      break;
    case LossKind::MnlDiscrete:
    case LossKind::RmjDiscrete:
      inst.obs =
          ChoiceObservation{"t", Assortment(ids), ids[rng.uniform_index(n)], phi};
      break;
    default: {
      const std::size_t k = 1 + rng.uniform_index(n);
      std::vector<ItemId> perm = ids;
      for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
        std::swap(perm[i], perm[i + rng.uniform_index(perm.size() - i)]);
      }
      perm.resize(k);
      inst.obs = TopKObservation{"t", Assortment(ids), TopKRanking(perm), phi};
      break;
    }
  }
  return inst;
}

int run_gradcheck(const GradcheckArgs& args) {
  if (args.loss.rfind("hard-", 0) == 0) {
    throw ValidationError(
        "hard objectives carry zero gradients almost everywhere; gradcheck "
        "covers the smoothed losses only");
  }
  const std::optional<LossKind> kind = parse_loss_kind(args.loss);
  if (!kind) {
    throw ValidationError(
        "unknown loss '" + args.loss +
        "'; valid names: dpo, mnl-discrete, mnl-topk, rmj-pairwise, "
        "rmj-discrete, rmj-topk");
  }
  if (args.trials == 0) {
    throw ValidationError("trials must be positive");
  }

  constexpr double kBound = 1e-5;
  constexpr double kStep = 1e-5;
  const SmoothingConfig smooth;
  std::vector<double> per_trial(args.trials);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < args.trials; ++trial) {
    Rng rng = Rng::substream(args.seed, trial);
    GradcheckInstance inst = random_gradcheck_instance(*kind, rng);
    const LossEval eval = evaluate_loss(*kind, inst.slate, inst.obs, smooth);
    double trial_worst = 0.0;
    for (auto& [id, r] : inst.slate.rewards) {
      const double orig = r;
      r = orig + kStep;
      const double up = evaluate_loss(*kind, inst.slate, inst.obs, smooth).value;
      r = orig - kStep;
      const double down = evaluate_loss(*kind, inst.slate, inst.obs, smooth).value;
      r = orig;
      const double numeric = (up - down) / (2.0 * kStep);
      const double analytic = eval.reward_grad.at(id);
      trial_worst = std::max(
          trial_worst, std::abs(analytic - numeric) /
                           std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
    per_trial[trial] = trial_worst;
    worst = std::max(worst, trial_worst);
  }
  const bool pass = worst < kBound;

  if (args.json) {
    ordered_json doc;
    doc["loss"] = args.loss;
    doc["trials"] = args.trials;
    doc["bound"] = kBound;
    doc["worst_rel_error"] = worst;
    doc["pass"] = pass;
    doc["per_trial"] = per_trial;
    std::cout << doc.dump(2) << "\n";
  } else {
    std::printf("trial  max_rel_error\n");
    for (std::size_t trial = 0; trial < args.trials; ++trial) {
      std::printf("%5zu  %.3e\n", trial, per_trial[trial]);
    }
    std::printf("gradcheck %s: %s (worst %.3e, bound %.1e)\n", args.loss.c_str(),
                pass ? "PASS" : "FAIL", worst, kBound);
  }
  return pass ? kExitOk : 1;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

struct ProbeArgs {
  std::string model;
  std::string utilities;
  std::string central;
  double phi = 0.5;
  std::string manifest;
  std::string assortment;
  std::string ranking;
  bool json = false;
};

int run_probe(ProbeArgs args) {
  if (!args.manifest.empty()) {
    std::ifstream in(args.manifest, std::ios::binary);
    if (!in) throw DataError("cannot open " + args.manifest);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("manifest parse failure: ") + e.what());
    }
    try {
      args.model = doc.at("model").get<std::string>();
      if (args.model == "mnl") {
        std::string csv;
        for (double v : doc.at("utilities").get<std::vector<double>>()) {
          if (!csv.empty()) csv += ',';
          csv += std::to_string(v);
        }
        args.utilities = csv;
      } else {
        std::string csv;
        for (ItemId v : doc.at("central_ranking").get<std::vector<ItemId>>()) {
          if (!csv.empty()) csv += ',';
          csv += std::to_string(v);
        }
        args.central = csv;
        args.phi = doc.at("phi").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("manifest schema failure: ") + e.what());
    }
  }
  if (args.model != "mnl" && args.model != "rmj") {
    throw ValidationError("unknown model '" + args.model + "' (use mnl or rmj)");
  }
  if (args.assortment.empty()) {
    throw ValidationError("--assortment is required");
  }
  const Assortment s(parse_item_csv(args.assortment));
  std::optional<TopKRanking> mu;
  if (!args.ranking.empty()) {
    mu.emplace(parse_item_csv(args.ranking));
    mu->validate_against(s);
  }

  ordered_json doc;
  doc["model"] = args.model;
  ordered_json rows = ordered_json::array();

  if (args.model == "rmj") {
    if (args.central.empty()) {
      throw ValidationError("--central (or --manifest) is required for rmj");
    }
    const MallowsRmjModel model(parse_item_csv(args.central), args.phi);
    double normalizer = 0.0;
    double term = 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      normalizer += term;
      term *= args.phi;
    }
    doc["phi"] = args.phi;
    doc["normalizer"] = normalizer;
    if (!args.json) std::printf("item  distance  probability\n");
    for (ItemId id : s) {
      const std::size_t d = rmj_rank_distance(model, s, id);
      const double p = rmj_choice_prob(model, s, id);
      if (args.json) {
        ordered_json row;
        row["item"] = id;
        row["distance"] = d;
        row["probability"] = p;
        rows.push_back(std::move(row));
      } else {
        std::printf("%4u  %8zu  %.9f\n", id, d, p);
      }
    }
    if (mu) {
      const std::size_t d = rmj_topk_distance(model, s, *mu);
      const double p = rmj_topk_prob(model, s, *mu);
      doc["ranking_distance"] = d;
      doc["ranking_probability"] = p;
      if (!args.json) {
        std::printf("ranking distance %zu\nranking probability %.9f\n", d, p);
      }
    }
    if (!args.json) std::printf("normalizer %.9f\n", normalizer);
  } else {
    if (args.utilities.empty()) {
      throw ValidationError("--utilities (or --manifest) is required for mnl");
    }
    const std::vector<double> values = parse_double_csv(args.utilities);
    UtilityVector nu;
    for (std::size_t i = 0; i < values.size(); ++i) {
      nu.set(static_cast<ItemId>(i), values[i]);
    }
    double normalizer = 0.0;
    for (ItemId id : s) normalizer += std::exp(nu.at(id));
    doc["normalizer"] = normalizer;
    if (!args.json) std::printf("item  utility  probability\n");
    for (ItemId id : s) {
      const double p = mnl_choice_prob(nu, s, id);
      if (args.json) {
        ordered_json row;
        row["item"] = id;
        row["utility"] = nu.at(id);
        row["probability"] = p;
        rows.push_back(std::move(row));
      } else {
        std::printf("%4u  %7.3f  %.9f\n", id, nu.at(id), p);
      }
    }
    if (mu) {
      const double p = mnl_topk_prob(nu, s, *mu);
      doc["ranking_probability"] = p;
      if (!args.json) std::printf("ranking probability %.9f\n", p);
    }
    if (!args.json) std::printf("normalizer %.9f\n", normalizer);
  }

  if (args.json) {
    doc["items"] = std::move(rows);
    std::cout << doc.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Ranked-choice preference optimization toolkit: synthetic data, "
      "model fitting, policy training, gradient checks and probability "
      "probes. RCPO_THREADS caps the worker count."};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen_cmd->add_option("--model", gen.model, "Choice model: mnl or rmj")
      ->required();
  gen_cmd->add_option("--items", gen.items, "Universe size")->required();
  gen_cmd->add_option("--assortment-size", gen.assortment_size,
                      "Items presented per record")
      ->required();
  gen_cmd->add_option("--k", gen.k, "Ranking length per record")->required();
  gen_cmd->add_option("--count", gen.count, "Number of records")->required();
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->required();
  gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();
  gen_cmd->add_option("--manifest", gen.manifest,
                      "Manifest path (default <out>.manifest.json)");
  gen_cmd->add_option("--phi", gen.phi, "Ground-truth dispersion (rmj)");
  gen_cmd->add_option("--utilities", gen.utilities,
                      "Ground-truth utilities as CSV (mnl)");
  gen_cmd->add_option("--central", gen.central,
                      "Ground-truth central ranking as CSV (rmj)");
  gen_cmd->add_flag("--json", gen.json, "Print a JSON summary");

  FitArgs fit;
  CLI::App* fit_cmd =
      app.add_subcommand("fit", "Fit a choice model from a dataset");
  fit_cmd->add_option("--model", fit.model, "Choice model: mnl or rmj")
      ->required();
  fit_cmd->add_option("--data", fit.data, "Input JSONL path")->required();
  fit_cmd->add_option("--out", fit.out, "Report path")->required();
  fit_cmd->add_option("--lr", fit.lr, "Learning rate");
  fit_cmd->add_option("--iters", fit.iters, "Iteration cap");
  fit_cmd->add_option("--tol", fit.tol, "Mean-gradient tolerance");
  fit_cmd->add_option("--gamma", fit.gamma, "Surrogate sigmoid slope (rmj)");
  fit_cmd->add_option("--seed", fit.seed, "Seed echoed into the report");
  fit_cmd->add_flag("--json", fit.json, "Print the report to stdout too");

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a policy against a frozen reference");
  train_cmd->add_option("--loss", train.loss, "Objective name")->required();
  train_cmd->add_option("--data", train.data, "Training JSONL path")->required();
  train_cmd->add_option("--ref-policy", train.ref_policy, "Reference policy JSON")
      ->required();
  train_cmd->add_option("--beta", train.beta, "Implicit reward scale");
  train_cmd->add_option("--gamma", train.gamma, "Sigmoid smoothing slope");
  double phi_flag = -1.0;
  CLI::Option* phi_opt = train_cmd->add_option(
      "--phi", phi_flag, "Dispersion fallback for Mallows losses");
  train_cmd->add_option("--iters", train.iters, "Full-batch steps")->required();
  train_cmd->add_option("--lr", train.lr, "Learning rate")->required();
  train_cmd->add_option("--tol", train.tol, "Gradient stop tolerance");
  train_cmd->add_option("--seed", train.seed, "Seed echoed into the report")
      ->required();
  train_cmd->add_option("--out-policy", train.out_policy, "Trained policy path")
      ->required();
  train_cmd->add_option("--out-report", train.out_report, "Report path")
      ->required();
  train_cmd->add_flag("--json", train.json, "Print the report to stdout too");

  GradcheckArgs gradcheck;
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Check analytic reward gradients against finite differences");
  gradcheck_cmd->add_option("--loss", gradcheck.loss, "Objective name")
      ->required();
  gradcheck_cmd->add_option("--trials", gradcheck.trials, "Random instances")
      ->required();
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "Master seed")->required();
  gradcheck_cmd->add_flag("--json", gradcheck.json, "Emit JSON instead of a table");

  ProbeArgs probe;
  CLI::App* probe_cmd =
      app.add_subcommand("probe", "Print choice probabilities for a model");
  probe_cmd->add_option("--model", probe.model, "Choice model: mnl or rmj");
  probe_cmd->add_option("--utilities", probe.utilities, "Utilities as CSV (mnl)");
  probe_cmd->add_option("--central", probe.central, "Central ranking CSV (rmj)");
  probe_cmd->add_option("--phi", probe.phi, "Dispersion (rmj)");
  probe_cmd->add_option("--manifest", probe.manifest,
                        "Read model parameters from a gen manifest");
  probe_cmd->add_option("--assortment", probe.assortment, "Assortment CSV");
  probe_cmd->add_option("--ranking", probe.ranking, "Optional top-k list CSV");
  probe_cmd->add_flag("--json", probe.json, "Emit JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*fit_cmd) return run_fit(fit);
    if (*train_cmd) {
      if (phi_opt->count() > 0) train.phi = phi_flag;
      return run_train(train);
    }
    if (*gradcheck_cmd) return run_gradcheck(gradcheck);
    if (*probe_cmd) return run_probe(probe);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

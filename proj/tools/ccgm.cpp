#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "ccgm/baselines/baseline.hpp"
#include "ccgm/common/format.hpp"
#include "ccgm/common/hash.hpp"
#include "ccgm/engine/causal.hpp"
#include "ccgm/engine/export.hpp"
#include "ccgm/harness/suite.hpp"
#include "ccgm/model/checkpoint.hpp"
#include "ccgm/service/service.hpp"

namespace {

using namespace ccgm;
using nlohmann::json;

struct CliError : std::runtime_error {
  CliError(std::string c, const std::string& m) : std::runtime_error(m), code(std::move(c)) {}
  std::string code;
};

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError("io", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes `name` under `dir` and records its hash in dir/manifest.json.
void emit(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  {
    std::ofstream out(path, std::ios::binary);
    if (!(out << text)) throw CliError("io", "cannot write " + path.string());
  }
  const auto mpath = dir / "manifest.json";
  json manifest{{"artifacts", json::object()}};
  if (std::filesystem::exists(mpath)) {
    json old = json::parse(read_text(mpath), nullptr, false);
    if (!old.is_discarded() && old.contains("artifacts")) manifest = old;
  }
  manifest["artifacts"][name] = sha256_file(path);
  std::ofstream(mpath) << manifest.dump(2) << "\n";
}

// Prints to stdout, or writes under --out when given.
void output(const std::optional<std::filesystem::path>& out, const std::string& name,
            const std::string& text) {
  if (out) emit(*out, name, text);
  else std::cout << text;
}

data::ConceptDataset load_dataset(const std::filesystem::path& p) {
  try {
    return data::read_csv(p);
  } catch (const std::exception& e) {
    throw CliError("dataset", e.what());
  }
}

model::CgmModel load_model(const std::filesystem::path& p) {
  try {
    const auto kind = model::checkpoint_kind(p);
    if (kind != "cgm") throw CliError("checkpoint", "expected a cgm checkpoint, got " + kind);
    return model::load_cgm(p);
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    throw CliError("checkpoint", e.what());
  }
}

engine::InterventionSpec parse_spec(const std::string& text, const std::vector<std::string>& names) {
  if (text.empty()) return {};
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw CliError("spec", "spec is not valid JSON");
  try {
    return engine::InterventionSpec::from_json(doc, names);
  } catch (const std::exception& e) {
    throw CliError("spec", e.what());
  }
}

std::string spec_text(const std::string& inline_spec, const std::string& file) {
  if (!file.empty()) return read_text(file);
  return inline_spec;
}

diff::Matrix select_row(const data::ConceptDataset& ds, std::size_t row) {
  if (row >= ds.rows()) {
    throw CliError("row", "row " + std::to_string(row) + " out of range (" + std::to_string(ds.rows()) + " rows)");
  }
  const std::size_t idx[] = {row};
  return diff::take_rows(ds.features, idx);
}

data::ConceptDataset generate(const std::string& name, std::size_t n, std::uint64_t seed, double ratio,
                              double noise) {
  if (name == "checkmark") return data::gen_checkmark(n, seed);
  if (name == "dsprites_lite") return data::gen_scm_dataset(data::dsprites_lite_scm(), n, seed, noise);
  if (name == "incompleteness") return data::gen_incompleteness(n, seed, ratio);
  throw CliError("dataset", "unknown generator " + name + " (checkmark, dsprites_lite, incompleteness)");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw CliError("seeds", "bad seed '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal concept graph models"};
  app.require_subcommand(1);

  std::optional<std::filesystem::path> out;
  std::string dataset_path, checkpoint_path, spec_inline, spec_file, format = "structured";
  std::size_t row = 0;

  // gen
  std::string gen_name = "checkmark";
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  double ratio = 0.9, noise = 0.0, perturb = 0.0;
  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  gen->add_option("--dataset", gen_name, "checkmark | dsprites_lite | incompleteness");
  gen->add_option("--samples", samples);
  gen->add_option("--seed", seed);
  gen->add_option("--ratio", ratio, "Hidden-factor ratio for incompleteness");
  gen->add_option("--noise", noise, "Label noise for dsprites_lite");
  gen->add_option("--perturb", perturb, "Gaussian feature perturbation strength");
  gen->add_option("--out", out, "Output directory")->required();

  // train
  std::string model_kind = "cgm", graph_mode = "learned", config_path;
  std::optional<double> lambda3, lr;
  std::optional<std::size_t> epochs;
  auto* train = app.add_subcommand("train", "Train a model on a dataset CSV (split 0.8/0.1/0.1)");
  train->add_option("--dataset", dataset_path)->required();
  train->add_option("--model", model_kind, "cgm | blackbox | cbm | cem");
  train->add_option("--graph-mode", graph_mode, "learned | fixed");
  train->add_option("--lambda3", lambda3);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--seed", seed);
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "Accuracy on a dataset, or node states of one row");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--dataset", dataset_path)->required();
  auto* eval_row = eval->add_option("--row", row);
  eval->add_option("--out", out);

  auto* graph = app.add_subcommand("graph", "Export the learnt graph");
  graph->add_option("--checkpoint", checkpoint_path)->required();
  graph->add_option("--dataset", dataset_path, "Reference data for PNS annotations");
  graph->add_option("--format", format)->check(CLI::IsMember({"dot", "structured"}));
  graph->add_option("--out", out);

  auto* intervene = app.add_subcommand("intervene", "Apply an intervention spec to one row");
  auto* counterfactual = app.add_subcommand("counterfactual", "Counterfactual report for do actions");
  for (auto* sub : {intervene, counterfactual}) {
    sub->add_option("--checkpoint", checkpoint_path)->required();
    sub->add_option("--dataset", dataset_path)->required();
    sub->add_option("--row", row);
    sub->add_option("--spec", spec_inline, "JSON action list");
    sub->add_option("--spec-file", spec_file);
    sub->add_option("--out", out);
  }

  auto* cace = app.add_subcommand("cace", "CaCE table over every ordered node pair");
  auto* pns = app.add_subcommand("pns", "PNS bounds for every ancestor pair");
  auto* rules = app.add_subcommand("rules", "Sum-of-products rules per node");
  for (auto* sub : {cace, pns, rules}) {
    sub->add_option("--checkpoint", checkpoint_path)->required();
    sub->add_option("--dataset", dataset_path)->required();
    sub->add_option("--out", out);
  }
  cace->add_option("--spec", spec_inline, "Base spec applied in both arms");

  double strength = 2.0;
  std::size_t max_steps = 0;
  auto* curve = app.add_subcommand("curve", "Intervention curve on perturbed inputs");
  curve->add_option("--checkpoint", checkpoint_path)->required();
  curve->add_option("--dataset", dataset_path)->required();
  curve->add_option("--perturb", strength);
  curve->add_option("--seed", seed);
  curve->add_option("--max", max_steps, "Maximum interventions (default: all)");
  curve->add_option("--out", out);

  std::string seeds_text = "1,2,3,4,5";
  bool time = false;
  std::size_t suite_epochs = 500;
  auto* suite = app.add_subcommand("suite", "Run the reproduction suite");
  suite->add_option("--seeds", seeds_text);
  suite->add_option("--samples", samples);
  suite->add_option("--epochs", suite_epochs);
  suite->add_flag("--time", time, "Record wall-clock per phase");
  suite->add_option("--out", out)->required();

  std::string addr = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "HTTP service over a checkpoint");
  serve->add_option("--checkpoint", checkpoint_path)->required();
  serve->add_option("--dataset", dataset_path, "Reference data for PNS");
  serve->add_option("--addr", addr, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  try {
    if (*gen) {
      auto ds = generate(gen_name, samples, seed, ratio, noise);
      if (perturb > 0.0) ds = data::perturb_features(ds, perturb, seed);
      std::filesystem::create_directories(*out);
      data::write_csv(ds, *out / "data.csv");
      for (const auto& p : {*out / "data.csv", data::metadata_path(*out / "data.csv")}) {
        emit(*out, p.filename().string(), read_text(p));
      }
    } else if (*train) {
      const auto ds = load_dataset(dataset_path);
      const auto parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, seed);
      model::CgmConfig cfg;
      if (!config_path.empty()) cfg = model::CgmConfig::from_json(json::parse(read_text(config_path)));
      cfg = model::config_for(ds, cfg);
      cfg.seed = seed;
      if (lambda3) cfg.lambda3 = *lambda3;
      if (epochs) cfg.epochs = *epochs;
      if (lr) cfg.lr = *lr;
      if (graph_mode == "fixed") {
        if (!ds.ground_truth_graph) throw CliError("graph", "fixed graph mode needs a dataset with a known graph");
        cfg.graph_mode = model::GraphMode::kFixed;
        cfg.fixed_edges.clear();
        for (const auto& e : *ds.ground_truth_graph) cfg.fixed_edges.push_back({e.parent, e.child, 1.0});
      } else if (graph_mode != "learned") {
        throw CliError("graph_mode", "unknown graph mode " + graph_mode);
      }
      cfg.validate();
      json metrics;
      std::string text;
      if (model_kind == "cgm") {
        const auto r = model::train_cgm(parts[0], parts[1], cfg);
        metrics = {{"best_epoch", r.best_epoch},
                   {"val_accuracy", r.best_val_accuracy},
                   {"test_accuracy", model::unfolded_accuracy(r.model, parts[2])}};
        text = model::checkpoint_to_json(model::to_checkpoint(r.model, metrics)).dump(2);
      } else {
        const auto kind = baselines::parse_kind(model_kind);
        const auto r = baselines::train_baseline(kind, parts[0], parts[1], cfg);
        metrics = {{"best_epoch", r.best_epoch},
                   {"test_accuracy", baselines::baseline_accuracy(r.model, parts[2])}};
        text = model::checkpoint_to_json(baselines::to_checkpoint(r.model, metrics)).dump(2);
      }
      emit(*out, "checkpoint.json", text + "\n");
      std::cout << metrics.dump() << "\n";
    } else if (*eval) {
      const auto ds = load_dataset(dataset_path);
      std::string kind;
      try {
        kind = model::checkpoint_kind(checkpoint_path);
      } catch (const std::exception& e) {
        throw CliError("checkpoint", e.what());
      }
      json result;
      if (kind == "cgm") {
        const auto m = load_model(checkpoint_path);
        if (*eval_row) {
          result = service::node_states_json(m.concept_names(),
                                             engine::unfold_predict(m, select_row(ds, row)).sample(0));
        } else {
          result = {{"accuracy", model::unfolded_accuracy(m, ds)}};
        }
      } else {
        const auto m = baselines::baseline_from_checkpoint(model::read_checkpoint(checkpoint_path));
        result = {{"accuracy", baselines::baseline_accuracy(m, ds)}};
      }
      output(out, "eval.json", result.dump() + "\n");
    } else if (*graph) {
      const auto m = load_model(checkpoint_path);
      std::optional<data::ConceptDataset> ds;
      if (!dataset_path.empty()) ds = load_dataset(dataset_path);
      const diff::Matrix* x = ds ? &ds->features : nullptr;
      if (format == "dot") output(out, "graph.dot", engine::annotated_dot(m, x));
      else output(out, "graph.json", engine::annotated_structured(m, x).dump(2) + "\n");
    } else if (*intervene || *counterfactual) {
      const auto m = load_model(checkpoint_path);
      const auto ds = load_dataset(dataset_path);
      const auto x = select_row(ds, row);
      const auto spec = parse_spec(spec_text(spec_inline, spec_file), m.concept_names());
      if (*intervene) {
        const auto& names = m.concept_names();
        const auto before = engine::unfold_predict(m, x).sample(0);
        const auto after = engine::unfold_predict(m, x, spec).sample(0);
        json changed = json::array();
        for (std::size_t i = 0; i < names.size(); ++i) {
          if (before[i].probability != after[i].probability || before[i].provenance != after[i].provenance)
            changed.push_back(names[i]);
        }
        json doc{{"spec", spec.to_json(names)},
                 {"before", service::node_states_json(names, before)["nodes"]},
                 {"after", service::node_states_json(names, after)["nodes"]},
                 {"changed", changed}};
        output(out, "intervene.json", doc.dump() + "\n");
      } else {
        if (!spec.only_do()) throw CliError("spec", "counterfactual specs may only contain do actions");
        output(out, "counterfactual.json", engine::counterfactual_query(m, x, spec).to_json().dump() + "\n");
      }
    } else if (*cace) {
      const auto m = load_model(checkpoint_path);
      const auto ds = load_dataset(dataset_path);
      const auto base = parse_spec(spec_inline, m.concept_names());
      std::vector<std::vector<double>> table;
      for (std::size_t r = 0; r < m.k(); ++r) table.push_back(engine::cace_row(m, ds.features, r, base));
      output(out, "cace.csv", engine::cace_csv(m.concept_names(), table));
    } else if (*pns) {
      const auto m = load_model(checkpoint_path);
      const auto ds = load_dataset(dataset_path);
      output(out, "pns.csv", engine::pns_csv(m, engine::pns_table(m, ds.features)));
    } else if (*rules) {
      const auto m = load_model(checkpoint_path);
      const auto ds = load_dataset(dataset_path);
      std::string text = "node,parents,formula\n";
      for (const auto& r : engine::extract_logic_rules(m, ds)) {
        std::string parents;
        for (const auto& p : r.parents) parents += (parents.empty() ? "" : " ") + p;
        text += r.node + "," + parents + "," + (r.skipped ? "skipped: " + r.notice : r.formula) + "\n";
      }
      output(out, "rules.csv", text);
    } else if (*curve) {
      const auto ds = data::perturb_features(load_dataset(dataset_path), strength, seed);
      std::string kind;
      try {
        kind = model::checkpoint_kind(checkpoint_path);
      } catch (const std::exception& e) {
        throw CliError("checkpoint", e.what());
      }
      engine::CurveSeries series;
      if (kind == "cgm") {
        series = engine::intervention_curve(load_model(checkpoint_path), ds, max_steps ? max_steps : ds.concept_count());
      } else {
        const auto m = baselines::baseline_from_checkpoint(model::read_checkpoint(checkpoint_path));
        series = engine::intervention_curve(m, ds, max_steps ? max_steps : ds.concept_count());
      }
      std::string text = "model,step,intervened,delta_accuracy,delta_concept_accuracy\n";
      for (const auto& s : series.steps) {
        std::string nodes;
        for (const auto& n : s.intervened) nodes += (nodes.empty() ? "" : " ") + n;
        text += series.model + "," + std::to_string(s.step) + "," + nodes + "," +
                format_double(s.delta_accuracy) + "," + format_double(s.delta_concept_accuracy) + "\n";
      }
      output(out, "curve.csv", text);
    } else if (*suite) {
      harness::ExperimentPlan plan;
      plan.seeds = parse_seeds(seeds_text);
      plan.samples = samples;
      plan.epochs = suite_epochs;
      plan.out_dir = *out;
      plan.record_time = time;
      auto result = harness::run_experiment_suite(plan);
      harness::write_suite_outputs(plan, result);
      std::size_t failed = 0;
      for (const auto& r : result.runs) failed += r.failures.empty() ? 0 : 1;
      std::cout << json{{"runs", result.runs.size()}, {"failed_runs", failed}, {"out", out->string()}}.dump() << "\n";
      if (failed > 0) throw CliError("suite", std::to_string(failed) + " run(s) failed; see failures.csv");
    } else if (*serve) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw CliError("addr", "expected host:port, got " + addr);
      int port = 0;
      try {
        port = std::stoi(addr.substr(colon + 1));
      } catch (const std::exception&) {
        throw CliError("addr", "bad port in " + addr);
      }
      service::Session session;
      try {
        session.load_checkpoint(checkpoint_path, dataset_path.empty()
                                                     ? std::nullopt
                                                     : std::optional<std::filesystem::path>(dataset_path));
      } catch (const std::exception& e) {
        throw CliError("checkpoint", e.what());
      }
      std::cerr << "listening on " << addr << "\n";
      if (!service::serve(session, addr.substr(0, colon), port)) throw CliError("addr", "cannot bind " + addr);
    }
  } catch (const CliError& e) {
    std::cerr << json{{"error", {{"code", e.code}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "failed"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}

#include "ccgm/harness/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ccgm/baselines/baseline.hpp"
#include "ccgm/common/hash.hpp"
#include "ccgm/datagen/dataset.hpp"

namespace ccgm::harness {

namespace {

using Clock = std::chrono::steady_clock;

class PhaseTimer {
 public:
  PhaseTimer(std::map<std::string, double>& sink, std::string name)
      : sink_(sink), name_(std::move(name)), start_(Clock::now()) {}
  ~PhaseTimer() {
    sink_[name_] += std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  std::string name_;
  Clock::time_point start_;
};

std::vector<model::FixedGraphEdge> fixed_edges(const data::ConceptDataset& ds) {
  std::vector<model::FixedGraphEdge> out;
  for (const auto& e : *ds.ground_truth_graph) out.push_back({e.parent, e.child, 1.0});
  return out;
}

std::vector<std::string> edge_names(const graph::Dag& dag) {
  std::vector<std::string> out;
  for (const auto& e : dag.edges()) out.push_back(dag.nodes()[e.parent] + "->" + dag.nodes()[e.child]);
  std::sort(out.begin(), out.end());
  return out;
}

struct Residual {
  double mean_percent = 0.0;
  bool exact_zero = true;
  std::size_t pairs = 0;
};

// Residual CaCE over every (ancestor, sink) pair of the learned graph. The
// task is usually the only sink, but a learned graph can make it a root.
Residual cgm_task_residual(const model::CgmModel& m, const diff::Matrix& x) {
  const graph::Dag dag = m.dag();
  Residual out;
  double sum = 0.0;
  for (std::size_t leaf = 0; leaf < m.k(); ++leaf) {
    if (!dag.children(leaf).empty()) continue;
    for (std::size_t r : graph::reachability(dag, leaf, graph::Direction::kAncestors)) {
      const auto res = engine::residual_cace(m, x, r, leaf);
      if (res.degenerate) continue;
      sum += res.percent;
      out.exact_zero = out.exact_zero && res.after == 0.0;
      ++out.pairs;
    }
  }
  out.mean_percent = out.pairs == 0 ? 0.0 : sum / static_cast<double>(out.pairs);
  if (out.pairs == 0) out.exact_zero = false;
  return out;
}

// Mean residual over concepts that have at least one non-task child in the
// ground-truth graph.
double cbm_task_residual(const baselines::BaselineModel& cbm, const data::ConceptDataset& test) {
  const std::size_t task = cbm.config().k - 1;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < task; ++r) {
    bool has_child = false;
    for (const auto& e : *test.ground_truth_graph) has_child |= e.parent == r && e.child != task;
    if (!has_child) continue;
    const auto res = engine::cbm_residual_cace(cbm, test.features, r, *test.ground_truth_graph);
    if (res.degenerate) continue;
    sum += res.percent;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double average_task_cace(const model::CgmModel& m, const diff::Matrix& x) {
  const std::size_t task = m.k() - 1;
  double sum = 0.0;
  for (std::size_t r = 0; r < task; ++r) sum += engine::cace(m, x, r, task);
  return 100.0 * sum / static_cast<double>(task);
}

double column_accuracy(const diff::Matrix& probs, const diff::Matrix& labels, std::size_t col) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    hits += engine::hard_state(probs(r, col)) == static_cast<int>(labels(r, col));
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

void record_complement_pns(SeedRun& run, const std::string& tag, const model::CgmModel& m,
                           const data::ConceptDataset& test) {
  const std::size_t b = test.index_of("b");
  const std::size_t c = test.index_of("c");
  run.complement_pns[tag] =
      engine::pns_bounds(m, test.features, b, c, engine::PnsDirection::kCauseZeroEffectOne);
  run.complement_accuracy[tag] =
      column_accuracy(engine::unfold_predict(m, test.features).probs, test.labels, c);
}

void run_seed(const ExperimentPlan& plan, SeedRun& run, SuiteResult& result) {
  const std::uint64_t seed = run.seed;
  const auto ds = data::gen_checkmark(plan.samples, seed);
  const auto parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, seed);
  const auto& train = parts[0];
  const auto& val = parts[1];
  const auto& test = parts[2];
  model::CgmConfig cfg = model::config_for(ds, {});
  cfg.seed = seed;
  cfg.epochs = plan.epochs;

  const auto t1_start = Clock::now();
  model::TrainResult cgm;
  {
    PhaseTimer t(result.phase_seconds, "table1.cgm");
    cgm = model::train_cgm(train, val, cfg);
  }
  model::TrainResult cgm_fixed;
  {
    PhaseTimer t(result.phase_seconds, "table1.cgm_fixed");
    model::CgmConfig fixed = cfg;
    fixed.graph_mode = model::GraphMode::kFixed;
    fixed.fixed_edges = fixed_edges(ds);
    cgm_fixed = model::train_cgm(train, val, fixed);
  }
  std::map<std::string, baselines::BaselineModel> bl;
  for (auto kind : {baselines::BaselineKind::kBlackbox, baselines::BaselineKind::kCbm,
                    baselines::BaselineKind::kCem}) {
    PhaseTimer t(result.phase_seconds, "table1." + baselines::to_string(kind));
    bl.emplace(baselines::to_string(kind), baselines::train_baseline(kind, train, val, cfg).model);
  }
  result.table1_seconds += std::chrono::duration<double>(Clock::now() - t1_start).count();

  run.accuracy["cgm"] = model::unfolded_accuracy(cgm.model, test);
  run.accuracy["cgm_fixed"] = model::unfolded_accuracy(cgm_fixed.model, test);
  for (const auto& [name, m] : bl) run.accuracy[name] = baselines::baseline_accuracy(m, test);

  {
    PhaseTimer t(result.phase_seconds, "analysis.checkmark");
    run.learned_edges = edge_names(cgm.model.dag());
    run.graph_recovered = checkmark_graph_matches(run.learned_edges);
    run.rules = engine::extract_logic_rules(cgm.model, train);
    const Residual res = cgm_task_residual(cgm.model, test.features);
    run.cgm_residual = res.mean_percent;
    run.cgm_residual_exact_zero = res.exact_zero;
    run.cgm_residual_pairs = res.pairs;
    run.cbm_residual = cbm_task_residual(bl.at("cbm"), test);
    const auto perturbed = data::perturb_features(test, plan.perturb_strength, seed);
    run.curves.push_back(engine::intervention_curve(cgm.model, perturbed, cgm.model.k()));
    run.curves.push_back(engine::intervention_curve(bl.at("cbm"), perturbed, cfg.k - 1));
    run.curves.push_back(engine::intervention_curve(bl.at("cem"), perturbed, cfg.k - 1));
    record_complement_pns(run, "cgm", cgm.model, test);
    record_complement_pns(run, "cgm_fixed", cgm_fixed.model, test);
  }

  {
    PhaseTimer t(result.phase_seconds, "ablation.lambda3");
    for (double l3 : plan.lambda3_grid) {
      if (l3 == cfg.lambda3) {
        run.average_cace[l3] = average_task_cace(cgm.model, test.features);
        continue;
      }
      model::CgmConfig c = cfg;
      c.lambda3 = l3;
      const auto m = model::train_cgm(train, val, c);
      run.average_cace[l3] = average_task_cace(m.model, test.features);
    }
  }

  {
    PhaseTimer t(result.phase_seconds, "dsprites_lite");
    const auto dsl = data::gen_scm_dataset(data::dsprites_lite_scm(), plan.samples, seed, 0.0);
    const auto dparts = data::split_dataset(dsl, {0.8, 0.1, 0.1}, seed);
    model::CgmConfig dcfg = model::config_for(dsl, cfg);
    const auto dm = model::train_cgm(dparts[0], dparts[1], dcfg);
    const Residual res = cgm_task_residual(dm.model, dparts[2].features);
    run.dsprites_cgm_residual = res.mean_percent;
    run.dsprites_cgm_residual_exact_zero = res.exact_zero;
    run.dsprites_cgm_residual_pairs = res.pairs;
    const auto dcbm =
        baselines::train_baseline(baselines::BaselineKind::kCbm, dparts[0], dparts[1], dcfg).model;
    run.dsprites_cbm_residual = cbm_task_residual(dcbm, dparts[2]);
  }

  {
    PhaseTimer t(result.phase_seconds, "incompleteness");
    const auto inc = data::gen_incompleteness(plan.samples, seed, plan.incompleteness_ratio);
    const auto iparts = data::split_dataset(inc, {0.8, 0.1, 0.1}, seed);
    model::CgmConfig icfg = model::config_for(inc, cfg);
    run.incompleteness_cgm =
        model::unfolded_accuracy(model::train_cgm(iparts[0], iparts[1], icfg).model, iparts[2]);
    run.incompleteness_cbm = baselines::baseline_accuracy(
        baselines::train_baseline(baselines::BaselineKind::kCbm, iparts[0], iparts[1], icfg).model,
        iparts[2]);
  }
}

void write_file(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
  written.push_back(path);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw std::invalid_argument("plan: seeds must be non-empty");
  if (samples < 10) throw std::invalid_argument("plan: need at least 10 samples");
  if (lambda3_grid.empty()) throw std::invalid_argument("plan: lambda3 grid is empty");
  if (!(incompleteness_ratio >= 0.0 && incompleteness_ratio < 1.0)) {
    throw std::invalid_argument("plan: incompleteness ratio must lie in [0,1)");
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool checkmark_graph_matches(const std::vector<std::string>& edges) {
  const std::set<std::string> got(edges.begin(), edges.end());
  const std::set<std::string> via_c{"b->c", "a->d", "c->d"};
  const std::set<std::string> via_b{"b->c", "a->d", "b->d"};
  return got == via_c || got == via_b;
}

bool evaluate_formula(const std::string& formula, const std::map<std::string, bool>& values) {
  if (formula == "True") return true;
  if (formula == "False") return false;
  std::size_t start = 0;
  while (start <= formula.size()) {
    std::size_t bar = formula.find(" | ", start);
    const std::string term =
        formula.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    bool all = true;
    std::size_t ls = 0;
    while (ls <= term.size()) {
      std::size_t amp = term.find(" & ", ls);
      std::string lit = term.substr(ls, amp == std::string::npos ? std::string::npos : amp - ls);
      bool negate = !lit.empty() && lit[0] == '~';
      if (negate) lit = lit.substr(1);
      auto it = values.find(lit);
      if (it == values.end()) throw std::invalid_argument("formula references unknown variable " + lit);
      all = all && (it->second != negate);
      if (amp == std::string::npos) break;
      ls = amp + 3;
    }
    if (all) return true;
    if (bar == std::string::npos) break;
    start = bar + 3;
  }
  return false;
}

std::size_t best_seed_index(const SuiteResult& result) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.runs.size(); ++i) {
    if (result.runs[i].accuracy.at("cgm") > result.runs[best].accuracy.at("cgm")) best = i;
  }
  return best;
}

SuiteResult run_experiment_suite(const ExperimentPlan& plan) {
  plan.validate();
  SuiteResult result;
  for (std::uint64_t seed : plan.seeds) {
    SeedRun run;
    run.seed = seed;
    try {
      run_seed(plan, run, result);
    } catch (const std::exception& e) {
      run.failures.push_back(e.what());
    }
    result.runs.push_back(std::move(run));
  }
  return result;
}

std::vector<std::filesystem::path> write_suite_outputs(const ExperimentPlan& plan,
                                                       SuiteResult& result) {
  if (!plan.out_dir) throw std::invalid_argument("write_suite_outputs: no output directory");
  const auto dir = *plan.out_dir;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  const std::vector<std::string> kinds{"blackbox", "cbm", "cem", "cgm", "cgm_fixed"};
  {
    std::string per_seed = "seed,model,accuracy\n";
    std::string summary = "model,mean,std\n";
    for (const auto& kind : kinds) {
      std::vector<double> values;
      for (const auto& run : result.runs) {
        auto it = run.accuracy.find(kind);
        if (it == run.accuracy.end()) continue;
        per_seed += std::to_string(run.seed) + "," + kind + "," + format_double(it->second) + "\n";
        values.push_back(100.0 * it->second);
      }
      summary += kind + "," + format_double(mean_of(values)) + "," + format_double(std_of(values)) + "\n";
    }
    write_file(dir / "table1_accuracy.csv", per_seed, written);
    write_file(dir / "table1_summary.csv", summary, written);
  }
  {
    std::string text = "seed,edges,recovered\n";
    for (const auto& run : result.runs) {
      text += std::to_string(run.seed) + "," + csv_field(join(run.learned_edges, " ")) + "," +
              (run.graph_recovered ? "1" : "0") + "\n";
    }
    write_file(dir / "graph_recovery.csv", text, written);
  }
  {
    std::string text = "seed,node,parents,formula\n";
    for (const auto& run : result.runs) {
      for (const auto& r : run.rules) {
        text += std::to_string(run.seed) + "," + csv_field(r.node) + "," +
                csv_field(join(r.parents, " ")) + "," + csv_field(r.formula) + "\n";
      }
    }
    write_file(dir / "rules.csv", text, written);
  }
  {
    std::string text = "seed,dataset,model,residual_percent\n";
    for (const auto& run : result.runs) {
      const std::string s = std::to_string(run.seed);
      text += s + ",checkmark,cgm," + format_double(run.cgm_residual) + "\n";
      text += s + ",checkmark,cbm," + format_double(run.cbm_residual) + "\n";
      text += s + ",dsprites_lite,cgm," + format_double(run.dsprites_cgm_residual) + "\n";
      text += s + ",dsprites_lite,cbm," + format_double(run.dsprites_cbm_residual) + "\n";
    }
    write_file(dir / "residual_cace.csv", text, written);
  }
  {
    std::string text = "seed,lambda3,average_cace\n";
    std::string summary = "lambda3,mean,std\n";
    for (double l3 : plan.lambda3_grid) {
      std::vector<double> values;
      for (const auto& run : result.runs) {
        auto it = run.average_cace.find(l3);
        if (it == run.average_cace.end()) continue;
        text += std::to_string(run.seed) + "," + format_double(l3) + "," + format_double(it->second) + "\n";
        values.push_back(it->second);
      }
      summary += format_double(l3) + "," + format_double(mean_of(values)) + "," +
                 format_double(std_of(values)) + "\n";
    }
    write_file(dir / "lambda3_ablation.csv", text, written);
    write_file(dir / "lambda3_summary.csv", summary, written);
  }
  {
    std::string text = "seed,model,step,intervened,delta_accuracy,delta_concept_accuracy\n";
    for (const auto& run : result.runs) {
      for (const auto& series : run.curves) {
        for (const auto& s : series.steps) {
          text += std::to_string(run.seed) + "," + series.model + "," + std::to_string(s.step) +
                  "," + csv_field(join(s.intervened, " ")) + "," + format_double(s.delta_accuracy) +
                  "," + format_double(s.delta_concept_accuracy) + "\n";
        }
      }
    }
    write_file(dir / "intervention_curves.csv", text, written);
  }
  {
    std::string text = "seed,model,cause,effect,value,lower,upper,connected,effect_accuracy\n";
    for (const auto& run : result.runs) {
      for (const auto& [tag, b] : run.complement_pns) {
        text += std::to_string(run.seed) + "," + tag + ",b=0,c=1," + format_double(b.upper) + "," +
                format_double(b.lower) + "," + format_double(b.upper) + "," +
                (b.connected ? "1" : "0") + "," + format_double(run.complement_accuracy.at(tag)) + "\n";
      }
    }
    write_file(dir / "pns.csv", text, written);
  }
  {
    std::string text = "seed,ratio,cgm,cbm\n";
    for (const auto& run : result.runs) {
      text += std::to_string(run.seed) + "," + format_double(plan.incompleteness_ratio) + "," +
              format_double(run.incompleteness_cgm) + "," + format_double(run.incompleteness_cbm) + "\n";
    }
    write_file(dir / "incompleteness.csv", text, written);
  }
  {
    std::string text = "seed,error\n";
    for (const auto& run : result.runs)
      for (const auto& f : run.failures) text += std::to_string(run.seed) + "," + csv_field(f) + "\n";
    write_file(dir / "failures.csv", text, written);
  }
  if (plan.record_time) {
    std::string text = "phase,seconds\n";
    for (const auto& [phase, secs] : result.phase_seconds) text += phase + "," + format_double(secs) + "\n";
    text += "table1_total," + format_double(result.table1_seconds) + "\n";
    write_file(dir / "timing.csv", text, written);
  }
  nlohmann::json manifest = nlohmann::json::object();
  for (const auto& p : written) manifest[p.filename().string()] = sha256_file(p);
  std::filesystem::path mpath = dir / "manifest.json";
  std::ofstream(mpath) << nlohmann::json({{"artifacts", manifest}}).dump(2) << "\n";
  written.push_back(mpath);
  result.artifacts = written;
  return written;
}

}  // namespace ccgm::harness

// Runs the reproduction suite plus the property suites and prints one
// PASS/FAIL line per acceptance criterion. Exit status is 0 once every
// criterion has been evaluated, whatever its outcome; 1 if something crashed.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "ccgm/harness/suite.hpp"
#include "props/properties.hpp"

namespace harness = ccgm::harness;
namespace props = ccgm::props;
using ccgm::diff::Matrix;

namespace {

struct Line {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

Line table1(const harness::SuiteResult& suite, double suite_minutes) {
  const std::vector<std::pair<std::string, double>> paper{
      {"blackbox", 90.15}, {"cbm", 90.34}, {"cem", 89.09}, {"cgm", 88.24}, {"cgm_fixed", 89.43}};
  Line l{"table1_accuracy", true, ""};
  for (const auto& [kind, target] : paper) {
    std::vector<double> acc;
    for (const auto& r : suite.runs)
      if (r.accuracy.contains(kind)) acc.push_back(100.0 * r.accuracy.at(kind));
    const double mean = harness::mean_of(acc);
    const bool ok = acc.size() == suite.runs.size() && std::abs(mean - target) <= 3.0;
    l.passed = l.passed && ok;
    l.detail += kind + "=" + fmt(mean) + (ok ? "" : "(band " + fmt(target) + "+-3)") + " ";
  }
  const bool fast = suite_minutes < 15.0;
  l.passed = l.passed && fast;
  l.detail += "runtime=" + fmt(suite_minutes) + "min";
  return l;
}

Line table4(const harness::SuiteResult& suite) {
  Line l{"table4_residual_cace", true, ""};
  bool zeros = true;
  std::vector<double> cbm, cbm_ds;
  std::string pairs;
  for (const auto& r : suite.runs) {
    pairs += " " + std::to_string(r.cgm_residual_pairs) + "/" + std::to_string(r.dsprites_cgm_residual_pairs);
    zeros = zeros && r.cgm_residual_exact_zero && r.dsprites_cgm_residual_exact_zero &&
            r.cgm_residual_pairs > 0 && r.dsprites_cgm_residual_pairs > 0;
    cbm.push_back(r.cbm_residual);
    cbm_ds.push_back(r.dsprites_cbm_residual);
  }
  const double mean_cbm = harness::mean_of(cbm);
  l.passed = zeros && mean_cbm >= 80.0;
  l.detail = std::string("cgm_exact_zero=") + (zeros ? "yes" : "no") + " cbm_checkmark=" + fmt(mean_cbm) +
             " cbm_dsprites_lite=" + fmt(harness::mean_of(cbm_ds)) +
             " pairs(checkmark/dsprites_lite):" + pairs;
  return l;
}

Line graph_recovery(const harness::SuiteResult& suite) {
  std::size_t hits = 0;
  std::string edges;
  for (const auto& r : suite.runs) {
    hits += r.graph_recovered;
    std::string e;
    for (const auto& s : r.learned_edges) e += (e.empty() ? "" : " ") + s;
    edges += " seed" + std::to_string(r.seed) + "={" + e + "}";
  }
  return {"graph_recovery", hits >= 3, std::to_string(hits) + "/" + std::to_string(suite.runs.size()) + edges};
}

// Formula equivalence over every assignment of the node's parents.
bool equivalent(const ccgm::engine::NodeRule& rule, const std::string& target) {
  for (std::size_t m = 0; m < (std::size_t{1} << rule.parents.size()); ++m) {
    std::map<std::string, bool> v;
    for (std::size_t q = 0; q < rule.parents.size(); ++q) v[rule.parents[q]] = (m >> q) & 1U;
    try {
      if (harness::evaluate_formula(rule.formula, v) != harness::evaluate_formula(target, v)) return false;
    } catch (const std::invalid_argument&) {
      return false;  // target mentions a variable that is not a parent
    }
  }
  return true;
}

Line rules(const harness::SuiteResult& suite) {
  const auto& run = suite.runs[harness::best_seed_index(suite)];
  bool c_ok = false, d_ok = false;
  std::string c_rule = "?", d_rule = "?";
  for (const auto& r : run.rules) {
    if (r.node == "c") {
      c_rule = r.formula;
      c_ok = !r.skipped && r.formula != "ε" && equivalent(r, "~b");
    }
    if (r.node == "d") {
      d_rule = r.formula;
      d_ok = !r.skipped && r.formula != "ε" && (equivalent(r, "a & c") || equivalent(r, "a & ~b"));
    }
  }
  return {"rule_recovery", c_ok && d_ok,
          "best_seed=" + std::to_string(run.seed) + " c<-" + c_rule + " d<-" + d_rule};
}

Line interventions(const harness::SuiteResult& suite) {
  bool baseline_zero = true;
  std::vector<double> first_step;
  for (const auto& r : suite.runs) {
    for (const auto& series : r.curves) {
      if (series.model == "cgm") {
        if (!series.steps.empty()) first_step.push_back(series.steps.front().delta_accuracy);
      } else if (series.model == "cbm" || series.model == "cem") {
        for (const auto& s : series.steps) baseline_zero = baseline_zero && s.delta_concept_accuracy == 0.0;
      }
    }
  }
  const double mean = harness::mean_of(first_step);
  return {"intervention_properties", baseline_zero && first_step.size() == suite.runs.size() && mean >= 0.0,
          std::string("baseline_concept_delta_zero=") + (baseline_zero ? "yes" : "no") +
              " cgm_first_step_delta=" + fmt(mean, 4)};
}

Line lambda3(const harness::SuiteResult& suite) {
  std::vector<double> at0, at005;
  for (const auto& r : suite.runs) {
    at0.push_back(r.average_cace.at(0.0));
    at005.push_back(r.average_cace.at(0.05));
  }
  const double m0 = harness::mean_of(at0), m1 = harness::mean_of(at005);
  return {"lambda3_trend", m1 > m0, "avg_cace(0)=" + fmt(m0) + " avg_cace(0.05)=" + fmt(m1)};
}

Line incompleteness(const harness::SuiteResult& suite) {
  std::vector<double> cgm, cbm;
  for (const auto& r : suite.runs) {
    cgm.push_back(r.incompleteness_cgm);
    cbm.push_back(r.incompleteness_cbm);
  }
  const double a = harness::mean_of(cgm), b = harness::mean_of(cbm);
  return {"incompleteness_trend", a >= b, "cgm=" + fmt(100 * a) + " cbm=" + fmt(100 * b)};
}

Line property_suites(const harness::SuiteResult& suite) {
  std::vector<props::CheckResult> checks;
  checks.push_back(props::gradient_checks(1e-4));
  checks.push_back(props::cycle_oracle(200, 7));
  checks.push_back(props::brute_force_oracle());

  // One learned and one fixed-graph Checkmark model, default plan settings.
  const auto ds = ccgm::data::gen_checkmark(1000, 1);
  const auto parts = ccgm::data::split_dataset(ds, {0.8, 0.1, 0.1}, 1);
  auto cfg = ccgm::model::config_for(ds, {});
  cfg.seed = 1;
  const auto learned = ccgm::model::train_cgm(parts[0], parts[1], cfg).model;
  cfg.graph_mode = ccgm::model::GraphMode::kFixed;
  for (const auto& e : *ds.ground_truth_graph) cfg.fixed_edges.push_back({e.parent, e.child, 1.0});
  const auto fixed = ccgm::model::train_cgm(parts[0], parts[1], cfg).model;
  const Matrix& x = parts[2].features;  // 100 samples
  for (const auto* m : {&learned, &fixed}) {
    checks.push_back(props::do_invariance(*m, x, 20, 5));
    checks.push_back(props::ancestor_immunity(*m, x));
    checks.push_back(props::counterfactual_empty(*m, x));
    checks.push_back(props::sweep_idempotence(*m, x));
    checks.push_back(props::path_equivalence(*m, x, 9));
    checks.push_back(props::pns_range(*m, x));
    checks.push_back(props::checkpoint_round_trip(*m, x));
  }

  // Deterministic complement b -> c on every suite model whose c accuracy is >= 99%.
  std::vector<ccgm::engine::PnsBounds> complement;
  std::string complement_detail;
  for (const auto& r : suite.runs) {
    for (const auto& [tag, bounds] : r.complement_pns) {
      if (!bounds.connected || r.complement_accuracy.at(tag) < 0.99) continue;
      complement.push_back(bounds);
      complement_detail += " s" + std::to_string(r.seed) + "/" + tag + "=[" + fmt(bounds.lower, 3) + "," +
                           fmt(bounds.upper, 3) + "]";
    }
  }
  auto c = props::complement_bounds(complement);
  c.detail += complement_detail;
  checks.push_back(c);

  Line l{"property_suites", true, ""};
  std::size_t passed = 0;
  for (const auto& ch : checks) {
    passed += ch.passed;
    if (!ch.passed) {
      l.passed = false;
      l.detail += " FAILED{" + ch.name + ":" + ch.detail + "}";
    }
  }
  l.detail = std::to_string(passed) + "/" + std::to_string(checks.size()) + " checks" + l.detail;
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    harness::ExperimentPlan plan;
    plan.record_time = true;
    if (argc > 1) plan.out_dir = argv[1];
    const auto start = std::chrono::steady_clock::now();
    auto suite = harness::run_experiment_suite(plan);
    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
    if (plan.out_dir) harness::write_suite_outputs(plan, suite);
    for (const auto& r : suite.runs) {
      for (const auto& f : r.failures) std::cerr << "seed " << r.seed << " failure: " << f << "\n";
    }

    const std::vector<std::function<Line()>> criteria{
        [&] { return table1(suite, minutes); },  [&] { return table4(suite); },
        [&] { return graph_recovery(suite); },   [&] { return rules(suite); },
        [&] { return interventions(suite); },    [&] { return lambda3(suite); },
        [&] { return property_suites(suite); },  [&] { return incompleteness(suite); }};
    std::size_t passed = 0;
    std::ostringstream report;
    for (const auto& criterion : criteria) {
      const Line l = criterion();
      passed += l.passed;
      report << (l.passed ? "PASS " : "FAIL ") << l.name << ": " << l.detail << "\n";
    }
    report << "acceptance: " << passed << "/" << criteria.size() << " criteria passed\n";
    std::cout << report.str() << std::flush;
    // ctest hides output of passing tests; the post-test hook prints this file.
    if (plan.out_dir) std::ofstream(*plan.out_dir / "acceptance.txt") << report.str();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "acceptance runner crashed: " << e.what() << "\n";
    return 1;
  }
}

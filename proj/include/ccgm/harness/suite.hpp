#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccgm/common/format.hpp"
#include "ccgm/engine/causal.hpp"
#include "ccgm/model/cgm.hpp"

namespace ccgm::harness {

struct ExperimentPlan {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t samples = 1000;
  std::size_t epochs = 500;
  std::vector<double> lambda3_grid{0.0, 0.05, 0.2};
  double incompleteness_ratio = 0.9;
  double perturb_strength = 2.0;
  std::optional<std::filesystem::path> out_dir;
  bool record_time = false;

  void validate() const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::map<std::string, double> accuracy;  // kind -> test joint accuracy
  std::vector<std::string> learned_edges;  // "b->c"
  bool graph_recovered = false;
  std::vector<engine::NodeRule> rules;
  double cgm_residual = 0.0;  // mean % over ancestor -> sink pairs
  bool cgm_residual_exact_zero = false;
  std::size_t cgm_residual_pairs = 0;
  double cbm_residual = 0.0;  // mean % over concepts with a non-task child
  double dsprites_cgm_residual = 0.0;
  bool dsprites_cgm_residual_exact_zero = false;
  std::size_t dsprites_cgm_residual_pairs = 0;
  double dsprites_cbm_residual = 0.0;
  std::map<double, double> average_cace;  // lambda3 -> mean CaCE(concept -> task), percent
  std::vector<engine::CurveSeries> curves;
  std::map<std::string, engine::PnsBounds> complement_pns;  // model tag -> b->c bounds
  std::map<std::string, double> complement_accuracy;        // model tag -> accuracy of c
  double incompleteness_cgm = 0.0;
  double incompleteness_cbm = 0.0;
  std::vector<std::string> failures;
};

struct SuiteResult {
  std::vector<SeedRun> runs;
  std::map<std::string, double> phase_seconds;
  double table1_seconds = 0.0;
  std::vector<std::filesystem::path> artifacts;
};

// Trains every model of the plan and evaluates all suite metrics. A failing
// run is recorded in SeedRun::failures and the suite continues.
SuiteResult run_experiment_suite(const ExperimentPlan& plan);

// Writes CSV tables and manifest.json (artifact -> sha256) under plan.out_dir.
std::vector<std::filesystem::path> write_suite_outputs(const ExperimentPlan& plan,
                                                       SuiteResult& result);

// True when `edges` equals {b->c, a->d, c->d} or {b->c, a->d, b->d}.
bool checkmark_graph_matches(const std::vector<std::string>& edges);

// Evaluates `formula` (as produced by minimize_sop) on an assignment.
bool evaluate_formula(const std::string& formula, const std::map<std::string, bool>& values);

// Index of the run with the highest CGM test accuracy (ties: first).
std::size_t best_seed_index(const SuiteResult& result);

using ccgm::format_double;
double mean_of(const std::vector<double>& v);
double std_of(const std::vector<double>& v);

}  // namespace ccgm::harness

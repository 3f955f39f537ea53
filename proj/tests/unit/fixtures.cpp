#include "fixtures.hpp"

namespace ccgm::testing {

namespace {

model::CgmConfig base_config(const data::ConceptDataset& ds) {
  model::CgmConfig cfg = model::config_for(ds, {});
  cfg.seed = 1;
  return cfg;
}

}  // namespace

const TrainedCheckmark& trained_checkmark() {
  static const TrainedCheckmark fixture = [] {
    TrainedCheckmark t;
    const auto ds = data::gen_checkmark(1000, 1);
    t.parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, 1);
    t.learned = model::train_cgm(t.parts[0], t.parts[1], base_config(ds));
    return t;
  }();
  return fixture;
}

const model::TrainResult& trained_checkmark_fixed() {
  static const model::TrainResult fixture = [] {
    const auto& t = trained_checkmark();
    model::CgmConfig cfg = base_config(t.parts[0]);
    cfg.graph_mode = model::GraphMode::kFixed;
    for (const auto& e : *t.parts[0].ground_truth_graph) cfg.fixed_edges.push_back({e.parent, e.child, 1.0});
    return model::train_cgm(t.parts[0], t.parts[1], cfg);
  }();
  return fixture;
}

}  // namespace ccgm::testing

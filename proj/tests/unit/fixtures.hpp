#pragma once

#include <array>

#include "ccgm/datagen/dataset.hpp"
#include "ccgm/model/cgm.hpp"

namespace ccgm::testing {

struct TrainedCheckmark {
  std::array<data::ConceptDataset, 3> parts;  // train, val, test
  model::TrainResult learned;
};

// Checkmark n=1000, seed 1, split 0.8/0.1/0.1, default config (500 epochs).
// Trained once per test binary.
const TrainedCheckmark& trained_checkmark();

// Same split with the ground-truth graph frozen.
const model::TrainResult& trained_checkmark_fixed();

}  // namespace ccgm::testing

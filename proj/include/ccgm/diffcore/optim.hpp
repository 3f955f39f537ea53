#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccgm/diffcore/tape.hpp"

namespace ccgm::diff {

// Result of one SGD update. Blocks whose gradient contained a non-finite entry
// are left unchanged and listed here.
struct StepReport {
  std::vector<std::string> rejected_blocks;
  bool ok() const { return rejected_blocks.empty(); }
};

// Plain gradient descent: value -= lr * grad, then grad is cleared.
StepReport sgd_step(std::span<ParamBlock* const> params, double lr);

// Largest |analytic - central difference| / max(1, |analytic|) over every
// parameter entry. `build` must construct a scalar on the given tape from
// the current parameter values.
double gradient_check(const std::function<Var(Tape&)>& build,
                      std::span<ParamBlock* const> params, double step);

// Uniform in [-s, s] with s = 1/sqrt(fan_in).
Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace ccgm::diff

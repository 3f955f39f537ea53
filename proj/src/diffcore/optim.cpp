#include "ccgm/diffcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccgm::diff {

StepReport sgd_step(std::span<ParamBlock* const> params, double lr) {
  StepReport report;
  for (ParamBlock* p : params) {
    if (p->grad.empty()) {
      p->zero_grad();
      continue;
    }
    if (!p->grad.all_finite()) {
      report.rejected_blocks.push_back(p->name);
      p->zero_grad();
      continue;
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
    p->zero_grad();
  }
  return report;
}

double gradient_check(const std::function<Var(Tape&)>& build,
                      std::span<ParamBlock* const> params, double step) {
  for (ParamBlock* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = build(tape);
    tape.backward(out);
  }
  auto evaluate = [&build]() {
    Tape tape(false);
    return build(tape).scalar();
  };

  double worst = 0.0;
  for (ParamBlock* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double plus = evaluate();
      p->value[i] = saved - step;
      const double minus = evaluate();
      p->value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad[i];
      worst = std::max(worst, std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic)));
    }
  }
  for (ParamBlock* p : params) p->zero_grad();
  return worst;
}

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw std::invalid_argument("uniform_init: fan_in must be positive");
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-s, s);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

}  // namespace ccgm::diff

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vbb/diff/nn.hpp"

namespace vbb {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Compares reverse-mode gradients against central finite differences.
///
/// `loss` must build a scalar on the tape it is given, reading parameters via
/// `Tape::parameter`, and must be deterministic in the parameter values (reset
/// any random stream inside the closure). Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double tolerance, double epsilon = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&]() {
    Tape tape({.record = false, .checked = false});
    return loss(tape).value().item();
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + epsilon;
      const double up = eval();
      p->value[i] = saved - epsilon;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || std::isnan(rel)) {
        report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace vbb

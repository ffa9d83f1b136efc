#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/multiprecision/float128.hpp>

#include "aflstm/autograd.hpp"
#include "aflstm/errors.hpp"

namespace aflstm {

// The loss builder is any callable `auto(BasicTape<T>&) -> BasicVar<T>` usable with
// both double and quad-precision tapes, e.g. a generic lambda over Model::forward.
// Analytic gradients come from a double tape; the central differences replay the
// same forward in quad precision so round-off in the loss stays far below the step.

using OracleScalar = boost::multiprecision::float128;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

template <class T, class LossFn>
T evaluate_loss(LossFn& forward) {
  BasicTape<T> tape;
  return forward(tape).value().item();
}

// max |analytic - numeric| / max(1e-8, |analytic| + |numeric|) over every updatable entry.
template <class LossFn>
GradCheckReport grad_check_report(LossFn&& forward, const std::vector<Parameter*>& params, double eps = 1e-6) {
  const double first = evaluate_loss<double>(forward);
  const double second = evaluate_loss<double>(forward);
  if (first != second) throw DeterminismError("grad_check: forward pass is not deterministic");

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(forward(tape));
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (p->is_frozen_entry(i)) continue;
      const double saved = p->value[i];
      const double x_up = saved + eps;
      const double x_down = saved - eps;
      p->value[i] = x_up;
      const OracleScalar up = evaluate_loss<OracleScalar>(forward);
      p->value[i] = x_down;
      const OracleScalar down = evaluate_loss<OracleScalar>(forward);
      p->value[i] = saved;
      // Divide by the step actually taken after rounding x +/- eps to double.
      const double numeric = static_cast<double>((up - down) / (OracleScalar(x_up) - OracleScalar(x_down)));
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

template <class LossFn>
double grad_check(LossFn&& forward, const std::vector<Parameter*>& params, double eps = 1e-6) {
  return grad_check_report(forward, params, eps).max_rel_error;
}

}  // namespace aflstm

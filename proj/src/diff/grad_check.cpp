#include "tact/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace tact::diff {

namespace {

double evaluate(const LossFn& loss, const ParamSet& params) {
  Tape tape(false);
  return loss(tape, params).scalar();
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, const ParamSet& params, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  ParamSet analytic;
  {
    Tape tape;
    if (options.configure_tape) options.configure_tape(tape);
    Var l = loss(tape, params);
    tape.backward(l);
    analytic = tape.gradients(params);
  }

  GradCheckReport report;
  ParamSet probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    TensorCheck check;
    check.name = probe.name(i);
    auto values = probe[i].values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + options.step;
      const double up = evaluate(loss, probe);
      values[j] = saved - options.step;
      const double down = evaluate(loss, probe);
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = j;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(check);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

std::ostream& operator<<(std::ostream& os, const GradCheckReport& report) {
  os << "gradcheck " << (report.passed ? "PASS" : "FAIL") << " max_rel_error=" << std::scientific
     << std::setprecision(3) << report.max_rel_error << '\n';
  for (const auto& t : report.tensors) {
    os << "  " << std::left << std::setw(16) << t.name << " rel=" << t.max_rel_error << " worst[" << t.worst_index
       << "] analytic=" << t.analytic << " numeric=" << t.numeric << '\n';
  }
  os << std::defaultfloat;
  return os;
}

}  // namespace tact::diff

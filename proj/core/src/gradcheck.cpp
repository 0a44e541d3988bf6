#include "mcrc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mcrc {
namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value()[0];
}

}  // namespace

GradCheckReport check_gradients(const std::vector<Parameter*>& params, const LossBuilder& loss,
                                const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable) continue;
    const std::size_t n = p.value.size();
    std::size_t stride = 1;
    if (options.max_entries_per_parameter && n > options.max_entries_per_parameter) {
      stride = (n + options.max_entries_per_parameter - 1) / options.max_entries_per_parameter;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = evaluate(loss);
      p.value[i] = saved - options.step;
      const double down = evaluate(loss);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (report.worst_parameter.empty() || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.entries_checked > 0 && report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace mcrc

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mcrc/autodiff.hpp"

namespace mcrc {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so entries whose true gradient
  /// is ~0 are compared absolutely.
  double floor = 1e-6;
  /// 0 checks every entry; otherwise at most this many evenly spaced entries
  /// per parameter.
  std::size_t max_entries_per_parameter = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Builds the loss on the supplied tape. Must be deterministic: it is called
/// once for the analytic pass and twice per checked entry.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences for every trainable
/// parameter in `params`. Report-only; never throws for a mismatch.
GradCheckReport check_gradients(const std::vector<Parameter*>& params, const LossBuilder& loss,
                                const GradCheckOptions& options = {});

}  // namespace mcrc

#pragma once

#include <cstddef>
#include <vector>

#include "mcrc/autodiff.hpp"

namespace mcrc {

struct AdamOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are kept per parameter; frozen parameters are
/// skipped entirely, whatever their gradient holds.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  void step();
  std::size_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }

  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  AdamOptions options_;
  std::size_t step_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

/// Rescales all gradients jointly so their global L2 norm is at most
/// `threshold`. Returns the factor applied (1 when no clipping happened).
double clip_global_norm(const std::vector<Parameter*>& params, double threshold = 10.0);

}  // namespace mcrc

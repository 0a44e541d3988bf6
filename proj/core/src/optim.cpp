#include "mcrc/optim.hpp"

#include <cmath>

#include "mcrc/error.hpp"

namespace mcrc {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (options_.lr <= 0 || options_.beta1 < 0 || options_.beta1 >= 1 || options_.beta2 < 0 ||
      options_.beta2 >= 1 || options_.eps <= 0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  if (params_.empty()) throw Error("Adam step with no parameters");
  for (Parameter* p : params_) {
    if (p->trainable && !p->grad.same_shape(p->value)) {
      throw Error("Adam step before gradients were populated for " + p->name);
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.trainable) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (const Parameter* p : params) s += squared_norm(p->grad);
  return std::sqrt(s);
}

double clip_global_norm(const std::vector<Parameter*>& params, double threshold) {
  if (!(threshold > 0)) throw ConfigError("clip threshold must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= threshold) return 1.0;
  const double factor = threshold / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.values()) g *= factor;
  }
  return factor;
}

}  // namespace mcrc

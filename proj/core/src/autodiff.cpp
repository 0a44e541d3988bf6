#include "mcrc/autodiff.hpp"

#include "mcrc/error.hpp"

namespace mcrc {

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

Parameter& ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  Parameter* raw = p.get();
  index_.emplace(raw->name, raw);
  params_.push_back(std::move(p));
  return *raw;
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Parameter& ParameterSet::at(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw Error("unknown parameter: " + std::string(name));
  return *p;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (!p) throw Error("unknown parameter: " + std::string(name));
  return *p;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterSet::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (std::string_view(p->name).substr(0, prefix.size()) == prefix) out.push_back(p.get());
  }
  return out;
}

std::size_t ParameterSet::value_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterSet::set_trainable(std::string_view prefix, bool trainable) {
  for (Parameter* p : with_prefix(prefix)) p->trainable = trainable;
}

Tape& Var::tape() const {
  if (!tape_) throw GraphError("use of an empty variable");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.param = &param;
  n.requires_grad = param.trainable;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward,
                 const char* op) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite result from ") + op);
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw GraphError(std::string("dangling parent in ") + op);
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!owns(loss)) throw GraphError("loss was not recorded on this tape");
  if (value(loss.id()).size() != 1) {
    throw GraphError("backward requires a scalar loss, got " + to_string(value(loss.id()).shape()));
  }
  if (!nodes_[loss.id()].requires_grad) {
    throw GraphError("loss is not connected to any trainable parameter");
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id()).fill(1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }

  for (auto& n : nodes_) {
    Parameter* p = n.param;
    if (!p) continue;
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.shape());
    if (!p->trainable) {
      p->grad.fill(0.0);
      continue;
    }
    if (!n.grad.empty()) p->grad += n.grad;
  }
}

}  // namespace mcrc

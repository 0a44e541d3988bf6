#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcrc/tensor.hpp"

namespace mcrc {

/// A named model weight. Frozen parameters still take part in forward
/// computation but never receive gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

/// Owns the parameters of one model. Names are unique; pointers stay valid
/// for the lifetime of the set.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(std::string name, Tensor value, bool trainable = true);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(std::string_view prefix);
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t value_count() const noexcept;

  void zero_grad();
  void set_trainable(std::string_view prefix, bool trainable);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Computation record for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order and backward() is a single reverse sweep. Each backward
/// rule reads the node's output gradient and accumulates into the gradients
/// of those parents that require one.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node. The
  /// leaf reads the parameter's storage directly, so the parameter must not
  /// change while the tape is alive.
  Var parameter(Parameter& param);

  /// Appends an op output. Throws NumericError if `value` is not finite.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, const char* op);

  /// Reverse sweep from a scalar loss. Accumulates d loss / d p into the
  /// `grad` of every trainable parameter on this tape; frozen parameters get
  /// a zero gradient.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  /// Output gradient of a node; empty until the sweep reaches it.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Zero-initialised on first use.
  Tensor& grad_buffer(std::size_t id);
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool owns(const Var& v) const noexcept { return v.tape_ == this && v.id_ < nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace mcrc

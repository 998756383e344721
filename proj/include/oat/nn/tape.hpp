#pragma once

#include <functional>
#include <vector>

#include "oat/nn/params.hpp"
#include "oat/nn/tensor.hpp"

namespace oat::nn {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode recorder. Every op appends a node holding its value and a
/// closure that pushes the node's gradient to its inputs. Parameter nodes
/// alias the parameter storage and accumulate straight into Parameter::grad.
template <typename T>
class Tape {
 public:
  /// Called with the tape and the node's own handle.
  using Backward = std::function<void(Tape&, Var)>;

  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  Var param(Parameter<T>& p) {
    Node n;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  Var push(Tensor<T> value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && record_;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : n.value;
  }
  const Shape& shape(Var v) const { return value(v).shape; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  /// Gradient buffer of v, allocated as zeros on first use.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.param) return n.param->grad;
    if (n.grad.shape != n.value.shape) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  Tensor<T> take(Var v) {
    Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : std::move(n.value);
  }

  /// Seeds d(loss)/d(loss) = 1 for a scalar loss and runs every recorded
  /// closure in reverse order.
  void backward(Var loss) {
    auto& g = grad(loss);
    std::fill(g.data.begin(), g.data.end(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() > 0) n.backward(*this, Var{i});
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_ = true;
};

}  // namespace oat::nn

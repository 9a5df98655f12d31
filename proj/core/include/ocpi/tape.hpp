#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <initializer_list>
#include <vector>

#include "ocpi/tensor.hpp"

namespace ocpi::nn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return id_ != kNone; }

 private:
  friend class Tape;
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = kNone;
};

// Propagates the output gradient of a node into its inputs' gradients.
using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order;
/// backward() replays them in reverse.
class Tape {
 public:
  Var constant(Tensor value);
  Var parameter(Tensor value);
  // Records an op result. The node requires a gradient iff any input does.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  // Accumulator for v's gradient, zero-initialized on first use.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(v.id()).grad.empty(); }

  // Seeds d(root)/d(root) = 1 for a single-element root.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace ocpi::nn

#include "ocpi/tape.hpp"

#include <cmath>
#include <sstream>

#include "ocpi/errors.hpp"

namespace ocpi::nn {

std::string Shape::str() const {
  std::ostringstream ss;
  ss << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return ss.str();
}

Tensor::Tensor(const Shape& s, std::vector<double> data) : shape_(s), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.size()) throw ShapeError("tensor data does not match shape " + s.str());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (other.shape_ != shape_) throw ShapeError("cannot add " + other.shape_.str() + " to " + shape_.str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape() != s) throw ShapeError(std::string(what) + ": expected " + s.str() + ", got " + t.shape().str());
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool req = false;
  for (auto v : inputs) req = req || nodes_.at(v.id()).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, req, req ? std::move(backward) : BackwardFn{}});
  return Var(nodes_.size() - 1);
}

Tensor& Tape::grad(Var v) {
  auto& n = nodes_.at(v.id());
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  const auto& v = value(root);
  if (v.size() != 1) throw ShapeError("backward(root) needs a scalar root, got " + v.shape().str());
  backward(root, Tensor(v.shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  require_shape(seed, value(root).shape(), "backward seed");
  if (!requires_grad(root)) return;
  grad(root).add(seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace ocpi::nn

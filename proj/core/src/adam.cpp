#include "ocpi/adam.hpp"

#include <cmath>

#include "ocpi/errors.hpp"

namespace ocpi::nn {

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw ShapeError("adam: gradient count does not match parameters");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.data();
    const auto g = grads[i].data();
    if (g.size() != w.size()) throw ShapeError("adam: gradient shape mismatch for " + params[i].name);
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
  }
}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

}  // namespace ocpi::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ptl/core/mlp.hpp"

namespace ptl {

struct SgdOptions {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
  // The learning rate is multiplied by decay_factor once per milestone passed.
  std::vector<int> decay_epochs;
  double decay_factor = 0.1;

  void validate() const {
    if (!(learning_rate >= 0)) throw ValidationError("SgdOptions: learning_rate must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw ValidationError("SgdOptions: momentum must be in [0,1)");
    if (!(weight_decay >= 0)) throw ValidationError("SgdOptions: weight_decay must be >= 0");
    if (!(decay_factor > 0 && decay_factor <= 1))
      throw ValidationError("SgdOptions: decay_factor must be in (0,1]");
  }
};

template <typename Scalar>
struct OptimizerState {
  SgdOptions options;
  LayerList<Scalar> velocity;
  long step = 0;
  int epoch = 0;

  OptimizerState() = default;
  OptimizerState(SgdOptions opts, const LayerList<Scalar>& params)
      : options(std::move(opts)), velocity(zeros_like(params)) {
    options.validate();
  }

  double learning_rate() const {
    const auto passed = std::count_if(options.decay_epochs.begin(), options.decay_epochs.end(),
                                      [&](int m) { return epoch >= m; });
    return options.learning_rate * std::pow(options.decay_factor, static_cast<double>(passed));
  }
};

/// One SGD update in place.
///
/// With weight decay folded into the gradient (g' = g + wd * w):
///   v <- mu * v + g'
///   w <- w - lr * (g' + mu * v)      (Nesterov)
///   w <- w - lr * v                  (heavy ball)
template <typename Scalar>
void sgd_step(LayerList<Scalar>& params, const LayerList<Scalar>& grads,
              OptimizerState<Scalar>& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity lists differ in length");
  }
  const auto lr = static_cast<Scalar>(state.learning_rate());
  const auto mu = static_cast<Scalar>(state.options.momentum);
  const auto wd = static_cast<Scalar>(state.options.weight_decay);
  const bool nesterov = state.options.nesterov;

  auto update = [&](auto& w, const auto& g, auto& v) {
    if (w.rows() != g.rows() || w.cols() != g.cols() || w.rows() != v.rows() ||
        w.cols() != v.cols()) {
      throw DimensionError("sgd_step: parameter and gradient shapes differ");
    }
    auto gd = (g + wd * w).eval();
    v = mu * v + gd;
    if (nesterov)
      w -= lr * (gd + mu * v);
    else
      w -= lr * v;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grads[i].weight, state.velocity[i].weight);
    update(params[i].bias, grads[i].bias, state.velocity[i].bias);
  }
  ++state.step;
}

}  // namespace ptl

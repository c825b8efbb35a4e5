#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dskin/errors.hpp"
#include "dskin/neural/param.hpp"

namespace dskin::neural {

template <class Scalar>
struct AdamState {
  std::vector<VecT<Scalar>> m;
  std::vector<VecT<Scalar>> v;
  std::int64_t t = 0;

  void ensure(const std::vector<ParamRef<Scalar>>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(VecT<Scalar>::Zero(p.size));
      v.push_back(VecT<Scalar>::Zero(p.size));
    }
  }
};

// Bias-corrected Adam update, in place.
template <class Scalar>
void adam_step(std::vector<ParamRef<Scalar>>& params, AdamState<Scalar>& state, Scalar lr,
               Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
               Scalar eps = Scalar(1e-8)) {
  state.ensure(params);
  state.t += 1;
  const Scalar bc1 = Scalar(1) - std::pow(beta1, Scalar(state.t));
  const Scalar bc2 = Scalar(1) - std::pow(beta2, Scalar(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamRef<Scalar>& p = params[k];
    for (Eigen::Index i = 0; i < p.size; ++i) {
      const Scalar g = p.grad[i];
      Scalar& m = state.m[k](i);
      Scalar& v = state.v[k](i);
      m = beta1 * m + (Scalar(1) - beta1) * g;
      v = beta2 * v + (Scalar(1) - beta2) * g * g;
      p.value[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
  }
}

template <class Scalar>
struct MomentumState {
  std::vector<VecT<Scalar>> velocity;

  void ensure(const std::vector<ParamRef<Scalar>>& params) {
    if (velocity.size() == params.size()) return;
    velocity.clear();
    for (const auto& p : params) velocity.push_back(VecT<Scalar>::Zero(p.size));
  }
};

// v <- momentum v + g;  p <- p - lr v
template <class Scalar>
void sgd_momentum_step(std::vector<ParamRef<Scalar>>& params, MomentumState<Scalar>& state,
                       Scalar lr, Scalar momentum) {
  state.ensure(params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamRef<Scalar>& p = params[k];
    for (Eigen::Index i = 0; i < p.size; ++i) {
      Scalar& v = state.velocity[k](i);
      v = momentum * v + p.grad[i];
      p.value[i] -= lr * v;
    }
  }
}

}  // namespace dskin::neural

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dskin::neural {

template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Flat view of one named parameter array and its gradient.
template <class Scalar>
struct ParamRef {
  std::string name;
  Scalar* value = nullptr;
  Scalar* grad = nullptr;
  Eigen::Index size = 0;
};

template <class Scalar>
void zero_grads(std::vector<ParamRef<Scalar>>& params) {
  for (auto& p : params)
    for (Eigen::Index i = 0; i < p.size; ++i) p.grad[i] = Scalar(0);
}

template <class Scalar>
Eigen::Index param_count(const std::vector<ParamRef<Scalar>>& params) {
  Eigen::Index total = 0;
  for (const auto& p : params) total += p.size;
  return total;
}

template <class Scalar>
std::vector<ParamRef<Scalar>> concat(std::initializer_list<std::vector<ParamRef<Scalar>>> groups) {
  std::vector<ParamRef<Scalar>> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  return all;
}

}  // namespace dskin::neural

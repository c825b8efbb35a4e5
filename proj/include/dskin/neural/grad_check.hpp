#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "dskin/neural/param.hpp"

namespace dskin::neural {

struct GradCheckEntry {
  std::string name;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> per_param;
};

// Central finite differences against analytic gradients already stored in the
// param refs. The loss closure must re-run the forward pass from scratch.
// Only meaningful at 64-bit precision.
template <class Scalar>
GradCheckReport grad_check(std::vector<ParamRef<Scalar>>& params,
                           const std::function<double()>& loss, double h = 1e-5) {
  static_assert(sizeof(Scalar) == sizeof(double), "grad_check requires the 64-bit mode");
  GradCheckReport report;
  for (auto& p : params) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.size; ++i) {
      const Scalar saved = p.value[i];
      p.value[i] = saved + static_cast<Scalar>(h);
      const double f_hi = loss();
      p.value[i] = saved - static_cast<Scalar>(h);
      const double f_lo = loss();
      p.value[i] = saved;
      const double fd = (f_hi - f_lo) / (2.0 * h);
      const double analytic = static_cast<double>(p.grad[i]);
      // the absolute floor keeps FD cancellation noise on near-zero
      // gradients from reading as a large relative error
      const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(fd - analytic) / scale);
    }
    report.per_param.push_back({p.name, worst});
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

}  // namespace dskin::neural

#pragma once

#include <Eigen/Dense>

namespace dskin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Rigid transform y = R x + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }

  RigidTransform compose(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }

  RigidTransform inverse() const {
    Mat3 Rt = R.transpose();
    return {Rt, -(Rt * t)};
  }
};

// Vertex-major flattening: [v0.x v0.y v0.z v1.x ...].
inline Vec flatten_vertices(const MatX3& v) {
  Vec out(v.rows() * 3);
  for (Eigen::Index i = 0; i < v.rows(); ++i) out.segment<3>(3 * i) = v.row(i).transpose();
  return out;
}

inline MatX3 unflatten_vertices(const Vec& x) {
  MatX3 out(x.size() / 3, 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = x.segment<3>(3 * i).transpose();
  return out;
}

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace dskin

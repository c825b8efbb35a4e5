#include "dskin/body_model.hpp"

#include <cmath>

#include "dskin/errors.hpp"

namespace dskin {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void check_orthonormal(const Mat& components, const char* what) {
  if (components.cols() == 0) return;
  Mat gram = components.transpose() * components;
  double err = (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (err > 1e-9) throw DataError(std::string(what) + ": columns not orthonormal");
}

}  // namespace

void TemplateMesh::validate() const {
  if (vertex_count() < 4) throw DataError("template mesh: need at least 4 vertices");
  if (!vertices.allFinite()) throw DataError("template mesh: non-finite coordinates");
  for (const auto& f : faces)
    for (int idx : f)
      if (idx < 0 || idx >= vertex_count()) throw DataError("template mesh: face index out of range");
}

void Skeleton::validate() const {
  const int k = joint_count();
  if (k < 1) throw DataError("skeleton: need at least one joint");
  if (rest_joints.rows() != k) throw DimensionError("skeleton: joint position count mismatch");
  if (parent[0] != -1) throw DataError("skeleton: joint 0 must be the root");
  for (int j = 1; j < k; ++j)
    if (parent[j] < 0 || parent[j] >= j) throw DataError("skeleton: parents must form a tree rooted at 0");
}

PoseVector PoseVector::rest(int joint_count) {
  PoseVector p;
  p.joint_rotations = MatX3::Zero(joint_count, 3);
  return p;
}

Vec PoseVector::flatten() const {
  Vec out(dim());
  out.segment<3>(0) = root_translation;
  for (int k = 0; k < joint_count(); ++k) out.segment<3>(3 + 3 * k) = joint_rotations.row(k).transpose();
  return out;
}

PoseVector PoseVector::from_flat(const Vec& x) {
  if (x.size() < 3 || x.size() % 3 != 0) throw DimensionError("pose vector: flat size must be 3K + 3");
  PoseVector p;
  p.root_translation = x.segment<3>(0);
  const int k = static_cast<int>(x.size() / 3) - 1;
  p.joint_rotations.resize(k, 3);
  for (int j = 0; j < k; ++j) p.joint_rotations.row(j) = x.segment<3>(3 + 3 * j).transpose();
  return p;
}

void ShapeBasis::validate() const {
  if (components.cols() > 0 && components.rows() != mean.size())
    throw DimensionError("shape basis: mean/component row mismatch");
  check_orthonormal(components, "shape basis");
}

void PoseBlendBasis::validate(int joint_count) const {
  if (components.cols() != 9 * joint_count) throw DimensionError("pose blend basis: expected 9K columns");
  if (!components.allFinite()) throw DataError("pose blend basis: non-finite entries");
}

void DynamicBasisPCA::validate() const {
  if (empty()) return;
  if (components.rows() != mean.size()) throw DimensionError("dynamic basis: mean/component row mismatch");
  check_orthonormal(components, "dynamic basis");
}

void BlendWeights::validate() const {
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double sum = 0.0;
    int nonzeros = 0;
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
      double w = W(i, k);
      if (w < 0.0) throw DataError("blend weights: negative entry");
      if (w != 0.0) ++nonzeros;
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("blend weights: row does not sum to 1");
    if (nonzeros > 4) throw DataError("blend weights: more than 4 nonzeros in a row");
  }
}

void JointRegressor::validate() const {
  for (Eigen::Index k = 0; k < J_map.rows(); ++k) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < J_map.cols(); ++i) {
      if (J_map(k, i) < 0.0) throw DataError("joint regressor: negative entry");
      sum += J_map(k, i);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("joint regressor: row does not sum to 1");
  }
}

void BodyModelBundle::validate() const {
  template_mesh.validate();
  skeleton.validate();
  const int n = vertex_count();
  const int k = joint_count();
  require(weights.W.rows() == n && weights.W.cols() == k, "bundle: blend weight shape");
  require(regressor.J_map.rows() == k && regressor.J_map.cols() == n, "bundle: regressor shape");
  require(shape_basis.mean.size() == 3 * n, "bundle: shape mean size");
  require(pose_basis.components.rows() == 3 * n, "bundle: pose basis rows");
  weights.validate();
  regressor.validate();
  shape_basis.validate();
  pose_basis.validate(k);
  dynamic_basis.validate();
}

Mat3 rodrigues(const Vec3& r) {
  const double theta2 = r.squaredNorm();
  if (theta2 < 1e-24) {
    // second-order series, exact enough at this magnitude
    Mat3 rx = cross_matrix(r);
    return Mat3::Identity() + rx + 0.5 * rx * rx;
  }
  const double theta = std::sqrt(theta2);
  const Mat3 kx = cross_matrix(r / theta);
  return Mat3::Identity() + std::sin(theta) * kx + (1.0 - std::cos(theta)) * kx * kx;
}

Eigen::Matrix<double, 9, 3> rodrigues_jacobian(const Vec3& r) {
  Eigen::Matrix<double, 9, 3> jac;
  const double theta2 = r.squaredNorm();
  const Mat3 R = rodrigues(r);
  for (int i = 0; i < 3; ++i) {
    Mat3 dR;
    if (theta2 < 1e-16) {
      // limit at the identity: dR/dr_i = [e_i]x
      Vec3 e = Vec3::Zero();
      e(i) = 1.0;
      dR = cross_matrix(e);
    } else {
      // Gallego & Yezzi closed form
      Vec3 e = Vec3::Zero();
      e(i) = 1.0;
      Vec3 v = r.cross((Mat3::Identity() - R) * e);
      dR = ((r(i) * cross_matrix(r) + cross_matrix(v)) / theta2) * R;
    }
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) jac(3 * row + col, i) = dR(row, col);
  }
  return jac;
}

std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton, const PoseVector& pose,
                                               const MatX3& joints) {
  const int k = skeleton.joint_count();
  if (pose.joint_count() != k) throw DimensionError("forward_kinematics: pose joint count mismatch");
  if (joints.rows() != k) throw DimensionError("forward_kinematics: joint position count mismatch");

  std::vector<RigidTransform> world(k);
  for (int j = 0; j < k; ++j) {
    RigidTransform local;
    local.R = rodrigues(pose.joint_rotations.row(j).transpose());
    if (skeleton.parent[j] < 0) {
      local.t = joints.row(j).transpose() + pose.root_translation;
      world[j] = local;
    } else {
      local.t = (joints.row(j) - joints.row(skeleton.parent[j])).transpose();
      world[j] = world[skeleton.parent[j]].compose(local);
    }
  }
  return world;
}

Vec shape_blend(const ShapeBasis& basis, const Vec& beta) {
  if (beta.size() != basis.components.cols()) throw DimensionError("shape_blend: |beta| != B");
  if (basis.components.cols() == 0) return basis.mean;
  return basis.mean + basis.components * beta;
}

Vec pose_feature(const PoseVector& pose) {
  const int k = pose.joint_count();
  Vec feat(9 * k);
  for (int j = 0; j < k; ++j) {
    const Mat3 R = rodrigues(pose.joint_rotations.row(j).transpose());
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col)
        feat(9 * j + 3 * row + col) = R(row, col) - (row == col ? 1.0 : 0.0);
  }
  return feat;
}

Vec pose_blend(const PoseBlendBasis& basis, const PoseVector& pose) {
  if (basis.components.cols() != 9 * pose.joint_count())
    throw DimensionError("pose_blend: basis has wrong column count for pose");
  return basis.components * pose_feature(pose);
}

Vec dynamic_blend_pca(const DynamicBasisPCA& basis, const Vec& delta) {
  if (delta.size() != basis.components.cols()) throw DimensionError("dynamic_blend_pca: |delta| != L");
  if (basis.components.cols() == 0) return basis.mean;
  return basis.mean + basis.components * delta;
}

Vec assemble_rest_mesh(const BodyModelBundle& model, const Vec& beta, const PoseVector& pose,
                       const Vec* dyn_offset) {
  const int n3 = 3 * model.vertex_count();
  Vec rest = flatten_vertices(model.template_mesh.vertices);
  rest += shape_blend(model.shape_basis, beta);
  rest += pose_blend(model.pose_basis, pose);
  if (dyn_offset) {
    if (dyn_offset->size() != n3) throw DimensionError("assemble_rest_mesh: dyn offset size != 3N");
    rest += *dyn_offset;
  }
  return rest;
}

MatX3 regress_joints(const JointRegressor& regressor, const MatX3& shaped_rest_vertices) {
  return regressor.J_map * shaped_rest_vertices;
}

MatX3 shaped_joints(const BodyModelBundle& model, const Vec& beta) {
  Vec shaped = flatten_vertices(model.template_mesh.vertices) + shape_blend(model.shape_basis, beta);
  return regress_joints(model.regressor, unflatten_vertices(shaped));
}

std::vector<RigidTransform> skinning_transforms(const BodyModelBundle& model, const Vec& beta,
                                                const PoseVector& pose) {
  const MatX3 joints = shaped_joints(model, beta);
  std::vector<RigidTransform> world = forward_kinematics(model.skeleton, pose, joints);
  // G_k(theta*) is the pure translation to joint k, so the rest-relative
  // transform is G_k composed with Trans(-j_k).
  for (int k = 0; k < model.joint_count(); ++k)
    world[k].t -= world[k].R * joints.row(k).transpose();
  return world;
}

MatX3 pose_mesh(const BodyModelBundle& model, const Vec& beta, const PoseVector& pose,
                const Vec* dyn_offset) {
  const MatX3 rest = unflatten_vertices(assemble_rest_mesh(model, beta, pose, dyn_offset));
  const std::vector<RigidTransform> G = skinning_transforms(model, beta, pose);
  const int n = model.vertex_count();
  const int k = model.joint_count();
  MatX3 posed(n, 3);
  for (int i = 0; i < n; ++i) {
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = model.weights.W(i, j);
      if (w == 0.0) continue;
      A += w * G[j].R;
      b += w * G[j].t;
    }
    posed.row(i) = (A * rest.row(i).transpose() + b).transpose();
  }
  return posed;
}

MatX3 unpose_mesh(const BodyModelBundle& model, const MatX3& posed_vertices, const Vec& beta,
                  const PoseVector& pose) {
  if (posed_vertices.rows() != model.vertex_count())
    throw DimensionError("unpose_mesh: vertex count mismatch");
  const std::vector<RigidTransform> G = skinning_transforms(model, beta, pose);
  const int n = model.vertex_count();
  const int k = model.joint_count();
  MatX3 rest(n, 3);
  for (int i = 0; i < n; ++i) {
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = model.weights.W(i, j);
      if (w == 0.0) continue;
      A += w * G[j].R;
      b += w * G[j].t;
    }
    if (std::abs(A.determinant()) < 1e-9)
      throw SingularSkinningError("unpose_mesh: blended skinning matrix is singular at vertex " +
                                  std::to_string(i));
    rest.row(i) = A.inverse() * (posed_vertices.row(i).transpose() - b);
  }
  return rest;
}

Vec extract_dynamic_offset(const BodyModelBundle& model, const MatX3& observed_mesh,
                           const Vec& beta, const PoseVector& pose) {
  const MatX3 unposed = unpose_mesh(model, observed_mesh, beta, pose);
  Vec static_rest = flatten_vertices(model.template_mesh.vertices);
  static_rest += shape_blend(model.shape_basis, beta);
  static_rest += pose_blend(model.pose_basis, pose);
  return flatten_vertices(unposed) - static_rest;
}

}  // namespace dskin

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dskin/geometry.hpp"

namespace dskin {

struct TemplateMesh {
  MatX3 vertices;                         // N x 3, rest pose, meters
  std::vector<std::array<int, 3>> faces;  // triangle indices

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  void validate() const;
};

struct Skeleton {
  std::vector<int> parent;  // parent joint index, root = -1
  MatX3 rest_joints;        // K x 3, meters

  int joint_count() const { return static_cast<int>(parent.size()); }
  void validate() const;
};

// Pose: root translation plus one axis-angle 3-vector per joint.
// Flat layout (3K + 3): [root_translation, joint 0 axis-angle, ..., joint K-1].
struct PoseVector {
  Vec3 root_translation = Vec3::Zero();
  MatX3 joint_rotations;  // K x 3 axis-angle, radians

  static PoseVector rest(int joint_count);
  int joint_count() const { return static_cast<int>(joint_rotations.rows()); }
  int dim() const { return 3 * joint_count() + 3; }

  Vec flatten() const;
  static PoseVector from_flat(const Vec& x);
};

struct ShapeCoefficients {
  Vec beta;
};

struct ShapeBasis {
  Vec mean;        // 3N
  Mat components;  // 3N x B, columns orthonormal

  int dim() const { return static_cast<int>(components.cols()); }
  void validate() const;  // orthonormality within 1e-9
};

struct PoseBlendBasis {
  Mat components;  // 3N x 9K

  void validate(int joint_count) const;
};

struct DynamicBasisPCA {
  Vec mean;        // 3N
  Mat components;  // 3N x L, columns orthonormal

  int dim() const { return static_cast<int>(components.cols()); }
  bool empty() const { return mean.size() == 0; }
  void validate() const;
};

struct BlendWeights {
  Mat W;  // N x K, nonnegative, rows sum to 1, at most 4 nonzeros per row

  void validate() const;
};

struct JointRegressor {
  Mat J_map;  // K x N, nonnegative, rows sum to 1

  void validate() const;
};

struct BodyModelBundle {
  TemplateMesh template_mesh;
  Skeleton skeleton;
  BlendWeights weights;
  JointRegressor regressor;
  ShapeBasis shape_basis;
  PoseBlendBasis pose_basis;
  DynamicBasisPCA dynamic_basis;  // optional, may be empty

  int vertex_count() const { return template_mesh.vertex_count(); }
  int joint_count() const { return skeleton.joint_count(); }
  int shape_dim() const { return shape_basis.dim(); }
  void validate() const;
};

// Axis-angle to rotation matrix (Rodrigues). Zero vector maps to identity.
Mat3 rodrigues(const Vec3& r);

// d vec(R) / dr with row-major flattening of R; 9 x 3.
Eigen::Matrix<double, 9, 3> rodrigues_jacobian(const Vec3& r);

// World transforms per joint. Root includes root_translation; at the rest
// pose each transform is the pure translation to the joint position.
std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton,
                                               const PoseVector& pose,
                                               const MatX3& joints);

Vec shape_blend(const ShapeBasis& basis, const Vec& beta);

// Row-major per-joint rotation entries, R(theta) - R(theta*); 9K vector.
Vec pose_feature(const PoseVector& pose);

Vec pose_blend(const PoseBlendBasis& basis, const PoseVector& pose);

Vec dynamic_blend_pca(const DynamicBasisPCA& basis, const Vec& delta);

Vec assemble_rest_mesh(const BodyModelBundle& model, const Vec& beta,
                       const PoseVector& pose, const Vec* dyn_offset = nullptr);

MatX3 regress_joints(const JointRegressor& regressor, const MatX3& shaped_rest_vertices);

// Joint locations J(beta) from the shaped rest vertices (template + shape blend).
MatX3 shaped_joints(const BodyModelBundle& model, const Vec& beta);

// Skinning transforms expressed relative to rest: G_k(theta) * G_k(theta*)^-1,
// so the rest pose is a strict fixed point of skinning.
std::vector<RigidTransform> skinning_transforms(const BodyModelBundle& model,
                                                const Vec& beta, const PoseVector& pose);

MatX3 pose_mesh(const BodyModelBundle& model, const Vec& beta, const PoseVector& pose,
                const Vec* dyn_offset = nullptr);

// Inverts the per-vertex blended transform. Throws SingularSkinningError when
// a blended matrix has |det| < 1e-9.
MatX3 unpose_mesh(const BodyModelBundle& model, const MatX3& posed_vertices,
                  const Vec& beta, const PoseVector& pose);

// Eq-5 style extraction: unpose the observation, subtract the static rest model.
Vec extract_dynamic_offset(const BodyModelBundle& model, const MatX3& observed_mesh,
                           const Vec& beta, const PoseVector& pose);

}  // namespace dskin

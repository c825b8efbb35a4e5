#include <cmath>

#include "doctest.h"
#include "dskin/body_model.hpp"
#include "dskin/errors.hpp"
#include "dskin/rng.hpp"
#include "test_helpers.hpp"

using namespace dskin;
using namespace dskin::testing;

TEST_CASE("rodrigues zero vector is identity") {
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("rodrigues closed-form z rotation") {
  const Mat3 r = rodrigues(Vec3(0, 0, M_PI / 2));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rodrigues matches quaternion oracle") {
  CounterRng rng(42);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 r(rng.normal(), rng.normal(), rng.normal());
    r *= rng.uniform(0.0, 2.0);
    worst = std::max(worst, (rodrigues(r) - quaternion_rotation(r)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("rodrigues output is a proper rotation") {
  CounterRng rng(7);
  for (int i = 0; i < 1000; ++i) {
    Vec3 r(rng.normal(), rng.normal(), rng.normal());
    const Mat3 m = rodrigues(r);
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rodrigues jacobian matches finite differences") {
  CounterRng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 r(rng.normal(), rng.normal(), rng.normal());
    if (trial < 5) r *= 1e-4;  // exercise the small-angle branch
    const auto jac = rodrigues_jacobian(r);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      Vec3 hi = r, lo = r;
      hi(i) += h;
      lo(i) -= h;
      const Mat3 diff = (rodrigues(hi) - rodrigues(lo)) / (2 * h);
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col)
          CHECK(std::abs(jac(3 * row + col, i) - diff(row, col)) < 1e-5);
    }
  }
}

namespace {

Skeleton chain_skeleton(int k) {
  Skeleton s;
  s.parent.assign(k, -1);
  s.rest_joints.resize(k, 3);
  for (int j = 0; j < k; ++j) {
    if (j > 0) s.parent[j] = j - 1;
    s.rest_joints.row(j) = Eigen::RowVector3d(0.3 * j, 1.0, 0.0);
  }
  return s;
}

// Explicit 4x4 matrix product down each chain.
std::vector<Eigen::Matrix4d> fk_oracle(const Skeleton& skel, const PoseVector& pose,
                                       const MatX3& joints) {
  std::vector<Eigen::Matrix4d> world(skel.joint_count());
  for (int j = 0; j < skel.joint_count(); ++j) {
    Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
    local.topLeftCorner<3, 3>() = quaternion_rotation(pose.joint_rotations.row(j).transpose());
    if (skel.parent[j] < 0) {
      local.topRightCorner<3, 1>() = joints.row(j).transpose() + pose.root_translation;
      world[j] = local;
    } else {
      local.topRightCorner<3, 1>() = (joints.row(j) - joints.row(skel.parent[j])).transpose();
      world[j] = world[skel.parent[j]] * local;
    }
  }
  return world;
}

}  // namespace

TEST_CASE("forward kinematics at rest is pure translation") {
  const Skeleton skel = chain_skeleton(4);
  const PoseVector rest = PoseVector::rest(4);
  const auto world = forward_kinematics(skel, rest, skel.rest_joints);
  for (int j = 0; j < 4; ++j) {
    CHECK((world[j].R - Mat3::Identity()).norm() == 0.0);
    CHECK((world[j].t - skel.rest_joints.row(j).transpose()).norm() < 1e-15);
  }
}

TEST_CASE("forward kinematics composes child rotations") {
  const Skeleton skel = chain_skeleton(2);
  PoseVector pose = PoseVector::rest(2);
  pose.joint_rotations.row(0) = Eigen::RowVector3d(0, 0.3, 0);
  pose.joint_rotations.row(1) = Eigen::RowVector3d(0, 0, M_PI / 2);
  const auto world = forward_kinematics(skel, pose, skel.rest_joints);
  const Mat3 expected = rodrigues(Vec3(0, 0.3, 0)) * rodrigues(Vec3(0, 0, M_PI / 2));
  CHECK((world[1].R - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("forward kinematics matches brute-force matrix chain") {
  CounterRng rng(11);
  const int k = 7;
  Skeleton skel = chain_skeleton(k);
  skel.parent = {-1, 0, 1, 1, 0, 4, 2};  // small tree
  for (int trial = 0; trial < 20; ++trial) {
    const PoseVector pose = random_pose(rng, k, 1.2, 0.4);
    const auto world = forward_kinematics(skel, pose, skel.rest_joints);
    const auto oracle = fk_oracle(skel, pose, skel.rest_joints);
    for (int j = 0; j < k; ++j) {
      CHECK((world[j].R - oracle[j].topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((world[j].t - oracle[j].topRightCorner<3, 1>()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("shape blend basics and naive-sum oracle") {
  const BodyModelBundle model = small_bundle(3);
  const int b = model.shape_dim();
  CHECK(shape_blend(model.shape_basis, Vec::Zero(b)) == model.shape_basis.mean);

  Vec e1 = Vec::Zero(b);
  e1(0) = 1.0;
  CHECK((shape_blend(model.shape_basis, e1) -
         (model.shape_basis.mean + model.shape_basis.components.col(0)))
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  CounterRng rng(5);
  const Vec beta = random_beta(rng, b, 1.0);
  Vec naive = model.shape_basis.mean;
  for (int c = 0; c < b; ++c) naive += beta(c) * model.shape_basis.components.col(c);
  CHECK((shape_blend(model.shape_basis, beta) - naive).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(shape_blend(model.shape_basis, Vec::Zero(b + 1)), DimensionError);
}

TEST_CASE("pose blend vanishes at rest and matches naive loop") {
  const BodyModelBundle model = small_bundle(4);
  const int k = model.joint_count();
  const Vec at_rest = pose_blend(model.pose_basis, PoseVector::rest(k));
  CHECK(at_rest.cwiseAbs().maxCoeff() == 0.0);

  CounterRng rng(6);
  const PoseVector pose = random_pose(rng, k, 1.0, 0.3);
  Vec naive = Vec::Zero(3 * model.vertex_count());
  for (int j = 0; j < k; ++j) {
    const Mat3 r = rodrigues(pose.joint_rotations.row(j).transpose());
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) {
        const double coeff = r(row, col) - (row == col ? 1.0 : 0.0);
        naive += coeff * model.pose_basis.components.col(9 * j + 3 * row + col);
      }
  }
  CHECK((pose_blend(model.pose_basis, pose) - naive).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pose blend with a single nonzero column") {
  BodyModelBundle model = small_bundle(4);
  const int k = model.joint_count();
  model.pose_basis.components.setZero();
  const int c = 9 * 2 + 3 * 0 + 1;  // joint 2, entry R(0,1)
  model.pose_basis.components.col(c) = Vec::Ones(3 * model.vertex_count());

  PoseVector pose = PoseVector::rest(k);
  pose.joint_rotations.row(2) = Eigen::RowVector3d(0, 0, 0.7);
  const Mat3 r = rodrigues(Vec3(0, 0, 0.7));
  const Vec offsets = pose_blend(model.pose_basis, pose);
  CHECK(offsets(0) == doctest::Approx(r(0, 1)).epsilon(1e-14));
}

TEST_CASE("dynamic blend pca") {
  const int n3 = 30, l = 5;
  DynamicBasisPCA basis;
  basis.mean = Vec::LinSpaced(n3, 0.0, 1.0);
  Mat m = Mat::Zero(n3, l);
  for (int c = 0; c < l; ++c) m(c, c) = 1.0;
  basis.components = m;

  CHECK(dynamic_blend_pca(basis, Vec::Zero(l)) == basis.mean);
  Vec e2 = Vec::Zero(l);
  e2(2) = 1.0;
  CHECK((dynamic_blend_pca(basis, e2) - (basis.mean + basis.components.col(2))).norm() == 0.0);
  CHECK_THROWS_AS(dynamic_blend_pca(basis, Vec::Zero(l + 1)), DimensionError);
}

TEST_CASE("assemble rest mesh sums the parts") {
  const BodyModelBundle model = small_bundle(8);
  const int k = model.joint_count();
  const int n3 = 3 * model.vertex_count();
  CounterRng rng(13);
  const Vec beta = random_beta(rng, model.shape_dim());
  const PoseVector pose = random_pose(rng, k);
  Vec dyn(n3);
  for (int i = 0; i < n3; ++i) dyn(i) = 0.01 * rng.normal();

  const Vec expected = flatten_vertices(model.template_mesh.vertices) +
                       shape_blend(model.shape_basis, beta) + pose_blend(model.pose_basis, pose) + dyn;
  CHECK((assemble_rest_mesh(model, beta, pose, &dyn) - expected).cwiseAbs().maxCoeff() < 1e-12);

  const Vec zero_dyn = Vec::Zero(n3);
  CHECK((assemble_rest_mesh(model, beta, pose, &zero_dyn) - assemble_rest_mesh(model, beta, pose))
            .norm() == 0.0);
}

TEST_CASE("regress joints one-hot and centroid rows") {
  MatX3 verts(4, 3);
  verts << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  JointRegressor reg;
  reg.J_map = Mat::Zero(2, 4);
  reg.J_map(0, 2) = 1.0;               // one-hot
  reg.J_map.row(1).setConstant(0.25);  // centroid
  const MatX3 joints = regress_joints(reg, verts);
  CHECK((joints.row(0) - verts.row(2)).norm() == 0.0);
  CHECK((joints.row(1) - Eigen::RowVector3d(0.25, 0.25, 0.25)).norm() < 1e-15);
}

TEST_CASE("pose mesh at rest equals the assembled rest mesh") {
  const BodyModelBundle model = small_bundle(21);
  CounterRng rng(17);
  const Vec beta = random_beta(rng, model.shape_dim());
  const PoseVector rest = PoseVector::rest(model.joint_count());
  const MatX3 posed = pose_mesh(model, beta, rest);
  const MatX3 expected = unflatten_vertices(assemble_rest_mesh(model, beta, rest));
  CHECK((posed - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pose mesh applies a joint rotation to fully weighted vertices") {
  // two joints at distinct centers, two vertices, each glued to one joint
  BodyModelBundle model;
  model.template_mesh.vertices.resize(4, 3);
  model.template_mesh.vertices << 1, 0, 0, 0, 2, 0, 2, 0, 0, 2, 1, 0;
  model.skeleton.parent = {-1, 0};
  model.skeleton.rest_joints.resize(2, 3);
  model.skeleton.rest_joints << 0, 0, 0, 2, 0, 0;
  model.weights.W = Mat::Zero(4, 2);
  model.weights.W(0, 0) = 1.0;
  model.weights.W(1, 0) = 1.0;
  model.weights.W(2, 1) = 1.0;
  model.weights.W(3, 1) = 1.0;
  model.regressor.J_map = Mat::Zero(2, 4);
  model.regressor.J_map(0, 0) = 1.0;  // joint 0 at vertex 0
  model.regressor.J_map(1, 2) = 1.0;  // joint 1 at vertex 2
  model.shape_basis.mean = Vec::Zero(12);
  model.shape_basis.components = Mat::Zero(12, 0);
  model.pose_basis.components = Mat::Zero(12, 18);

  PoseVector pose = PoseVector::rest(2);
  pose.joint_rotations.row(1) = Eigen::RowVector3d(0, 0, M_PI / 2);
  const MatX3 posed = pose_mesh(model, Vec::Zero(0), pose);

  // joint 1 sits at vertex 2 = (2,0,0); vertex 3 = (2,1,0) swings to (1,0,0)
  CHECK((posed.row(3) - Eigen::RowVector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((posed.row(0) - Eigen::RowVector3d(1, 0, 0)).norm() < 1e-12);  // joint 0 untouched
}

TEST_CASE("globally rigid pose applies one rigid transform to every vertex") {
  const BodyModelBundle model = small_bundle(23);
  CounterRng rng(23);
  const Vec beta = random_beta(rng, model.shape_dim());
  PoseVector pose = PoseVector::rest(model.joint_count());
  pose.joint_rotations.row(0) = Eigen::RowVector3d(0.4, -0.2, 0.9);
  pose.root_translation = Vec3(0.1, -0.3, 0.2);

  const MatX3 rest = unflatten_vertices(assemble_rest_mesh(model, beta, pose));
  const MatX3 posed = pose_mesh(model, beta, pose);
  const Mat3 r = rodrigues(Vec3(0.4, -0.2, 0.9));
  const Vec3 j0 = shaped_joints(model, beta).row(0).transpose();
  for (int i = 0; i < model.vertex_count(); ++i) {
    const Vec3 expected = r * (rest.row(i).transpose() - j0) + j0 + pose.root_translation;
    CHECK((posed.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("unpose inverts pose over random draws") {
  const BodyModelBundle model = small_bundle(31);
  CounterRng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec beta = random_beta(rng, model.shape_dim());
    const PoseVector pose = random_pose(rng, model.joint_count(), 0.8, 0.2);
    const MatX3 rest = unflatten_vertices(assemble_rest_mesh(model, beta, pose));
    const MatX3 posed = pose_mesh(model, beta, pose);
    const MatX3 recovered = unpose_mesh(model, posed, beta, pose);
    const double rel = (recovered - rest).norm() / rest.norm();
    CHECK(rel < 1e-9);
  }
}

TEST_CASE("unpose at rest is the identity map") {
  const BodyModelBundle model = small_bundle(33);
  const PoseVector rest = PoseVector::rest(model.joint_count());
  const Vec beta = Vec::Zero(model.shape_dim());
  const MatX3 posed = pose_mesh(model, beta, rest);
  const MatX3 recovered = unpose_mesh(model, posed, beta, rest);
  CHECK((recovered - posed).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("opposing half-weights on counter-rotated joints raise the singular error") {
  BodyModelBundle model;
  model.template_mesh.vertices.resize(4, 3);
  model.template_mesh.vertices << 0.5, 0, 0, 0, 0.5, 0, -0.5, 0, 0, 0, -0.5, 0;
  model.skeleton.parent = {-1, 0};
  model.skeleton.rest_joints = MatX3::Zero(2, 3);
  model.weights.W = Mat::Zero(4, 2);
  model.weights.W.col(0).setConstant(0.5);
  model.weights.W.col(1).setConstant(0.5);
  model.regressor.J_map = Mat::Zero(2, 4);
  model.regressor.J_map(0, 0) = 1.0;
  model.regressor.J_map(1, 0) = 1.0;
  model.shape_basis.mean = Vec::Zero(12);
  model.shape_basis.components = Mat::Zero(12, 0);
  model.pose_basis.components = Mat::Zero(12, 18);

  // +90 and -90 about z: the xy block of the blended matrix cancels to zero.
  // Both joints regress to vertex 0 so the blend is a pure rotation mix.
  PoseVector pose = PoseVector::rest(2);
  pose.joint_rotations.row(0) = Eigen::RowVector3d(0, 0, M_PI / 2);
  pose.joint_rotations.row(1) = Eigen::RowVector3d(0, 0, -M_PI);  // world: -pi/2

  const Mat3 blend = 0.5 * rodrigues(Vec3(0, 0, M_PI / 2)) + 0.5 * rodrigues(Vec3(0, 0, -M_PI / 2));
  REQUIRE(std::abs(blend.determinant()) < 1e-12);

  const MatX3 observed = MatX3::Zero(4, 3);
  CHECK_THROWS_AS(unpose_mesh(model, observed, Vec::Zero(0), pose), SingularSkinningError);
}

TEST_CASE("extract dynamic offset recovers injected offsets") {
  const BodyModelBundle model = small_bundle(37);
  CounterRng rng(37);
  const Vec beta = random_beta(rng, model.shape_dim());
  const PoseVector pose = random_pose(rng, model.joint_count(), 0.6, 0.15);
  const int n3 = 3 * model.vertex_count();

  SUBCASE("zero offsets") {
    const MatX3 observed = pose_mesh(model, beta, pose);
    CHECK(extract_dynamic_offset(model, observed, beta, pose).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("known injected offsets") {
    Vec injected(n3);
    for (int i = 0; i < n3; ++i) injected(i) = 0.02 * rng.normal();
    const MatX3 observed = pose_mesh(model, beta, pose, &injected);
    const Vec extracted = extract_dynamic_offset(model, observed, beta, pose);
    CHECK((extracted - injected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("blend operations are linear in their coefficients") {
  const BodyModelBundle model = small_bundle(41);
  CounterRng rng(41);
  const int b = model.shape_dim();
  const Vec b1 = random_beta(rng, b, 1.0);
  const Vec b2 = random_beta(rng, b, 1.0);
  const double a = 0.7, c = -1.3;
  const Vec& mu = model.shape_basis.mean;
  const Vec lhs = shape_blend(model.shape_basis, a * b1 + c * b2) - mu;
  const Vec rhs =
      a * (shape_blend(model.shape_basis, b1) - mu) + c * (shape_blend(model.shape_basis, b2) - mu);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pose vector flat round trip") {
  CounterRng rng(43);
  const PoseVector pose = random_pose(rng, 5);
  const PoseVector back = PoseVector::from_flat(pose.flatten());
  CHECK((back.root_translation - pose.root_translation).norm() == 0.0);
  CHECK((back.joint_rotations - pose.joint_rotations).norm() == 0.0);
  CHECK(pose.dim() == 18);
  CHECK_THROWS_AS(PoseVector::from_flat(Vec::Zero(7)), DimensionError);
}

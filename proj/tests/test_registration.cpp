#include <cmath>

#include "doctest.h"
#include "dskin/errors.hpp"
#include "dskin/registration.hpp"
#include "test_helpers.hpp"

using namespace dskin;
using namespace dskin::testing;

namespace {

// Central finite differences of the alignment objective over (beta, pose).
void fd_gradient(const BodyModelBundle& model, const Vec& beta, const PoseVector& pose,
                 const MatX3& target, Vec& beta_fd, Vec& pose_fd, double h = 1e-5) {
  beta_fd.resize(beta.size());
  for (int i = 0; i < beta.size(); ++i) {
    Vec hi = beta, lo = beta;
    hi(i) += h;
    lo(i) -= h;
    beta_fd(i) = (alignment_objective(model, hi, pose, target) -
                  alignment_objective(model, lo, pose, target)) /
                 (2 * h);
  }
  const Vec flat = pose.flatten();
  pose_fd.resize(flat.size());
  for (int i = 0; i < flat.size(); ++i) {
    Vec hi = flat, lo = flat;
    hi(i) += h;
    lo(i) -= h;
    pose_fd(i) = (alignment_objective(model, beta, PoseVector::from_flat(hi), target) -
                  alignment_objective(model, beta, PoseVector::from_flat(lo), target)) /
                 (2 * h);
  }
}

double max_rel_error(const Vec& analytic, const Vec& fd) {
  double worst = 0.0;
  for (int i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic(i)), std::abs(fd(i)), 1e-6});
    worst = std::max(worst, std::abs(analytic(i) - fd(i)) / scale);
  }
  return worst;
}

OptimizerSettings desk_settings() {
  OptimizerSettings s;
  s.learning_rate = 1e-3;
  s.momentum = 0.9;
  s.max_iters = 20000;
  s.convergence_tol = 1e-7;
  return s;
}

}  // namespace

TEST_CASE("alignment gradient matches finite differences") {
  const BodyModelBundle model = small_bundle(51, 100);
  CounterRng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec beta = random_beta(rng, model.shape_dim(), 0.6);
    const PoseVector pose = random_pose(rng, model.joint_count(), 0.7, 0.2);
    const Vec target_beta = random_beta(rng, model.shape_dim(), 0.6);
    const PoseVector target_pose = random_pose(rng, model.joint_count(), 0.7, 0.2);
    const MatX3 target = pose_mesh(model, target_beta, target_pose);

    const AlignmentGradient grad = alignment_gradient(model, beta, pose, target);
    Vec beta_fd, pose_fd;
    fd_gradient(model, beta, pose, target, beta_fd, pose_fd);
    CHECK(max_rel_error(grad.beta_grad, beta_fd) < 1e-4);
    CHECK(max_rel_error(grad.pose_grad, pose_fd) < 1e-4);
  }
}

TEST_CASE("gradient vanishes at the exact optimum") {
  const BodyModelBundle model = small_bundle(52, 100);
  CounterRng rng(52);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.5);
  const PoseVector pose = random_pose(rng, model.joint_count(), 0.6, 0.2);
  const MatX3 target = pose_mesh(model, beta, pose);
  const AlignmentGradient grad = alignment_gradient(model, beta, pose, target);
  CHECK(grad.beta_grad.norm() < 1e-8);
  CHECK(grad.pose_grad.norm() < 1e-8);
  CHECK(grad.residual < 1e-10);
}

TEST_CASE("root translation gradient is exactly twice the residual sum") {
  const BodyModelBundle model = small_bundle(53, 100);
  CounterRng rng(53);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.5);
  const PoseVector pose = random_pose(rng, model.joint_count(), 0.6, 0.2);
  const MatX3 target = pose_mesh(model, random_beta(rng, model.shape_dim(), 0.5),
                                 random_pose(rng, model.joint_count(), 0.6, 0.2));

  const MatX3 posed = pose_mesh(model, beta, pose);
  const Vec3 expected = 2.0 * (posed - target).colwise().sum().transpose();
  const AlignmentGradient grad = alignment_gradient(model, beta, pose, target);
  CHECK((grad.pose_grad.segment<3>(0) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fit recovers shape and pose from an exact first frame") {
  const BodyModelBundle model = small_bundle(54, 100);
  CounterRng rng(54);
  Vec beta_true = random_beta(rng, model.shape_dim(), 0.4);
  const MatX3 s1 = pose_mesh(model, beta_true, PoseVector::rest(model.joint_count()));

  const ShapeFitResult fit = fit_shape_and_first_pose(model, s1, desk_settings());
  CHECK(fit.residual < 1e-6);
  CHECK((fit.beta - beta_true).norm() < 1e-3);
  CHECK(fit.pose.flatten().cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("fit of the rest mesh returns zero shape and pose") {
  const BodyModelBundle model = small_bundle(55, 100);
  const MatX3 s1 = pose_mesh(model, Vec::Zero(model.shape_dim()),
                             PoseVector::rest(model.joint_count()));
  const ShapeFitResult fit = fit_shape_and_first_pose(model, s1, desk_settings());
  CHECK(fit.converged);
  CHECK(fit.beta.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(fit.pose.flatten().cwiseAbs().maxCoeff() < 1e-6);
  CHECK(fit.iterations <= 2);  // starts at the global optimum
}

TEST_CASE("fit residual sits at the noise floor under additive noise") {
  const BodyModelBundle model = small_bundle(56, 100);
  CounterRng rng(56);
  const Vec beta_true = random_beta(rng, model.shape_dim(), 0.3);
  MatX3 s1 = pose_mesh(model, beta_true, PoseVector::rest(model.joint_count()));
  const double sigma = 1e-3;  // 1 mm
  for (int i = 0; i < s1.rows(); ++i)
    for (int c = 0; c < 3; ++c) s1(i, c) += sigma * rng.normal();

  const ShapeFitResult fit = fit_shape_and_first_pose(model, s1, desk_settings());
  const double expected = sigma * std::sqrt(3.0 * model.vertex_count());
  CHECK(fit.residual > expected / 2);
  CHECK(fit.residual < expected * 2);
}

TEST_CASE("per-frame pose fit recovers a known pose") {
  const BodyModelBundle model = small_bundle(57, 100);
  CounterRng rng(57);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.3);
  const PoseSequence motion = gen_motion(MotionKind::Hop, 30, 60.0, 57);
  const PoseVector theta_true = motion.frames[29];
  const MatX3 target = pose_mesh(model, beta, theta_true);

  // warm start from the neighbouring frame, as the sequence fit would
  const PoseFitResult fit = fit_pose(model, beta, target, motion.frames[28], desk_settings());
  CHECK((fit.pose.flatten() - theta_true.flatten()).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("refitting the same frame converges immediately") {
  const BodyModelBundle model = small_bundle(58, 100);
  CounterRng rng(58);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.3);
  const PoseVector theta = random_pose(rng, model.joint_count(), 0.4, 0.1);
  const MatX3 target = pose_mesh(model, beta, theta);

  OptimizerSettings settings = desk_settings();
  settings.convergence_tol = 1e-6;
  const PoseFitResult first = fit_pose(model, beta, target, theta, settings);
  CHECK(first.converged);
  CHECK(first.iterations <= 2);

  // a fit that has reached tolerance stays put when rerun from its solution
  const PoseFitResult again = fit_pose(model, beta, target, first.pose, settings);
  CHECK(again.converged);
  CHECK(again.iterations <= 2);
}

TEST_CASE("objective is non-increasing across accepted iterations") {
  // indirect check: final residual never exceeds the starting residual
  const BodyModelBundle model = small_bundle(59, 100);
  CounterRng rng(59);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.4);
  const PoseVector start = random_pose(rng, model.joint_count(), 0.3, 0.05);
  const MatX3 target = pose_mesh(model, beta, random_pose(rng, model.joint_count(), 0.3, 0.05));

  const double f0 = alignment_objective(model, beta, start, target);
  OptimizerSettings settings = desk_settings();
  settings.max_iters = 50;  // deliberately starved
  const PoseFitResult fit = fit_pose(model, beta, target, start, settings);
  CHECK(fit.residual * fit.residual <= f0 + 1e-12);
}

TEST_CASE("build_training_pairs recovers injected offsets on oracle data") {
  const BodyModelBundle model = small_bundle(60, 150);
  CounterRng rng(60);
  const Vec beta = random_beta(rng, model.shape_dim(), 0.3);
  const PoseSequence poses = gen_motion(MotionKind::Hop, 25, 60.0, 60);
  const SoftTissueResult truth = simulate_soft_tissue(model, beta, poses);

  MeshSequence seq = truth.meshes;
  seq.subject_id = "s0";
  const TrainingPairSet pairs = build_training_pairs(model, {seq}, desk_settings());
  REQUIRE(pairs.failures.empty());
  REQUIRE(pairs.sequences.size() == 1);
  const TrainingSequencePairs& p = pairs.sequences[0];
  REQUIRE(p.deltas.rows() == 25);

  double err_sum = 0.0;
  int count = 0;
  for (int t = 0; t < 25; ++t)
    for (int i = 0; i < model.vertex_count(); ++i) {
      err_sum += (p.deltas.row(t).segment<3>(3 * i) -
                  truth.offsets.frames.row(t).segment<3>(3 * i)).norm();
      ++count;
    }
  CHECK(err_sum / count < 1e-3);  // < 1 mm mean per-vertex
}

TEST_CASE("still motions with zero softness give zero offsets") {
  const BodyModelBundle model = small_bundle(61, 120);
  const Vec beta = Vec::Zero(model.shape_dim());
  const PoseSequence poses = gen_motion(MotionKind::Still, 5, 60.0, 61);
  SoftnessCoupling coupling;
  coupling.mass_coupling = 0.0;
  const SoftTissueResult truth = simulate_soft_tissue(model, beta, poses, coupling);

  MeshSequence seq = truth.meshes;
  const TrainingPairSet pairs = build_training_pairs(model, {seq}, desk_settings());
  REQUIRE(pairs.sequences.size() == 1);
  CHECK(pairs.sequences[0].deltas.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("single-frame sequence emits one pair") {
  const BodyModelBundle model = small_bundle(62, 120);
  MeshSequence seq;
  seq.fps = 60.0;
  seq.frames.push_back(pose_mesh(model, Vec::Zero(model.shape_dim()),
                                 PoseVector::rest(model.joint_count())));
  const TrainingPairSet pairs = build_training_pairs(model, {seq}, desk_settings());
  REQUIRE(pairs.sequences.size() == 1);
  CHECK(pairs.sequences[0].thetas.rows() == 1);
  CHECK(pairs.sequences[0].deltas.rows() == 1);
}

TEST_CASE("failed sequences are reported and the rest continue") {
  const BodyModelBundle model = small_bundle(63, 120);
  MeshSequence bad;
  bad.motion_id = "bad";
  bad.frames.push_back(MatX3::Zero(3, 3));  // wrong vertex count
  MeshSequence good;
  good.motion_id = "good";
  good.frames.push_back(pose_mesh(model, Vec::Zero(model.shape_dim()),
                                  PoseVector::rest(model.joint_count())));

  const TrainingPairSet pairs = build_training_pairs(model, {bad, good}, desk_settings());
  CHECK(pairs.failures.size() == 1);
  REQUIRE(pairs.sequences.size() == 1);
  CHECK(pairs.sequences[0].motion_id == "good");
}

TEST_CASE("optimizer settings validation") {
  OptimizerSettings s;
  s.learning_rate = 0.0;
  CHECK_THROWS_AS(s.validate(), DataError);
  s = OptimizerSettings{};
  s.momentum = 1.0;
  CHECK_THROWS_AS(s.validate(), DataError);
}

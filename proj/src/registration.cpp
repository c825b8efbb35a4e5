#include "dskin/registration.hpp"

#include <cmath>
#include <future>
#include <utility>

#include "dskin/errors.hpp"

namespace dskin {

namespace {

struct AlignmentForward {
  double objective = 0.0;
  MatX3 residual;                     // 2 (v' - s) per vertex
  MatX3 rest;                         // rest vertices
  MatX3 joints;                       // J(beta)
  std::vector<RigidTransform> local;  // FK local transforms
  std::vector<RigidTransform> world;  // FK world transforms
};

AlignmentForward alignment_forward(const BodyModelBundle& model, const Vec& beta,
                                   const PoseVector& pose, const MatX3& target) {
  if (target.rows() != model.vertex_count())
    throw DimensionError("alignment: target vertex count mismatch");
  if (beta.size() != model.shape_dim()) throw DimensionError("alignment: |beta| != B");
  if (pose.joint_count() != model.joint_count())
    throw DimensionError("alignment: pose joint count mismatch");

  AlignmentForward fwd;
  const int n = model.vertex_count();
  const int k = model.joint_count();

  Vec shaped = flatten_vertices(model.template_mesh.vertices) + shape_blend(model.shape_basis, beta);
  fwd.joints = regress_joints(model.regressor, unflatten_vertices(shaped));
  fwd.rest = unflatten_vertices(shaped + pose_blend(model.pose_basis, pose));

  fwd.local.resize(k);
  fwd.world.resize(k);
  for (int j = 0; j < k; ++j) {
    fwd.local[j].R = rodrigues(pose.joint_rotations.row(j).transpose());
    if (model.skeleton.parent[j] < 0) {
      fwd.local[j].t = fwd.joints.row(j).transpose() + pose.root_translation;
      fwd.world[j] = fwd.local[j];
    } else {
      fwd.local[j].t = (fwd.joints.row(j) - fwd.joints.row(model.skeleton.parent[j])).transpose();
      fwd.world[j] = fwd.world[model.skeleton.parent[j]].compose(fwd.local[j]);
    }
  }

  fwd.residual.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = model.weights.W(i, j);
      if (w == 0.0) continue;
      a += w * fwd.world[j].R;
      b += w * (fwd.world[j].t - fwd.world[j].R * fwd.joints.row(j).transpose());
    }
    const Vec3 posed = a * fwd.rest.row(i).transpose() + b;
    const Vec3 diff = posed - target.row(i).transpose();
    fwd.objective += diff.squaredNorm();
    fwd.residual.row(i) = 2.0 * diff.transpose();
  }
  return fwd;
}

Vec vec_rowmajor(const Mat3& m) {
  Vec v(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v(3 * r + c) = m(r, c);
  return v;
}

}  // namespace

void OptimizerSettings::validate() const {
  if (learning_rate <= 0.0) throw DataError("optimizer settings: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw DataError("optimizer settings: momentum in [0, 1)");
  if (max_iters < 1) throw DataError("optimizer settings: max_iters must be >= 1");
}

double alignment_objective(const BodyModelBundle& model, const Vec& beta, const PoseVector& pose,
                           const MatX3& target) {
  return alignment_forward(model, beta, pose, target).objective;
}

AlignmentGradient alignment_gradient(const BodyModelBundle& model, const Vec& beta,
                                     const PoseVector& pose, const MatX3& target) {
  const AlignmentForward fwd = alignment_forward(model, beta, pose, target);
  const int n = model.vertex_count();
  const int k = model.joint_count();

  // reverse through skinning: v' = sum_k w (R_k v + t_k - R_k j_k)
  MatX3 d_rest(n, 3);
  std::vector<Mat3> dR(k, Mat3::Zero());
  std::vector<Vec3> dt(k, Vec3::Zero());
  MatX3 d_joints = MatX3::Zero(k, 3);
  for (int i = 0; i < n; ++i) {
    const Vec3 r_i = fwd.residual.row(i).transpose();
    const Vec3 v_i = fwd.rest.row(i).transpose();
    Mat3 a_blend = Mat3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = model.weights.W(i, j);
      if (w == 0.0) continue;
      a_blend += w * fwd.world[j].R;
      dR[j] += w * r_i * v_i.transpose();
      dt[j] += w * r_i;
    }
    d_rest.row(i) = (a_blend.transpose() * r_i).transpose();
  }
  for (int j = 0; j < k; ++j) {
    const Vec3 j_pos = fwd.joints.row(j).transpose();
    dR[j] -= dt[j] * j_pos.transpose();             // b_k = t_k - R_k j_k
    d_joints.row(j) -= (fwd.world[j].R.transpose() * dt[j]).transpose();
  }

  // reverse through the kinematic chain
  AlignmentGradient grad;
  grad.objective = fwd.objective;
  grad.residual = std::sqrt(fwd.objective);
  grad.pose_grad = Vec::Zero(3 * k + 3);
  for (int j = k - 1; j >= 0; --j) {
    Mat3 dR_local;
    Vec3 dt_local;
    const int p = model.skeleton.parent[j];
    if (p >= 0) {
      dR_local = fwd.world[p].R.transpose() * dR[j];
      dt_local = fwd.world[p].R.transpose() * dt[j];
      dR[p] += dR[j] * fwd.local[j].R.transpose() + dt[j] * fwd.local[j].t.transpose();
      dt[p] += dt[j];
      d_joints.row(j) += dt_local.transpose();
      d_joints.row(p) -= dt_local.transpose();
    } else {
      dR_local = dR[j];
      dt_local = dt[j];
      d_joints.row(j) += dt_local.transpose();
      grad.pose_grad.segment<3>(0) = dt_local;  // root translation
    }
    const Eigen::Matrix<double, 9, 3> jac =
        rodrigues_jacobian(pose.joint_rotations.row(j).transpose());
    grad.pose_grad.segment<3>(3 + 3 * j) = jac.transpose() * vec_rowmajor(dR_local);
  }

  // pose blend path
  Vec d_rest_flat = flatten_vertices(d_rest);
  const Vec d_feat = model.pose_basis.components.transpose() * d_rest_flat;
  for (int j = 0; j < k; ++j) {
    const Eigen::Matrix<double, 9, 3> jac =
        rodrigues_jacobian(pose.joint_rotations.row(j).transpose());
    grad.pose_grad.segment<3>(3 + 3 * j) += jac.transpose() * d_feat.segment<9>(9 * j);
  }

  // shape path: shaped vertices feed both the rest mesh and the joint regressor
  Vec d_shaped = d_rest_flat + flatten_vertices(model.regressor.J_map.transpose() * d_joints);
  grad.beta_grad = model.shape_basis.components.transpose() * d_shaped;
  return grad;
}

namespace {

struct SgdProblem {
  const BodyModelBundle& model;
  const MatX3& target;
  bool fit_beta;
  Vec fixed_beta;  // used when fit_beta is false

  std::pair<double, Vec> eval(const Vec& x) const {
    Vec beta;
    PoseVector pose;
    if (fit_beta) {
      beta = x.head(model.shape_dim());
      pose = PoseVector::from_flat(x.tail(x.size() - model.shape_dim()));
    } else {
      beta = fixed_beta;
      pose = PoseVector::from_flat(x);
    }
    AlignmentGradient g = alignment_gradient(model, beta, pose, target);
    Vec grad(x.size());
    if (fit_beta) {
      grad.head(model.shape_dim()) = g.beta_grad;
      grad.tail(g.pose_grad.size()) = g.pose_grad;
    } else {
      grad = g.pose_grad;
    }
    return {g.objective, std::move(grad)};
  }
};

struct SgdOutcome {
  Vec x;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

SgdOutcome run_sgd(const SgdProblem& problem, Vec x, const OptimizerSettings& settings) {
  settings.validate();
  auto [f, g] = problem.eval(x);
  if (!std::isfinite(f) || !g.allFinite())
    throw OptimizationFailureError("fit: non-finite objective or gradient at the start");

  SgdOutcome out;
  Vec velocity = Vec::Zero(x.size());
  Vec x_best = x;
  double f_best = f;
  int rejects = 0;

  for (int it = 1; it <= settings.max_iters; ++it) {
    out.iterations = it;
    if (g.norm() < settings.convergence_tol) {
      out.converged = true;
      break;
    }
    const Vec v_trial = settings.momentum * velocity + g;
    const Vec x_trial = x - settings.learning_rate * v_trial;
    auto [f_trial, g_trial] = problem.eval(x_trial);
    if (!std::isfinite(f_trial) || !g_trial.allFinite())
      throw OptimizationFailureError("fit: NaN gradient during optimization");
    if (settings.momentum_restart && f_trial > f) {
      // reject, restart momentum; bail out if plain steps keep overshooting
      velocity.setZero();
      if (++rejects >= 8) break;
      continue;
    }
    rejects = 0;
    velocity = v_trial;
    x = x_trial;
    f = f_trial;
    g = std::move(g_trial);
    if (f < f_best) {
      f_best = f;
      x_best = x;
    }
  }
  out.x = std::move(x_best);
  out.objective = f_best;
  return out;
}

}  // namespace

ShapeFitResult fit_shape_and_first_pose(const BodyModelBundle& model, const MatX3& first_frame,
                                        const OptimizerSettings& settings) {
  const int b = model.shape_dim();
  const int k = model.joint_count();
  Vec x0 = Vec::Zero(b + 3 * k + 3);
  SgdProblem problem{model, first_frame, true, Vec()};
  SgdOutcome out = run_sgd(problem, std::move(x0), settings);

  ShapeFitResult result;
  result.beta = out.x.head(b);
  result.pose = PoseVector::from_flat(out.x.tail(3 * k + 3));
  result.residual = std::sqrt(out.objective);
  result.iterations = out.iterations;
  result.converged = out.converged;
  return result;
}

PoseFitResult fit_pose(const BodyModelBundle& model, const Vec& beta, const MatX3& frame,
                       const PoseVector& theta_init, const OptimizerSettings& settings) {
  SgdProblem problem{model, frame, false, beta};
  SgdOutcome out = run_sgd(problem, theta_init.flatten(), settings);

  PoseFitResult result;
  result.pose = PoseVector::from_flat(out.x);
  result.residual = std::sqrt(out.objective);
  result.iterations = out.iterations;
  result.converged = out.converged;
  return result;
}

FitResult fit_sequence(const BodyModelBundle& model, const MeshSequence& sequence,
                       const OptimizerSettings& settings) {
  const int frames = sequence.frame_count();
  if (frames < 1) throw DataError("fit_sequence: empty sequence");

  FitResult result;
  result.offset_sequence = Mat::Zero(frames, 3 * model.vertex_count());

  const ShapeFitResult first = fit_shape_and_first_pose(model, sequence.frames[0], settings);
  result.beta = first.beta;
  result.warning = !first.converged;

  PoseVector theta = first.pose;
  for (int t = 0; t < frames; ++t) {
    double residual;
    int iterations;
    if (t == 0) {
      residual = first.residual;
      iterations = first.iterations;
    } else {
      PoseFitResult fit = fit_pose(model, result.beta, sequence.frames[t], theta, settings);
      theta = fit.pose;
      residual = fit.residual;
      iterations = fit.iterations;
      result.warning = result.warning || !fit.converged;
    }
    result.pose_sequence.push_back(theta);
    result.residuals.push_back(residual);
    result.iteration_counts.push_back(iterations);
    result.offset_sequence.row(t) =
        extract_dynamic_offset(model, sequence.frames[t], result.beta, theta).transpose();
  }
  return result;
}

TrainingPairSet build_training_pairs(const BodyModelBundle& model,
                                     const std::vector<MeshSequence>& sequences,
                                     const OptimizerSettings& settings, int threads) {
  TrainingPairSet set;
  set.joint_count = model.joint_count();
  set.vertex_count = model.vertex_count();

  std::vector<std::optional<TrainingSequencePairs>> slots(sequences.size());
  std::vector<std::string> errors(sequences.size());

  auto fit_one = [&](std::size_t s) {
    const MeshSequence& seq = sequences[s];
    try {
      FitResult fit = fit_sequence(model, seq, settings);
      TrainingSequencePairs pairs;
      pairs.subject_id = seq.subject_id;
      pairs.motion_id = seq.motion_id;
      pairs.beta = fit.beta;
      pairs.residuals = fit.residuals;
      pairs.warning = fit.warning;
      const int frames = seq.frame_count();
      pairs.thetas.resize(frames, 3 * model.joint_count() + 3);
      for (int t = 0; t < frames; ++t) pairs.thetas.row(t) = fit.pose_sequence[t].flatten().transpose();
      pairs.deltas = std::move(fit.offset_sequence);
      slots[s] = std::move(pairs);
    } catch (const std::exception& e) {
      errors[s] = seq.subject_id + "/" + seq.motion_id + ": " + e.what();
    }
  };

  if (threads <= 1) {
    for (std::size_t s = 0; s < sequences.size(); ++s) fit_one(s);
  } else {
    // sequences are independent; results land in per-sequence slots so the
    // output is identical to the serial order
    std::vector<std::future<void>> futures;
    std::size_t next = 0;
    while (next < sequences.size()) {
      futures.clear();
      for (int w = 0; w < threads && next < sequences.size(); ++w, ++next)
        futures.push_back(std::async(std::launch::async, fit_one, next));
      for (auto& f : futures) f.get();
    }
  }

  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (slots[s]) set.sequences.push_back(std::move(*slots[s]));
    if (!errors[s].empty()) set.failures.push_back(errors[s]);
  }
  return set;
}

}  // namespace dskin

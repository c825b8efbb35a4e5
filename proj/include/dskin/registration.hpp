#pragma once

#include <string>
#include <vector>

#include "dskin/body_model.hpp"
#include "dskin/synthetic_world.hpp"

namespace dskin {

struct OptimizerSettings {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  int max_iters = 2000;
  double convergence_tol = 1e-6;  // stop when the gradient norm falls below this
  bool momentum_restart = true;   // reject the step and zero velocity when the objective rises

  void validate() const;
};

// Gradient of the squared alignment residual || W(T + M_S(beta) + M_P(theta)) - S ||^2
// with respect to beta and the flat pose vector.
struct AlignmentGradient {
  Vec beta_grad;        // B
  Vec pose_grad;        // 3K + 3, pose flat layout
  double objective;     // squared residual
  double residual;      // sqrt(objective), meters
};

AlignmentGradient alignment_gradient(const BodyModelBundle& model, const Vec& beta,
                                     const PoseVector& pose, const MatX3& target);

double alignment_objective(const BodyModelBundle& model, const Vec& beta,
                           const PoseVector& pose, const MatX3& target);

struct ShapeFitResult {
  Vec beta;
  PoseVector pose;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct PoseFitResult {
  PoseVector pose;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Joint SGD-with-momentum fit of (beta, theta_1) against the first frame.
ShapeFitResult fit_shape_and_first_pose(const BodyModelBundle& model, const MatX3& first_frame,
                                        const OptimizerSettings& settings);

// Per-frame pose fit with beta frozen, warm-started from theta_init.
PoseFitResult fit_pose(const BodyModelBundle& model, const Vec& beta, const MatX3& frame,
                       const PoseVector& theta_init, const OptimizerSettings& settings);

struct FitResult {
  Vec beta;
  std::vector<PoseVector> pose_sequence;
  Mat offset_sequence;  // T x 3N
  std::vector<double> residuals;
  std::vector<int> iteration_counts;
  bool warning = false;  // some fit hit max_iters without reaching tolerance
};

FitResult fit_sequence(const BodyModelBundle& model, const MeshSequence& sequence,
                       const OptimizerSettings& settings);

struct TrainingSequencePairs {
  std::string subject_id;
  std::string motion_id;
  Vec beta;
  Mat thetas;  // T x (3K + 3)
  Mat deltas;  // T x 3N
  std::vector<double> residuals;
  bool warning = false;
};

struct TrainingPairSet {
  std::vector<TrainingSequencePairs> sequences;  // motion-major order
  std::vector<std::string> failures;             // per-sequence error notes
  int joint_count = 0;
  int vertex_count = 0;
};

// Fit every sequence, extract offsets, keep going past per-sequence failures.
TrainingPairSet build_training_pairs(const BodyModelBundle& model,
                                     const std::vector<MeshSequence>& sequences,
                                     const OptimizerSettings& settings, int threads = 1);

}  // namespace dskin

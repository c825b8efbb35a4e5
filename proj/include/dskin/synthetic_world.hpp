#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dskin/body_model.hpp"

namespace dskin {

// Maps shape coefficients to per-vertex oscillator parameters. The scalar
// softness factor is 1 + beta_gain * beta[0], and it scales the mass coupling
// only, so offset amplitude is exactly linear in it.
struct SoftnessCoupling {
  double stiffness = 30.0;      // base k, 1/s^2
  double damping = 3.0;         // base c, 1/s
  double mass_coupling = 0.06;  // base response to joint acceleration
  double beta_gain = 1.0;

  double softness(const Vec& beta) const;
};

struct SyntheticConfig {
  int n_verts = 600;  // target; actual count is ring-aligned, reported by the bundle
  int n_joints = 6;
  int n_shape_pcs = 4;
  std::uint64_t seed = 0;
  double fps = 60.0;
  SoftnessCoupling softness;
  double pose_blend_scale = 0.002;  // max-abs of each pose-blend column, meters

  void validate() const;
};

struct PoseSequence {
  std::vector<PoseVector> frames;
  double fps = 60.0;
  std::string motion_id;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

struct MeshSequence {
  std::vector<MatX3> frames;
  double fps = 60.0;
  std::string subject_id;
  std::string motion_id;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int vertex_count() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
};

struct OffsetSequence {
  Mat frames;  // T x 3N, rest-pose space
  double fps = 60.0;
  std::string subject_id;
  std::string motion_id;

  int frame_count() const { return static_cast<int>(frames.rows()); }
};

enum class MotionKind { Still, Hop, JumpingJack, RunInPlace, ShakeHips };

MotionKind motion_kind_from_string(const std::string& name);
std::string to_string(MotionKind kind);

// Motion base frequencies in Hz, before the per-seed jitter.
double motion_base_frequency(MotionKind kind);

// Capsule-segment humanoid with smooth blend weights, orthonormal shape PCs
// (first PC is uniform girth scaling) and a small smooth pose-blend basis.
BodyModelBundle gen_template(const SyntheticConfig& config);

// C1-smooth sinusoid joint curves; Still returns the rest pose every frame.
// joint_count must match the rig the sequence will drive.
PoseSequence gen_motion(MotionKind kind, int frame_count, double fps, std::uint64_t seed,
                        int joint_count = 6);

// Per-vertex softness field in [0, 1], concentrated on belly/chest/thigh bumps.
Vec softness_region_field(const BodyModelBundle& model);

struct SoftTissueResult {
  MeshSequence meshes;
  OffsetSequence offsets;  // injected ground truth for the extraction path
};

// Damped per-vertex oscillator in rest-pose space, driven by the dominant
// joint's rigid acceleration expressed in that joint's rest frame:
//   d_{t+1} = d_t + h u_t
//   u_{t+1} = u_t + h (-k_i d_t - c_i u_t - m_i a_t)
// Throws SimulationDivergenceError if offsets exceed 10x body scale.
SoftTissueResult simulate_soft_tissue(const BodyModelBundle& model, const Vec& beta,
                                      const PoseSequence& poses,
                                      const SoftnessCoupling& coupling = {});

}  // namespace dskin

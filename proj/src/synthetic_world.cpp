#include "dskin/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dskin/errors.hpp"
#include "dskin/rng.hpp"

namespace dskin {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;
constexpr int kRingSize = 8;

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Segment {
  Vec3 a;           // start point (at the owning joint's parent side)
  Vec3 b;           // end point
  double radius;
  int owner;        // joint that carries most of the weight
  int blend_to;     // joint blended in near the a end, -1 for none
  double taper;     // radius multiplier at the b end
};

struct RigLayout {
  std::vector<int> parent;
  MatX3 joints;
  std::vector<Segment> segments;
};

RigLayout humanoid_layout(int n_joints) {
  struct JointDef {
    Vec3 pos;
    int parent;
  };
  std::vector<JointDef> defs = {
      {{0.00, 0.95, 0.0}, -1},  // pelvis
      {{0.00, 1.35, 0.0}, 0},   // chest
      {{-0.12, 0.90, 0.0}, 0},  // left hip
      {{0.12, 0.90, 0.0}, 0},   // right hip
      {{-0.20, 1.30, 0.0}, 1},  // left shoulder
      {{0.20, 1.30, 0.0}, 1},   // right shoulder
  };
  for (int k = 6; k < n_joints; ++k)
    defs.push_back({{0.0, 1.45 + 0.12 * (k - 6), 0.0}, k == 6 ? 1 : k - 1});
  defs.resize(std::min<std::size_t>(defs.size(), n_joints));

  RigLayout rig;
  const int k = static_cast<int>(defs.size());
  rig.joints.resize(k, 3);
  for (int j = 0; j < k; ++j) {
    rig.parent.push_back(defs[j].parent);
    rig.joints.row(j) = defs[j].pos.transpose();
  }

  auto joint = [&](int j) -> Vec3 { return rig.joints.row(j).transpose(); };
  // pelvis box, weighted fully to the root
  rig.segments.push_back({joint(0), joint(0) + Vec3(0, -0.16, 0), 0.125, 0, -1, 0.9});
  if (k > 1) {
    rig.segments.push_back({joint(0), joint(1), 0.13, 1, 0, 1.0});                    // torso
    rig.segments.push_back({joint(1), joint(1) + Vec3(0, 0.27, 0), 0.085, 1, -1, 0.8});  // head
  }
  if (k > 2) rig.segments.push_back({joint(2), joint(2) + Vec3(0, -0.84, 0), 0.058, 2, 0, 0.6});
  if (k > 3) rig.segments.push_back({joint(3), joint(3) + Vec3(0, -0.84, 0), 0.058, 3, 0, 0.6});
  if (k > 4) rig.segments.push_back({joint(4), joint(4) + Vec3(-0.18, -0.56, 0), 0.046, 4, 1, 0.7});
  if (k > 5) rig.segments.push_back({joint(5), joint(5) + Vec3(0.18, -0.56, 0), 0.046, 5, 1, 0.7});
  for (int j = 6; j < k; ++j)
    rig.segments.push_back({joint(j), joint(j) + Vec3(0, 0.11, 0), 0.075, j, rig.parent[j], 0.9});
  return rig;
}

void orthonormal_frame(const Vec3& axis, Vec3& u, Vec3& w) {
  Vec3 n = axis.normalized();
  Vec3 ref = std::abs(n.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
  u = n.cross(ref).normalized();
  w = n.cross(u);
}

// Neighbor averaging along the vertex ordering; keeps fields smooth across
// each ring without needing mesh adjacency.
Vec smooth_field(const Vec& field, int passes) {
  Vec out = field;
  const Eigen::Index n = field.size() / 3;
  for (int p = 0; p < passes; ++p) {
    Vec prev = out;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index lo = std::max<Eigen::Index>(0, i - 1);
      Eigen::Index hi = std::min(n - 1, i + 1);
      out.segment<3>(3 * i) =
          0.5 * prev.segment<3>(3 * i) + 0.25 * (prev.segment<3>(3 * lo) + prev.segment<3>(3 * hi));
    }
  }
  return out;
}

}  // namespace

double SoftnessCoupling::softness(const Vec& beta) const {
  double b0 = beta.size() > 0 ? beta(0) : 0.0;
  return std::max(0.0, 1.0 + beta_gain * b0);
}

void SyntheticConfig::validate() const {
  if (n_verts < 16) throw DataError("synthetic config: n_verts must be >= 16");
  if (n_joints < 2) throw DataError("synthetic config: n_joints must be >= 2");
  if (n_shape_pcs < 0) throw DataError("synthetic config: n_shape_pcs must be >= 0");
  if (fps <= 0.0) throw DataError("synthetic config: fps must be positive");
}

MotionKind motion_kind_from_string(const std::string& name) {
  if (name == "still") return MotionKind::Still;
  if (name == "hop") return MotionKind::Hop;
  if (name == "jumping_jack") return MotionKind::JumpingJack;
  if (name == "run_in_place") return MotionKind::RunInPlace;
  if (name == "shake_hips") return MotionKind::ShakeHips;
  throw DataError("unknown motion kind: " + name);
}

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Still: return "still";
    case MotionKind::Hop: return "hop";
    case MotionKind::JumpingJack: return "jumping_jack";
    case MotionKind::RunInPlace: return "run_in_place";
    case MotionKind::ShakeHips: return "shake_hips";
  }
  return "still";
}

double motion_base_frequency(MotionKind kind) {
  switch (kind) {
    case MotionKind::Still: return 0.0;
    case MotionKind::Hop: return 1.4;
    case MotionKind::JumpingJack: return 0.9;
    case MotionKind::RunInPlace: return 2.1;
    case MotionKind::ShakeHips: return 1.1;
  }
  return 0.0;
}

BodyModelBundle gen_template(const SyntheticConfig& config) {
  config.validate();
  CounterRng rng = CounterRng(config.seed).fork(0x7e3a);
  RigLayout rig = humanoid_layout(config.n_joints);
  const int k = static_cast<int>(rig.parent.size());

  // per-seed body proportions
  CounterRng shape_jitter = rng.fork(7);
  for (Segment& seg : rig.segments) {
    seg.radius *= shape_jitter.uniform(0.9, 1.1);
    seg.b = seg.a + (seg.b - seg.a) * shape_jitter.uniform(0.96, 1.04);
  }

  // vertex budget per segment, proportional to surface (length * radius)
  std::vector<double> share;
  double total_share = 0.0;
  for (const auto& s : rig.segments) {
    double v = (s.b - s.a).norm() * s.radius;
    share.push_back(v);
    total_share += v;
  }
  std::vector<int> rings(rig.segments.size());
  int used = 0;
  for (std::size_t s = 0; s < rig.segments.size(); ++s) {
    int verts = static_cast<int>(config.n_verts * share[s] / total_share);
    rings[s] = std::max(2, verts / kRingSize);
    used += rings[s] * kRingSize;
  }
  // grow torso rings while whole rings still fit, then pad with a partial ring;
  // targets below the per-segment minimum round up to the minimum
  while (used + kRingSize <= config.n_verts) {
    rings[1 % rings.size()] += 1;
    used += kRingSize;
  }
  const int partial = std::max(0, config.n_verts - used);
  const int actual_n = used + partial;

  TemplateMesh mesh;
  mesh.vertices.resize(actual_n, 3);
  Mat weights = Mat::Zero(actual_n, k);
  std::vector<int> vertex_segment(actual_n, 0);
  int vi = 0;
  for (std::size_t s = 0; s < rig.segments.size(); ++s) {
    const Segment& seg = rig.segments[s];
    Vec3 axis = seg.b - seg.a;
    Vec3 u, w;
    orthonormal_frame(axis, u, w);
    const int first = vi;
    for (int ring = 0; ring < rings[s]; ++ring) {
      double tau = rings[s] > 1 ? static_cast<double>(ring) / (rings[s] - 1) : 0.5;
      double radius = seg.radius * (1.0 + (seg.taper - 1.0) * tau);
      for (int i = 0; i < kRingSize; ++i, ++vi) {
        double phi = kTau * (i + 0.5 * (ring % 2)) / kRingSize;
        Vec3 p = seg.a + tau * axis + radius * (std::cos(phi) * u + std::sin(phi) * w);
        mesh.vertices.row(vi) = p.transpose();
        vertex_segment[vi] = static_cast<int>(s);
        double w_blend = seg.blend_to >= 0 ? 0.5 * (1.0 - smoothstep(tau / 0.35)) : 0.0;
        weights(vi, seg.owner) = 1.0 - w_blend;
        if (seg.blend_to >= 0 && w_blend > 0.0) weights(vi, seg.blend_to) = w_blend;
      }
    }
    // quad strip faces between consecutive rings
    for (int ring = 0; ring + 1 < rings[s]; ++ring) {
      for (int i = 0; i < kRingSize; ++i) {
        int a0 = first + ring * kRingSize + i;
        int a1 = first + ring * kRingSize + (i + 1) % kRingSize;
        int b0 = a0 + kRingSize;
        int b1 = a1 + kRingSize;
        mesh.faces.push_back({a0, b0, a1});
        mesh.faces.push_back({a1, b0, b1});
      }
    }
  }
  // leftover vertices as a partial torso ring (no faces)
  if (partial > 0) {
    const Segment& seg = rig.segments[1 % rig.segments.size()];
    Vec3 axis = seg.b - seg.a;
    Vec3 u, w;
    orthonormal_frame(axis, u, w);
    for (int i = 0; i < partial; ++i, ++vi) {
      double phi = kTau * (i + 0.25) / kRingSize;
      Vec3 p = seg.a + 0.5 * axis + 0.93 * seg.radius * (std::cos(phi) * u + std::sin(phi) * w);
      mesh.vertices.row(vi) = p.transpose();
      vertex_segment[vi] = 1 % static_cast<int>(rig.segments.size());
      const Segment& sref = rig.segments[vertex_segment[vi]];
      double w_blend = sref.blend_to >= 0 ? 0.25 : 0.0;
      weights(vi, sref.owner) = 1.0 - w_blend;
      if (sref.blend_to >= 0) weights(vi, sref.blend_to) = w_blend;
    }
  }

  BodyModelBundle model;
  model.template_mesh = std::move(mesh);
  model.skeleton.parent = rig.parent;
  model.skeleton.rest_joints = rig.joints;
  model.weights.W = std::move(weights);

  const int n = model.vertex_count();
  // joint regressor: gaussian weights over the 8 nearest vertices
  Mat j_map = Mat::Zero(k, n);
  for (int j = 0; j < k; ++j) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(n);
    for (int i = 0; i < n; ++i)
      dist.push_back({(model.template_mesh.vertices.row(i) - rig.joints.row(j)).norm(), i});
    std::sort(dist.begin(), dist.end());
    double norm = 0.0;
    for (int t = 0; t < 8 && t < n; ++t) {
      double g = std::exp(-dist[t].first * dist[t].first / (0.1 * 0.1));
      j_map(j, dist[t].second) = g;
      norm += g;
    }
    j_map.row(j) /= norm;
  }
  model.regressor.J_map = std::move(j_map);

  // shape basis: girth scaling first, then smoothed random fields, Gram-Schmidt
  model.shape_basis.mean = Vec::Zero(3 * n);
  Mat components(3 * n, config.n_shape_pcs);
  if (config.n_shape_pcs > 0) {
    Vec girth(3 * n);
    for (int i = 0; i < n; ++i) {
      const Segment& seg = rig.segments[vertex_segment[i]];
      Vec3 p = model.template_mesh.vertices.row(i).transpose();
      Vec3 axis = (seg.b - seg.a).normalized();
      Vec3 radial = (p - seg.a) - axis.dot(p - seg.a) * axis;
      girth.segment<3>(3 * i) = radial;
    }
    components.col(0) = girth / girth.norm();
    CounterRng shape_rng = rng.fork(1);
    for (int c = 1; c < config.n_shape_pcs; ++c) {
      Vec field(3 * n);
      for (Eigen::Index t = 0; t < field.size(); ++t) field(t) = shape_rng.normal();
      field = smooth_field(field, 3);
      for (int pass = 0; pass < 2; ++pass)
        for (int prev = 0; prev < c; ++prev) field -= components.col(prev).dot(field) * components.col(prev);
      components.col(c) = field / field.norm();
    }
  }
  model.shape_basis.components = std::move(components);

  // small smooth pose-blend columns
  CounterRng pose_rng = rng.fork(2);
  Mat pose_components(3 * n, 9 * k);
  for (int c = 0; c < 9 * k; ++c) {
    Vec field(3 * n);
    for (Eigen::Index t = 0; t < field.size(); ++t) field(t) = pose_rng.normal();
    field = smooth_field(field, 2);
    double peak = field.cwiseAbs().maxCoeff();
    pose_components.col(c) = field * (config.pose_blend_scale / (peak > 0 ? peak : 1.0));
  }
  model.pose_basis.components = std::move(pose_components);

  model.validate();
  return model;
}

PoseSequence gen_motion(MotionKind kind, int frame_count, double fps, std::uint64_t seed,
                        int joint_count) {
  if (frame_count < 1) throw DataError("gen_motion: frame_count must be >= 1");
  if (fps <= 0.0) throw DataError("gen_motion: fps must be positive");
  if (joint_count < 1) throw DataError("gen_motion: joint_count must be >= 1");
  PoseSequence seq;
  seq.fps = fps;
  seq.motion_id = to_string(kind);
  seq.frames.reserve(frame_count);

  CounterRng rng = CounterRng(seed).fork(0x3051);
  const double freq = motion_base_frequency(kind) * (1.0 + 0.12 * (rng.uniform() - 0.5));
  const double amp = 1.0 + 0.25 * (rng.uniform() - 0.5);

  for (int f = 0; f < frame_count; ++f) {
    double t = f / fps;
    double env = smoothstep(t / 0.5);  // ramp in so frame 1 is near rest
    double ph = kTau * freq * t;
    PoseVector pose = PoseVector::rest(joint_count);
    auto rot = [&](int j, double x, double y, double z) {
      if (j < joint_count) pose.joint_rotations.row(j) += Eigen::RowVector3d(x, y, z);
    };
    switch (kind) {
      case MotionKind::Still:
        break;
      case MotionKind::Hop:
        pose.root_translation.y() = 0.09 * amp * 0.5 * (1.0 - std::cos(ph)) * env;
        rot(2, 0.35 * amp * 0.5 * (1.0 - std::cos(ph)) * env, 0, 0);
        rot(3, 0.35 * amp * 0.5 * (1.0 - std::cos(ph)) * env, 0, 0);
        rot(1, -0.10 * amp * 0.5 * (1.0 - std::cos(ph)) * env, 0, 0);
        break;
      case MotionKind::JumpingJack:
        rot(4, 0, 0, -1.1 * amp * 0.5 * (1.0 - std::cos(ph)) * env);
        rot(5, 0, 0, 1.1 * amp * 0.5 * (1.0 - std::cos(ph)) * env);
        rot(2, 0, 0, -0.28 * amp * 0.5 * (1.0 - std::cos(ph)) * env);
        rot(3, 0, 0, 0.28 * amp * 0.5 * (1.0 - std::cos(ph)) * env);
        pose.root_translation.y() = 0.05 * amp * 0.5 * (1.0 - std::cos(2.0 * ph)) * env;
        break;
      case MotionKind::RunInPlace:
        rot(2, 0.55 * amp * std::sin(ph) * env, 0, 0);
        rot(3, -0.55 * amp * std::sin(ph) * env, 0, 0);
        rot(4, -0.30 * amp * std::sin(ph) * env, 0, 0);
        rot(5, 0.30 * amp * std::sin(ph) * env, 0, 0);
        rot(1, 0, 0.12 * amp * std::sin(ph) * env, 0);
        pose.root_translation.y() = 0.035 * amp * 0.5 * (1.0 - std::cos(2.0 * ph)) * env;
        break;
      case MotionKind::ShakeHips:
        pose.root_translation.x() = 0.075 * amp * std::sin(ph) * env;
        rot(0, 0, 0, 0.28 * amp * std::sin(ph) * env);
        rot(1, 0, 0, -0.22 * amp * std::sin(ph) * env);
        rot(2, 0, 0, -0.12 * amp * std::sin(ph) * env);
        rot(3, 0, 0, -0.12 * amp * std::sin(ph) * env);
        break;
    }
    if (kind != MotionKind::Still)
      for (int j = 6; j < joint_count; ++j) rot(j, 0.05 * std::sin(ph + j) * env, 0, 0);
    seq.frames.push_back(std::move(pose));
  }
  return seq;
}

Vec softness_region_field(const BodyModelBundle& model) {
  const int n = model.vertex_count();
  Vec region(n);
  struct Bump {
    Vec3 center;
    double sigma, amp;
  };
  const Bump bumps[] = {
      {{0.00, 1.10, 0.06}, 0.16, 1.00},   // belly
      {{0.00, 1.28, 0.05}, 0.11, 0.80},   // chest
      {{-0.12, 0.62, 0.0}, 0.15, 0.55},   // thighs
      {{0.12, 0.62, 0.0}, 0.15, 0.55},
  };
  for (int i = 0; i < n; ++i) {
    Vec3 p = model.template_mesh.vertices.row(i).transpose();
    double v = 0.05;
    for (const Bump& b : bumps) v += b.amp * std::exp(-(p - b.center).squaredNorm() / (b.sigma * b.sigma));
    region(i) = std::min(1.0, v);
  }
  return region;
}

SoftTissueResult simulate_soft_tissue(const BodyModelBundle& model, const Vec& beta,
                                      const PoseSequence& poses, const SoftnessCoupling& coupling) {
  const int n = model.vertex_count();
  const int k = model.joint_count();
  const int frames = poses.frame_count();
  if (frames < 1) throw DataError("simulate_soft_tissue: empty pose sequence");
  const double h = 1.0 / poses.fps;

  const MatX3 joints = shaped_joints(model, beta);
  std::vector<std::vector<RigidTransform>> fk(frames);
  for (int t = 0; t < frames; ++t) fk[t] = forward_kinematics(model.skeleton, poses.frames[t], joints);

  // world-space joint accelerations, central differences, boundary frames copy inward
  std::vector<MatX3> accel(frames, MatX3::Zero(k, 3));
  if (frames >= 3) {
    for (int t = 1; t + 1 < frames; ++t)
      for (int j = 0; j < k; ++j)
        accel[t].row(j) =
            ((fk[t + 1][j].t - 2.0 * fk[t][j].t + fk[t - 1][j].t) / (h * h)).transpose();
    accel[0] = accel[1];
    accel[frames - 1] = accel[frames - 2];
  }

  std::vector<int> dominant(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (model.weights.W(i, j) > model.weights.W(i, best)) best = j;
    dominant[i] = best;
  }

  const Vec region = softness_region_field(model);
  const double s = coupling.softness(beta);
  Vec stiff(n), damp(n), mass(n);
  for (int i = 0; i < n; ++i) {
    stiff(i) = coupling.stiffness * (0.75 + 0.5 * region(i));
    damp(i) = coupling.damping;
    mass(i) = coupling.mass_coupling * region(i) * s;
  }

  const Vec3 bbox = model.template_mesh.vertices.colwise().maxCoeff() -
                    model.template_mesh.vertices.colwise().minCoeff();
  const double divergence_limit = 10.0 * bbox.norm();

  SoftTissueResult out;
  out.meshes.fps = poses.fps;
  out.meshes.motion_id = poses.motion_id;
  out.offsets.fps = poses.fps;
  out.offsets.motion_id = poses.motion_id;
  out.offsets.frames = Mat::Zero(frames, 3 * n);

  MatX3 d = MatX3::Zero(n, 3);
  MatX3 u = MatX3::Zero(n, 3);
  for (int t = 0; t < frames; ++t) {
    Vec flat = Vec::Zero(3 * n);
    for (int i = 0; i < n; ++i) flat.segment<3>(3 * i) = d.row(i).transpose();
    out.offsets.frames.row(t) = flat.transpose();
    out.meshes.frames.push_back(pose_mesh(model, beta, poses.frames[t], &flat));

    MatX3 d_next(n, 3), u_next(n, 3);
    for (int i = 0; i < n; ++i) {
      const int j = dominant[i];
      const Vec3 a_rest = fk[t][j].R.transpose() * accel[t].row(j).transpose();
      const Vec3 di = d.row(i).transpose();
      const Vec3 ui = u.row(i).transpose();
      d_next.row(i) = (di + h * ui).transpose();
      u_next.row(i) = (ui + h * (-stiff(i) * di - damp(i) * ui - mass(i) * a_rest)).transpose();
    }
    d = std::move(d_next);
    u = std::move(u_next);
    if (d.cwiseAbs().maxCoeff() > divergence_limit)
      throw SimulationDivergenceError("simulate_soft_tissue: offsets exceeded 10x body scale at frame " +
                                      std::to_string(t));
  }
  return out;
}

}  // namespace dskin

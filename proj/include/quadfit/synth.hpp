#pragma once

// Synthetic ground truth: a bundled 600-vertex quadruped template and an
// animated-scene generator that writes self-consistent cue files.

#include "quadfit/camera.hpp"
#include "quadfit/cues.hpp"
#include "quadfit/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace quadfit::synth {

/// UV-sphere quadruped (23 rings x 26 segments + 2 poles) with head, tail
/// and four legs, 13 joints, 4 limbs, 8 shape bases.
model::QuadTemplate quadruped_template();

/// One sinusoidal joint-angle curve: theta(t) = amplitude * sin(2 pi
/// cycles t / T + phase) * axis.
struct JointMotion {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double amplitude = 0.0;
  double cycles = 1.0;
  double phase = 0.0;
};

struct MotionSpec {
  std::map<std::string, JointMotion> joints;
  double sway = 0.05;   // root translation amplitude along the body axis

  static MotionSpec walk();
  /// JSON object: {"joint": {"axis": [x,y,z], "amplitude": a, "cycles": c, "phase": p}, ...}.
  static MotionSpec load(const std::filesystem::path& path);
};

struct CameraPath {
  double radius = 3.8;
  double height = 0.8;
  double start_deg = 60.0;
  double sweep_deg = 60.0;   // total azimuth change over the video
  camera::Intrinsics intrinsics{250.0, 250.0, 127.5, 127.5, 256, 256};
};

struct NoiseSpec {
  double sigma = 0.0;             // px, Gaussian on correspondences and tracks
  double outlier_fraction = 0.0;  // correspondences given a random vertex id
  double dropout = 0.0;           // correspondences removed
};

struct SceneSpec {
  int frames = 20;
  std::uint64_t seed = 0;
  MotionSpec motion = MotionSpec::walk();
  CameraPath camera;
  NoiseSpec noise;
  int tracks_per_anchor = 64;
  int feature_dim = 0;            // 0: no feature file
  double beta_scale = 0.3;        // ground-truth shape drawn in [-scale, scale]
  double limb_scale_jitter = 0.05;
};

struct Scene {
  model::QuadTemplate tpl;
  std::vector<model::FrameParams> params;        // ground truth
  std::vector<camera::CameraFrame> cameras;      // ground truth
  cues::CueSet cues;                             // before load-time sampling
  std::vector<std::vector<float>> depth;         // per frame, row-major, 0 = background
  std::vector<std::vector<int>> track_vertices;  // generating vertex per track
};

/// Anchor frames (1-based) {1, 51, 101, 151} restricted to the video length.
std::vector<int> anchor_frames(int frames);

/// Ground-truth params for frame t.
model::FrameParams motion_params(const model::QuadTemplate& tpl, const MotionSpec& motion, int t, int frames,
                                 const Eigen::VectorXd& beta, const Eigen::VectorXd& limb_scales);

Scene generate_scene(const model::QuadTemplate& tpl, const SceneSpec& spec);

/// Writes manifest.json, template.json, cue files, gt_params.json, depth maps
/// and ground-truth cameras ("gt_cameras") into `dir`.
void write_scene(const Scene& scene, const std::filesystem::path& dir);

/// Depth grid file: uint32 W, uint32 H, then W*H float32, little-endian.
void write_depth(const std::filesystem::path& path, int width, int height, const std::vector<float>& depth);
std::vector<float> read_depth(const std::filesystem::path& path, int& width, int& height);
std::filesystem::path depth_file(const std::filesystem::path& dir, int frame);

}  // namespace quadfit::synth

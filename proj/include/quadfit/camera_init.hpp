#pragma once

// Per-frame camera initialization from part samples and pixel
// correspondences, with fallback to the previous frame.

#include "quadfit/camera.hpp"
#include "quadfit/cues.hpp"
#include "quadfit/model.hpp"

#include <string>
#include <vector>

namespace quadfit::camera {

enum class CueLevel { Part, Pixel, PartPixel };
enum class Solver { EPnP, EPnPRansac, Org };

struct InitMode {
  CueLevel level = CueLevel::PartPixel;
  Solver solver = Solver::EPnPRansac;
};

/// Parses "part", "pixel", "part+pixel" and "epnp", "epnp-ransac", "org".
CueLevel parse_cue_level(const std::string& s);
Solver parse_solver(const std::string& s);

struct InitResult {
  std::vector<CameraFrame> cameras;
  std::vector<std::uint8_t> fell_back;   // frame reused the previous camera
  std::vector<std::string> failures;     // per frame; empty unless it fell back
  int num_fallbacks = 0;
};

/// 2D-3D pairs for one frame: part samples pair with the centroid of their
/// part's vertices, correspondences with their vertex.
void build_pairs(const cues::FrameCues& frame, const Points3& posed, const model::QuadModel& model, CueLevel level,
                 std::vector<Eigen::Vector3d>& p3, std::vector<Eigen::Vector2d>& p2);

/// Identity rotation; depth chosen so the mesh's extent matches the mask's,
/// centred on the mask centroid.
CameraFrame org_camera(const cues::ObjectMask& mask, const Points3& posed, const Intrinsics& K);

/// `init_params` has one entry per frame. Frames whose solve fails reuse the
/// previous frame's camera; a failure at frame 0 is rethrown.
InitResult init_cameras(const cues::CueSet& cues, const model::QuadModel& model,
                        const std::vector<model::FrameParams>& init_params, const InitMode& mode,
                        const RansacOptions& ransac = {});

}  // namespace quadfit::camera

#pragma once

// Pinhole cameras, EPnP and its RANSAC wrapper.
//
// Conventions: camera coordinates are x right, y down, z forward;
// pixel (i, j) has its centre at the continuous coordinate (i, j).

#include "quadfit/common.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace quadfit::camera {

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void validate() const;
};

struct CameraFrame {
  Intrinsics intrinsics;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();   // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws InputError when rotation is not proper orthonormal or the
  /// intrinsics are out of range.
  void validate() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// Points closer than this are flagged invalid.
inline constexpr double kMinDepth = 1e-6;

struct Projection {
  Points2 pixels;                  // K x 2; undefined where !valid
  Points3 camera_points;           // K x 3
  std::vector<std::uint8_t> valid;
  int num_valid = 0;
};

Projection project(const CameraFrame& cam, const Points3& points);

/// Single-point projection; returns false for nonpositive depth.
bool project_point(const CameraFrame& cam, const Eigen::Vector3d& world, Eigen::Vector2d& pixel);

/// World point at the given camera depth along the ray through `pixel`.
Eigen::Vector3d unproject(const CameraFrame& cam, const Eigen::Vector2d& pixel, double depth);

/// Gradients of a loss w.r.t. camera extrinsics, expressed as dL/dR (3x3)
/// and dL/dt.
struct ExtrinsicsGrad {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Chains dL/dpixels into dL/dworld points. Invalid rows receive zero.
/// When `cam_grad` is non-null the extrinsics gradient is accumulated into it.
Points3 project_vjp(const CameraFrame& cam, const Points3& world, const Projection& proj,
                    const Points2& grad_pixels, ExtrinsicsGrad* cam_grad = nullptr);

struct PnPResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double mean_reprojection_error = 0.0;
};

inline constexpr int kMinPnPPoints = 6;

/// Efficient perspective-n-point with four (or, for planar input, three)
/// control points followed by Gauss-Newton on the null-space coefficients.
/// Throws InputError when fewer than six pairs are given and DegenerateError
/// when the configuration is rank deficient.
PnPResult epnp(std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
               const Intrinsics& intrinsics);

struct RansacOptions {
  int iterations = 256;
  double inlier_px = 8.0;
  std::uint64_t seed = 0;
};

struct RansacResult {
  PnPResult pose;
  std::vector<std::uint8_t> inliers;
  int num_inliers = 0;
};

/// Minimal-sample consensus over EPnP hypotheses; the returned pose is refit
/// on the best consensus set. Throws NoConsensusError when no hypothesis
/// gathers at least six inliers.
RansacResult ransac_pnp(std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d,
                        const Intrinsics& intrinsics, const RansacOptions& options);

/// Per-point reprojection errors (infinity for points behind the camera).
std::vector<double> reprojection_errors(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                                        std::span<const Eigen::Vector3d> points3d,
                                        std::span<const Eigen::Vector2d> points2d, const Intrinsics& intrinsics);

/// Orbit-style look-at camera (y-up world).
CameraFrame look_at(const Intrinsics& intrinsics, const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up = Eigen::Vector3d::UnitY());

}  // namespace quadfit::camera

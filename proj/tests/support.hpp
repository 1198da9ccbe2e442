#pragma once

#include "quadfit/camera.hpp"
#include "quadfit/model.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace qtest {

using quadfit::Points3;

/// Per-test scratch directory under the system temp dir, emptied on creation.
std::filesystem::path scratch_dir(const std::string& name);

/// 5-vertex two-bone chain along +x: root at the origin, child joint at
/// (1,0,0), tip vertex at (2,0,0). Skinning is rigid per bone.
quadfit::model::QuadTemplate chain_template();

/// Once-subdivided icosphere (42 vertices) stretched along x, with a root,
/// a head joint (limb 0) and a tail joint, smooth skinning, two shape bases,
/// all four part labels and +-1 rad pose limits.
quadfit::model::QuadTemplate blob_template();

/// Random params around the rest pose of `tpl`.
quadfit::model::FrameParams random_params(const quadfit::model::QuadTemplate& tpl, std::mt19937_64& rng,
                                          double theta_scale = 0.3, bool offsets = true);

/// Flattened view of all params (beta, theta, limb_scales, translation, offsets).
Eigen::VectorXd flatten(const quadfit::model::FrameParams& p);
quadfit::model::FrameParams unflatten(const quadfit::model::FrameParams& like, const Eigen::VectorXd& x);

/// Central differences of f at x.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double h = 1e-5);

/// ||a - n|| / max(||n||, floor).
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor = 1e-8);

/// Camera on the +z side looking at the origin from `distance`.
quadfit::camera::CameraFrame test_camera(double distance = 4.0, double fx = 250.0, int size = 256);

}  // namespace qtest

#pragma once

// Fit-quality metrics: silhouette IoU (mean and worst 5%) and scale-aligned
// depth errors against reference depth maps.

#include "quadfit/camera.hpp"
#include "quadfit/cues.hpp"
#include "quadfit/raster.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace quadfit::eval {

/// |a ∩ b| / |a ∪ b|; 1 when both are empty. Sizes must match.
double iou(const cues::ObjectMask& a, const cues::ObjectMask& b);

struct IouSeries {
  std::vector<std::optional<double>> per_frame;   // nullopt: reference empty
  double mean = 0.0;
  double worst5 = 0.0;   // mean of the lowest ceil(0.05 * valid) frames
  int excluded = 0;
};

IouSeries iou_series(const std::vector<cues::ObjectMask>& fitted, const std::vector<cues::ObjectMask>& reference);
IouSeries iou_series(const std::vector<Points3>& meshes, const raster::Faces& faces,
                     const std::vector<camera::CameraFrame>& cams, const std::vector<cues::ObjectMask>& reference);

/// Row-major depth grid, 0 where empty.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> values;
};

DepthMap render_depth(const Points3& mesh, const raster::Faces& faces, const camera::CameraFrame& cam);

struct DepthFrame {
  double abs_rel = 0.0;
  std::array<double, 3> delta{};   // fraction below 1.25, 1.25^2, 1.25^3
  double scale = 1.0;              // median rendered / reference
  std::size_t pixels = 0;
};

struct DepthMetrics {
  std::vector<std::optional<DepthFrame>> per_frame;   // nullopt: empty joint foreground
  double abs_rel = 0.0;
  std::array<double, 3> delta{};
  int excluded = 0;
};

/// Single frame; nullopt when no pixel is foreground in both maps.
std::optional<DepthFrame> depth_frame(const DepthMap& rendered, const DepthMap& reference);
DepthMetrics depth_metrics(const std::vector<DepthMap>& rendered, const std::vector<DepthMap>& reference);
DepthMetrics depth_metrics(const std::vector<Points3>& meshes, const raster::Faces& faces,
                           const std::vector<camera::CameraFrame>& cams, const std::vector<DepthMap>& reference);

/// Per-frame CSV (`frame,iou,abs_rel,delta1,delta2,delta3`) followed by
/// `mean` and `worst5` rows. Empty cells mark excluded frames.
void write_csv(const std::filesystem::path& path, const IouSeries& iou, const std::optional<DepthMetrics>& depth);

}  // namespace quadfit::eval

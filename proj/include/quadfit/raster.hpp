#pragma once

// Silhouette/depth rasterizer: scan over triangle bounding boxes with edge
// functions, perspective-correct depth and a z-buffer. No shading.

#include "quadfit/camera.hpp"
#include "quadfit/cues.hpp"

#include <vector>

namespace quadfit::raster {

using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Buffers {
  int width = 0, height = 0;
  std::vector<double> depth;   // camera z; +inf where empty
  std::vector<int> face;       // covering face id; -1 where empty

  bool covered(int x, int y) const { return face[std::size_t(y) * width + x] >= 0; }
  double depth_at(int x, int y) const { return depth[std::size_t(y) * width + x]; }
};

/// Near clipping plane in camera units.
inline constexpr double kNearPlane = 1e-3;

Buffers render(const Points3& vertices, const Faces& faces, const camera::CameraFrame& cam);

cues::ObjectMask silhouette(const Buffers& buffers);

/// Convenience wrapper: silhouette of a mesh at the camera's image size.
cues::ObjectMask rasterize_silhouette(const Points3& vertices, const Faces& faces, const camera::CameraFrame& cam);

}  // namespace quadfit::raster

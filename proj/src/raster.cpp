#include "quadfit/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace quadfit::raster {

namespace {

// Sutherland-Hodgman against z >= near.
int clip_near(const std::array<Eigen::Vector3d, 3>& in, std::array<Eigen::Vector3d, 4>& out) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d& a = in[i];
    const Eigen::Vector3d& b = in[(i + 1) % 3];
    const bool ain = a.z() >= kNearPlane, bin = b.z() >= kNearPlane;
    if (ain) out[n++] = a;
    if (ain != bin) {
      const double s = (kNearPlane - a.z()) / (b.z() - a.z());
      out[n++] = a + s * (b - a);
    }
  }
  return n;
}

void raster_triangle(const Eigen::Vector3d& c0, const Eigen::Vector3d& c1, const Eigen::Vector3d& c2, int face,
                     const camera::Intrinsics& K, Buffers& buf) {
  auto to_screen = [&](const Eigen::Vector3d& c) {
    return Eigen::Vector2d(K.fx * c.x() / c.z() + K.cx, K.fy * c.y() / c.z() + K.cy);
  };
  const Eigen::Vector2d p0 = to_screen(c0), p1 = to_screen(c1), p2 = to_screen(c2);
  const double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());
  if (std::abs(area) < 1e-12) return;
  const double inv_area = 1.0 / area;

  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
  const int x1 = std::min(buf.width - 1, static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
  const int y1 = std::min(buf.height - 1, static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
  if (x0 > x1 || y0 > y1) return;

  const double iz0 = 1.0 / c0.z(), iz1 = 1.0 / c1.z(), iz2 = 1.0 / c2.z();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x, py = y;
      // Barycentric weights via edge functions, normalised by the signed area.
      const double w0 = ((p1.x() - px) * (p2.y() - py) - (p1.y() - py) * (p2.x() - px)) * inv_area;
      const double w1 = ((p2.x() - px) * (p0.y() - py) - (p2.y() - py) * (p0.x() - px)) * inv_area;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      const double z = 1.0 / (w0 * iz0 + w1 * iz1 + w2 * iz2);
      const std::size_t idx = std::size_t(y) * buf.width + x;
      if (z < buf.depth[idx]) {
        buf.depth[idx] = z;
        buf.face[idx] = face;
      }
    }
  }
}

}  // namespace

Buffers render(const Points3& vertices, const Faces& faces, const camera::CameraFrame& cam) {
  const camera::Intrinsics& K = cam.intrinsics;
  Buffers buf;
  buf.width = K.width;
  buf.height = K.height;
  buf.depth.assign(std::size_t(K.width) * K.height, std::numeric_limits<double>::infinity());
  buf.face.assign(std::size_t(K.width) * K.height, -1);

  std::vector<Eigen::Vector3d> cv(vertices.rows());
  for (int i = 0; i < vertices.rows(); ++i) cv[i] = cam.to_camera(vertices.row(i).transpose());

  std::array<Eigen::Vector3d, 4> poly;
  for (int f = 0; f < faces.rows(); ++f) {
    const std::array<Eigen::Vector3d, 3> tri{cv[faces(f, 0)], cv[faces(f, 1)], cv[faces(f, 2)]};
    if (tri[0].z() >= kNearPlane && tri[1].z() >= kNearPlane && tri[2].z() >= kNearPlane) {
      raster_triangle(tri[0], tri[1], tri[2], f, K, buf);
      continue;
    }
    const int n = clip_near(tri, poly);
    for (int k = 1; k + 1 < n; ++k) raster_triangle(poly[0], poly[k], poly[k + 1], f, K, buf);
  }
  return buf;
}

cues::ObjectMask silhouette(const Buffers& buf) {
  cues::ObjectMask m(buf.width, buf.height);
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x)
      if (buf.covered(x, y)) m.set(x, y);
  return m;
}

cues::ObjectMask rasterize_silhouette(const Points3& vertices, const Faces& faces, const camera::CameraFrame& cam) {
  return silhouette(render(vertices, faces, cam));
}

}  // namespace quadfit::raster

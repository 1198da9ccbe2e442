#include "quadfit/eval.hpp"

#include "quadfit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace quadfit::eval {

double iou(const cues::ObjectMask& a, const cues::ObjectMask& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw InputError("iou: mask sizes differ (" + std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                     std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
  std::size_t inter = 0, uni = 0;
  const auto& x = a.bits();
  const auto& y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += x[i] && y[i];
    uni += x[i] || y[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

IouSeries iou_series(const std::vector<cues::ObjectMask>& fitted, const std::vector<cues::ObjectMask>& reference) {
  if (fitted.size() != reference.size())
    throw InputError("iou_series: " + std::to_string(fitted.size()) + " fitted frames vs " +
                     std::to_string(reference.size()) + " reference frames");
  IouSeries out;
  out.per_frame.resize(fitted.size());
  parallel_for(static_cast<int>(fitted.size()), [&](int t) {
    if (!reference[t].empty()) out.per_frame[t] = iou(fitted[t], reference[t]);
  });
  std::vector<double> vals;
  for (const auto& v : out.per_frame) {
    if (v) vals.push_back(*v);
    else ++out.excluded;
  }
  if (vals.empty()) return out;
  double sum = 0.0;
  for (double v : vals) sum += v;
  out.mean = sum / vals.size();
  std::sort(vals.begin(), vals.end());
  const std::size_t k = static_cast<std::size_t>(std::ceil(0.05 * vals.size()));
  double low = 0.0;
  for (std::size_t i = 0; i < k; ++i) low += vals[i];
  out.worst5 = low / k;
  return out;
}

IouSeries iou_series(const std::vector<Points3>& meshes, const raster::Faces& faces,
                     const std::vector<camera::CameraFrame>& cams, const std::vector<cues::ObjectMask>& reference) {
  if (meshes.size() != cams.size())
    throw InputError("iou_series: " + std::to_string(meshes.size()) + " meshes vs " + std::to_string(cams.size()) + " cameras");
  std::vector<cues::ObjectMask> fitted(meshes.size());
  parallel_for(static_cast<int>(meshes.size()), [&](int t) { fitted[t] = raster::rasterize_silhouette(meshes[t], faces, cams[t]); });
  return iou_series(fitted, reference);
}

DepthMap render_depth(const Points3& mesh, const raster::Faces& faces, const camera::CameraFrame& cam) {
  const raster::Buffers buf = raster::render(mesh, faces, cam);
  DepthMap d{buf.width, buf.height, std::vector<double>(buf.depth.size(), 0.0)};
  for (std::size_t i = 0; i < buf.depth.size(); ++i)
    if (buf.face[i] >= 0) d.values[i] = buf.depth[i];
  return d;
}

std::optional<DepthFrame> depth_frame(const DepthMap& rendered, const DepthMap& reference) {
  if (rendered.width != reference.width || rendered.height != reference.height)
    throw InputError("depth_metrics: rendered " + std::to_string(rendered.width) + "x" + std::to_string(rendered.height) +
                     " vs reference " + std::to_string(reference.width) + "x" + std::to_string(reference.height));
  std::vector<double> r, g;
  for (std::size_t i = 0; i < reference.values.size(); ++i) {
    const double a = rendered.values[i], b = reference.values[i];
    if (a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b)) {
      r.push_back(a);
      g.push_back(b);
    }
  }
  if (r.empty()) return std::nullopt;
  std::vector<double> ratio(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) ratio[i] = r[i] / g[i];
  const std::size_t n = ratio.size(), mid = n / 2;
  std::nth_element(ratio.begin(), ratio.begin() + mid, ratio.end());
  double median = ratio[mid];
  if (n % 2 == 0) median = 0.5 * (median + *std::max_element(ratio.begin(), ratio.begin() + mid));

  DepthFrame f;
  f.scale = median;
  f.pixels = n;
  const double thresh[3] = {1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25};
  for (std::size_t i = 0; i < n; ++i) {
    const double d = r[i] / median;
    f.abs_rel += std::abs(d - g[i]) / g[i];
    const double q = std::max(d / g[i], g[i] / d);
    for (int k = 0; k < 3; ++k) f.delta[k] += q < thresh[k];
  }
  f.abs_rel /= n;
  for (double& v : f.delta) v /= n;
  return f;
}

DepthMetrics depth_metrics(const std::vector<DepthMap>& rendered, const std::vector<DepthMap>& reference) {
  if (rendered.size() != reference.size())
    throw InputError("depth_metrics: " + std::to_string(rendered.size()) + " rendered frames vs " +
                     std::to_string(reference.size()) + " reference frames");
  DepthMetrics out;
  out.per_frame.resize(rendered.size());
  parallel_for(static_cast<int>(rendered.size()), [&](int t) { out.per_frame[t] = depth_frame(rendered[t], reference[t]); });
  int used = 0;
  for (const auto& f : out.per_frame) {
    if (!f) {
      ++out.excluded;
      continue;
    }
    ++used;
    out.abs_rel += f->abs_rel;
    for (int k = 0; k < 3; ++k) out.delta[k] += f->delta[k];
  }
  if (used > 0) {
    out.abs_rel /= used;
    for (double& v : out.delta) v /= used;
  }
  return out;
}

DepthMetrics depth_metrics(const std::vector<Points3>& meshes, const raster::Faces& faces,
                           const std::vector<camera::CameraFrame>& cams, const std::vector<DepthMap>& reference) {
  if (meshes.size() != cams.size())
    throw InputError("depth_metrics: " + std::to_string(meshes.size()) + " meshes vs " + std::to_string(cams.size()) + " cameras");
  std::vector<DepthMap> rendered(meshes.size());
  parallel_for(static_cast<int>(meshes.size()), [&](int t) { rendered[t] = render_depth(meshes[t], faces, cams[t]); });
  return depth_metrics(rendered, reference);
}

void write_csv(const std::filesystem::path& path, const IouSeries& iou, const std::optional<DepthMetrics>& depth) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  out << "frame,iou,abs_rel,delta1,delta2,delta3\n";
  for (std::size_t t = 0; t < iou.per_frame.size(); ++t) {
    out << t << ',' << (iou.per_frame[t] ? num(*iou.per_frame[t]) : "");
    if (depth && t < depth->per_frame.size() && depth->per_frame[t]) {
      const DepthFrame& f = *depth->per_frame[t];
      out << ',' << num(f.abs_rel) << ',' << num(f.delta[0]) << ',' << num(f.delta[1]) << ',' << num(f.delta[2]);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
  out << "mean," << num(iou.mean);
  if (depth) out << ',' << num(depth->abs_rel) << ',' << num(depth->delta[0]) << ',' << num(depth->delta[1]) << ',' << num(depth->delta[2]);
  else out << ",,,,";
  out << "\nworst5," << num(iou.worst5) << ",,,,\n";
}

}  // namespace quadfit::eval

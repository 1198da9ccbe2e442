#include "quadfit/camera_init.hpp"

#include "quadfit/parallel.hpp"

#include <cmath>

namespace quadfit::camera {

CueLevel parse_cue_level(const std::string& s) {
  if (s == "part") return CueLevel::Part;
  if (s == "pixel") return CueLevel::Pixel;
  if (s == "part+pixel") return CueLevel::PartPixel;
  throw InputError("unknown cue level '" + s + "' (expected part, pixel or part+pixel)");
}

Solver parse_solver(const std::string& s) {
  if (s == "epnp") return Solver::EPnP;
  if (s == "epnp-ransac") return Solver::EPnPRansac;
  if (s == "org") return Solver::Org;
  throw InputError("unknown solver '" + s + "' (expected epnp, epnp-ransac or org)");
}

void build_pairs(const cues::FrameCues& frame, const Points3& posed, const model::QuadModel& model, CueLevel level,
                 std::vector<Eigen::Vector3d>& p3, std::vector<Eigen::Vector2d>& p2) {
  p3.clear();
  p2.clear();
  if (level != CueLevel::Pixel) {
    std::array<Eigen::Vector3d, 4> centroid;
    for (Part p : kAllParts) {
      const auto& ids = model.part_vertices(p);
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (int i : ids) c += posed.row(i).transpose();
      centroid[part_index(p)] = ids.empty() ? c : Eigen::Vector3d(c / ids.size());
    }
    for (const cues::PartSample& s : frame.parts) {
      if (model.part_vertices(s.part).empty()) continue;
      p3.push_back(centroid[part_index(s.part)]);
      p2.push_back(s.pixel);
    }
  }
  if (level != CueLevel::Part) {
    for (const cues::PixelCorr& c : frame.corrs) {
      p3.push_back(posed.row(c.vertex_id).transpose());
      p2.push_back(c.pixel);
    }
  }
}

CameraFrame org_camera(const cues::ObjectMask& mask, const Points3& posed, const Intrinsics& K) {
  CameraFrame cam;
  cam.intrinsics = K;
  const auto fg = mask.foreground();
  if (fg.empty()) throw InputError("org camera: empty mask");
  Eigen::Vector2d mc = Eigen::Vector2d::Zero(), mn = fg[0], mx = fg[0];
  for (const auto& p : fg) {
    mc += p;
    mn = mn.cwiseMin(p);
    mx = mx.cwiseMax(p);
  }
  mc /= fg.size();
  const Eigen::Vector3d centre = posed.colwise().mean().transpose();
  const Eigen::Vector3d ext = posed.colwise().maxCoeff() - posed.colwise().minCoeff();
  const double mesh_size = std::max(ext.x(), ext.y());
  const double mask_size = std::max({mx.x() - mn.x() + 1.0, mx.y() - mn.y() + 1.0, 1.0});
  const double depth = K.fx * mesh_size / mask_size;
  const Eigen::Vector3d ray((mc.x() - K.cx) / K.fx, (mc.y() - K.cy) / K.fy, 1.0);
  cam.translation = depth * ray - centre;
  return cam;
}

InitResult init_cameras(const cues::CueSet& cues, const model::QuadModel& model,
                        const std::vector<model::FrameParams>& init_params, const InitMode& mode,
                        const RansacOptions& ransac) {
  const int T = cues.num_frames;
  if (static_cast<int>(init_params.size()) != T)
    throw InputError("init_cameras: " + std::to_string(init_params.size()) + " init params for " + std::to_string(T) + " frames");
  if (mode.solver != Solver::Org) {
    bool any_part = false, any_pix = false;
    for (const auto& f : cues.frames) {
      any_part |= !f.parts.empty();
      any_pix |= !f.corrs.empty();
    }
    if (mode.level == CueLevel::Part && !any_part) throw InputError("init_cameras: mode 'part' but no frame has part samples");
    if (mode.level == CueLevel::Pixel && !any_pix) throw InputError("init_cameras: mode 'pixel' but no frame has pixel correspondences");
    if (mode.level == CueLevel::PartPixel && !any_part && !any_pix)
      throw InputError("init_cameras: no frame has part samples or pixel correspondences");
  }

  // Solve frames independently, then sweep the fallback chain in order.
  std::vector<std::optional<CameraFrame>> solved(T);
  std::vector<std::string> why(T);
  std::vector<std::exception_ptr> frame0_error(1);
  parallel_for(T, [&](int t) {
    const Points3 posed = model.pose(init_params[t]);
    try {
      if (mode.solver == Solver::Org) {
        solved[t] = org_camera(cues.masks[t], posed, cues.intrinsics);
        return;
      }
      std::vector<Eigen::Vector3d> p3;
      std::vector<Eigen::Vector2d> p2;
      build_pairs(cues.frames[t], posed, model, mode.level, p3, p2);
      PnPResult pose;
      if (mode.solver == Solver::EPnPRansac) {
        RansacOptions o = ransac;
        o.seed = ransac.seed + static_cast<std::uint64_t>(t) * 0x9e3779b97f4a7c15ull;
        pose = ransac_pnp(p3, p2, cues.intrinsics, o).pose;
      } else {
        pose = epnp(p3, p2, cues.intrinsics);
      }
      CameraFrame cam;
      cam.intrinsics = cues.intrinsics;
      cam.rotation = pose.rotation;
      cam.translation = pose.translation;
      solved[t] = cam;
    } catch (const Error& e) {
      why[t] = e.what();
      if (t == 0) frame0_error[0] = std::current_exception();
    }
  });
  if (!solved[0]) {
    if (frame0_error[0]) {
      try {
        std::rethrow_exception(frame0_error[0]);
      } catch (const NoConsensusError&) {
        throw NoConsensusError("frame 0 camera initialization failed with no earlier frame to fall back on: " + why[0]);
      } catch (const InputError&) {
        throw InputError("frame 0 camera initialization failed with no earlier frame to fall back on: " + why[0]);
      } catch (const Error&) {
        throw NumericalError("frame 0 camera initialization failed with no earlier frame to fall back on: " + why[0]);
      }
    }
  }
  InitResult out;
  out.cameras.resize(T);
  out.fell_back.assign(T, 0);
  out.failures.resize(T);
  for (int t = 0; t < T; ++t) {
    if (solved[t]) {
      out.cameras[t] = *solved[t];
    } else {
      out.cameras[t] = out.cameras[t - 1];
      out.fell_back[t] = 1;
      out.failures[t] = why[t];
      ++out.num_fallbacks;
    }
  }
  return out;
}

}  // namespace quadfit::camera

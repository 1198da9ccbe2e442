#include "support.hpp"

#include "quadfit/align.hpp"
#include "quadfit/eval.hpp"
#include "quadfit/raster.hpp"
#include "quadfit/synth.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace quadfit;
namespace fs = std::filesystem;

namespace {

synth::SceneSpec small_spec(int frames = 6) {
  synth::SceneSpec s;
  s.frames = frames;
  s.seed = 11;
  s.camera.intrinsics = {125, 125, 63.5, 63.5, 128, 128};
  return s;
}

const model::QuadTemplate& quad() {
  static const model::QuadTemplate t = synth::quadruped_template();
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("anchor frames are clipped to the video") {
  CHECK(synth::anchor_frames(20) == std::vector<int>{1});
  CHECK(synth::anchor_frames(51) == std::vector<int>{1, 51});
  CHECK(synth::anchor_frames(101) == std::vector<int>{1, 51, 101});
  CHECK(synth::anchor_frames(200) == std::vector<int>{1, 51, 101, 151});
}

TEST_CASE("noise-free scene loads with nothing filtered and exact pixel and track terms") {
  const synth::Scene sc = synth::generate_scene(quad(), small_spec());
  const auto dir = qtest::scratch_dir("synth_clean");
  synth::write_scene(sc, dir);
  cues::LoadOptions lo;
  lo.num_template_vertices = quad().num_vertices();
  const cues::CueSet cues = cues::load_cues(dir / "manifest.json", lo);
  CHECK(cues.report.filtered_total() == 0);
  CHECK(cues.tracks.size() == sc.cues.tracks.size());

  const model::QuadModel m(quad());
  for (int t = 0; t < cues.num_frames; ++t) {
    const camera::Projection pr = camera::project(sc.cameras[t], m.pose(sc.params[t]));
    CHECK(!cues.frames[t].corrs.empty());
    CHECK(align::loss_pix(cues.frames[t].corrs, pr).value < 1e-8);
  }
  CHECK(align::loss_time(cues.tracks, m, sc.params, sc.cameras).value < 1e-8);
  // Self-rasterization reproduces the masks.
  std::vector<Points3> meshes;
  for (const auto& p : sc.params) meshes.push_back(m.pose(p));
  const eval::IouSeries s = eval::iou_series(meshes, quad().faces, sc.cameras, cues.masks);
  CHECK(s.mean == 1.0);
  CHECK(s.worst5 == 1.0);
}

TEST_CASE("object and part terms are smallest near the ground truth") {
  const synth::Scene sc = synth::generate_scene(quad(), small_spec(3));
  const model::QuadModel m(quad());
  const auto samples = cues::sample_part_points(sc.cues.part_masks, 200, 1);
  for (int t = 0; t < 3; ++t) {
    model::FrameParams off = sc.params[t];
    off.translation += Eigen::Vector3d(0.15, 0.05, 0.0);
    off.theta.segment<3>(6) += Eigen::Vector3d(0.0, 0.0, 0.3);
    const auto pg = camera::project(sc.cameras[t], m.pose(sc.params[t]));
    const auto po = camera::project(sc.cameras[t], m.pose(off));
    CHECK(align::loss_obj(sc.cues.masks[t], pg, 512, 0).value < align::loss_obj(sc.cues.masks[t], po, 512, 0).value);
    CHECK(align::loss_part(samples[t], pg, m).value < align::loss_part(samples[t], po, m).value);
  }
}

TEST_CASE("anchor assignment at the ground truth recovers the generating vertex") {
  synth::SceneSpec spec = small_spec(4);
  spec.tracks_per_anchor = 200;
  const synth::Scene sc = synth::generate_scene(quad(), spec);
  const model::QuadModel m(quad());
  std::vector<camera::Projection> pr;
  for (int t = 0; t < 4; ++t) pr.push_back(camera::project(sc.cameras[t], m.pose(sc.params[t])));
  const auto a = align::assign_tracks(sc.cues.tracks, [&](int t) -> const camera::Projection& { return pr[t]; });
  int hit = 0;
  for (std::size_t k = 0; k < a.size(); ++k) hit += a[k] == sc.track_vertices[k][0];
  MESSAGE("recovered " << hit << " / " << a.size());
  CHECK(hit >= 0.95 * a.size());
}

TEST_CASE("unit Gaussian noise gives a pixel loss near two") {
  synth::SceneSpec spec = small_spec(5);
  spec.noise.sigma = 1.0;
  const synth::Scene sc = synth::generate_scene(quad(), spec);
  const model::QuadModel m(quad());
  double sum = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < 5; ++t) {
    const auto pr = camera::project(sc.cameras[t], m.pose(sc.params[t]));
    const auto r = align::loss_pix(sc.cues.frames[t].corrs, pr);
    sum += r.value * r.used;
    n += r.used;
  }
  MESSAGE(n << " correspondences, mean squared error " << sum / n);
  CHECK(n >= 1000);
  CHECK(std::abs(sum / n - 2.0) < 0.2);
}

TEST_CASE("correspondences only use front-facing vertices that pass the depth test") {
  const synth::Scene sc = synth::generate_scene(quad(), small_spec(3));
  const model::QuadModel m(quad());
  for (int t = 0; t < 3; ++t) {
    const Points3 v = m.pose(sc.params[t]);
    const raster::Buffers buf = raster::render(v, quad().faces, sc.cameras[t]);
    // Area-weighted vertex normals.
    Points3 nrm = Points3::Zero(v.rows(), 3);
    for (int f = 0; f < quad().faces.rows(); ++f) {
      const Eigen::Vector3d a = v.row(quad().faces(f, 0)), b = v.row(quad().faces(f, 1)), c = v.row(quad().faces(f, 2));
      const Eigen::RowVector3d n = (b - a).cross(c - a).transpose();
      for (int k = 0; k < 3; ++k) nrm.row(quad().faces(f, k)) += n;
    }
    for (const auto& c : sc.cues.frames[t].corrs) {
      const Eigen::Vector3d x = v.row(c.vertex_id).transpose();
      const Eigen::Vector3d view = sc.cameras[t].center() - x;
      CHECK(nrm.row(c.vertex_id).dot(view.transpose()) > 0.0);
      const int px = static_cast<int>(std::lround(c.pixel.x())), py = static_cast<int>(std::lround(c.pixel.y()));
      REQUIRE(buf.covered(px, py));
      CHECK(sc.cameras[t].to_camera(x).z() <= buf.depth_at(px, py) + 0.05);
    }
  }
}

TEST_CASE("scene directories are byte-identical for a fixed seed") {
  synth::SceneSpec spec = small_spec(3);
  spec.noise = {1.0, 0.1, 0.1};
  spec.feature_dim = 4;
  const auto a = qtest::scratch_dir("synth_a"), b = qtest::scratch_dir("synth_b");
  synth::write_scene(synth::generate_scene(quad(), spec), a);
  synth::write_scene(synth::generate_scene(quad(), spec), b);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files > 8);
}

TEST_CASE("outliers and dropout change the correspondence set") {
  synth::SceneSpec clean = small_spec(2), noisy = small_spec(2);
  noisy.noise.outlier_fraction = 0.3;
  noisy.noise.dropout = 0.2;
  const auto a = synth::generate_scene(quad(), clean), b = synth::generate_scene(quad(), noisy);
  const double ratio = double(b.cues.frames[0].corrs.size()) / a.cues.frames[0].corrs.size();
  CHECK(ratio == doctest::Approx(0.8).epsilon(0.15));
  int wrong = 0;
  const model::QuadModel m(quad());
  const auto pr = camera::project(b.cameras[0], m.pose(b.params[0]));
  for (const auto& c : b.cues.frames[0].corrs) wrong += (pr.pixels.row(c.vertex_id).transpose() - c.pixel).norm() > 1e-6;
  CHECK(double(wrong) / b.cues.frames[0].corrs.size() == doctest::Approx(0.3).epsilon(0.35));
}

TEST_CASE("scene generation errors") {
  synth::SceneSpec spec = small_spec(2);
  spec.camera.radius = 0.3;
  spec.camera.height = 0.0;
  CHECK_THROWS_AS(synth::generate_scene(quad(), spec), InputError);
  spec = small_spec(2);
  spec.motion.joints["wing"] = synth::JointMotion{};
  CHECK_THROWS_AS(synth::generate_scene(quad(), spec), InputError);
  spec = small_spec(0);
  CHECK_THROWS_AS(synth::generate_scene(quad(), spec), InputError);
}

TEST_CASE("motion spec file") {
  const auto dir = qtest::scratch_dir("motion");
  std::ofstream(dir / "m.json") << R"({"neck": {"axis": [0, 0, 1], "amplitude": 0.3, "cycles": 2, "phase": 0.5},
                                      "sway": 0.1})";
  const synth::MotionSpec m = synth::MotionSpec::load(dir / "m.json");
  REQUIRE(m.joints.count("neck") == 1);
  CHECK(m.joints.at("neck").amplitude == 0.3);
  CHECK(m.sway == 0.1);
  std::ofstream(dir / "bad.json") << R"({"neck": {"axis": [0, 0], "amplitude": 0.3}})";
  CHECK_THROWS_AS(synth::MotionSpec::load(dir / "bad.json"), InputError);
}

TEST_CASE("square facing the camera rasterizes to its projected rectangle") {
  Points3 v(4, 3);
  v << -0.5, -0.25, 0, 0.5, -0.25, 0, 0.5, 0.25, 0, -0.5, 0.25, 0;
  raster::Faces f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  camera::CameraFrame cam = qtest::test_camera(4.0, 100.0, 64);
  const cues::ObjectMask m = raster::rasterize_silhouette(v, f, cam);
  // Corners project to cx +- 12.5 and cy +- 6.25.
  const double cx = cam.intrinsics.cx, cy = cam.intrinsics.cy;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool inside = std::abs(x - cx) < 12.5 - 1 && std::abs(y - cy) < 6.25 - 1;
      const bool outside = std::abs(x - cx) > 12.5 + 1 || std::abs(y - cy) > 6.25 + 1;
      if (inside) CHECK(m.at(x, y));
      if (outside) CHECK(!m.at(x, y));
    }
  cam.translation.z() = -4.0;
  CHECK(raster::rasterize_silhouette(v, f, cam).empty());
}

TEST_CASE("depth file round trip") {
  const auto dir = qtest::scratch_dir("depth");
  std::vector<float> d{0.0f, 1.5f, 2.25f, 0.0f, 3.0f, 4.0f};
  synth::write_depth(dir / "d.bin", 3, 2, d);
  int w = 0, h = 0;
  CHECK(synth::read_depth(dir / "d.bin", w, h) == d);
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(fs::file_size(dir / "d.bin") == 8 + 6 * 4);
}

#include "quadfit/synth.hpp"

#include "quadfit/parallel.hpp"
#include "quadfit/raster.hpp"
#include "quadfit/scene.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace quadfit::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- template

namespace {

constexpr int kRings = 23;
constexpr int kSegments = 26;
constexpr double kA = 1.0, kB = 0.45, kC = 0.35;

struct Leg {
  const char* hip;
  const char* knee;
  double s, phi;   // surface parameters of the leg centre
};
// Left legs sit on +z.
const Leg kLegs[4] = {{"hip_fl", "knee_fl", 0.45, M_PI - 0.55},
                      {"hip_fr", "knee_fr", 0.45, M_PI + 0.55},
                      {"hip_bl", "knee_bl", -0.45, M_PI - 0.55},
                      {"hip_br", "knee_br", -0.45, M_PI + 0.55}};

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double wrap(double a) { return std::remainder(a, 2.0 * M_PI); }

double dist_to_segment(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

model::QuadTemplate quadruped_template() {
  const int n = kRings * kSegments + 2;
  model::QuadTemplate tpl;
  tpl.rest_vertices.resize(n, 3);
  std::vector<double> head_w(n, 0.0), tail_w(n, 0.0);
  std::vector<std::array<double, 4>> leg_w(n, {0, 0, 0, 0});

  auto place = [&](int idx, double s, double phi, double radial) {
    // radial = sin(polar angle); zero at the poles
    const double h = smoothstep((s - 0.6) / 0.4);
    const double w = std::pow(std::clamp((-s - 0.6) / 0.4, 0.0, 1.0), 2.0);
    const double shrink = (1.0 - 0.35 * h) * (1.0 - 0.8 * w);
    Eigen::Vector3d p(kA * s, kB * radial * std::cos(phi) * shrink, kC * radial * std::sin(phi) * shrink);
    p.x() += 0.45 * h - 0.8 * w;
    p.y() += 0.3 * h + 0.25 * w;
    head_w[idx] = h;
    tail_w[idx] = w;
    for (int l = 0; l < 4; ++l) {
      const double ds = (s - kLegs[l].s) / 0.2, dp = wrap(phi - kLegs[l].phi) / 0.55;
      const double d2 = ds * ds + dp * dp;
      const double g = std::exp(-d2 * d2);   // flat-topped so the foot is a column, not a spike
      leg_w[idx][l] = g;
      const double cs = kLegs[l].s;
      const Eigen::Vector2d centre(kA * cs, kC * std::sqrt(1.0 - cs * cs) * std::sin(kLegs[l].phi));
      p.x() = (1.0 - 0.5 * g) * p.x() + 0.5 * g * centre.x();
      p.z() = (1.0 - 0.5 * g) * p.z() + 0.5 * g * centre.y();
      p.y() -= 0.75 * g;
    }
    tpl.rest_vertices.row(idx) = p.transpose();
  };

  place(0, 1.0, 0.0, 0.0);
  for (int r = 1; r <= kRings; ++r) {
    const double alpha = M_PI * r / (kRings + 1);
    for (int k = 0; k < kSegments; ++k)
      place(1 + (r - 1) * kSegments + k, std::cos(alpha), 2.0 * M_PI * k / kSegments, std::sin(alpha));
  }
  place(n - 1, -1.0, 0.0, 0.0);

  auto vid = [](int r, int k) { return 1 + (r - 1) * kSegments + (k % kSegments); };
  std::vector<std::array<int, 3>> faces;
  for (int k = 0; k < kSegments; ++k) faces.push_back({0, vid(1, k), vid(1, k + 1)});
  for (int r = 1; r < kRings; ++r)
    for (int k = 0; k < kSegments; ++k) {
      faces.push_back({vid(r, k), vid(r + 1, k), vid(r + 1, k + 1)});
      faces.push_back({vid(r, k), vid(r + 1, k + 1), vid(r, k + 1)});
    }
  for (int k = 0; k < kSegments; ++k) faces.push_back({vid(kRings, k), n - 1, vid(kRings, k + 1)});
  tpl.faces.resize(static_cast<int>(faces.size()), 3);
  double vol = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int c = 0; c < 3; ++c) tpl.faces(f, c) = faces[f][c];
    const Eigen::Vector3d a = tpl.rest_vertices.row(faces[f][0]), b = tpl.rest_vertices.row(faces[f][1]),
                          c = tpl.rest_vertices.row(faces[f][2]);
    vol += a.dot(b.cross(c));
  }
  if (vol < 0)
    for (int f = 0; f < tpl.faces.rows(); ++f) std::swap(tpl.faces(f, 1), tpl.faces(f, 2));

  // Skeleton.
  struct J {
    const char* name;
    const char* parent;
    Eigen::Vector3d pos;
    int limb;
  };
  const std::vector<J> joints = {
      {"root", nullptr, {0.0, 0.0, 0.0}, -1},         {"chest", "root", {0.35, 0.05, 0.0}, -1},
      {"neck", "chest", {0.75, 0.12, 0.0}, -1},        {"tail_base", "root", {-0.65, 0.05, 0.0}, -1},
      {"tail_mid", "tail_base", {-1.0, 0.15, 0.0}, -1}, {"hip_fl", "chest", {0.45, -0.2, 0.16}, -1},
      {"knee_fl", "hip_fl", {0.45, -0.62, 0.16}, 0},  {"hip_fr", "chest", {0.45, -0.2, -0.16}, -1},
      {"knee_fr", "hip_fr", {0.45, -0.62, -0.16}, 1}, {"hip_bl", "root", {-0.45, -0.2, 0.16}, -1},
      {"knee_bl", "hip_bl", {-0.45, -0.62, 0.16}, 2}, {"hip_br", "root", {-0.45, -0.2, -0.16}, -1},
      {"knee_br", "hip_br", {-0.45, -0.62, -0.16}, 3}};
  auto index_of = [&](const char* name) {
    for (std::size_t i = 0; i < joints.size(); ++i)
      if (std::string_view(joints[i].name) == name) return static_cast<int>(i);
    return -1;
  };
  for (const J& j : joints) {
    model::Joint mj;
    mj.name = j.name;
    mj.parent = j.parent ? index_of(j.parent) : -1;
    mj.offset = j.parent ? Eigen::Vector3d(j.pos - joints[mj.parent].pos) : j.pos;
    mj.limb = j.limb;
    tpl.joints.push_back(mj);
  }
  tpl.num_limbs = 4;

  // Bone segments per joint: to each child, or to a fixed tip for leaves.
  const int nj = static_cast<int>(joints.size());
  std::vector<std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>> bones(nj);
  for (int j = 1; j < nj; ++j) bones[tpl.joints[j].parent].emplace_back(joints[tpl.joints[j].parent].pos, joints[j].pos);
  bones[index_of("neck")].emplace_back(joints[index_of("neck")].pos, Eigen::Vector3d(1.35, 0.4, 0.0));
  bones[index_of("tail_mid")].emplace_back(joints[index_of("tail_mid")].pos, Eigen::Vector3d(-1.55, 0.3, 0.0));
  for (const Leg& l : kLegs) {
    const Eigen::Vector3d k = joints[index_of(l.knee)].pos;
    bones[index_of(l.knee)].emplace_back(k, Eigen::Vector3d(k.x(), -1.0, k.z()));
  }
  constexpr double kSigma = 0.15;
  tpl.skin_weights = Eigen::MatrixXd::Zero(n, nj);
  for (int v = 0; v < n; ++v) {
    const Eigen::Vector3d p = tpl.rest_vertices.row(v);
    std::vector<std::pair<double, int>> w;
    for (int j = 0; j < nj; ++j) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& [a, b] : bones[j]) d = std::min(d, dist_to_segment(p, a, b));
      w.emplace_back(std::exp(-d * d / (2.0 * kSigma * kSigma)), j);
    }
    std::sort(w.begin(), w.end(), [](const auto& x, const auto& y) { return x.first > y.first || (x.first == y.first && x.second < y.second); });
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) sum += w[i].first;
    if (!(sum > 0.0)) {
      tpl.skin_weights(v, w[0].second) = 1.0;
      continue;
    }
    for (int i = 0; i < 4; ++i) tpl.skin_weights(v, w[i].second) = w[i].first / sum;
    tpl.skin_weights.row(v) /= tpl.skin_weights.row(v).sum();
  }

  // Part labels: feet first, then head/tail by position along the body.
  tpl.part_labels.resize(n);
  for (int v = 0; v < n; ++v) {
    const double g = *std::max_element(leg_w[v].begin(), leg_w[v].end());
    if (g > 0.3) tpl.part_labels[v] = Part::Feet;
    else if (head_w[v] > 0.0) tpl.part_labels[v] = Part::Head;
    else if (tail_w[v] > 0.0) tpl.part_labels[v] = Part::Tail;
    else tpl.part_labels[v] = Part::Body;
  }

  // Shape bases.
  tpl.shape_basis.assign(8, Points3::Zero(n, 3));
  for (int v = 0; v < n; ++v) {
    const Eigen::Vector3d p = tpl.rest_vertices.row(v);
    const double g = *std::max_element(leg_w[v].begin(), leg_w[v].end());
    const double h = head_w[v], w = tail_w[v];
    tpl.shape_basis[0].row(v) << 0.15 * p.x(), 0.0, 0.0;
    tpl.shape_basis[1].row(v) << 0.0, 0.12 * p.y(), 0.12 * p.z();
    tpl.shape_basis[2].row(v) << 0.0, -0.2 * g, 0.0;
    tpl.shape_basis[3].row(v) << 0.15 * h * (p.x() - 0.9), 0.15 * h * (p.y() - 0.25), 0.15 * h * p.z();
    tpl.shape_basis[4].row(v) << -0.25 * w, 0.05 * w, 0.0;
    tpl.shape_basis[5].row(v) << 0.0, 0.1 * p.y(), 0.0;
    tpl.shape_basis[6].row(v) << 0.0, -0.1 * std::exp(-(p.x() - 0.3) * (p.x() - 0.3) / 0.1) * std::max(0.0, -p.y()), 0.0;
    tpl.shape_basis[7].row(v) << 0.0, 0.08 * p.x() * p.y(), 0.08 * p.x() * p.z();
  }

  tpl.pose_limits.resize(nj);
  for (int j = 0; j < nj; ++j)
    for (int c = 0; c < 3; ++c) tpl.pose_limits[j][c] = j == 0 ? model::PoseLimit{-M_PI, M_PI} : model::PoseLimit{-1.0, 1.0};

  // Landmarks: head tip, tail tip, front-left foot, back-right foot.
  auto lowest_of_leg = [&](int leg) {
    int best = -1;
    for (int v = 0; v < n; ++v)
      if (leg_w[v][leg] > 0.5 && (best < 0 || tpl.rest_vertices(v, 1) < tpl.rest_vertices(best, 1))) best = v;
    return best;
  };
  tpl.landmarks = {0, n - 1, lowest_of_leg(0), lowest_of_leg(3)};
  tpl.validate();
  return tpl;
}

// ---------------------------------------------------------------- motion

MotionSpec MotionSpec::walk() {
  MotionSpec m;
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ(), y = Eigen::Vector3d::UnitY();
  m.joints["root"] = {y, 0.1, 0.5, 0.0};
  m.joints["neck"] = {z, 0.15, 1.0, 0.5};
  m.joints["tail_base"] = {y, 0.35, 2.0, 0.0};
  m.joints["tail_mid"] = {y, 0.3, 2.0, 1.0};
  m.joints["hip_fl"] = {z, 0.35, 1.0, 0.0};
  m.joints["hip_fr"] = {z, 0.35, 1.0, M_PI};
  m.joints["hip_bl"] = {z, 0.35, 1.0, M_PI};
  m.joints["hip_br"] = {z, 0.35, 1.0, 0.0};
  m.joints["knee_fl"] = {z, 0.25, 1.0, M_PI / 2};
  m.joints["knee_fr"] = {z, 0.25, 1.0, 3 * M_PI / 2};
  m.joints["knee_bl"] = {z, 0.25, 1.0, 3 * M_PI / 2};
  m.joints["knee_br"] = {z, 0.25, 1.0, M_PI / 2};
  return m;
}

MotionSpec MotionSpec::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open motion spec " + path.string());
  MotionSpec m;
  try {
    const json doc = json::parse(in);
    for (const auto& [name, j] : doc.items()) {
      if (name == "sway") {
        m.sway = j.get<double>();
        continue;
      }
      JointMotion jm;
      const auto axis = j.value("axis", std::vector<double>{0, 0, 1});
      if (axis.size() != 3) throw InputError(path.string() + ": " + name + ".axis must have 3 entries");
      jm.axis = Eigen::Vector3d(axis[0], axis[1], axis[2]);
      if (jm.axis.norm() == 0.0) throw InputError(path.string() + ": " + name + ".axis must be nonzero");
      jm.axis.normalize();
      jm.amplitude = j.value("amplitude", 0.0);
      jm.cycles = j.value("cycles", 1.0);
      jm.phase = j.value("phase", 0.0);
      m.joints[name] = jm;
    }
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return m;
}

model::FrameParams motion_params(const model::QuadTemplate& tpl, const MotionSpec& motion, int t, int frames,
                                 const Eigen::VectorXd& beta, const Eigen::VectorXd& limb_scales) {
  model::FrameParams p = model::FrameParams::rest(tpl);
  p.beta = beta;
  p.limb_scales = limb_scales;
  const double u = frames > 0 ? static_cast<double>(t) / frames : 0.0;
  for (const auto& [name, jm] : motion.joints) {
    int j = -1;
    for (int k = 0; k < tpl.num_joints(); ++k)
      if (tpl.joints[k].name == name) j = k;
    if (j < 0) throw InputError("motion spec names unknown joint '" + name + "'");
    const double a = jm.amplitude * std::sin(2.0 * M_PI * jm.cycles * u + jm.phase);
    p.theta.segment<3>(3 * j) += a * jm.axis;
  }
  p.translation = Eigen::Vector3d(motion.sway * std::sin(2.0 * M_PI * u), 0.0, 0.0);
  return p;
}

std::vector<int> anchor_frames(int frames) {
  std::vector<int> out;
  for (int a : {1, 51, 101, 151})
    if (a - 1 < frames) out.push_back(a);
  return out;
}

// ---------------------------------------------------------------- scene

namespace {

Points3 vertex_normals(const Points3& v, const raster::Faces& f) {
  Points3 n = Points3::Zero(v.rows(), 3);
  for (int i = 0; i < f.rows(); ++i) {
    const Eigen::Vector3d a = v.row(f(i, 0)), b = v.row(f(i, 1)), c = v.row(f(i, 2));
    const Eigen::RowVector3d fn = (b - a).cross(c - a).transpose();
    for (int k = 0; k < 3; ++k) n.row(f(i, k)) += fn;
  }
  for (int i = 0; i < n.rows(); ++i) {
    const double l = n.row(i).norm();
    if (l > 0) n.row(i) /= l;
  }
  return n;
}

struct FrameRender {
  raster::Buffers buf;
  camera::Projection proj;
  std::vector<std::uint8_t> visible;
};

FrameRender render_frame(const model::QuadTemplate& tpl, const Points3& posed, const camera::CameraFrame& cam) {
  FrameRender fr;
  fr.buf = raster::render(posed, tpl.faces, cam);
  fr.proj = camera::project(cam, posed);
  const Points3 normals = vertex_normals(posed, tpl.faces);
  const Eigen::Vector3d centre = cam.center();
  fr.visible.assign(posed.rows(), 0);
  for (int v = 0; v < posed.rows(); ++v) {
    if (!fr.proj.valid[v]) continue;
    const Eigen::Vector3d p = posed.row(v).transpose();
    if (normals.row(v).dot((centre - p).transpose()) <= 0.0) continue;
    const int x = static_cast<int>(std::lround(fr.proj.pixels(v, 0)));
    const int y = static_cast<int>(std::lround(fr.proj.pixels(v, 1)));
    if (x < 0 || y < 0 || x >= fr.buf.width || y >= fr.buf.height) continue;
    if (!fr.buf.covered(x, y)) continue;
    const double z = fr.proj.camera_points(v, 2);
    if (z > fr.buf.depth_at(x, y) + 0.03) continue;
    fr.visible[v] = 1;
  }
  return fr;
}

}  // namespace

Scene generate_scene(const model::QuadTemplate& tpl, const SceneSpec& spec) {
  if (spec.frames < 1) throw InputError("synth: frames must be >= 1");
  if (spec.noise.sigma < 0 || spec.noise.outlier_fraction < 0 || spec.noise.outlier_fraction > 1 ||
      spec.noise.dropout < 0 || spec.noise.dropout >= 1)
    throw InputError("synth: noise spec out of range");
  spec.camera.intrinsics.validate();
  const model::QuadModel model(tpl);
  const int T = spec.frames, N = tpl.num_vertices();
  const camera::Intrinsics& K = spec.camera.intrinsics;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd beta(tpl.num_betas());
  for (int k = 0; k < beta.size(); ++k) beta(k) = spec.beta_scale * unit(rng);
  Eigen::VectorXd limbs(tpl.num_limbs);
  for (int k = 0; k < limbs.size(); ++k) limbs(k) = 1.0 + spec.limb_scale_jitter * unit(rng);

  Scene sc;
  sc.tpl = tpl;
  sc.params.resize(T);
  sc.cameras.resize(T);
  std::vector<Points3> posed(T);
  std::vector<FrameRender> renders(T);
  for (int t = 0; t < T; ++t) {
    sc.params[t] = motion_params(tpl, spec.motion, t, T, beta, limbs);
    const double az = (spec.camera.start_deg + spec.camera.sweep_deg * t / std::max(T - 1, 1)) * M_PI / 180.0;
    const Eigen::Vector3d eye(spec.camera.radius * std::cos(az), spec.camera.height, spec.camera.radius * std::sin(az));
    sc.cameras[t] = camera::look_at(K, eye, Eigen::Vector3d(0.0, -0.1, 0.0));
  }
  parallel_for(T, [&](int t) {
    posed[t] = model.pose(sc.params[t]);
    const Eigen::Vector3d mn = posed[t].colwise().minCoeff(), mx = posed[t].colwise().maxCoeff();
    const Eigen::Vector3d c = sc.cameras[t].center();
    if ((c.array() >= mn.array() - 0.05).all() && (c.array() <= mx.array() + 0.05).all())
      throw InputError("synth: camera path intersects the mesh at frame " + std::to_string(t));
    for (int v = 0; v < N; ++v)
      if (sc.cameras[t].to_camera(posed[t].row(v).transpose()).z() <= raster::kNearPlane)
        throw InputError("synth: camera path intersects the mesh at frame " + std::to_string(t));
    renders[t] = render_frame(tpl, posed[t], sc.cameras[t]);
  });

  cues::CueSet& cues = sc.cues;
  cues.num_frames = T;
  cues.intrinsics = K;
  cues.masks.resize(T);
  cues.part_masks.resize(T);
  cues.frames.resize(T);
  sc.depth.resize(T);
  for (int t = 0; t < T; ++t) {
    const raster::Buffers& buf = renders[t].buf;
    cues.masks[t] = raster::silhouette(buf);
    if (cues.masks[t].empty()) throw InputError("synth: the animal is outside the image at frame " + std::to_string(t));
    for (auto& m : cues.part_masks[t].masks) m = cues::ObjectMask(K.width, K.height);
    sc.depth[t].assign(std::size_t(K.width) * K.height, 0.0f);
    for (int y = 0; y < K.height; ++y)
      for (int x = 0; x < K.width; ++x) {
        const int f = buf.face[std::size_t(y) * K.width + x];
        if (f < 0) continue;
        const Part a = tpl.part_labels[tpl.faces(f, 0)], b = tpl.part_labels[tpl.faces(f, 1)],
                   c = tpl.part_labels[tpl.faces(f, 2)];
        const Part label = (b == c) ? b : a;
        cues.part_masks[t].masks[part_index(label)].set(x, y);
        sc.depth[t][std::size_t(y) * K.width + x] = static_cast<float>(buf.depth_at(x, y));
      }
  }

  // Pixel correspondences from visible vertices, then the noise model.
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> any_vertex(0, N - 1);
  for (int t = 0; t < T; ++t) {
    auto& corrs = cues.frames[t].corrs;
    for (int v = 0; v < N; ++v) {
      if (!renders[t].visible[v]) continue;
      cues::PixelCorr c{renders[t].proj.pixels.row(v).transpose(), v, 1.0};
      if (spec.noise.dropout > 0 && u01(rng) < spec.noise.dropout) continue;
      if (spec.noise.outlier_fraction > 0 && u01(rng) < spec.noise.outlier_fraction) c.vertex_id = any_vertex(rng);
      if (spec.noise.sigma > 0) c.pixel += spec.noise.sigma * Eigen::Vector2d(gauss(rng), gauss(rng));
      corrs.push_back(c);
    }
  }

  // Tracks seeded at the anchor frames.
  int next_id = 0;
  for (int a : anchor_frames(T)) {
    const int f = a - 1;
    std::vector<int> pool;
    for (int v = 0; v < N; ++v)
      if (renders[f].visible[v]) pool.push_back(v);
    const int count = std::min<int>(spec.tracks_per_anchor, static_cast<int>(pool.size()));
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::sort(pool.begin(), pool.begin() + count);
    for (int i = 0; i < count; ++i) {
      const int v = pool[i];
      cues::Track tr;
      tr.id = next_id++;
      tr.anchor = a;
      tr.positions.resize(T);
      tr.valid.assign(T, 0);
      for (int t = 0; t < T; ++t) {
        Eigen::Vector2d p = renders[t].proj.valid[v] ? Eigen::Vector2d(renders[t].proj.pixels.row(v).transpose())
                                                     : Eigen::Vector2d::Zero();
        if (spec.noise.sigma > 0) p += spec.noise.sigma * Eigen::Vector2d(gauss(rng), gauss(rng));
        tr.positions[t] = p;
        tr.valid[t] = renders[t].visible[v] && cues.masks[t].contains(p);
      }
      cues.tracks.push_back(std::move(tr));
      sc.track_vertices.push_back({v});
    }
  }

  if (spec.feature_dim > 0) {
    const int in = 3 * tpl.num_joints() + 3;
    Eigen::MatrixXd P(spec.feature_dim, in);
    for (int j = 0; j < in; ++j)
      for (int i = 0; i < spec.feature_dim; ++i) P(i, j) = gauss(rng) / std::sqrt(static_cast<double>(in));
    cues::Features feats;
    feats.dim = spec.feature_dim;
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd x(in);
      x << sc.params[t].theta, sc.params[t].translation;
      feats.frames.push_back((P * x).array().tanh().cast<float>().matrix());
    }
    cues.features = std::move(feats);
  }
  cues.part_samples_per_frame = cues::kDefaultPartSamples;
  cues.part_seed = spec.seed;
  return sc;
}

// ---------------------------------------------------------------- files

static_assert(std::endian::native == std::endian::little, "depth I/O assumes a little-endian host");

fs::path depth_file(const fs::path& dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "%04d.bin", frame);
  return dir / name;
}

void write_depth(const fs::path& path, int width, int height, const std::vector<float>& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::uint32_t hdr[2] = {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  out.write(reinterpret_cast<const char*>(depth.data()), depth.size() * sizeof(float));
}

std::vector<float> read_depth(const fs::path& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open depth map " + path.string());
  std::uint32_t hdr[2];
  if (!in.read(reinterpret_cast<char*>(hdr), sizeof hdr)) throw InputError(path.string() + ": truncated header");
  width = static_cast<int>(hdr[0]);
  height = static_cast<int>(hdr[1]);
  std::vector<float> d(std::size_t(width) * height);
  if (!in.read(reinterpret_cast<char*>(d.data()), d.size() * sizeof(float)))
    throw InputError(path.string() + ": expected " + std::to_string(d.size()) + " depth values");
  return d;
}

void write_scene(const Scene& sc, const fs::path& dir) {
  fs::create_directories(dir / "depth");
  const fs::path manifest = dir / "manifest.json";
  fs::remove(manifest);
  model::save_template(sc.tpl, dir / "template.json");
  scene::write_params(dir / "gt_params.json", sc.params);
  for (std::size_t t = 0; t < sc.depth.size(); ++t)
    write_depth(depth_file(dir / "depth", static_cast<int>(t)), sc.cues.intrinsics.width, sc.cues.intrinsics.height,
                sc.depth[t]);
  const json extra{{"template", "template.json"}, {"ground_truth", "gt_params.json"}, {"depth", "depth"}};
  cues::save_cues(sc.cues, manifest, extra.dump());
  scene::write_cameras(manifest, sc.cameras, "gt_cameras");
}

}  // namespace quadfit::synth

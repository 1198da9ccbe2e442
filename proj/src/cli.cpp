#include "quadfit/cli.hpp"

#include "quadfit/camera_init.hpp"
#include "quadfit/eval.hpp"
#include "quadfit/fmap.hpp"
#include "quadfit/parallel.hpp"
#include "quadfit/scene.hpp"
#include "quadfit/sched.hpp"
#include "quadfit/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace quadfit::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Level { Quiet, Error, Warn, Info, Debug };

Level log_level() {
  const char* env = std::getenv("QUADFIT_LOG");
  if (!env) return Level::Info;
  const std::string v = env;
  if (v == "quiet") return Level::Quiet;
  if (v == "error") return Level::Error;
  if (v == "warn") return Level::Warn;
  if (v == "debug") return Level::Debug;
  return Level::Info;
}

struct Log {
  explicit Log(std::ostream& e) : err(e) {}
  std::ostream& err;
  Level level = log_level();
  std::ostringstream sink;

  std::ostream& at(Level l) {
    if (l > level) {
      sink.str("");
      return sink;
    }
    return err;
  }
  std::ostream& info() { return at(Level::Info); }
  std::ostream& warn() { return at(Level::Warn); }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

model::QuadTemplate scene_template(const fs::path& manifest) {
  if (auto p = scene::manifest_entry(manifest, "template")) return model::load_template(*p);
  return synth::quadruped_template();
}

std::vector<model::FrameParams> initial_params(const std::optional<fs::path>& file, const model::QuadTemplate& tpl,
                                               int frames) {
  if (!file) return std::vector<model::FrameParams>(frames, model::FrameParams::rest(tpl));
  auto p = scene::read_params(*file, tpl);
  if (static_cast<int>(p.size()) != frames)
    throw InputError(file->string() + ": frames has " + std::to_string(p.size()) + " entries, scene has " +
                     std::to_string(frames));
  return p;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError(flag + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  int frames = 20;
  std::string motion;
  std::string template_file;
  double sigma = 0.0, outliers = 0.0, dropout = 0.0;
  int tracks_per_anchor = 64;
  int feature_dim = 0;
  double radius = 3.8, height = 0.8, sweep = 60.0;
};

void cmd_synth(const SynthArgs& a, std::uint64_t seed, Log& log) {
  synth::SceneSpec spec;
  spec.frames = a.frames;
  spec.seed = seed;
  if (!a.motion.empty()) spec.motion = synth::MotionSpec::load(a.motion);
  spec.noise = {a.sigma, a.outliers, a.dropout};
  spec.tracks_per_anchor = a.tracks_per_anchor;
  spec.feature_dim = a.feature_dim;
  spec.camera.radius = a.radius;
  spec.camera.height = a.height;
  spec.camera.sweep_deg = a.sweep;
  const model::QuadTemplate tpl = a.template_file.empty() ? synth::quadruped_template() : model::load_template(a.template_file);
  const synth::Scene sc = synth::generate_scene(tpl, spec);
  synth::write_scene(sc, a.out);
  std::size_t corrs = 0;
  for (const auto& f : sc.cues.frames) corrs += f.corrs.size();
  log.info() << "synth: " << a.frames << " frames, " << corrs << " correspondences, " << sc.cues.tracks.size()
             << " tracks -> " << a.out << '\n';
}

// ---------------------------------------------------------------- zoomout

struct ZoomArgs {
  std::string source, target, landmarks, out = "vertex_map.csv";
  int k0 = 20, k_final = 100, step = 1;
};

std::pair<std::vector<int>, std::vector<int>> read_landmarks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open landmarks " + path.string());
  std::vector<int> s, t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("source", 0) == 0) continue;
    int a = 0, b = 0;
    char comma = 0;
    std::istringstream ls(line);
    if (!(ls >> a >> comma >> b) || comma != ',')
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'source_id,target_id'");
    s.push_back(a);
    t.push_back(b);
  }
  return {s, t};
}

void cmd_zoomout(const ZoomArgs& a, std::uint64_t seed, std::ostream& out) {
  if (a.k0 < 1 || a.k_final < a.k0 || a.step < 1)
    throw InputError("zoomout: need 1 <= k0 <= k-final and step >= 1");
  const model::QuadTemplate src = model::load_template(a.source), tgt = model::load_template(a.target);
  std::vector<int> ls = src.landmarks, lt = tgt.landmarks;
  if (!a.landmarks.empty()) std::tie(ls, lt) = read_landmarks(a.landmarks);
  if (ls.size() != lt.size() || ls.empty()) throw InputError("zoomout: landmark lists must be non-empty and paired");
  for (int v : ls)
    if (v < 0 || v >= src.num_vertices()) throw InputError("zoomout: source landmark " + std::to_string(v) + " out of range");
  for (int v : lt)
    if (v < 0 || v >= tgt.num_vertices()) throw InputError("zoomout: target landmark " + std::to_string(v) + " out of range");
  const fmap::EigenOptions eo{1e-8, seed + 1};
  const auto bs = fmap::spectral_basis(src.rest_vertices, src.faces, a.k_final, eo);
  const auto bt = fmap::spectral_basis(tgt.rest_vertices, tgt.faces, a.k_final, eo);
  const Eigen::MatrixXd C0 = fmap::landmark_init(bs, bt, ls, lt, a.k0);
  const auto res = fmap::zoomout(bs, bt, C0, a.k_final, a.step);
  fmap::write_vertex_map(res.map, a.out);
  out << "zoomout: " << res.map.source_to_target.size() << " vertices mapped, final commutativity energy "
      << fmt(res.energies.empty() ? 0.0 : res.energies.back()) << " -> " << a.out << '\n';
}

// ---------------------------------------------------------------- init-cameras

struct InitArgs {
  std::string scene, level = "part+pixel", solver = "epnp-ransac", init_params, camera_key = "cameras";
  int ransac_iters = 256;
  double inlier_px = 8.0;
};

void cmd_init(const InitArgs& a, std::uint64_t seed, std::ostream& out, Log& log) {
  const fs::path manifest = scene::manifest_path(a.scene);
  const model::QuadModel model(scene_template(manifest));
  cues::LoadOptions lo;
  lo.num_template_vertices = model.num_vertices();
  const cues::CueSet cues = cues::fallback_fill(cues::load_cues(manifest, lo));
  const auto init = initial_params(a.init_params.empty() ? std::nullopt : std::optional<fs::path>(a.init_params),
                                   model.tpl(), cues.num_frames);
  camera::InitMode mode{camera::parse_cue_level(a.level), camera::parse_solver(a.solver)};
  camera::RansacOptions ro{a.ransac_iters, a.inlier_px, seed};
  if (ro.iterations < 1 || !(ro.inlier_px > 0)) throw InputError("init-cameras: --ransac-iters and --inlier-px must be positive");
  const auto res = camera::init_cameras(cues, model, init, mode, ro);
  scene::write_cameras(manifest, res.cameras, a.camera_key);
  for (std::size_t t = 0; t < res.fell_back.size(); ++t)
    if (res.fell_back[t]) log.warn() << "init-cameras: frame " << t << " reused the previous camera\n";
  out << "init-cameras: " << res.cameras.size() << " frames, " << res.num_fallbacks << " fallbacks -> "
      << manifest.string() << " [" << a.camera_key << "]\n";
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string scene, out, mode = "direct", schedule, resume, disable, camera_key = "cameras", init_params;
  std::optional<int> epochs, batch_size, offset_enable_epoch;
  std::optional<double> lr, lr_gamma;
  std::string lr_milestones;
  bool net_offsets = false, optimize_cameras = false, chamfer_boundary = false, obj = false;
  int mask_budget = align::kDefaultMaskBudget, resample_parts_every = 0, checkpoint_every = 0, log_every = 10;
};

void cmd_fit(const FitArgs& a, std::uint64_t seed, std::ostream& out, Log& log) {
  const fs::path manifest = scene::manifest_path(a.scene);
  const fs::path dir = a.out.empty() ? manifest.parent_path() / "fit" : fs::path(a.out);
  const model::QuadModel model(scene_template(manifest));
  cues::LoadOptions lo;
  lo.num_template_vertices = model.num_vertices();
  const cues::CueSet cues = cues::fallback_fill(cues::load_cues(manifest, lo));
  const auto cams = scene::read_cameras(manifest, a.camera_key);
  const auto init = initial_params(a.init_params.empty() ? std::nullopt : std::optional<fs::path>(a.init_params),
                                   model.tpl(), cues.num_frames);

  sched::Schedule s = a.schedule.empty() ? sched::Schedule{} : sched::load_schedule(a.schedule);
  if (a.epochs) s = s.with_epochs(*a.epochs);
  if (a.batch_size) s.batch_size = *a.batch_size;
  if (a.offset_enable_epoch) s.offset_enable_epoch = *a.offset_enable_epoch;
  if (a.lr) s.lr = *a.lr;
  if (a.lr_gamma) s.lr_gamma = *a.lr_gamma;
  if (!a.lr_milestones.empty()) s.lr_milestones = parse_int_list(a.lr_milestones, "--lr-milestones");
  s.validate();

  sched::FitOptions o;
  o.mode = sched::parse_mode(a.mode);
  o.net_offsets = a.net_offsets;
  o.optimize_cameras = a.optimize_cameras;
  o.chamfer_boundary = a.chamfer_boundary;
  o.mask_budget = a.mask_budget;
  o.resample_parts_every = a.resample_parts_every;
  o.seed = seed;
  o.log_every = a.log_every;
  o.checkpoint_every = a.checkpoint_every;
  o.checkpoint_dir = dir;
  if (!a.resume.empty()) o.resume = fs::path(a.resume);
  std::stringstream ds(a.disable);
  std::string term;
  const char* names[4] = {"obj", "part", "pix", "time"};
  while (std::getline(ds, term, ',')) {
    if (term.empty()) continue;
    bool found = false;
    for (int k = 0; k < 4; ++k)
      if (term == names[k]) o.disable[k] = found = true;
    if (!found) throw InputError("--disable: unknown term '" + term + "' (expected obj, part, pix, time)");
  }
  o.progress = log.level >= Level::Info ? &log.err : nullptr;
  if (o.mask_budget < 1) throw InputError("--mask-budget must be >= 1");
  if (o.log_every < 0 || o.checkpoint_every < 0 || o.resample_parts_every < 0)
    throw InputError("--log-every, --checkpoint-every and --resample-parts-every must be >= 0");

  fs::create_directories(dir);
  const sched::FitResult r = sched::fit(cues, model, cams, init, s, o);
  scene::write_params(dir / "params.json", r.params);
  sched::write_loss_log(dir / "loss.csv", r.log);
  // Fitted cameras as a minimal manifest so eval can read them back.
  const scene::ManifestInfo info = scene::read_info(manifest);
  {
    const json mini{{"frames", info.frames},
                    {"image_size", {info.intrinsics.width, info.intrinsics.height}},
                    {"intrinsics", {{"fx", info.intrinsics.fx}, {"fy", info.intrinsics.fy}, {"cx", info.intrinsics.cx}, {"cy", info.intrinsics.cy}}}};
    std::ofstream f(dir / "cameras.json");
    if (!f) throw InputError("cannot write " + (dir / "cameras.json").string());
    f << mini.dump(2) << '\n';
  }
  scene::write_cameras(dir / "cameras.json", r.cameras);
  if (a.obj)
    for (std::size_t t = 0; t < r.params.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "mesh_%04zu.obj", t);
      model::write_obj(dir / name, model.pose(r.params[t]), model.tpl().faces);
    }
  const double total = r.log.empty() ? 0.0 : r.log.back().report.total;
  out << "fit: " << r.epochs_run << " epochs (" << (r.mode_used == sched::Mode::Direct ? "direct" : "amortized")
      << "), final total " << fmt(total) << " -> " << dir.string() << '\n';
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string scene, fitted, fitted_cameras, camera_key = "cameras", out;
  bool psnr = false, lpips = false;
};

void cmd_eval(const EvalArgs& a, std::ostream& out, Log& log) {
  if (a.psnr || a.lpips)
    throw InputError("eval: texture metrics (PSNR, LPIPS) are not available; this build fits geometry only");
  const fs::path manifest = scene::manifest_path(a.scene);
  const model::QuadModel model(scene_template(manifest));
  cues::LoadOptions lo;
  lo.num_template_vertices = model.num_vertices();
  const cues::CueSet cues = cues::load_cues(manifest, lo);
  const auto params = scene::read_params(a.fitted, model.tpl());
  if (static_cast<int>(params.size()) != cues.num_frames)
    throw InputError(a.fitted + ": frames has " + std::to_string(params.size()) + " entries, scene has " +
                     std::to_string(cues.num_frames));
  std::vector<camera::CameraFrame> cams;
  if (!a.fitted_cameras.empty()) {
    cams = scene::read_cameras(a.fitted_cameras, "cameras");
    for (auto& c : cams) c.intrinsics = cues.intrinsics;
  } else {
    cams = scene::read_cameras(manifest, a.camera_key);
  }
  if (static_cast<int>(cams.size()) != cues.num_frames) throw InputError("eval: camera count does not match the scene");
  std::vector<Points3> meshes(params.size());
  parallel_for(static_cast<int>(params.size()), [&](int t) { meshes[t] = model.pose(params[t]); });

  const eval::IouSeries iou = eval::iou_series(meshes, model.tpl().faces, cams, cues.masks);
  std::optional<eval::DepthMetrics> depth;
  if (auto ddir = scene::manifest_entry(manifest, "depth")) {
    std::vector<eval::DepthMap> ref(cues.num_frames);
    for (int t = 0; t < cues.num_frames; ++t) {
      const std::vector<float> d = synth::read_depth(synth::depth_file(*ddir, t), ref[t].width, ref[t].height);
      ref[t].values.assign(d.begin(), d.end());
      if (ref[t].width != cues.intrinsics.width || ref[t].height != cues.intrinsics.height)
        throw InputError(synth::depth_file(*ddir, t).string() + ": size does not match image_size");
    }
    depth = eval::depth_metrics(meshes, model.tpl().faces, cams, ref);
  }
  const fs::path csv = a.out.empty() ? fs::path(a.fitted).parent_path() / "eval.csv" : fs::path(a.out);
  eval::write_csv(csv, iou, depth);
  out << "IoU " << fmt(iou.mean) << "  IoUw5 " << fmt(iou.worst5);
  if (iou.excluded) out << "  (" << iou.excluded << " frames with empty reference excluded)";
  out << '\n';
  if (depth) {
    out << "AbsRel " << fmt(depth->abs_rel) << "  d<1.25 " << fmt(depth->delta[0]) << "  d<1.25^2 "
        << fmt(depth->delta[1]) << "  d<1.25^3 " << fmt(depth->delta[2]);
    if (depth->excluded) out << "  (" << depth->excluded << " frames excluded)";
    out << '\n';
  } else {
    log.warn() << "eval: scene has no depth maps; depth metrics skipped\n";
  }
  out << "-> " << csv.string() << '\n';
}

// ---------------------------------------------------------------- inspect

void cmd_inspect(const std::string& scene_arg, std::ostream& out) {
  const fs::path manifest = scene::manifest_path(scene_arg);
  const model::QuadTemplate tpl = scene_template(manifest);
  cues::LoadOptions lo;
  lo.num_template_vertices = tpl.num_vertices();
  const cues::CueSet cues = cues::load_cues(manifest, lo);
  const auto& K = cues.intrinsics;
  out << "manifest    " << manifest.string() << '\n'
      << "frames      " << cues.num_frames << '\n'
      << "image       " << K.width << "x" << K.height << "  fx " << fmt(K.fx) << " fy " << fmt(K.fy) << " cx "
      << fmt(K.cx) << " cy " << fmt(K.cy) << '\n'
      << "template    " << tpl.num_vertices() << " vertices, " << tpl.faces.rows() << " faces, " << tpl.num_joints()
      << " joints, " << tpl.num_betas() << " shape coefficients, " << tpl.num_limbs << " limbs\n"
      << "tracks      " << cues.tracks.size() << '\n'
      << "features    " << (cues.features ? std::to_string(cues.features->dim) + "-d" : std::string("none")) << '\n';
  for (const std::string key : {"cameras", "gt_cameras"}) {
    bool present = true;
    try {
      scene::read_cameras(manifest, key);
    } catch (const InputError&) {
      present = false;
    }
    out << key << std::string(12 - key.size(), ' ') << (present ? "present" : "absent") << '\n';
  }
  const auto& r = cues.report;
  out << "filtered    " << r.corrs_low_confidence << " low-confidence corrs, " << r.corrs_outside_mask
      << " corrs outside mask, " << r.parts_low_confidence << " part masks, " << r.tracks_dropped << " tracks\n";
  out << "frame,mask_area,part_samples,corrs\n";
  for (int t = 0; t < cues.num_frames; ++t)
    out << t << ',' << cues.masks[t].area() << ',' << cues.frames[t].parts.size() << ',' << cues.frames[t].corrs.size()
        << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Log log{err};
  CLI::App app{"quadfit: keypoint-free quadruped mesh fitting", "quadfit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed, "Random seed");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  synth_cmd->add_option("--out", sa.out, "Output scene directory")->required();
  synth_cmd->add_option("--frames", sa.frames, "Number of frames")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--motion", sa.motion, "Motion spec JSON (default: walk cycle)");
  synth_cmd->add_option("--template", sa.template_file, "Template JSON (default: bundled quadruped)");
  synth_cmd->add_option("--sigma", sa.sigma, "Gaussian pixel noise on correspondences and tracks (px)");
  synth_cmd->add_option("--outliers", sa.outliers, "Fraction of correspondences with a random vertex");
  synth_cmd->add_option("--dropout", sa.dropout, "Fraction of correspondences removed");
  synth_cmd->add_option("--tracks-per-anchor", sa.tracks_per_anchor, "Tracks seeded per anchor frame");
  synth_cmd->add_option("--feature-dim", sa.feature_dim, "Per-frame feature dimension (0 = none)");
  synth_cmd->add_option("--radius", sa.radius, "Camera orbit radius");
  synth_cmd->add_option("--height", sa.height, "Camera height");
  synth_cmd->add_option("--sweep", sa.sweep, "Orbit sweep in degrees over the video");

  ZoomArgs za;
  auto* zoom_cmd = app.add_subcommand("zoomout", "Dense vertex map between two templates");
  zoom_cmd->add_option("source", za.source, "Source template JSON")->required();
  zoom_cmd->add_option("target", za.target, "Target template JSON")->required();
  zoom_cmd->add_option("--landmarks", za.landmarks, "CSV of source_id,target_id pairs (default: template landmarks)");
  zoom_cmd->add_option("--k0", za.k0, "Initial spectral size");
  zoom_cmd->add_option("--k-final", za.k_final, "Final spectral size");
  zoom_cmd->add_option("--step", za.step, "Spectral size increment");
  zoom_cmd->add_option("--out", za.out, "Output CSV");

  InitArgs ia;
  auto* init_cmd = app.add_subcommand("init-cameras", "Per-frame camera initialization");
  init_cmd->add_option("scene", ia.scene, "Scene directory or manifest")->required();
  init_cmd->add_option("--level", ia.level, "Cue level: part, pixel, part+pixel");
  init_cmd->add_option("--solver", ia.solver, "Solver: epnp, epnp-ransac, org");
  init_cmd->add_option("--ransac-iters", ia.ransac_iters, "RANSAC iterations");
  init_cmd->add_option("--inlier-px", ia.inlier_px, "RANSAC inlier threshold (px)");
  init_cmd->add_option("--init-params", ia.init_params, "Params JSON for the mesh (default: rest pose)");
  init_cmd->add_option("--camera-key", ia.camera_key, "Manifest key to write");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the template to a scene");
  fit_cmd->add_option("scene", fa.scene, "Scene directory or manifest")->required();
  fit_cmd->add_option("--out", fa.out, "Output directory (default: <scene>/fit)");
  fit_cmd->add_option("--mode", fa.mode, "direct or amortized");
  fit_cmd->add_option("--epochs", fa.epochs, "Epochs");
  fit_cmd->add_option("--batch-size", fa.batch_size, "Frames per batch");
  fit_cmd->add_option("--lr", fa.lr, "Base learning rate");
  fit_cmd->add_option("--lr-gamma", fa.lr_gamma, "Learning-rate decay factor");
  fit_cmd->add_option("--lr-milestones", fa.lr_milestones, "Comma-separated decay epochs");
  fit_cmd->add_option("--offset-enable-epoch", fa.offset_enable_epoch, "Epoch at which vertex offsets start to move");
  fit_cmd->add_flag("--net-offsets", fa.net_offsets, "Amortized mode: the network also predicts vertex offsets");
  fit_cmd->add_flag("--optimize-cameras", fa.optimize_cameras, "Refine cameras jointly");
  fit_cmd->add_flag("--chamfer-boundary", fa.chamfer_boundary, "Sample mask boundary pixels only");
  fit_cmd->add_option("--mask-budget", fa.mask_budget, "Mask pixels sampled per frame and epoch");
  fit_cmd->add_option("--resample-parts-every", fa.resample_parts_every, "Redraw part samples every K epochs (0 = never)");
  fit_cmd->add_option("--schedule", fa.schedule, "Schedule JSON");
  fit_cmd->add_option("--checkpoint-every", fa.checkpoint_every, "Checkpoint period in epochs (0 = off)");
  fit_cmd->add_option("--resume", fa.resume, "Resume from params JSON (direct) or network checkpoint (amortized)");
  fit_cmd->add_option("--log-every", fa.log_every, "Loss log period in epochs");
  fit_cmd->add_option("--disable", fa.disable, "Comma list of terms forced to zero: obj, part, pix, time");
  fit_cmd->add_option("--camera-key", fa.camera_key, "Manifest camera key");
  fit_cmd->add_option("--init-params", fa.init_params, "Initial params JSON (default: rest pose)");
  fit_cmd->add_flag("--obj", fa.obj, "Also write posed meshes as OBJ");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Silhouette and depth metrics of a fit");
  eval_cmd->add_option("scene", ea.scene, "Scene directory or manifest")->required();
  eval_cmd->add_option("--fitted", ea.fitted, "Fitted params JSON")->required();
  eval_cmd->add_option("--fitted-cameras", ea.fitted_cameras, "Cameras file written by fit (default: manifest cameras)");
  eval_cmd->add_option("--camera-key", ea.camera_key, "Manifest camera key when --fitted-cameras is absent");
  eval_cmd->add_option("--out", ea.out, "CSV path (default: next to --fitted)");
  eval_cmd->add_flag("--psnr", ea.psnr, "Texture PSNR (unsupported)");
  eval_cmd->add_flag("--lpips", ea.lpips, "Texture LPIPS (unsupported)");

  std::string inspect_scene;
  auto* inspect_cmd = app.add_subcommand("inspect", "Manifest and cue statistics");
  inspect_cmd->add_option("scene", inspect_scene, "Scene directory or manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Input);
  }

  try {
    set_num_threads(threads);
    if (*synth_cmd) cmd_synth(sa, seed, log);
    else if (*zoom_cmd) cmd_zoomout(za, seed, out);
    else if (*init_cmd) cmd_init(ia, seed, out, log);
    else if (*fit_cmd) cmd_fit(fa, seed, out, log);
    else if (*eval_cmd) cmd_eval(ea, out, log);
    else if (*inspect_cmd) cmd_inspect(inspect_scene, out);
  } catch (const Error& e) {
    if (log.level >= Level::Error) err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    if (log.level >= Level::Error) err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Input);
  }
  return 0;
}

}  // namespace quadfit::cli

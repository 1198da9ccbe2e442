#include "quadfit/sched.hpp"

#include "quadfit/diff.hpp"
#include "quadfit/featnet.hpp"
#include "quadfit/parallel.hpp"
#include "quadfit/rotation.hpp"
#include "quadfit/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace quadfit::sched {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- schedule

double Milestones::at(int epoch) const {
  std::size_t i = 0;
  while (i < epochs.size() && epoch >= epochs[i]) ++i;
  return values[i];
}

void Milestones::validate(const std::string& name) const {
  if (values.size() != epochs.size() + 1)
    throw InputError("schedule." + name + ": needs exactly one more value than milestone epochs");
  for (std::size_t i = 1; i < epochs.size(); ++i)
    if (epochs[i] <= epochs[i - 1]) throw InputError("schedule." + name + ": milestone epochs must be strictly increasing");
  for (double v : values)
    if (!(v >= 0.0)) throw InputError("schedule." + name + ": values must be >= 0");
}

void Schedule::validate() const {
  if (epochs < 1) throw InputError("schedule.epochs must be >= 1");
  if (batch_size < 1) throw InputError("schedule.batch_size must be >= 1");
  const std::pair<const char*, const Milestones*> tables[] = {{"obj", &obj}, {"part", &part}, {"pix", &pix}, {"time", &time}};
  for (const auto& [name, m] : tables) {
    m->validate(name);
    if (!m->epochs.empty() && m->epochs.back() >= epochs)
      throw InputError("schedule." + std::string(name) + ": milestone " + std::to_string(m->epochs.back()) +
                       " not below epochs " + std::to_string(epochs));
  }
  if (!(lr > 0.0)) throw InputError("schedule.lr must be > 0");
  if (!(lr_gamma > 0.0)) throw InputError("schedule.lr_gamma must be > 0");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i)
    if (lr_milestones[i] <= lr_milestones[i - 1]) throw InputError("schedule.lr_milestones must be strictly increasing");
  if (!lr_milestones.empty() && lr_milestones.back() >= epochs)
    throw InputError("schedule.lr_milestones: " + std::to_string(lr_milestones.back()) + " not below epochs " +
                     std::to_string(epochs));
  if (offset_enable_epoch < 0) throw InputError("schedule.offset_enable_epoch must be >= 0");
  for (const auto& [g, v] : group_lr)
    if (!(v >= 0.0)) throw InputError("schedule.group_lr." + g + " must be >= 0");
  align::LossWeights w;
  w.reg = reg;
  w.validate();
}

Schedule Schedule::with_epochs(int n) const {
  Schedule s = *this;
  s.epochs = n;
  for (Milestones* m : {&s.obj, &s.part, &s.pix, &s.time})
    while (!m->epochs.empty() && m->epochs.back() >= n) {
      m->epochs.pop_back();
      m->values.pop_back();
    }
  while (!s.lr_milestones.empty() && s.lr_milestones.back() >= n) s.lr_milestones.pop_back();
  return s;
}

Schedule load_schedule(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schedule " + path.string());
  Schedule s;
  try {
    const json doc = json::parse(in);
    auto table = [&](const char* key, Milestones& m) {
      if (!doc.contains(key)) return;
      m.values = doc.at(key).at("values").get<std::vector<double>>();
      m.epochs = doc.at(key).at("epochs").get<std::vector<int>>();
    };
    s.epochs = doc.value("epochs", s.epochs);
    s.batch_size = doc.value("batch_size", s.batch_size);
    table("obj", s.obj);
    table("part", s.part);
    table("pix", s.pix);
    table("time", s.time);
    s.lr = doc.value("lr", s.lr);
    s.lr_gamma = doc.value("lr_gamma", s.lr_gamma);
    s.lr_milestones = doc.value("lr_milestones", s.lr_milestones);
    s.offset_enable_epoch = doc.value("offset_enable_epoch", s.offset_enable_epoch);
    if (doc.contains("group_lr"))
      for (const auto& [k, v] : doc.at("group_lr").items()) s.group_lr[k] = v.get<double>();
    if (doc.contains("reg")) {
      const json& r = doc.at("reg");
      s.reg.lap = r.value("lap", s.reg.lap);
      s.reg.vol = r.value("vol", s.reg.vol);
      s.reg.arap = r.value("arap", s.reg.arap);
      s.reg.prior = r.value("prior", s.reg.prior);
      s.reg.lim = r.value("lim", s.reg.lim);
      s.reg.beta_var = r.value("beta_var", s.reg.beta_var);
    }
    if (doc.contains("adam")) {
      const json& a = doc.at("adam");
      s.adam.beta1 = a.value("beta1", s.adam.beta1);
      s.adam.beta2 = a.value("beta2", s.adam.beta2);
      s.adam.eps = a.value("eps", s.adam.eps);
    }
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

std::string schedule_to_json(const Schedule& s) {
  auto table = [](const Milestones& m) { return json{{"values", m.values}, {"epochs", m.epochs}}; };
  json doc{{"epochs", s.epochs},
           {"batch_size", s.batch_size},
           {"obj", table(s.obj)},
           {"part", table(s.part)},
           {"pix", table(s.pix)},
           {"time", table(s.time)},
           {"lr", s.lr},
           {"lr_gamma", s.lr_gamma},
           {"lr_milestones", s.lr_milestones},
           {"offset_enable_epoch", s.offset_enable_epoch},
           {"group_lr", s.group_lr},
           {"reg",
            {{"lap", s.reg.lap},
             {"vol", s.reg.vol},
             {"arap", s.reg.arap},
             {"prior", s.reg.prior},
             {"lim", s.reg.lim},
             {"beta_var", s.reg.beta_var}}},
           {"adam", {{"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}, {"eps", s.adam.eps}}}};
  return doc.dump(2);
}

align::LossWeights weights_at(const Schedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.epochs)
    throw InputError("weights_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.epochs) + ")");
  align::LossWeights w;
  w.obj = s.obj.at(epoch);
  w.part = s.part.at(epoch);
  w.pix = s.pix.at(epoch);
  w.time = s.time.at(epoch);
  w.tex = 0.0;
  w.reg = s.reg;
  return w;
}

double lr_at(const Schedule& s, int epoch) {
  double lr = s.lr;
  for (int m : s.lr_milestones)
    if (epoch >= m) lr *= s.lr_gamma;
  return lr;
}

// ---------------------------------------------------------------- adam

std::string slot_group(const std::string& slot) { return slot.substr(0, slot.find('/')); }

void adam_step(Registry& params, const Registry& grads, AdamState& state, double lr, const AdamOptions& o,
               const std::map<std::string, double>& group_lr) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw InputError("adam_step: gradient for unknown slot '" + name + "'");
    if (g.size() != it->second.size()) throw InputError("adam_step: gradient shape mismatch for slot '" + name + "'");
    if (!g.allFinite()) throw NumericalError("non-finite gradient in slot '" + name + "'");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    Eigen::VectorXd& m = state.m[name];
    Eigen::VectorXd& v = state.v[name];
    if (m.size() != p.size()) {
      m = Eigen::VectorXd::Zero(p.size());
      v = Eigen::VectorXd::Zero(p.size());
    }
    const auto git = grads.find(name);
    if (git == grads.end()) {
      m *= o.beta1;
      v *= o.beta2;
      continue;
    }
    const Eigen::VectorXd& g = git->second;
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
    const auto s = group_lr.find(slot_group(name));
    const double step = lr * (s == group_lr.end() ? 1.0 : s->second);
    if (step == 0.0) continue;
    p.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + o.eps);
  }
}

Mode parse_mode(const std::string& s) {
  if (s == "direct") return Mode::Direct;
  if (s == "amortized") return Mode::Amortized;
  throw InputError("unknown mode '" + s + "' (expected direct or amortized)");
}

// ---------------------------------------------------------------- fit

namespace {

std::string slot(const char* group, int t) { return std::string(group) + "/" + std::to_string(t); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Eigen::VectorXd flat(const Points3& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()); }
Points3 unflat(const Eigen::VectorXd& v) { return Eigen::Map<const Points3>(v.data(), v.size() / 3, 3); }

/// dL/domega for R = exp(omega) R0, from dL/dR.
Eigen::Vector3d rotation_delta_grad(const Eigen::Vector3d& omega, const Eigen::Matrix3d& R0, const Eigen::Matrix3d& gR) {
  diff::GradTape gt;
  const std::vector<double> w{omega.x(), omega.y(), omega.z()};
  auto v = gt.register_slot("w", w);
  const auto E = axis_angle_to_matrix<diff::Var>(v[0], v[1], v[2]);
  std::vector<diff::Var> outs;
  std::vector<double> seeds;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      diff::Var r = 0.0;
      for (int k = 0; k < 3; ++k) r += E[3 * i + k] * R0(k, j);
      outs.push_back(r);
      seeds.push_back(gR(i, j));
    }
  const auto g = gt.backward(outs, seeds).at("w");
  return {g[0], g[1], g[2]};
}

/// Term values of several batch reports combined by frame weight.
align::LossReport combine(const std::vector<std::pair<align::LossReport, double>>& parts) {
  align::LossReport out = parts.front().first;
  if (parts.size() == 1) return out;
  for (auto& t : out.terms) {
    t.value = 0.0;
    t.grad_norm = 0.0;
  }
  out.total = 0.0;
  out.pix_excluded = out.part_excluded = 0;
  out.obj_penalty = false;
  for (const auto& [r, w] : parts) {
    for (std::size_t i = 0; i < out.terms.size(); ++i) {
      out.terms[i].value += w * r.terms[i].value;
      out.terms[i].grad_norm += r.terms[i].grad_norm * r.terms[i].grad_norm;
    }
    out.total += w * r.total;
    out.pix_excluded += r.pix_excluded;
    out.part_excluded += r.part_excluded;
    out.obj_penalty |= r.obj_penalty;
  }
  for (auto& t : out.terms) t.grad_norm = std::sqrt(t.grad_norm);
  return out;
}

}  // namespace

FitResult fit(const cues::CueSet& cues_in, const model::QuadModel& model, std::vector<camera::CameraFrame> cams,
              std::vector<model::FrameParams> init, const Schedule& schedule, const FitOptions& options) {
  schedule.validate();
  const int T = cues_in.num_frames;
  if (static_cast<int>(cams.size()) != T) throw InputError("fit: " + std::to_string(cams.size()) + " cameras for " + std::to_string(T) + " frames");
  if (static_cast<int>(init.size()) != T) throw InputError("fit: " + std::to_string(init.size()) + " init params for " + std::to_string(T) + " frames");
  for (const auto& p : init) model.check_dims(p);

  cues::CueSet cues = cues_in;
  const align::Regularizer reg(model);

  FitResult result;
  result.mode_used = options.mode;
  if (options.mode == Mode::Amortized && !cues.features) {
    result.mode_used = Mode::Direct;
    if (options.progress) *options.progress << "no feature file: falling back to direct mode\n";
  }
  const bool amortized = result.mode_used == Mode::Amortized;

  if (options.resume && !amortized) init = scene::read_params(*options.resume, model.tpl());
  if (static_cast<int>(init.size()) != T) throw InputError("fit: resumed params have the wrong frame count");

  // Parameter registry. Direct mode stores limb scales as logs.
  Registry reg_params;
  featnet::FeatNet net;
  featnet::OutputLayout layout;
  const std::vector<camera::CameraFrame> cams0 = cams;
  for (int t = 0; t < T; ++t) {
    if (!amortized) {
      reg_params[slot("beta", t)] = init[t].beta;
      reg_params[slot("theta", t)] = init[t].theta;
      reg_params[slot("limbs", t)] = init[t].limb_scales.array().log();
      reg_params[slot("translation", t)] = init[t].translation;
    }
    if (!amortized || !options.net_offsets) reg_params[slot("offsets", t)] = flat(init[t].vertex_offsets);
    if (options.optimize_cameras) {
      reg_params[slot("camera", t)] = Eigen::VectorXd::Zero(6);   // rotation delta, translation delta
    }
  }
  if (amortized) {
    layout = featnet::OutputLayout::for_template(model.tpl(), options.net_offsets);
    net = featnet::FeatNet(cues.features->dim, layout, init[0], mix(options.seed, 0x6e6574));
    if (options.resume) net.load(*options.resume);
    for (auto& [k, v] : net.params()) reg_params["net/" + k] = v;
  }
  std::vector<Eigen::VectorXd> features(T);
  if (amortized)
    for (int t = 0; t < T; ++t) features[t] = cues.features->frames[t].cast<double>();

  auto sync_net = [&] {
    std::map<std::string, Eigen::VectorXd> p;
    for (const char* k : {"w1", "b1", "w2", "b2", "w3", "b3"}) p[k] = reg_params.at(std::string("net/") + k);
    net.set_params(p);
  };
  auto current_params = [&](int t, bool offsets_on, featnet::FeatNet::Cache* cache) {
    model::FrameParams p;
    const Points3 zero = Points3::Zero(model.num_vertices(), 3);
    if (amortized) {
      const Points3 off = options.net_offsets ? zero : unflat(reg_params.at(slot("offsets", t)));
      const Eigen::VectorXd y = net.forward_raw(features[t], featnet::pos_encode(t, T), cache);
      p = featnet::decode(layout, y, off);
    } else {
      p.beta = reg_params.at(slot("beta", t));
      p.theta = reg_params.at(slot("theta", t));
      p.limb_scales = reg_params.at(slot("limbs", t)).array().exp();
      p.translation = reg_params.at(slot("translation", t));
      p.vertex_offsets = unflat(reg_params.at(slot("offsets", t)));
    }
    if (!offsets_on) p.vertex_offsets.setZero();
    return p;
  };
  auto current_camera = [&](int t) {
    if (!options.optimize_cameras) return cams0[t];
    const Eigen::VectorXd& c = reg_params.at(slot("camera", t));
    camera::CameraFrame cam = cams0[t];
    cam.rotation = rodrigues(Eigen::Vector3d(c.head<3>())) * cams0[t].rotation;
    cam.translation = cams0[t].translation + c.tail<3>();
    return cam;
  };

  AdamState adam;
  const int B = std::min(schedule.batch_size, T);
  std::vector<std::pair<int, int>> windows;
  for (int s = 0; s < T; s += B) windows.emplace_back(s, std::min(T, s + B));

  double initial_total = 0.0;
  int diverged_epochs = 0;
  std::vector<model::FrameParams> params(T);
  std::vector<camera::CameraFrame> cur_cams(T);

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    align::LossWeights w = weights_at(schedule, epoch);
    if (options.disable[0]) w.obj = 0.0;
    if (options.disable[1]) w.part = 0.0;
    if (options.disable[2]) w.pix = 0.0;
    if (options.disable[3]) w.time = 0.0;
    const double lr = lr_at(schedule, epoch);
    const bool offsets_on = epoch >= schedule.offset_enable_epoch;
    const bool log_now = epoch == schedule.epochs - 1 || (options.log_every > 0 && epoch % options.log_every == 0);

    if (options.resample_parts_every > 0 && epoch > 0 && epoch % options.resample_parts_every == 0) {
      const auto samples = cues::sample_part_points(cues.part_masks, cues.part_samples_per_frame,
                                                    mix(cues.part_seed, static_cast<std::uint64_t>(epoch)));
      for (int t = 0; t < T; ++t)
        if (!samples[t].empty()) cues.frames[t].parts = samples[t];
    }

    if (amortized) sync_net();
    parallel_for(T, [&](int t) {
      params[t] = current_params(t, offsets_on, nullptr);
      cur_cams[t] = current_camera(t);
    });

    // Track-to-vertex assignment, refreshed once per epoch.
    std::map<int, camera::Projection> anchor_proj;
    for (const auto& tr : cues.tracks) {
      const int a = std::clamp(tr.anchor_index(), 0, T - 1);
      anchor_proj.try_emplace(a);
      const auto first = std::find(tr.valid.begin(), tr.valid.end(), std::uint8_t{1});
      if (first != tr.valid.end()) anchor_proj.try_emplace(static_cast<int>(first - tr.valid.begin()));
    }
    for (auto& [f, pr] : anchor_proj) pr = camera::project(cur_cams[f], model.pose(params[f]));
    const std::vector<int> assignment =
        align::assign_tracks(cues.tracks, [&](int f) -> const camera::Projection& { return anchor_proj.at(f); });

    std::vector<std::pair<align::LossReport, double>> batch_reports;
    for (const auto& [s, e] : windows) {
      std::vector<int> frames;
      for (int t = s; t < e; ++t) frames.push_back(t);
      std::vector<featnet::FeatNet::Cache> caches(frames.size());
      if (amortized) {
        sync_net();
        parallel_for(static_cast<int>(frames.size()), [&](int b) {
          params[frames[b]] = current_params(frames[b], offsets_on, &caches[b]);
        });
      }
      align::TotalOptions topt;
      topt.mask_budget = options.mask_budget;
      topt.chamfer_boundary = options.chamfer_boundary;
      topt.mask_seed = mix(options.seed, static_cast<std::uint64_t>(epoch));
      topt.camera_grads = options.optimize_cameras;
      topt.grad_norms = log_now;
      const align::Scene sc{cues, model, reg, assignment};
      align::LossReport rep = align::total_loss(sc, frames, params, cur_cams, w, topt);

      Registry grads;
      const int nb = static_cast<int>(frames.size());
      std::vector<Eigen::VectorXd> gy(nb);
      for (int b = 0; b < nb; ++b) {
        const int t = frames[b];
        model::FrameParams& g = rep.grads[b];
        if (!offsets_on) g.vertex_offsets.setZero();
        if (amortized) {
          model::FrameParams gnet = g;
          if (!options.net_offsets) {
            grads[slot("offsets", t)] = flat(g.vertex_offsets);
            gnet.vertex_offsets.setZero();
          }
          gy[b] = featnet::decode_vjp(layout, caches[b].y, gnet);
        } else {
          grads[slot("beta", t)] = g.beta;
          grads[slot("theta", t)] = g.theta;
          grads[slot("limbs", t)] = g.limb_scales.cwiseProduct(params[t].limb_scales);
          grads[slot("translation", t)] = g.translation;
          grads[slot("offsets", t)] = flat(g.vertex_offsets);
        }
        if (options.optimize_cameras) {
          const Eigen::VectorXd& c = reg_params.at(slot("camera", t));
          Eigen::VectorXd gc(6);
          gc.head<3>() = rotation_delta_grad(c.head<3>(), cams0[t].rotation, rep.camera_grads[b].rotation);
          gc.tail<3>() = rep.camera_grads[b].translation;
          grads[slot("camera", t)] = gc;
        }
      }
      if (amortized) {
        std::map<std::string, Eigen::VectorXd> ng;
        for (int b = 0; b < nb; ++b) net.backward(caches[b], gy[b], ng);
        for (auto& [k, v] : ng) grads["net/" + k] = std::move(v);
      }
      adam_step(reg_params, grads, adam, lr, schedule.adam, schedule.group_lr);

      rep.grads.clear();
      rep.camera_grads.clear();
      batch_reports.emplace_back(std::move(rep), static_cast<double>(nb) / T);
    }

    const align::LossReport epoch_report = combine(batch_reports);
    if (log_now) result.log.push_back({epoch, epoch_report});
    if (options.progress && log_now)
      *options.progress << "epoch " << epoch << " total " << epoch_report.total << '\n';

    if (epoch == 0) initial_total = epoch_report.total;
    if (initial_total > 0.0 && epoch_report.total > options.divergence_factor * initial_total) {
      if (++diverged_epochs >= options.divergence_patience)
        throw NumericalError("fit diverged: total loss " + std::to_string(epoch_report.total) + " stayed above " +
                             std::to_string(options.divergence_factor) + " x initial (" + std::to_string(initial_total) +
                             ") for " + std::to_string(options.divergence_patience) + " epochs, last epoch " +
                             std::to_string(epoch));
    } else {
      diverged_epochs = 0;
    }
    result.epochs_run = epoch + 1;

    if (options.checkpoint_every > 0 && (epoch + 1) % options.checkpoint_every == 0 && !options.checkpoint_dir.empty()) {
      fs::create_directories(options.checkpoint_dir);
      if (amortized) {
        sync_net();
        net.save(options.checkpoint_dir / "checkpoint_net.bin");
      }
      std::vector<model::FrameParams> snap(T);
      const bool on = epoch + 1 >= schedule.offset_enable_epoch;
      for (int t = 0; t < T; ++t) snap[t] = current_params(t, on, nullptr);
      scene::write_params(options.checkpoint_dir / "checkpoint_params.json", snap);
    }
  }

  if (amortized) sync_net();
  const bool on = schedule.epochs >= schedule.offset_enable_epoch;
  result.params.resize(T);
  result.cameras.resize(T);
  for (int t = 0; t < T; ++t) {
    result.params[t] = current_params(t, on, nullptr);
    result.cameras[t] = current_camera(t);
  }
  if (amortized && !options.checkpoint_dir.empty()) {
    fs::create_directories(options.checkpoint_dir);
    net.save(options.checkpoint_dir / "net.bin");
  }
  return result;
}

void write_loss_log(const fs::path& path, const std::vector<LogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,term,value,grad_norm\n";
  for (const LogEntry& e : log) align::write_report_rows(out, e.epoch, e.report);
}

}  // namespace quadfit::sched

#pragma once

// Staged optimization: loss-weight milestones, Adam over named parameter
// slots, learning-rate decay, vertex-offset gating and the fitting loop.

#include "quadfit/align.hpp"
#include "quadfit/camera.hpp"
#include "quadfit/cues.hpp"
#include "quadfit/model.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace quadfit::sched {

/// Piecewise-constant table: values[i] holds from epochs[i-1] (inclusive).
struct Milestones {
  std::vector<double> values;
  std::vector<int> epochs;

  double at(int epoch) const;
  /// Throws InputError naming the table.
  void validate(const std::string& name) const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Schedule {
  int epochs = 10000;
  int batch_size = 32;
  Milestones obj{{1.0, 100.0, 500.0, 800.0}, {300, 1000, 6000}};
  Milestones part{{5e-4, 5e-8}, {300}};
  Milestones pix{{5.0, 1e-1, 1e-2}, {1000, 6000}};
  Milestones time{{5e-4, 5e-2}, {300}};
  double lr = 1e-3;
  double lr_gamma = 0.5;
  std::vector<int> lr_milestones{9000, 9500};
  int offset_enable_epoch = 300;
  /// Multipliers of `lr` per parameter group (beta, theta, limbs,
  /// translation, offsets, net, camera).
  std::map<std::string, double> group_lr{{"beta", 1.0},    {"theta", 1.0}, {"limbs", 1.0},  {"translation", 1.0},
                                         {"offsets", 0.1}, {"net", 1.0},   {"camera", 0.1}};
  align::RegWeights reg;
  AdamOptions adam;

  void validate() const;
  /// Same schedule run for `n` epochs; milestones at or past `n` are dropped.
  Schedule with_epochs(int n) const;
};

/// Overrides defaults with the fields present in a JSON config.
Schedule load_schedule(const std::filesystem::path& path);
std::string schedule_to_json(const Schedule& s);

align::LossWeights weights_at(const Schedule& s, int epoch);
double lr_at(const Schedule& s, int epoch);

using Registry = std::map<std::string, Eigen::VectorXd>;

struct AdamState {
  long step = 0;
  Registry m, v;
};

/// Group of a slot: the text before the first '/'.
std::string slot_group(const std::string& slot);

/// One bias-corrected Adam update. Slots absent from `grads` are treated as
/// zero gradient. `group_lr` scales `lr` per slot group (missing = 1).
/// Throws NumericalError naming a slot with a non-finite gradient.
void adam_step(Registry& params, const Registry& grads, AdamState& state, double lr, const AdamOptions& options = {},
               const std::map<std::string, double>& group_lr = {});

enum class Mode { Direct, Amortized };
Mode parse_mode(const std::string& s);

struct FitOptions {
  Mode mode = Mode::Direct;
  bool net_offsets = false;
  bool optimize_cameras = false;
  bool chamfer_boundary = false;
  int mask_budget = align::kDefaultMaskBudget;
  int resample_parts_every = 0;             // 0: part samples fixed for the run
  std::uint64_t seed = 0;
  int log_every = 10;                       // 0: log only the last epoch
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::optional<std::filesystem::path> resume;   // network weights (amortized) or params JSON (direct)
  std::array<bool, 4> disable{};            // obj, part, pix, time forced to zero
  double divergence_factor = 1e6;
  int divergence_patience = 100;
  std::ostream* progress = nullptr;
};

struct LogEntry {
  int epoch = 0;
  align::LossReport report;   // gradients cleared
};

struct FitResult {
  std::vector<model::FrameParams> params;
  std::vector<camera::CameraFrame> cameras;
  std::vector<LogEntry> log;
  Mode mode_used = Mode::Direct;
  int epochs_run = 0;
};

/// Runs the staged optimization. `cues` must already be fallback-filled;
/// `init` has one entry per frame and seeds direct mode and the network bias.
FitResult fit(const cues::CueSet& cues, const model::QuadModel& model, std::vector<camera::CameraFrame> cameras,
              std::vector<model::FrameParams> init, const Schedule& schedule, const FitOptions& options);

/// CSV header `epoch,term,value,grad_norm` followed by every logged row.
void write_loss_log(const std::filesystem::path& path, const std::vector<LogEntry>& log);

}  // namespace quadfit::sched

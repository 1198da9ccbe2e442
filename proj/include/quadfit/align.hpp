#pragma once

// Hierarchical geometric losses (object, part, pixel, temporal), mesh
// regularizers and the weighted total objective.
//
// Every loss works on projected vertices and returns dL/dpixels; the caller
// chains that through projection and skinning.

#include "quadfit/camera.hpp"
#include "quadfit/common.hpp"
#include "quadfit/cues.hpp"
#include "quadfit/model.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace quadfit::align {

struct RegWeights {
  double lap = 1e-2;
  double vol = 1e-2;
  double arap = 1e-2;
  double prior = 1e-4;
  double lim = 1.0;
  double beta_var = 0.0;
};

struct LossWeights {
  double obj = 1.0;
  double part = 0.0;
  double pix = 0.0;
  double time = 0.0;
  double tex = 0.0;   // accepted for completeness; must stay zero
  RegWeights reg;

  /// Throws InputError on negative weights or nonzero tex.
  void validate() const;
};

/// Static 2-D kd-tree for nearest-neighbour queries.
class KdTree2 {
 public:
  KdTree2() = default;
  explicit KdTree2(std::vector<Eigen::Vector2d> points);

  /// Index into the construction points of the nearest one; -1 when empty.
  int nearest(const Eigen::Vector2d& q, double* squared_distance = nullptr) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point;
    int axis;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi);
  void search(int node, const Eigen::Vector2d& q, int& best, double& best_d2) const;

  std::vector<Eigen::Vector2d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct TermResult {
  double value = 0.0;
  int used = 0;          // entries contributing
  int excluded = 0;      // entries dropped (invalid projection, no partner)
  bool penalty = false;  // loss_obj: no valid projection, constant returned
};

/// Returned by loss_obj when no vertex projects in front of the camera.
inline constexpr double kNoProjectionPenalty = 1e6;
inline constexpr int kDefaultMaskBudget = 512;

/// Seeded uniform sample of at most `budget` mask pixels (all pixels when the
/// mask is smaller). `boundary` restricts the pool to boundary pixels.
std::vector<Eigen::Vector2d> sample_mask(const cues::ObjectMask& mask, int budget, std::uint64_t seed,
                                         bool boundary = false);

/// Symmetric Chamfer distance, unsquared, each direction averaged over its
/// point count and the two directions averaged.
TermResult loss_obj(std::span<const Eigen::Vector2d> mask_samples, const camera::Projection& proj,
                    Points2* grad_pixels = nullptr);

TermResult loss_obj(const cues::ObjectMask& mask, const camera::Projection& proj, int budget, std::uint64_t seed,
                    Points2* grad_pixels = nullptr);

/// Mean squared distance from each sample to the nearest projected vertex of
/// the same part.
TermResult loss_part(std::span<const cues::PartSample> samples, const camera::Projection& proj,
                     const model::QuadModel& model, Points2* grad_pixels = nullptr);

/// Mean squared distance between cue pixels and their vertices' projections.
TermResult loss_pix(std::span<const cues::PixelCorr> corrs, const camera::Projection& proj,
                    Points2* grad_pixels = nullptr);

/// Per-track vertex chosen at the track's anchor frame: the nearest projected
/// vertex to the anchor position. -1 when the anchor is invalid.
std::vector<int> assign_tracks(std::span<const cues::Track> tracks,
                               const std::function<const camera::Projection&(int frame)>& projection_at);

/// Number of (track, frame) pairs that contribute at `frame`.
int count_time_pairs(std::span<const cues::Track> tracks, std::span<const int> assignment, int frame,
                     const camera::Projection& proj);

/// Sum over tracks of squared residuals at `frame`, divided by `normalizer`.
TermResult loss_time_frame(std::span<const cues::Track> tracks, std::span<const int> assignment, int frame,
                           const camera::Projection& proj, double normalizer, Points2* grad_pixels = nullptr);

/// Whole-video temporal loss with assignments taken from the same params.
TermResult loss_time(std::span<const cues::Track> tracks, const model::QuadModel& model,
                     const std::vector<model::FrameParams>& params, const std::vector<camera::CameraFrame>& cams);

enum class RegTerm { Lap, Vol, Arap, Prior, Lim };
inline constexpr std::array<RegTerm, 5> kRegTerms{RegTerm::Lap, RegTerm::Vol, RegTerm::Arap, RegTerm::Prior,
                                                 RegTerm::Lim};
std::string_view reg_name(RegTerm t);

/// Per-frame mesh regularizers.
class Regularizer {
 public:
  explicit Regularizer(const model::QuadModel& model);

  /// Value of one term; `grad` (if given) accumulates scale * dterm/dparams.
  double term(RegTerm which, const model::FrameParams& p, model::FrameParams* grad = nullptr,
              double scale = 1.0) const;

  /// Signed enclosed volume of a closed mesh.
  double volume(const Points3& vertices) const;

  /// Softplus limit penalty, active only past a limit.
  static double limit_penalty(double x);

 private:
  const model::QuadModel& model_;
  Eigen::SparseMatrix<double> laplacian_;   // I - D^-1 A
  double rest_volume_ = 1.0;
  void volume_grad(const Points3& vertices, Points3& grad, double scale) const;
};

/// Variance of beta across frames; `grads` (size = params) accumulate scale * d/dbeta.
double beta_variance(std::span<const model::FrameParams* const> params, std::vector<model::FrameParams>* grads,
                     double scale);

struct TotalOptions {
  int mask_budget = kDefaultMaskBudget;
  bool chamfer_boundary = false;
  std::uint64_t mask_seed = 0;       // combined with the frame index
  bool camera_grads = false;
  bool grad_norms = false;           // per-term gradient norms (extra VJPs)
  bool gradients = true;
};

struct TermEntry {
  std::string name;
  double value = 0.0;     // unweighted
  double weight = 0.0;
  double grad_norm = 0.0; // of weight * value w.r.t. frame params; 0 unless requested
};

struct LossReport {
  std::vector<TermEntry> terms;
  double total = 0.0;
  int pix_excluded = 0;
  int part_excluded = 0;
  int time_skipped = 0;
  bool obj_penalty = false;
  std::vector<model::FrameParams> grads;             // aligned with the evaluated frames
  std::vector<camera::ExtrinsicsGrad> camera_grads;  // aligned with the evaluated frames

  const TermEntry& term(std::string_view name) const;
  double value(std::string_view name) const { return term(name).value; }
};

/// Everything total_loss reads besides parameters.
struct Scene {
  const cues::CueSet& cues;
  const model::QuadModel& model;
  const Regularizer& reg;
  std::span<const int> track_assignment;   // may be empty when lambda_time = 0
};

/// total = obj*L_obj + part*L_part + pix*L_pix + time*L_time + sum_k w_k R_k.
/// Per-frame terms are averaged over the frames where they are defined;
/// L_time averages over all contributing (track, frame) pairs in `frames`.
/// `params`/`cams` are indexed by absolute frame.
LossReport total_loss(const Scene& scene, std::span<const int> frames, const std::vector<model::FrameParams>& params,
                      const std::vector<camera::CameraFrame>& cams, const LossWeights& weights,
                      const TotalOptions& options = {});

/// Appends `epoch,term,value,grad_norm` rows (plus a `total` row).
void write_report_rows(std::ostream& out, int epoch, const LossReport& report);

}  // namespace quadfit::align

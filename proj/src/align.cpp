#include "quadfit/align.hpp"

#include "quadfit/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

namespace quadfit::align {

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"lambda_obj", obj}, {"lambda_part", part}, {"lambda_pix", pix},     {"lambda_time", time},
      {"lambda_tex", tex}, {"w_lap", reg.lap},    {"w_vol", reg.vol},       {"w_arap", reg.arap},
      {"w_prior", reg.prior}, {"w_lim", reg.lim}, {"w_beta_var", reg.beta_var}};
  for (const auto& [name, v] : all)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(std::string(name) + " must be a finite value >= 0");
  if (tex != 0.0) throw InputError("lambda_tex must be 0: texture reconstruction is not supported");
}

// ---------------------------------------------------------------- kd-tree

KdTree2::KdTree2(std::vector<Eigen::Vector2d> points) : points_(std::move(points)) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()));
}

int KdTree2::build(std::vector<int>& idx, int lo, int hi) {
  if (lo >= hi) return -1;
  Eigen::Vector2d mn = points_[idx[lo]], mx = mn;
  for (int i = lo + 1; i < hi; ++i) {
    mn = mn.cwiseMin(points_[idx[i]]);
    mx = mx.cwiseMax(points_[idx[i]]);
  }
  const int axis = (mx.x() - mn.x()) >= (mx.y() - mn.y()) ? 0 : 1;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
    const double pa = points_[a][axis], pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int left = build(idx, lo, mid);
  const int right = build(idx, mid + 1, hi);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree2::search(int node, const Eigen::Vector2d& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Eigen::Vector2d& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best, best_d2);
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

int KdTree2::nearest(const Eigen::Vector2d& q, double* squared_distance) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  if (squared_distance) *squared_distance = best_d2;
  return best;
}

// ---------------------------------------------------------------- helpers

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Valid projected vertices with their original indices.
struct ValidSet {
  std::vector<Eigen::Vector2d> points;
  std::vector<int> ids;
};

ValidSet valid_points(const camera::Projection& proj, const std::vector<int>* subset = nullptr) {
  ValidSet s;
  auto add = [&](int i) {
    if (!proj.valid[i]) return;
    s.points.push_back(proj.pixels.row(i).transpose());
    s.ids.push_back(i);
  };
  if (subset) {
    for (int i : *subset) add(i);
  } else {
    for (int i = 0; i < proj.pixels.rows(); ++i) add(i);
  }
  return s;
}

void prepare_grad(Points2* grad, const camera::Projection& proj) {
  if (grad) grad->setZero(proj.pixels.rows(), 2);
}

double squared_norm(const model::FrameParams& g) {
  return g.beta.squaredNorm() + g.theta.squaredNorm() + g.limb_scales.squaredNorm() + g.translation.squaredNorm() +
         g.vertex_offsets.squaredNorm();
}

}  // namespace

std::vector<Eigen::Vector2d> sample_mask(const cues::ObjectMask& mask, int budget, std::uint64_t seed, bool boundary) {
  std::vector<Eigen::Vector2d> pool = boundary ? mask.boundary() : mask.foreground();
  if (budget <= 0 || static_cast<int>(pool.size()) <= budget) return pool;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(budget);
  return pool;
}

// ---------------------------------------------------------------- losses

TermResult loss_obj(std::span<const Eigen::Vector2d> samples, const camera::Projection& proj, Points2* grad) {
  prepare_grad(grad, proj);
  TermResult r;
  if (samples.empty()) throw InputError("loss_obj: empty mask");
  const ValidSet verts = valid_points(proj);
  r.excluded = static_cast<int>(proj.pixels.rows()) - static_cast<int>(verts.ids.size());
  if (verts.ids.empty()) {
    r.value = kNoProjectionPenalty;
    r.penalty = true;
    return r;
  }
  r.used = static_cast<int>(verts.ids.size());
  const double ws = 0.5 / samples.size(), wv = 0.5 / verts.ids.size();

  const KdTree2 vtree(verts.points);
  double d_sv = 0.0;
  for (const Eigen::Vector2d& s : samples) {
    double d2;
    const int k = vtree.nearest(s, &d2);
    const double d = std::sqrt(d2);
    d_sv += d;
    if (grad && d > 0.0) grad->row(verts.ids[k]) += ws * (verts.points[k] - s).transpose() / d;
  }
  const KdTree2 stree(std::vector<Eigen::Vector2d>(samples.begin(), samples.end()));
  double d_vs = 0.0;
  for (std::size_t k = 0; k < verts.points.size(); ++k) {
    double d2;
    const int s = stree.nearest(verts.points[k], &d2);
    const double d = std::sqrt(d2);
    d_vs += d;
    if (grad && d > 0.0) grad->row(verts.ids[k]) += wv * (verts.points[k] - samples[s]).transpose() / d;
  }
  r.value = ws * d_sv + wv * d_vs;
  return r;
}

TermResult loss_obj(const cues::ObjectMask& mask, const camera::Projection& proj, int budget, std::uint64_t seed,
                    Points2* grad) {
  const auto samples = sample_mask(mask, budget, seed);
  return loss_obj(samples, proj, grad);
}

TermResult loss_part(std::span<const cues::PartSample> samples, const camera::Projection& proj,
                     const model::QuadModel& model, Points2* grad) {
  prepare_grad(grad, proj);
  TermResult r;
  std::array<ValidSet, 4> sets;
  std::array<KdTree2, 4> trees;
  for (Part p : kAllParts) {
    sets[part_index(p)] = valid_points(proj, &model.part_vertices(p));
    trees[part_index(p)] = KdTree2(sets[part_index(p)].points);
  }
  double sum = 0.0;
  std::vector<std::pair<int, Eigen::Vector2d>> contrib;
  for (const cues::PartSample& s : samples) {
    const int pi = part_index(s.part);
    if (trees[pi].size() == 0) {
      ++r.excluded;
      continue;
    }
    double d2;
    const int k = trees[pi].nearest(s.pixel, &d2);
    sum += d2;
    ++r.used;
    if (grad) contrib.emplace_back(sets[pi].ids[k], sets[pi].points[k] - s.pixel);
  }
  if (r.used == 0) return r;
  r.value = sum / r.used;
  if (grad)
    for (const auto& [id, diff] : contrib) grad->row(id) += (2.0 / r.used) * diff.transpose();
  return r;
}

TermResult loss_pix(std::span<const cues::PixelCorr> corrs, const camera::Projection& proj, Points2* grad) {
  prepare_grad(grad, proj);
  TermResult r;
  double sum = 0.0;
  for (const cues::PixelCorr& c : corrs) {
    if (c.vertex_id < 0 || c.vertex_id >= proj.pixels.rows() || !proj.valid[c.vertex_id]) {
      ++r.excluded;
      continue;
    }
    sum += (proj.pixels.row(c.vertex_id).transpose() - c.pixel).squaredNorm();
    ++r.used;
  }
  if (r.used == 0) return r;
  r.value = sum / r.used;
  if (grad)
    for (const cues::PixelCorr& c : corrs)
      if (c.vertex_id >= 0 && c.vertex_id < proj.pixels.rows() && proj.valid[c.vertex_id])
        grad->row(c.vertex_id) += (2.0 / r.used) * (proj.pixels.row(c.vertex_id) - c.pixel.transpose());
  return r;
}

std::vector<int> assign_tracks(std::span<const cues::Track> tracks,
                               const std::function<const camera::Projection&(int frame)>& projection_at) {
  std::unordered_map<int, std::pair<ValidSet, KdTree2>> cache;
  std::vector<int> out(tracks.size(), -1);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const cues::Track& tr = tracks[k];
    int frame = tr.anchor_index();
    // An anchor without a valid position falls back to the first valid frame.
    if (frame < 0 || frame >= static_cast<int>(tr.valid.size()) || !tr.valid[frame]) {
      const auto it = std::find(tr.valid.begin(), tr.valid.end(), std::uint8_t{1});
      if (it == tr.valid.end()) continue;
      frame = static_cast<int>(it - tr.valid.begin());
    }
    auto c = cache.find(frame);
    if (c == cache.end()) {
      ValidSet vs = valid_points(projection_at(frame));
      KdTree2 tree(vs.points);
      c = cache.emplace(frame, std::make_pair(std::move(vs), std::move(tree))).first;
    }
    const int nn = c->second.second.nearest(tr.positions[frame]);
    if (nn >= 0) out[k] = c->second.first.ids[nn];
  }
  return out;
}

int count_time_pairs(std::span<const cues::Track> tracks, std::span<const int> assignment, int frame,
                     const camera::Projection& proj) {
  int n = 0;
  for (std::size_t k = 0; k < tracks.size(); ++k)
    if (assignment[k] >= 0 && tracks[k].valid[frame] && proj.valid[assignment[k]]) ++n;
  return n;
}

TermResult loss_time_frame(std::span<const cues::Track> tracks, std::span<const int> assignment, int frame,
                           const camera::Projection& proj, double normalizer, Points2* grad) {
  prepare_grad(grad, proj);
  TermResult r;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const int v = assignment[k];
    if (v < 0 || !tracks[k].valid[frame] || !proj.valid[v]) {
      ++r.excluded;
      continue;
    }
    const Eigen::Vector2d diff = proj.pixels.row(v).transpose() - tracks[k].positions[frame];
    r.value += diff.squaredNorm() / normalizer;
    ++r.used;
    if (grad) grad->row(v) += (2.0 / normalizer) * diff.transpose();
  }
  return r;
}

TermResult loss_time(std::span<const cues::Track> tracks, const model::QuadModel& model,
                     const std::vector<model::FrameParams>& params, const std::vector<camera::CameraFrame>& cams) {
  const int T = static_cast<int>(params.size());
  std::vector<camera::Projection> proj(T);
  for (int t = 0; t < T; ++t) proj[t] = camera::project(cams[t], model.pose(params[t]));
  const auto assignment = assign_tracks(tracks, [&](int f) -> const camera::Projection& { return proj[f]; });
  int pairs = 0;
  for (int t = 0; t < T; ++t) pairs += count_time_pairs(tracks, assignment, t, proj[t]);
  TermResult r;
  if (pairs == 0) return r;
  for (int t = 0; t < T; ++t) {
    const TermResult f = loss_time_frame(tracks, assignment, t, proj[t], pairs);
    r.value += f.value;
    r.used += f.used;
  }
  return r;
}

// ---------------------------------------------------------------- regularizers

std::string_view reg_name(RegTerm t) {
  switch (t) {
    case RegTerm::Lap: return "lap";
    case RegTerm::Vol: return "vol";
    case RegTerm::Arap: return "arap";
    case RegTerm::Prior: return "prior";
    case RegTerm::Lim: return "lim";
  }
  return "?";
}

Regularizer::Regularizer(const model::QuadModel& model) : model_(model) {
  const int n = model.num_vertices();
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, 1.0);
    const auto& nb = model.neighbors()[i];
    for (int j : nb) trip.emplace_back(i, j, -1.0 / nb.size());
  }
  laplacian_.resize(n, n);
  laplacian_.setFromTriplets(trip.begin(), trip.end());
  const double v0 = volume(model.tpl().rest_vertices);
  rest_volume_ = std::abs(v0) > 1e-12 ? v0 : 1.0;
}

double Regularizer::volume(const Points3& x) const {
  const auto& F = model_.tpl().faces;
  double v = 0.0;
  for (int f = 0; f < F.rows(); ++f) {
    const Eigen::Vector3d a = x.row(F(f, 0)), b = x.row(F(f, 1)), c = x.row(F(f, 2));
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

void Regularizer::volume_grad(const Points3& x, Points3& g, double scale) const {
  const auto& F = model_.tpl().faces;
  const double s = scale / 6.0;
  for (int f = 0; f < F.rows(); ++f) {
    const Eigen::Vector3d a = x.row(F(f, 0)), b = x.row(F(f, 1)), c = x.row(F(f, 2));
    g.row(F(f, 0)) += s * b.cross(c).transpose();
    g.row(F(f, 1)) += s * c.cross(a).transpose();
    g.row(F(f, 2)) += s * a.cross(b).transpose();
  }
}

double Regularizer::limit_penalty(double x) {
  if (!(x > 0.0)) return 0.0;
  return x + std::log1p(std::exp(-x));
}

double Regularizer::term(RegTerm which, const model::FrameParams& p, model::FrameParams* grad, double scale) const {
  const int n = model_.num_vertices();
  switch (which) {
    case RegTerm::Lap: {
      const Eigen::MatrixXd lo = laplacian_ * p.vertex_offsets;
      if (grad) grad->vertex_offsets += (2.0 * scale / n) * (laplacian_.transpose() * lo);
      return lo.squaredNorm() / n;
    }
    case RegTerm::Vol: {
      const Points3 x = model_.shaped_vertices(p);
      const Points3 xb = x - p.vertex_offsets;
      const double r = (volume(x) - volume(xb)) / rest_volume_;
      if (grad) {
        Points3 gx = Points3::Zero(n, 3), gb = Points3::Zero(n, 3);
        volume_grad(x, gx, 2.0 * r * scale / rest_volume_);
        volume_grad(xb, gb, -2.0 * r * scale / rest_volume_);
        grad->vertex_offsets += gx;
        const Points3 gsum = gx + gb;
        const auto& basis = model_.tpl().shape_basis;
        for (std::size_t k = 0; k < basis.size(); ++k) grad->beta(k) += (gsum.array() * basis[k].array()).sum();
      }
      return r * r;
    }
    case RegTerm::Arap: {
      const Points3& rest = model_.tpl().rest_vertices;
      const Points3& o = p.vertex_offsets;
      double e = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto& nb = model_.neighbors()[i];
        Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
        for (int j : nb) {
          const Eigen::Vector3d r0 = (rest.row(i) - rest.row(j)).transpose();
          const Eigen::Vector3d r1 = r0 + (o.row(i) - o.row(j)).transpose();
          S += r0 * r1.transpose();
        }
        // Best rotation of the 1-ring; held fixed for the gradient, which is
        // exact because the energy is stationary in R.
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Matrix3d V = svd.matrixV();
        Eigen::Matrix3d R = V * svd.matrixU().transpose();
        if (R.determinant() < 0) {
          V.col(2) = -V.col(2);
          R = V * svd.matrixU().transpose();
        }
        for (int j : nb) {
          const Eigen::Vector3d r0 = (rest.row(i) - rest.row(j)).transpose();
          const Eigen::Vector3d r1 = r0 + (o.row(i) - o.row(j)).transpose();
          const Eigen::Vector3d res = r1 - R * r0;
          e += res.squaredNorm();
          if (grad) {
            grad->vertex_offsets.row(i) += (2.0 * scale / n) * res.transpose();
            grad->vertex_offsets.row(j) -= (2.0 * scale / n) * res.transpose();
          }
        }
      }
      return e / n;
    }
    case RegTerm::Prior: {
      if (grad) grad->beta += 2.0 * scale * p.beta;
      return p.beta.squaredNorm();
    }
    case RegTerm::Lim: {
      const auto& limits = model_.tpl().pose_limits;
      double e = 0.0;
      for (int j = 0; j < model_.num_joints(); ++j)
        for (int c = 0; c < 3; ++c) {
          const double th = p.theta(3 * j + c);
          const double up = th - limits[j][c].max, lo = limits[j][c].min - th;
          e += limit_penalty(up) + limit_penalty(lo);
          if (grad) {
            if (up > 0) grad->theta(3 * j + c) += scale / (1.0 + std::exp(-up));
            if (lo > 0) grad->theta(3 * j + c) -= scale / (1.0 + std::exp(-lo));
          }
        }
      return e;
    }
  }
  return 0.0;
}

double beta_variance(std::span<const model::FrameParams* const> params, std::vector<model::FrameParams>* grads,
                     double scale) {
  if (params.empty()) return 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(params[0]->beta.size());
  for (const auto* p : params) mean += p->beta;
  mean /= params.size();
  double v = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const Eigen::VectorXd d = params[b]->beta - mean;
    v += d.squaredNorm();
    if (grads) (*grads)[b].beta += (2.0 * scale / params.size()) * d;
  }
  return v / params.size();
}

// ---------------------------------------------------------------- total

const TermEntry& LossReport::term(std::string_view name) const {
  for (const TermEntry& t : terms)
    if (t.name == name) return t;
  throw InputError("no loss term named '" + std::string(name) + "'");
}

namespace {

enum Geo { kObj, kPart, kPix, kTime, kGeoCount };
constexpr const char* kGeoNames[kGeoCount] = {"obj", "part", "pix", "time"};

void check_finite(double v, const char* term, int frame) {
  if (!std::isfinite(v))
    throw NumericalError("non-finite " + std::string(term) + " loss at frame " + std::to_string(frame));
}

}  // namespace

LossReport total_loss(const Scene& scene, std::span<const int> frames, const std::vector<model::FrameParams>& params,
                      const std::vector<camera::CameraFrame>& cams, const LossWeights& weights,
                      const TotalOptions& options) {
  const cues::CueSet& cues = scene.cues;
  const model::QuadModel& model = scene.model;
  const int B = static_cast<int>(frames.size());
  const bool use_time = !scene.track_assignment.empty();
  if (B == 0) throw InputError("total_loss: no frames");

  std::vector<Points3> verts(B);
  std::vector<camera::Projection> proj(B);
  parallel_for(B, [&](int b) {
    const int t = frames[b];
    verts[b] = model.pose(params[t]);
    proj[b] = camera::project(cams[t], verts[b]);
  });

  int time_pairs = 0;
  if (use_time)
    for (int b = 0; b < B; ++b) time_pairs += count_time_pairs(cues.tracks, scene.track_assignment, frames[b], proj[b]);

  struct FrameTerms {
    std::array<TermResult, kGeoCount> res;
    std::array<Points2, kGeoCount> grad;
  };
  std::vector<FrameTerms> ft(B);
  parallel_for(B, [&](int b) {
    const int t = frames[b];
    FrameTerms& f = ft[b];
    const bool g = options.gradients;
    const auto samples = sample_mask(cues.masks[t], options.mask_budget, splitmix(options.mask_seed ^ splitmix(t)),
                                     options.chamfer_boundary);
    if (samples.empty()) throw InputError("frame " + std::to_string(t) + ": empty object mask");
    f.res[kObj] = loss_obj(samples, proj[b], g ? &f.grad[kObj] : nullptr);
    f.res[kPart] = loss_part(cues.frames[t].parts, proj[b], model, g ? &f.grad[kPart] : nullptr);
    f.res[kPix] = loss_pix(cues.frames[t].corrs, proj[b], g ? &f.grad[kPix] : nullptr);
    if (use_time && time_pairs > 0)
      f.res[kTime] = loss_time_frame(cues.tracks, scene.track_assignment, t, proj[b], time_pairs,
                                     g ? &f.grad[kTime] : nullptr);
    else if (g)
      f.grad[kTime].setZero(proj[b].pixels.rows(), 2);
    for (int k = 0; k < kGeoCount; ++k) check_finite(f.res[k].value, kGeoNames[k], t);
  });

  LossReport rep;
  const double lambda[kGeoCount] = {weights.obj, weights.part, weights.pix, weights.time};
  // Per-frame means are averaged over frames where the term is defined; the
  // temporal term is already normalized over all pairs in the batch.
  std::array<double, kGeoCount> value{}, scale{};
  std::array<int, kGeoCount> defined{};
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < kGeoCount; ++k) {
      if (k == kTime) {
        value[k] += ft[b].res[k].value;
        continue;
      }
      if (k == kObj || ft[b].res[k].used > 0) {
        value[k] += ft[b].res[k].value;
        ++defined[k];
      }
    }
    rep.obj_penalty |= ft[b].res[kObj].penalty;
    rep.pix_excluded += ft[b].res[kPix].excluded;
    rep.part_excluded += ft[b].res[kPart].excluded;
  }
  for (int k = 0; k < kGeoCount; ++k) {
    if (k != kTime && defined[k] > 0) value[k] /= defined[k];
    scale[k] = k == kTime ? lambda[k] : (defined[k] > 0 ? lambda[k] / defined[k] : 0.0);
  }
  if (use_time)
    rep.time_skipped = static_cast<int>(std::count(scene.track_assignment.begin(), scene.track_assignment.end(), -1));

  const RegWeights& rw = weights.reg;
  const double reg_weight[5] = {rw.lap, rw.vol, rw.arap, rw.prior, rw.lim};
  std::array<double, 5> reg_value{};
  std::vector<std::array<double, 5>> reg_frame(B);

  // Per-term gradients are only separated when their norms are requested.
  const int n_groups = options.grad_norms ? kGeoCount + 6 : 1;
  std::vector<std::vector<model::FrameParams>> group_grads;
  std::vector<std::vector<camera::ExtrinsicsGrad>> group_cam;
  if (options.gradients) {
    group_grads.assign(n_groups, std::vector<model::FrameParams>(B));
    group_cam.assign(n_groups, std::vector<camera::ExtrinsicsGrad>(B));
  }
  parallel_for(B, [&](int b) {
    const int t = frames[b];
    const model::FrameParams& p = params[t];
    for (int r = 0; r < 5; ++r) {
      model::FrameParams* g = nullptr;
      if (options.gradients) {
        auto& slot = group_grads[options.grad_norms ? kGeoCount + r : 0][b];
        if (slot.beta.size() == 0) slot = p.zeros_like();
        g = &slot;
      }
      reg_frame[b][r] = scene.reg.term(kRegTerms[r], p, reg_weight[r] > 0.0 ? g : nullptr, reg_weight[r] / B);
      check_finite(reg_frame[b][r], reg_name(kRegTerms[r]).data(), t);
    }
    if (!options.gradients) return;
    auto chain = [&](const Points2& gpix, int group) {
      camera::ExtrinsicsGrad* cg = options.camera_grads ? &group_cam[group][b] : nullptr;
      const Points3 gv = camera::project_vjp(cams[t], verts[b], proj[b], gpix, cg);
      model::FrameParams gp = model.pose_vjp(p, gv);
      auto& slot = group_grads[group][b];
      if (slot.beta.size() == 0) slot = std::move(gp);
      else slot += gp;
    };
    if (options.grad_norms) {
      for (int k = 0; k < kGeoCount; ++k) chain(scale[k] * ft[b].grad[k], k);
    } else {
      Points2 gpix = Points2::Zero(proj[b].pixels.rows(), 2);
      for (int k = 0; k < kGeoCount; ++k)
        if (scale[k] != 0.0) gpix += scale[k] * ft[b].grad[k];
      chain(gpix, 0);
    }
  });
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < 5; ++r) reg_value[r] += reg_frame[b][r] / B;

  double beta_var = 0.0;
  {
    std::vector<const model::FrameParams*> ptrs;
    for (int t : frames) ptrs.push_back(&params[t]);
    std::vector<model::FrameParams>* g = nullptr;
    if (options.gradients) {
      auto& slots = group_grads[options.grad_norms ? kGeoCount + 5 : 0];
      for (int b = 0; b < B; ++b)
        if (slots[b].beta.size() == 0) slots[b] = params[frames[b]].zeros_like();
      g = &slots;
    }
    beta_var = beta_variance(ptrs, rw.beta_var > 0.0 ? g : nullptr, rw.beta_var);
  }

  for (int k = 0; k < kGeoCount; ++k) rep.terms.push_back({kGeoNames[k], value[k], lambda[k], 0.0});
  for (int r = 0; r < 5; ++r) rep.terms.push_back({std::string(reg_name(kRegTerms[r])), reg_value[r], reg_weight[r], 0.0});
  rep.terms.push_back({"beta_var", beta_var, rw.beta_var, 0.0});
  rep.total = 0.0;
  for (const TermEntry& e : rep.terms) rep.total += e.weight * e.value;

  if (options.gradients) {
    rep.grads.resize(B);
    rep.camera_grads.resize(B);
    for (int b = 0; b < B; ++b) {
      rep.grads[b] = params[frames[b]].zeros_like();
      for (int g = 0; g < n_groups; ++g) {
        if (group_grads[g][b].beta.size() != 0) rep.grads[b] += group_grads[g][b];
        rep.camera_grads[b].rotation += group_cam[g][b].rotation;
        rep.camera_grads[b].translation += group_cam[g][b].translation;
      }
    }
    if (options.grad_norms)
      for (int g = 0; g < n_groups; ++g) {
        double s = 0.0;
        for (int b = 0; b < B; ++b)
          if (group_grads[g][b].beta.size() != 0) s += squared_norm(group_grads[g][b]);
        rep.terms[g].grad_norm = std::sqrt(s);
      }
  }
  return rep;
}

void write_report_rows(std::ostream& out, int epoch, const LossReport& report) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const TermEntry& t : report.terms)
    out << epoch << ',' << t.name << ',' << num(t.value) << ',' << num(t.grad_norm) << '\n';
  out << epoch << ",total," << num(report.total) << ",0\n";
}

}  // namespace quadfit::align

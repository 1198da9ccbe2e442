#pragma once

// Per-frame 2D cues produced upstream: object masks, part masks (sampled
// into part points), pixel-to-vertex correspondences and point tracks.

#include "quadfit/camera.hpp"
#include "quadfit/common.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace quadfit::cues {

/// Binary image, row-major, pixel (x, y) at bits[y * width + x].
class ObjectMask {
 public:
  ObjectMask() = default;
  ObjectMask(int width, int height) : width_(width), height_(height), bits_(std::size_t(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool at(int x, int y) const { return bits_[std::size_t(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) { bits_[std::size_t(y) * width_ + x] = v ? 1 : 0; }

  /// Whether the pixel nearest to the continuous point is foreground.
  bool contains(const Eigen::Vector2d& p) const;
  bool in_bounds(const Eigen::Vector2d& p) const;

  std::size_t area() const;
  bool empty() const { return area() == 0; }
  /// Foreground pixel coordinates in row-major order.
  std::vector<Eigen::Vector2d> foreground() const;
  /// Foreground pixels with at least one 4-neighbour in the background.
  std::vector<Eigen::Vector2d> boundary() const;

  /// `W H run,run,...` with runs alternating background/foreground, starting
  /// with background.
  std::string to_rle() const;
  /// Throws InputError on malformed text or run totals that are not W*H.
  static ObjectMask from_rle(const std::string& line);

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const ObjectMask& o) const = default;

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct PartSample {
  Eigen::Vector2d pixel;
  Part part;
  double confidence = 1.0;
  bool operator==(const PartSample&) const = default;
};

struct PixelCorr {
  Eigen::Vector2d pixel;
  int vertex_id = 0;
  double confidence = 1.0;
  bool operator==(const PixelCorr&) const = default;
};

struct Track {
  int id = 0;
  int anchor = 1;                              // 1-based key frame
  std::vector<Eigen::Vector2d> positions;      // one per frame
  std::vector<std::uint8_t> valid;             // one per frame
  bool operator==(const Track&) const = default;
  int anchor_index() const { return anchor - 1; }
};

/// Part masks of one frame with the upstream per-part confidence.
struct PartMasks {
  std::array<ObjectMask, 4> masks;
  std::array<double, 4> confidence{1.0, 1.0, 1.0, 1.0};
  bool operator==(const PartMasks&) const = default;
};

struct FrameCues {
  std::vector<PartSample> parts;
  std::vector<PixelCorr> corrs;
  bool parts_inherited = false;
  bool corrs_inherited = false;
};

struct LoadReport {
  int corrs_low_confidence = 0;
  int corrs_outside_mask = 0;
  int parts_low_confidence = 0;    // feet/tail frame-masks dropped
  int tracks_dropped = 0;
  int frames_parts_inherited = 0;
  int frames_corrs_inherited = 0;

  int filtered_total() const {
    return corrs_low_confidence + corrs_outside_mask + parts_low_confidence + tracks_dropped;
  }
};

struct Features {
  int dim = 0;
  std::vector<Eigen::VectorXf> frames;
};

struct CueSet {
  int num_frames = 0;
  camera::Intrinsics intrinsics;
  std::vector<ObjectMask> masks;
  std::vector<PartMasks> part_masks;
  std::vector<FrameCues> frames;
  std::vector<Track> tracks;
  std::optional<Features> features;
  int part_samples_per_frame = 200;
  std::uint64_t part_seed = 0;
  LoadReport report;
};

inline constexpr double kPartConfidence = 0.3;   // feet/tail masks kept above this
inline constexpr double kCorrConfidence = 0.5;   // correspondences kept above this
inline constexpr int kDefaultPartSamples = 200;

/// Allocates `n_samples` across present parts in proportion to area and draws
/// pixels uniformly within each part. Per-part count is
/// round(n * area / total); the residual goes to the largest part.
std::vector<PartSample> sample_part_points(const PartMasks& masks, int n_samples, std::uint64_t seed);

/// Every frame of a video, seeded per frame.
std::vector<std::vector<PartSample>> sample_part_points(const std::vector<PartMasks>& masks, int n_samples,
                                                        std::uint64_t seed);

/// Per-part sample counts for the given areas (zero for absent parts).
std::array<int, 4> allocate_part_counts(const std::array<std::size_t, 4>& areas, int n_samples);

/// Empty part-sample or correspondence sets inherit the previous frame's.
/// Throws InputError when frame 0 has either set empty.
CueSet fallback_fill(CueSet cues);

/// Applies confidence and mask filters in place, updating `cues.report`.
void apply_filters(CueSet& cues, int num_template_vertices);

struct LoadOptions {
  int num_template_vertices = -1;     // -1: skip vertex-range check
  std::optional<int> part_samples;    // overrides the manifest
  std::optional<std::uint64_t> part_seed;
};

/// Reads a scene manifest and every cue file it references, validates and
/// filters them. Structural problems throw InputError with file and frame.
CueSet load_cues(const std::filesystem::path& manifest, const LoadOptions& options = {});

/// Writes cue files next to `manifest` and the manifest itself. `extra`
/// (a JSON object serialized as text) is merged into the manifest.
void save_cues(const CueSet& cues, const std::filesystem::path& manifest, const std::string& extra_json = "{}");

Features read_features(const std::filesystem::path& path);
void write_features(const Features& f, const std::filesystem::path& path);

}  // namespace quadfit::cues

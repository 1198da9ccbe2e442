#pragma once

// Amortized per-frame parameter regressor: a small tanh MLP over a frame
// feature vector concatenated with a positional encoding of the frame index.

#include "quadfit/common.hpp"
#include "quadfit/model.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace quadfit::featnet {

inline constexpr int kEncodingDim = 8;
inline constexpr int kHidden = 64;

/// (sin, cos)(2 pi 2^k t / T) for k = 0..3, interleaved.
std::array<double, kEncodingDim> pos_encode(int t, int T);

/// Sizes of the fields the network emits.
struct OutputLayout {
  int betas = 0;
  int joints = 0;
  int limbs = 0;
  int vertices = 0;   // nonzero when offsets come from the network

  int size() const { return betas + 3 * joints + limbs + 3 + 3 * vertices; }
  static OutputLayout for_template(const model::QuadTemplate& tpl, bool with_offsets);
};

/// Raw network output -> FrameParams. theta = pi tanh(y / pi), scales = exp(y).
/// `offsets_fallback` supplies vertex offsets when the layout has none.
model::FrameParams decode(const OutputLayout& layout, const Eigen::VectorXd& y, const Points3& offsets_fallback);

/// Inverse of decode for parameters inside its range.
Eigen::VectorXd encode(const OutputLayout& layout, const model::FrameParams& p);

/// d(loss)/d(raw output) given d(loss)/d(FrameParams).
Eigen::VectorXd decode_vjp(const OutputLayout& layout, const Eigen::VectorXd& y, const model::FrameParams& grad);

class FeatNet {
 public:
  FeatNet() = default;
  /// Hidden layers draw Xavier-uniform weights from `seed`; the output layer
  /// starts at zero with its bias set to encode(init).
  FeatNet(int feature_dim, OutputLayout layout, const model::FrameParams& init, std::uint64_t seed);

  int feature_dim() const { return feature_dim_; }
  const OutputLayout& layout() const { return layout_; }

  struct Cache {
    Eigen::VectorXd input, h1, h2, y;
  };

  /// Raw output for one frame; fills `cache` for backward when given.
  Eigen::VectorXd forward_raw(const Eigen::VectorXd& feature, const std::array<double, kEncodingDim>& encoding,
                              Cache* cache = nullptr) const;

  model::FrameParams forward(const Eigen::VectorXd& feature, const std::array<double, kEncodingDim>& encoding,
                             const Points3& offsets_fallback) const;

  /// Accumulates d(loss)/d(weights) into `grads` (keyed like params()).
  void backward(const Cache& cache, const Eigen::VectorXd& grad_y, std::map<std::string, Eigen::VectorXd>& grads) const;

  /// Named flat views: w1, b1, w2, b2, w3, b3 (matrices column-major).
  std::map<std::string, Eigen::VectorXd> params() const;
  void set_params(const std::map<std::string, Eigen::VectorXd>& p);

  /// Little-endian binary: "QFN1", uint32 layer count, then per layer
  /// uint32 rows, uint32 cols, rows*cols float32 weights (column-major) and
  /// rows float32 biases.
  void save(const std::filesystem::path& path) const;
  /// Loads weights into a network of matching shape; throws InputError otherwise.
  void load(const std::filesystem::path& path);

 private:
  int feature_dim_ = 0;
  OutputLayout layout_;
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

}  // namespace quadfit::featnet

#include "quadfit/featnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace quadfit::featnet {

std::array<double, kEncodingDim> pos_encode(int t, int T) {
  if (T < 1 || t < 0 || t >= T) throw InputError("pos_encode: frame " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
  std::array<double, kEncodingDim> e{};
  for (int k = 0; k < kEncodingDim / 2; ++k) {
    const double a = 2.0 * M_PI * std::ldexp(1.0, k) * t / T;
    e[2 * k] = std::sin(a);
    e[2 * k + 1] = std::cos(a);
  }
  return e;
}

OutputLayout OutputLayout::for_template(const model::QuadTemplate& tpl, bool with_offsets) {
  return {tpl.num_betas(), tpl.num_joints(), tpl.num_limbs, with_offsets ? tpl.num_vertices() : 0};
}

model::FrameParams decode(const OutputLayout& L, const Eigen::VectorXd& y, const Points3& offsets_fallback) {
  if (y.size() != L.size()) throw InputError("featnet output has " + std::to_string(y.size()) + " entries, layout expects " + std::to_string(L.size()));
  model::FrameParams p;
  int o = 0;
  p.beta = y.segment(o, L.betas);
  o += L.betas;
  p.theta = (y.segment(o, 3 * L.joints).array() / M_PI).tanh() * M_PI;
  o += 3 * L.joints;
  p.limb_scales = y.segment(o, L.limbs).array().exp();
  o += L.limbs;
  p.translation = y.segment<3>(o);
  o += 3;
  if (L.vertices > 0) {
    p.vertex_offsets = Eigen::Map<const Points3>(y.data() + o, L.vertices, 3);
  } else {
    p.vertex_offsets = offsets_fallback;
  }
  return p;
}

Eigen::VectorXd encode(const OutputLayout& L, const model::FrameParams& p) {
  Eigen::VectorXd y(L.size());
  int o = 0;
  y.segment(o, L.betas) = p.beta;
  o += L.betas;
  for (int i = 0; i < 3 * L.joints; ++i) {
    const double r = std::clamp(p.theta(i) / M_PI, -1.0 + 1e-12, 1.0 - 1e-12);
    y(o + i) = M_PI * std::atanh(r);
  }
  o += 3 * L.joints;
  y.segment(o, L.limbs) = p.limb_scales.array().log();
  o += L.limbs;
  y.segment<3>(o) = p.translation;
  o += 3;
  if (L.vertices > 0) y.segment(o, 3 * L.vertices) = Eigen::Map<const Eigen::VectorXd>(p.vertex_offsets.data(), 3 * L.vertices);
  return y;
}

Eigen::VectorXd decode_vjp(const OutputLayout& L, const Eigen::VectorXd& y, const model::FrameParams& g) {
  Eigen::VectorXd gy(L.size());
  int o = 0;
  gy.segment(o, L.betas) = g.beta;
  o += L.betas;
  for (int i = 0; i < 3 * L.joints; ++i) {
    const double th = std::tanh(y(o + i) / M_PI);
    gy(o + i) = g.theta(i) * (1.0 - th * th);
  }
  o += 3 * L.joints;
  gy.segment(o, L.limbs) = g.limb_scales.array() * y.segment(o, L.limbs).array().exp();
  o += L.limbs;
  gy.segment<3>(o) = g.translation;
  o += 3;
  if (L.vertices > 0) gy.segment(o, 3 * L.vertices) = Eigen::Map<const Eigen::VectorXd>(g.vertex_offsets.data(), 3 * L.vertices);
  return gy;
}

FeatNet::FeatNet(int feature_dim, OutputLayout layout, const model::FrameParams& init, std::uint64_t seed)
    : feature_dim_(feature_dim), layout_(layout) {
  if (feature_dim < 0) throw InputError("feature dimension must be >= 0");
  const int in = feature_dim + kEncodingDim;
  std::mt19937_64 rng(seed);
  auto xavier = [&](int rows, int cols) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
  };
  w1_ = xavier(kHidden, in);
  b1_ = Eigen::VectorXd::Zero(kHidden);
  w2_ = xavier(kHidden, kHidden);
  b2_ = Eigen::VectorXd::Zero(kHidden);
  w3_ = Eigen::MatrixXd::Zero(layout.size(), kHidden);
  b3_ = encode(layout, init);
}

Eigen::VectorXd FeatNet::forward_raw(const Eigen::VectorXd& feature, const std::array<double, kEncodingDim>& enc,
                                     Cache* cache) const {
  if (feature.size() != feature_dim_)
    throw InputError("feature vector has " + std::to_string(feature.size()) + " entries, network expects " + std::to_string(feature_dim_));
  Eigen::VectorXd x(feature_dim_ + kEncodingDim);
  x.head(feature_dim_) = feature;
  for (int k = 0; k < kEncodingDim; ++k) x(feature_dim_ + k) = enc[k];
  Eigen::VectorXd h1 = (w1_ * x + b1_).array().tanh();
  Eigen::VectorXd h2 = (w2_ * h1 + b2_).array().tanh();
  Eigen::VectorXd y = w3_ * h2 + b3_;
  if (cache) {
    cache->input = std::move(x);
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->y = y;
  }
  return y;
}

model::FrameParams FeatNet::forward(const Eigen::VectorXd& feature, const std::array<double, kEncodingDim>& enc,
                                    const Points3& offsets_fallback) const {
  return decode(layout_, forward_raw(feature, enc), offsets_fallback);
}

void FeatNet::backward(const Cache& c, const Eigen::VectorXd& gy, std::map<std::string, Eigen::VectorXd>& grads) const {
  auto acc = [&](const std::string& name, const Eigen::VectorXd& g) {
    auto it = grads.find(name);
    if (it == grads.end()) grads.emplace(name, g);
    else it->second += g;
  };
  auto flat = [](const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()).eval(); };

  acc("w3", flat(gy * c.h2.transpose()));
  acc("b3", gy);
  const Eigen::VectorXd g2 = (w3_.transpose() * gy).array() * (1.0 - c.h2.array().square());
  acc("w2", flat(g2 * c.h1.transpose()));
  acc("b2", g2);
  const Eigen::VectorXd g1 = (w2_.transpose() * g2).array() * (1.0 - c.h1.array().square());
  acc("w1", flat(g1 * c.input.transpose()));
  acc("b1", g1);
}

std::map<std::string, Eigen::VectorXd> FeatNet::params() const {
  auto flat = [](const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()).eval(); };
  return {{"w1", flat(w1_)}, {"b1", b1_}, {"w2", flat(w2_)}, {"b2", b2_}, {"w3", flat(w3_)}, {"b3", b3_}};
}

void FeatNet::set_params(const std::map<std::string, Eigen::VectorXd>& p) {
  auto put = [&](const char* name, Eigen::MatrixXd& m) {
    const Eigen::VectorXd& v = p.at(name);
    if (v.size() != m.size()) throw InputError(std::string("featnet slot ") + name + " has the wrong size");
    m = Eigen::Map<const Eigen::MatrixXd>(v.data(), m.rows(), m.cols());
  };
  auto putv = [&](const char* name, Eigen::VectorXd& b) {
    const Eigen::VectorXd& v = p.at(name);
    if (v.size() != b.size()) throw InputError(std::string("featnet slot ") + name + " has the wrong size");
    b = v;
  };
  put("w1", w1_);
  putv("b1", b1_);
  put("w2", w2_);
  putv("b2", b2_);
  put("w3", w3_);
  putv("b3", b3_);
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw InputError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

void FeatNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write("QFN1", 4);
  const std::array<std::pair<const Eigen::MatrixXd*, const Eigen::VectorXd*>, 3> layers{
      {{&w1_, &b1_}, {&w2_, &b2_}, {&w3_, &b3_}}};
  write_u32(out, layers.size());
  for (const auto& [w, b] : layers) {
    write_u32(out, static_cast<std::uint32_t>(w->rows()));
    write_u32(out, static_cast<std::uint32_t>(w->cols()));
    for (Eigen::Index i = 0; i < w->size(); ++i) {
      const float f = static_cast<float>(w->data()[i]);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    for (Eigen::Index i = 0; i < b->size(); ++i) {
      const float f = static_cast<float>((*b)(i));
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
}

void FeatNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "QFN1", 4) != 0) throw InputError(path.string() + ": not a network checkpoint");
  if (read_u32(in, path) != 3) throw InputError(path.string() + ": expected 3 layers");
  const std::array<std::pair<Eigen::MatrixXd*, Eigen::VectorXd*>, 3> layers{{{&w1_, &b1_}, {&w2_, &b2_}, {&w3_, &b3_}}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto [w, b] = layers[l];
    const std::uint32_t rows = read_u32(in, path), cols = read_u32(in, path);
    if (rows != w->rows() || cols != w->cols())
      throw InputError(path.string() + ": layer " + std::to_string(l + 1) + " is " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", network expects " + std::to_string(w->rows()) + "x" + std::to_string(w->cols()));
    std::vector<float> buf(std::size_t(rows) * cols + rows);
    if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size() * 4)) throw InputError(path.string() + ": truncated checkpoint");
    for (Eigen::Index i = 0; i < w->size(); ++i) w->data()[i] = buf[i];
    for (std::uint32_t i = 0; i < rows; ++i) (*b)(i) = buf[w->size() + i];
  }
}

}  // namespace quadfit::featnet

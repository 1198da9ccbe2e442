#include "support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace qtest {

namespace fs = std::filesystem;
using namespace quadfit;

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("quadfit_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

model::QuadTemplate chain_template() {
  model::QuadTemplate t;
  t.rest_vertices.resize(5, 3);
  t.rest_vertices << 0, 0, 0,   //
      0.5, 0.1, 0,              //
      1, 0, 0,                  //
      1.5, 0.1, 0,              //
      2, 0, 0;
  t.faces.resize(2, 3);
  t.faces << 0, 1, 2, 2, 3, 4;
  t.joints = {{"root", -1, Eigen::Vector3d::Zero(), -1}, {"child", 0, Eigen::Vector3d(1, 0, 0), 0}};
  t.num_limbs = 1;
  t.skin_weights = Eigen::MatrixXd::Zero(5, 2);
  t.skin_weights(0, 0) = t.skin_weights(1, 0) = 1.0;
  t.skin_weights(2, 1) = t.skin_weights(3, 1) = t.skin_weights(4, 1) = 1.0;
  t.shape_basis.assign(1, Points3::Zero(5, 3));
  t.shape_basis[0].col(1).setConstant(0.1);
  t.part_labels = {Part::Body, Part::Body, Part::Feet, Part::Feet, Part::Head};
  t.pose_limits.assign(2, {model::PoseLimit{-M_PI, M_PI}, model::PoseLimit{-M_PI, M_PI}, model::PoseLimit{-M_PI, M_PI}});
  t.landmarks = {0, 4};
  return t;
}

model::QuadTemplate blob_template() {
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                                    {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
  for (auto& x : v) x.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    v.push_back((v[a] + v[b]).normalized());
    return mid[key] = static_cast<int>(v.size()) - 1;
  };
  std::vector<std::array<int, 3>> f2;
  for (const auto& t : f) {
    const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
    f2.push_back({t[0], ab, ca});
    f2.push_back({t[1], bc, ab});
    f2.push_back({t[2], ca, bc});
    f2.push_back({ab, bc, ca});
  }
  const int n = static_cast<int>(v.size());
  model::QuadTemplate t;
  t.rest_vertices.resize(n, 3);
  for (int i = 0; i < n; ++i) t.rest_vertices.row(i) << 1.5 * v[i].x(), 0.6 * v[i].y(), 0.6 * v[i].z();
  t.faces.resize(static_cast<int>(f2.size()), 3);
  for (std::size_t i = 0; i < f2.size(); ++i) t.faces.row(i) << f2[i][0], f2[i][1], f2[i][2];
  t.joints = {{"root", -1, Eigen::Vector3d::Zero(), -1},
              {"head", 0, Eigen::Vector3d(0.7, 0.1, 0), 0},
              {"tail", 0, Eigen::Vector3d(-0.7, 0, 0), -1}};
  t.num_limbs = 1;
  t.skin_weights = Eigen::MatrixXd::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    const double x = t.rest_vertices(i, 0);
    const double h = 1.0 / (1.0 + std::exp(-6.0 * (x - 0.7))), tl = 1.0 / (1.0 + std::exp(6.0 * (x + 0.7)));
    t.skin_weights(i, 1) = h;
    t.skin_weights(i, 2) = tl;
    t.skin_weights(i, 0) = 1.0 - h - tl;
    t.part_labels.push_back(x > 0.9 ? Part::Head : x < -0.9 ? Part::Tail : v[i].y() < -0.5 ? Part::Feet : Part::Body);
  }
  t.shape_basis.assign(2, Points3::Zero(n, 3));
  t.shape_basis[0].col(0) = 0.1 * t.rest_vertices.col(0);
  t.shape_basis[1].col(1) = 0.1 * t.rest_vertices.col(1).array().square().matrix();
  t.pose_limits.assign(3, {model::PoseLimit{-1, 1}, model::PoseLimit{-1, 1}, model::PoseLimit{-1, 1}});
  t.landmarks = {0, 3, 5, 8};
  t.validate();
  return t;
}

model::FrameParams random_params(const model::QuadTemplate& tpl, std::mt19937_64& rng, double theta_scale,
                                 bool offsets) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  model::FrameParams p = model::FrameParams::rest(tpl);
  for (int i = 0; i < p.beta.size(); ++i) p.beta(i) = 0.5 * u(rng);
  for (int i = 0; i < p.theta.size(); ++i) p.theta(i) = theta_scale * u(rng);
  for (int i = 0; i < p.limb_scales.size(); ++i) p.limb_scales(i) = 1.0 + 0.2 * u(rng);
  for (int i = 0; i < 3; ++i) p.translation(i) = 0.2 * u(rng);
  if (offsets)
    for (int i = 0; i < p.vertex_offsets.size(); ++i) p.vertex_offsets.data()[i] = 0.02 * u(rng);
  return p;
}

Eigen::VectorXd flatten(const model::FrameParams& p) {
  const Eigen::Index n = p.beta.size() + p.theta.size() + p.limb_scales.size() + 3 + p.vertex_offsets.size();
  Eigen::VectorXd x(n);
  Eigen::Index o = 0;
  x.segment(o, p.beta.size()) = p.beta;
  o += p.beta.size();
  x.segment(o, p.theta.size()) = p.theta;
  o += p.theta.size();
  x.segment(o, p.limb_scales.size()) = p.limb_scales;
  o += p.limb_scales.size();
  x.segment<3>(o) = p.translation;
  o += 3;
  x.segment(o, p.vertex_offsets.size()) = Eigen::Map<const Eigen::VectorXd>(p.vertex_offsets.data(), p.vertex_offsets.size());
  return x;
}

model::FrameParams unflatten(const model::FrameParams& like, const Eigen::VectorXd& x) {
  model::FrameParams p = like;
  Eigen::Index o = 0;
  p.beta = x.segment(o, p.beta.size());
  o += p.beta.size();
  p.theta = x.segment(o, p.theta.size());
  o += p.theta.size();
  p.limb_scales = x.segment(o, p.limb_scales.size());
  o += p.limb_scales.size();
  p.translation = x.segment<3>(o);
  o += 3;
  Eigen::Map<Eigen::VectorXd>(p.vertex_offsets.data(), p.vertex_offsets.size()) = x.segment(o, p.vertex_offsets.size());
  return p;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                 double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y(i) = x(i) + h;
    const double fp = f(y);
    y(i) = x(i) - h;
    const double fm = f(y);
    y(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& n, double floor) {
  return (a - n).norm() / std::max(n.norm(), floor);
}

camera::CameraFrame test_camera(double distance, double fx, int size) {
  camera::CameraFrame c;
  c.intrinsics = {fx, fx, (size - 1) / 2.0, (size - 1) / 2.0, size, size};
  c.rotation = Eigen::Matrix3d::Identity();
  c.translation = Eigen::Vector3d(0, 0, distance);
  return c;
}

}  // namespace qtest

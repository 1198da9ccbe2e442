#include "quadfit/model.hpp"

#include "quadfit/diff.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace quadfit::model {

using json = nlohmann::json;

void QuadTemplate::validate() const {
  const int n = num_vertices();
  const int j = num_joints();
  if (n == 0) throw InputError("template: rest_vertices is empty");
  if (j == 0) throw InputError("template: joints is empty");
  for (int k = 0; k < j; ++k) {
    const int p = joints[k].parent;
    if (k == 0 && p != -1) throw InputError("template: joints[0] must be the root (parent -1)");
    if (k > 0 && (p < 0 || p >= k))
      throw InputError("template: joints[" + std::to_string(k) + "].parent must be in [0, " +
                       std::to_string(k) + ")");
    if (joints[k].limb >= num_limbs)
      throw InputError("template: joints[" + std::to_string(k) + "].limb exceeds num_limbs");
  }
  for (int f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c)
      if (faces(f, c) < 0 || faces(f, c) >= n)
        throw InputError("template: faces[" + std::to_string(f) + "] references vertex " +
                         std::to_string(faces(f, c)) + " outside [0, " + std::to_string(n) + ")");
  if (skin_weights.rows() != n || skin_weights.cols() != j)
    throw InputError("template: skin_weights must be N x J");
  for (int v = 0; v < n; ++v) {
    if ((skin_weights.row(v).array() < 0.0).any())
      throw InputError("template: skin_weights row " + std::to_string(v) + " has a negative entry");
    if (std::abs(skin_weights.row(v).sum() - 1.0) > 1e-9)
      throw InputError("template: skin_weights row " + std::to_string(v) + " does not sum to 1");
  }
  for (std::size_t b = 0; b < shape_basis.size(); ++b)
    if (shape_basis[b].rows() != n)
      throw InputError("template: shape_basis[" + std::to_string(b) + "] must be N x 3");
  if (static_cast<int>(part_labels.size()) != n)
    throw InputError("template: part_labels must have one label per vertex");
  if (static_cast<int>(pose_limits.size()) != j)
    throw InputError("template: pose_limits must have one entry per joint");
  for (int k = 0; k < j; ++k)
    for (int a = 0; a < 3; ++a)
      if (pose_limits[k][a].min > pose_limits[k][a].max)
        throw InputError("template: pose_limits[" + std::to_string(k) + "] has min > max");
  for (int l : landmarks)
    if (l < 0 || l >= n) throw InputError("template: landmark id out of range");
}

namespace {

Points3 points_from_json(const json& a, const char* field) {
  if (!a.is_array()) throw InputError(std::string("template: ") + field + " must be an array");
  Points3 p(a.size(), 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != 3) throw InputError(std::string("template: ") + field + " rows must have 3 entries");
    for (int c = 0; c < 3; ++c) p(i, c) = a[i][c].get<double>();
  }
  return p;
}

json points_to_json(const Points3& p) {
  json a = json::array();
  for (int i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

}  // namespace

QuadTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open template file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("template " + path.string() + ": " + e.what());
  }
  QuadTemplate t;
  try {
    t.rest_vertices = points_from_json(doc.at("rest_vertices"), "rest_vertices");
    const json& faces = doc.at("faces");
    t.faces.resize(faces.size(), 3);
    for (std::size_t f = 0; f < faces.size(); ++f)
      for (int c = 0; c < 3; ++c) t.faces(f, c) = faces[f].at(c).get<int>();
    for (const json& jj : doc.at("joints")) {
      Joint joint;
      joint.name = jj.value("name", std::string());
      joint.parent = jj.at("parent").get<int>();
      const json& o = jj.at("offset");
      joint.offset = Eigen::Vector3d(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
      joint.limb = jj.value("limb", -1);
      t.joints.push_back(joint);
    }
    const json& sw = doc.at("skin_weights");
    t.skin_weights.resize(sw.size(), t.joints.size());
    for (std::size_t v = 0; v < sw.size(); ++v) {
      if (sw[v].size() != t.joints.size()) throw InputError("template: skin_weights rows must have J entries");
      for (std::size_t k = 0; k < t.joints.size(); ++k) t.skin_weights(v, k) = sw[v][k].get<double>();
    }
    for (const json& b : doc.at("shape_basis")) t.shape_basis.push_back(points_from_json(b, "shape_basis"));
    for (const json& l : doc.at("part_labels")) t.part_labels.push_back(parse_part(l.get<std::string>()));
    for (const json& lim : doc.at("pose_limits")) {
      std::array<PoseLimit, 3> row;
      for (int a = 0; a < 3; ++a) row[a] = {lim.at(a).at(0).get<double>(), lim.at(a).at(1).get<double>()};
      t.pose_limits.push_back(row);
    }
    t.num_limbs = doc.value("num_limbs", 0);
    if (doc.contains("landmarks")) t.landmarks = doc.at("landmarks").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InputError("template " + path.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

void save_template(const QuadTemplate& t, const std::filesystem::path& path) {
  json doc;
  doc["rest_vertices"] = points_to_json(t.rest_vertices);
  json faces = json::array();
  for (int f = 0; f < t.faces.rows(); ++f) faces.push_back({t.faces(f, 0), t.faces(f, 1), t.faces(f, 2)});
  doc["faces"] = faces;
  json joints = json::array();
  for (const Joint& j : t.joints)
    joints.push_back({{"name", j.name},
                      {"parent", j.parent},
                      {"offset", {j.offset.x(), j.offset.y(), j.offset.z()}},
                      {"limb", j.limb}});
  doc["joints"] = joints;
  json sw = json::array();
  for (int v = 0; v < t.skin_weights.rows(); ++v) {
    json row = json::array();
    for (int k = 0; k < t.skin_weights.cols(); ++k) row.push_back(t.skin_weights(v, k));
    sw.push_back(row);
  }
  doc["skin_weights"] = sw;
  json basis = json::array();
  for (const Points3& b : t.shape_basis) basis.push_back(points_to_json(b));
  doc["shape_basis"] = basis;
  json labels = json::array();
  for (Part p : t.part_labels) labels.push_back(std::string(part_name(p)));
  doc["part_labels"] = labels;
  json limits = json::array();
  for (const auto& row : t.pose_limits)
    limits.push_back({{row[0].min, row[0].max}, {row[1].min, row[1].max}, {row[2].min, row[2].max}});
  doc["pose_limits"] = limits;
  doc["num_limbs"] = t.num_limbs;
  doc["landmarks"] = t.landmarks;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write template file " + path.string());
  out << doc.dump() << '\n';
}

FrameParams FrameParams::rest(const QuadTemplate& tpl) {
  FrameParams p;
  p.beta = Eigen::VectorXd::Zero(tpl.num_betas());
  p.theta = Eigen::VectorXd::Zero(3 * tpl.num_joints());
  p.limb_scales = Eigen::VectorXd::Ones(tpl.num_limbs);
  p.translation.setZero();
  p.vertex_offsets = Points3::Zero(tpl.num_vertices(), 3);
  return p;
}

FrameParams FrameParams::zeros_like() const {
  FrameParams z;
  z.beta = Eigen::VectorXd::Zero(beta.size());
  z.theta = Eigen::VectorXd::Zero(theta.size());
  z.limb_scales = Eigen::VectorXd::Zero(limb_scales.size());
  z.translation.setZero();
  z.vertex_offsets = Points3::Zero(vertex_offsets.rows(), 3);
  return z;
}

FrameParams& FrameParams::operator+=(const FrameParams& o) {
  beta += o.beta;
  theta += o.theta;
  limb_scales += o.limb_scales;
  translation += o.translation;
  vertex_offsets += o.vertex_offsets;
  return *this;
}

FrameParams& FrameParams::operator*=(double s) {
  beta *= s;
  theta *= s;
  limb_scales *= s;
  translation *= s;
  vertex_offsets *= s;
  return *this;
}

namespace {

template <class T>
struct Affine {
  Mat3T<T> R;
  Vec3T<T> t;
};

/// Skinning transforms G_j = A_j * [I | -rest_j]. The root rotates about the
/// model origin, so a global rotation of theta_root is a rigid rotation of
/// the whole output.
template <class T>
std::vector<Affine<T>> skinning(const std::vector<Joint>& joints, const std::vector<Eigen::Vector3d>& rest,
                                const T* theta, const T* scales, bool apply_limb_scales) {
  const std::size_t nj = joints.size();
  std::vector<Affine<T>> world(nj);
  std::vector<Affine<T>> out(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    const Mat3T<T> local = axis_angle_to_matrix(theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]);
    if (joints[j].parent < 0) {
      world[j].R = local;
      const std::array<double, 3> r0{rest[j].x(), rest[j].y(), rest[j].z()};
      world[j].t = matvec(local, r0);
    } else {
      const Affine<T>& P = world[joints[j].parent];
      Vec3T<T> off{T(joints[j].offset.x()), T(joints[j].offset.y()), T(joints[j].offset.z())};
      if (apply_limb_scales && joints[j].limb >= 0) {
        const T& s = scales[joints[j].limb];
        off = {off[0] * s, off[1] * s, off[2] * s};
      }
      world[j].R = matmul(P.R, local);
      const Vec3T<T> ro = matvec(P.R, off);
      world[j].t = {ro[0] + P.t[0], ro[1] + P.t[1], ro[2] + P.t[2]};
    }
    const std::array<double, 3> rj{rest[j].x(), rest[j].y(), rest[j].z()};
    const Vec3T<T> rr = matvec(world[j].R, rj);
    out[j].R = world[j].R;
    out[j].t = {world[j].t[0] - rr[0], world[j].t[1] - rr[1], world[j].t[2] - rr[2]};
  }
  return out;
}

}  // namespace

QuadModel::QuadModel(QuadTemplate tpl) : tpl_(std::move(tpl)) {
  tpl_.validate();
  const int n = tpl_.num_vertices();
  const int nj = tpl_.num_joints();
  joint_rest_.resize(nj);
  for (int j = 0; j < nj; ++j) {
    const Joint& jt = tpl_.joints[j];
    joint_rest_[j] = jt.parent < 0 ? jt.offset : Eigen::Vector3d(joint_rest_[jt.parent] + jt.offset);
  }
  skin_.resize(n);
  for (int v = 0; v < n; ++v)
    for (int j = 0; j < nj; ++j)
      if (tpl_.skin_weights(v, j) != 0.0) skin_[v].push_back({j, tpl_.skin_weights(v, j)});
  for (int v = 0; v < n; ++v) part_vertices_[part_index(tpl_.part_labels[v])].push_back(v);

  std::vector<std::set<int>> nb(n);
  for (int f = 0; f < tpl_.faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = tpl_.faces(f, c), b = tpl_.faces(f, (c + 1) % 3);
      nb[a].insert(b);
      nb[b].insert(a);
    }
  neighbors_.resize(n);
  for (int v = 0; v < n; ++v) neighbors_[v].assign(nb[v].begin(), nb[v].end());

  basis_matrix_.resize(3 * n, tpl_.num_betas());
  for (int b = 0; b < tpl_.num_betas(); ++b)
    basis_matrix_.col(b) = Eigen::Map<const Eigen::VectorXd>(tpl_.shape_basis[b].data(), 3 * n);
}

void QuadModel::check_dims(const FrameParams& p) const {
  auto fail = [](const std::string& field, long got, long want) {
    throw InputError("FrameParams." + field + " has size " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  };
  if (p.beta.size() != tpl_.num_betas()) fail("beta", p.beta.size(), tpl_.num_betas());
  if (p.theta.size() != 3 * tpl_.num_joints()) fail("theta", p.theta.size(), 3 * tpl_.num_joints());
  if (p.limb_scales.size() != tpl_.num_limbs) fail("limb_scales", p.limb_scales.size(), tpl_.num_limbs);
  if (p.vertex_offsets.rows() != tpl_.num_vertices())
    fail("vertex_offsets", p.vertex_offsets.rows(), tpl_.num_vertices());
  if ((p.limb_scales.array() <= 0.0).any()) throw InputError("FrameParams.limb_scales must be positive");
}

Points3 QuadModel::shaped_vertices(const FrameParams& p) const {
  check_dims(p);
  Points3 u = tpl_.rest_vertices + p.vertex_offsets;
  if (p.beta.size() > 0) {
    Eigen::Map<Eigen::VectorXd>(u.data(), u.size()) += basis_matrix_ * p.beta;
  }
  return u;
}

std::vector<SkinTransform> QuadModel::skin_transforms(const FrameParams& p, bool apply_limb_scales) const {
  check_dims(p);
  const auto g = skinning<double>(tpl_.joints, joint_rest_, p.theta.data(), p.limb_scales.data(),
                                  apply_limb_scales);
  std::vector<SkinTransform> out(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    out[j].R = to_eigen(g[j].R);
    out[j].t = Eigen::Vector3d(g[j].t[0], g[j].t[1], g[j].t[2]);
  }
  return out;
}

Points3 QuadModel::pose(const FrameParams& p, bool apply_limb_scales) const {
  const Points3 u = shaped_vertices(p);
  const auto G = skin_transforms(p, apply_limb_scales);
  const int n = num_vertices();
  Points3 v(n, 3);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d ui = u.row(i).transpose();
    // Displacement form, so identity transforms return the input exactly.
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const SkinEntry& e : skin_[i])
      acc += e.weight * ((G[e.joint].R - Eigen::Matrix3d::Identity()) * ui + G[e.joint].t);
    v.row(i) = (ui + acc + p.translation).transpose();
  }
  return v;
}

FrameParams QuadModel::pose_vjp(const FrameParams& p, const Points3& gv) const {
  const Points3 u = shaped_vertices(p);
  const auto G = skin_transforms(p);
  const int n = num_vertices();
  const int nj = num_joints();
  FrameParams g = p.zeros_like();

  std::vector<Eigen::Matrix3d> dR(nj, Eigen::Matrix3d::Zero());
  std::vector<Eigen::Vector3d> dt(nj, Eigen::Vector3d::Zero());
  Points3 du(n, 3);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d gi = gv.row(i).transpose();
    const Eigen::Vector3d ui = u.row(i).transpose();
    g.translation += gi;
    Eigen::Vector3d dui = gi;
    for (const SkinEntry& e : skin_[i]) {
      const Eigen::Vector3d wg = e.weight * gi;
      dR[e.joint].noalias() += wg * ui.transpose();
      dt[e.joint] += wg;
      dui.noalias() += (G[e.joint].R - Eigen::Matrix3d::Identity()).transpose() * wg;
    }
    du.row(i) = dui.transpose();
  }
  g.vertex_offsets = du;
  if (p.beta.size() > 0)
    g.beta = basis_matrix_.transpose() * Eigen::Map<const Eigen::VectorXd>(du.data(), du.size());

  // Chain dL/dG through forward kinematics on the tape.
  diff::GradTape gt;
  auto theta = gt.register_slot("theta", std::span<const double>(p.theta.data(), p.theta.size()));
  auto scales = gt.register_slot("limb_scales", std::span<const double>(p.limb_scales.data(), p.limb_scales.size()));
  gt.tape().set_term("forward kinematics");
  const auto Gv = skinning<diff::Var>(tpl_.joints, joint_rest_, theta.data(), scales.data(), true);
  std::vector<diff::Var> outs;
  std::vector<double> seeds;
  outs.reserve(12 * nj);
  seeds.reserve(12 * nj);
  for (int j = 0; j < nj; ++j) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        outs.push_back(Gv[j].R[3 * r + c]);
        seeds.push_back(dR[j](r, c));
      }
    for (int r = 0; r < 3; ++r) {
      outs.push_back(Gv[j].t[r]);
      seeds.push_back(dt[j](r));
    }
  }
  const diff::Gradients fk = gt.backward(outs, seeds);
  g.theta = Eigen::Map<const Eigen::VectorXd>(fk.at("theta").data(), p.theta.size());
  g.limb_scales = Eigen::Map<const Eigen::VectorXd>(fk.at("limb_scales").data(), p.limb_scales.size());
  return g;
}

Points3 pose_mesh(const QuadModel& model, const FrameParams& params) { return model.pose(params); }

std::vector<int> part_vertex_ids(const QuadTemplate& tpl, std::string_view part) {
  const Part p = parse_part(part);
  std::vector<int> ids;
  for (int v = 0; v < tpl.num_vertices(); ++v)
    if (tpl.part_labels[v] == p) ids.push_back(v);
  return ids;
}

void write_obj(const std::filesystem::path& path, const Points3& vertices,
               const Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>& faces) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(9);
  for (int i = 0; i < vertices.rows(); ++i)
    out << "v " << vertices(i, 0) << ' ' << vertices(i, 1) << ' ' << vertices(i, 2) << '\n';
  for (int f = 0; f < faces.rows(); ++f)
    out << "f " << faces(f, 0) + 1 << ' ' << faces(f, 1) + 1 << ' ' << faces(f, 2) + 1 << '\n';
}

}  // namespace quadfit::model

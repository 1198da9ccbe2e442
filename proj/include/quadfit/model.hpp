#pragma once

// Articulated quadruped: blendshapes, per-bone limb scaling and linear blend
// skinning, plus the template file format.

#include "quadfit/common.hpp"
#include "quadfit/rotation.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace quadfit::model {

struct Joint {
  std::string name;
  int parent = -1;          // -1 for the root; otherwise < own index
  Eigen::Vector3d offset;   // rest offset from the parent (root: absolute position)
  int limb = -1;            // index into FrameParams::limb_scales, or -1
};

struct PoseLimit {
  double min = -M_PI;
  double max = M_PI;
};

struct QuadTemplate {
  Points3 rest_vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> faces;
  std::vector<Joint> joints;
  Eigen::MatrixXd skin_weights;       // N x J, rows sum to one
  std::vector<Points3> shape_basis;   // |beta| fields of N x 3
  std::vector<Part> part_labels;      // one per vertex
  std::vector<std::array<PoseLimit, 3>> pose_limits;  // J x 3
  int num_limbs = 0;
  std::vector<int> landmarks;         // vertex ids used to seed shape correspondence

  int num_vertices() const { return static_cast<int>(rest_vertices.rows()); }
  int num_joints() const { return static_cast<int>(joints.size()); }
  int num_betas() const { return static_cast<int>(shape_basis.size()); }

  /// Throws InputError naming the first violated invariant.
  void validate() const;
};

QuadTemplate load_template(const std::filesystem::path& path);
void save_template(const QuadTemplate& tpl, const std::filesystem::path& path);

struct FrameParams {
  Eigen::VectorXd beta;          // |beta|
  Eigen::VectorXd theta;         // 3J axis-angle, joint-major
  Eigen::VectorXd limb_scales;   // L, positive
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Points3 vertex_offsets;        // N x 3

  /// Rest pose for the given template: zero shape/pose/offsets, unit scales.
  static FrameParams rest(const QuadTemplate& tpl);

  /// Same-shaped container filled with zeros (used for gradients).
  FrameParams zeros_like() const;

  FrameParams& operator+=(const FrameParams& o);
  FrameParams& operator*=(double s);
};

/// Rigid transform applied to rest-space points: x -> R x + t.
struct SkinTransform {
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
};

/// Validated template with precomputed skinning structure.
class QuadModel {
 public:
  explicit QuadModel(QuadTemplate tpl);

  const QuadTemplate& tpl() const { return tpl_; }
  int num_vertices() const { return tpl_.num_vertices(); }
  int num_joints() const { return tpl_.num_joints(); }

  /// Rest joint positions (absolute).
  const std::vector<Eigen::Vector3d>& joint_rest_positions() const { return joint_rest_; }

  /// Throws InputError naming the mismatching field.
  void check_dims(const FrameParams& p) const;

  /// Rest vertices + shape blend + offsets.
  Points3 shaped_vertices(const FrameParams& p) const;

  /// Per-joint skinning transforms. `apply_limb_scales=false` skips the scaling
  /// code path entirely.
  std::vector<SkinTransform> skin_transforms(const FrameParams& p, bool apply_limb_scales = true) const;

  /// Posed vertices (N x 3).
  Points3 pose(const FrameParams& p, bool apply_limb_scales = true) const;

  /// Vector-Jacobian product of `pose`: given dL/dvertices returns dL/dparams.
  FrameParams pose_vjp(const FrameParams& p, const Points3& grad_vertices) const;

  /// Vertex indices carrying the given part label.
  const std::vector<int>& part_vertices(Part part) const { return part_vertices_[part_index(part)]; }

  /// Undirected 1-ring adjacency from the faces.
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }

 private:
  struct SkinEntry {
    int joint;
    double weight;
  };

  QuadTemplate tpl_;
  std::vector<Eigen::Vector3d> joint_rest_;
  std::vector<std::vector<SkinEntry>> skin_;  // sparse rows of skin_weights
  std::array<std::vector<int>, 4> part_vertices_;
  std::vector<std::vector<int>> neighbors_;
  Eigen::MatrixXd basis_matrix_;              // 3N x |beta|
};

/// Free-function form of QuadModel::pose.
Points3 pose_mesh(const QuadModel& model, const FrameParams& params);

/// Vertex ids carrying `part`; `part` given as a label string.
std::vector<int> part_vertex_ids(const QuadTemplate& tpl, std::string_view part);

/// Writes a posed mesh as Wavefront OBJ (1-based face indices).
void write_obj(const std::filesystem::path& path, const Points3& vertices,
               const Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>& faces);

}  // namespace quadfit::model

#pragma once

// Spectral shape correspondence: cotangent Laplacian, smallest generalized
// eigenpairs, and ZoomOut refinement of a functional map into a vertex map.

#include "quadfit/common.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace quadfit::fmap {

using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Laplacian {
  Eigen::SparseMatrix<double> stiffness;   // symmetric PSD, rows sum to zero
  Eigen::VectorXd mass;                    // lumped (barycentric) vertex areas
};

/// Throws DegenerateError listing zero-area faces.
Laplacian cotan_laplacian(const Points3& vertices, const Faces& faces);

struct SpectralBasis {
  Eigen::VectorXd eigenvalues;      // ascending
  Eigen::MatrixXd eigenfunctions;   // N x k, mass-orthonormal
  Eigen::VectorXd mass;

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

struct EigenOptions {
  double tolerance = 1e-8;
  std::uint64_t seed = 1;
};

/// Smallest `k` eigenpairs of stiffness * phi = lambda * mass * phi by
/// shift-invert Lanczos with full reorthogonalization.
SpectralBasis smallest_eigenpairs(const Laplacian& lap, int k, const EigenOptions& options = {});

SpectralBasis spectral_basis(const Points3& vertices, const Faces& faces, int k, const EigenOptions& options = {});

/// Source vertex -> target vertex.
struct VertexMap {
  std::vector<int> source_to_target;
};

/// Nearest-neighbour point map implied by a k x k functional map C that takes
/// target spectral coefficients to source coefficients.
VertexMap pointmap_from_fmap(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C);

/// Functional map of size k x k induced by a point map.
Eigen::MatrixXd fmap_from_pointmap(const SpectralBasis& source, const SpectralBasis& target, const VertexMap& map,
                                   int k);

/// Initial k0 x k0 map from corresponding landmark vertices using heat-kernel
/// descriptors and a Laplacian-commutativity penalty.
Eigen::MatrixXd landmark_init(const SpectralBasis& source, const SpectralBasis& target,
                              std::span<const int> source_landmarks, std::span<const int> target_landmarks, int k0);

/// || C diag(lambda_target) - diag(lambda_source) C ||_F over the leading block.
double commutativity_energy(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C);

struct ZoomOutResult {
  Eigen::MatrixXd C;                 // k_final x k_final
  VertexMap map;
  std::vector<double> energies;      // commutativity energy after each size
};

ZoomOutResult zoomout(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C0, int k_final,
                      int step = 1);

void write_vertex_map(const VertexMap& map, const std::filesystem::path& path);
VertexMap read_vertex_map(const std::filesystem::path& path);

}  // namespace quadfit::fmap

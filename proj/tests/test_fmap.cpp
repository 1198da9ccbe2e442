#include "support.hpp"

#include "quadfit/fmap.hpp"
#include "quadfit/model.hpp"
#include "quadfit/synth.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

using namespace quadfit;
using namespace quadfit::fmap;

namespace {

void icosahedron(Points3& V, Faces& F) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  V.resize(12, 3);
  V << -1, p, 0, 1, p, 0, -1, -p, 0, 1, -p, 0, 0, -1, p, 0, 1, p, 0, -1, -p, 0, 1, -p, p, 0, -1, p, 0, 1, -p, 0,
      -1, -p, 0, 1;
  V.rowwise().normalize();
  F.resize(20, 3);
  F << 0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, 1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7, 6, 7, 1, 8, 3, 9, 4, 3,
      4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, 4, 9, 5, 2, 4, 11, 6, 2, 10, 8, 6, 7, 9, 8, 1;
}

// n x n vertex grid with unit spacing, every quad split along the same diagonal.
void grid(int n, Points3& V, Faces& F) {
  V.resize(n * n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) V.row(y * n + x) << x, y, 0;
  F.resize(2 * (n - 1) * (n - 1), 3);
  int f = 0;
  for (int y = 0; y + 1 < n; ++y)
    for (int x = 0; x + 1 < n; ++x) {
      const int a = y * n + x, b = a + 1, c = a + n, d = c + 1;
      F.row(f++) << a, b, d;
      F.row(f++) << a, d, c;
    }
}

const model::QuadTemplate& quad() {
  static const model::QuadTemplate t = synth::quadruped_template();
  return t;
}

}  // namespace

TEST_CASE("icosahedron Laplacian: zero row sums and mass equal to area") {
  Points3 V;
  Faces F;
  icosahedron(V, F);
  const Laplacian L = cotan_laplacian(V, F);
  const Eigen::MatrixXd S(L.stiffness);
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(S.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
  const double edge = 4.0 / std::sqrt(10.0 + 2.0 * std::sqrt(5.0));
  const double area = 5.0 * std::sqrt(3.0) * edge * edge;
  CHECK(L.mass.sum() == doctest::Approx(area).epsilon(1e-6));
  CHECK((L.mass.array() > 0.0).all());
}

TEST_CASE("flat grid interior vertex has unit axis weights and zero diagonal weights") {
  Points3 V;
  Faces F;
  grid(5, V, F);
  const Laplacian L = cotan_laplacian(V, F);
  const Eigen::MatrixXd S(L.stiffness);
  const int c = 2 * 5 + 2;
  CHECK(S(c, c) == doctest::Approx(4.0));
  for (int nb : {c - 1, c + 1, c - 5, c + 5}) CHECK(S(c, nb) == doctest::Approx(-1.0));
  for (int nb : {c - 6, c + 6}) CHECK(std::abs(S(c, nb)) < 1e-12);
  CHECK(L.mass(c) == doctest::Approx(1.0));
}

TEST_CASE("zero-area face is reported") {
  Points3 V;
  Faces F;
  grid(3, V, F);
  V.row(4) = 0.5 * (V.row(3) + V.row(5));  // still non-degenerate
  Faces bad(F.rows() + 1, 3);
  bad << F, 0, 1, 2;  // collinear bottom row
  try {
    cotan_laplacian(V, bad);
    FAIL("expected DegenerateError");
  } catch (const DegenerateError& e) {
    CHECK(std::string(e.what()).find(std::to_string(F.rows())) != std::string::npos);
  }
}

TEST_CASE("smallest eigenpairs match a dense generalized solver") {
  Points3 V;
  Faces F;
  grid(8, V, F);
  const Laplacian L = cotan_laplacian(V, F);
  const SpectralBasis B = smallest_eigenpairs(L, 10);
  const Eigen::MatrixXd M = L.mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> dense(Eigen::MatrixXd(L.stiffness), M);
  for (int i = 0; i < 10; ++i) CHECK(B.eigenvalues(i) == doctest::Approx(dense.eigenvalues()(i)).epsilon(1e-6).scale(1));
  const Eigen::MatrixXd G = B.eigenfunctions.transpose() * M * B.eigenfunctions;
  CHECK((G - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(B.eigenvalues(0)) < 1e-8);
  const Eigen::VectorXd phi0 = B.eigenfunctions.col(0);
  CHECK(phi0.maxCoeff() - phi0.minCoeff() < 1e-6);
}

TEST_CASE("quadruped basis is mass-orthonormal with ascending eigenvalues") {
  const SpectralBasis B = spectral_basis(quad().rest_vertices, quad().faces, 30);
  const Eigen::MatrixXd G = B.eigenfunctions.transpose() * B.mass.asDiagonal() * B.eigenfunctions;
  CHECK((G - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff() < 1e-6);
  for (int i = 1; i < 30; ++i) CHECK(B.eigenvalues(i) >= B.eigenvalues(i - 1) - 1e-10);
  CHECK(B.eigenvalues(0) > -1e-8);
}

TEST_CASE("self-map ZoomOut recovers the identity") {
  const SpectralBasis B = spectral_basis(quad().rest_vertices, quad().faces, 40);
  const ZoomOutResult r = zoomout(B, B, Eigen::MatrixXd::Identity(10, 10), 40);
  const int n = quad().num_vertices();
  int exact = 0;
  for (int v = 0; v < n; ++v) exact += r.map.source_to_target[v] == v;
  CHECK(exact >= 0.99 * n);
  for (std::size_t i = 1; i < r.energies.size(); ++i) CHECK(r.energies[i] <= r.energies[i - 1] + 1e-9);
  // Composing the map with itself keeps identity entries fixed.
  for (int v = 0; v < n; ++v)
    if (r.map.source_to_target[v] == v) CHECK(r.map.source_to_target[r.map.source_to_target[v]] == v);
}

TEST_CASE("k_final equal to k0 returns the point map of C0") {
  const SpectralBasis B = spectral_basis(quad().rest_vertices, quad().faces, 20);
  Eigen::MatrixXd C0 = Eigen::MatrixXd::Identity(12, 12);
  C0(3, 3) = -1.0;
  const ZoomOutResult r = zoomout(B, B, C0, 12);
  CHECK(r.map.source_to_target == pointmap_from_fmap(B, B, C0).source_to_target);
  CHECK(r.C == C0);
}

TEST_CASE("ZoomOut preconditions") {
  const SpectralBasis B = spectral_basis(quad().rest_vertices, quad().faces, 20);
  CHECK_THROWS_AS(zoomout(B, B, Eigen::MatrixXd::Identity(10, 10), 30), InputError);
  CHECK_THROWS_AS(zoomout(B, B, Eigen::MatrixXd::Identity(3, 3), 10), InputError);
  CHECK_THROWS_AS(zoomout(B, B, Eigen::MatrixXd::Identity(10, 10), 20, 0), InputError);
}

TEST_CASE("point map to functional map and back is consistent on the self-map") {
  const SpectralBasis B = spectral_basis(quad().rest_vertices, quad().faces, 20);
  VertexMap id;
  for (int v = 0; v < quad().num_vertices(); ++v) id.source_to_target.push_back(v);
  const Eigen::MatrixXd C = fmap_from_pointmap(B, B, id, 20);
  CHECK((C - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(commutativity_energy(B, B, C) < 1e-6);
}

TEST_CASE("vertex map file round trip") {
  const auto dir = qtest::scratch_dir("vmap");
  VertexMap m{{3, 1, 4, 1, 5}};
  write_vertex_map(m, dir / "m.csv");
  CHECK(read_vertex_map(dir / "m.csv").source_to_target == m.source_to_target);
}

TEST_CASE("bent copy of the quadruped maps within one ring") {
  const model::QuadModel m(quad());
  model::FrameParams p = model::FrameParams::rest(quad());
  // Neck, tail and one leg bent; LBS is close to isometric away from joints.
  for (std::size_t j = 0; j < quad().joints.size(); ++j) {
    const std::string& name = quad().joints[j].name;
    if (name == "neck") p.theta.segment<3>(3 * j) = Eigen::Vector3d(0, 0, 0.5);
    if (name == "tail_base") p.theta.segment<3>(3 * j) = Eigen::Vector3d(0, 0.6, 0);
    if (name == "hip_fl") p.theta.segment<3>(3 * j) = Eigen::Vector3d(0, 0, 0.4);
  }
  const Points3 bent = m.pose(p);
  const SpectralBasis src = spectral_basis(quad().rest_vertices, quad().faces, 100);
  const SpectralBasis tgt = spectral_basis(bent, quad().faces, 100);
  const Eigen::MatrixXd C0 = landmark_init(src, tgt, quad().landmarks, quad().landmarks, 20);
  const ZoomOutResult r = zoomout(src, tgt, C0, 100);
  int good = 0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    const int t = r.map.source_to_target[v];
    const auto& nb = m.neighbors()[v];
    good += t == v || std::find(nb.begin(), nb.end(), t) != nb.end();
  }
  MESSAGE("within one ring: " << good << " / " << m.num_vertices());
  CHECK(good >= 0.95 * m.num_vertices());
}

#include "quadfit/fmap.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace quadfit::fmap {

Laplacian cotan_laplacian(const Points3& V, const Faces& F) {
  const int n = static_cast<int>(V.rows());
  const double diag = (V.colwise().maxCoeff() - V.colwise().minCoeff()).norm();
  const double min_area = 1e-12 * diag * diag;

  std::vector<int> degenerate;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(F.rows() * 12);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  for (int f = 0; f < F.rows(); ++f) {
    const int idx[3] = {F(f, 0), F(f, 1), F(f, 2)};
    const Eigen::Vector3d p[3] = {V.row(idx[0]).transpose(), V.row(idx[1]).transpose(), V.row(idx[2]).transpose()};
    const double area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
    if (!(area > min_area)) {
      degenerate.push_back(f);
      continue;
    }
    for (int c = 0; c < 3; ++c) {
      mass(idx[c]) += area / 3.0;
      // angle at corner c is opposite edge (c+1, c+2)
      const int i = idx[(c + 1) % 3], j = idx[(c + 2) % 3];
      const Eigen::Vector3d a = p[(c + 1) % 3] - p[c];
      const Eigen::Vector3d b = p[(c + 2) % 3] - p[c];
      const double w = 0.5 * a.dot(b) / a.cross(b).norm();
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
    }
  }
  if (!degenerate.empty()) {
    std::ostringstream os;
    os << degenerate.size() << " zero-area face(s):";
    for (std::size_t k = 0; k < std::min<std::size_t>(degenerate.size(), 20); ++k) os << ' ' << degenerate[k];
    if (degenerate.size() > 20) os << " ...";
    throw DegenerateError(os.str());
  }
  Laplacian lap;
  lap.stiffness.resize(n, n);
  lap.stiffness.setFromTriplets(trip.begin(), trip.end());
  lap.mass = mass;
  return lap;
}

SpectralBasis smallest_eigenpairs(const Laplacian& lap, int k, const EigenOptions& options) {
  const int n = static_cast<int>(lap.mass.size());
  if (k < 1 || k > n) throw InputError("requested " + std::to_string(k) + " eigenpairs of a " + std::to_string(n) + "-vertex mesh");
  if ((lap.mass.array() <= 0.0).any()) throw DegenerateError("mesh has a vertex with zero lumped area");
  const Eigen::SparseMatrix<double>& K = lap.stiffness;
  const Eigen::VectorXd& M = lap.mass;

  double knorm = 0.0;
  for (int c = 0; c < K.outerSize(); ++c) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, c); it; ++it) s += std::abs(it.value());
    knorm = std::max(knorm, s);
  }
  const double sigma = -1e-6 * knorm / M.maxCoeff();
  Eigen::SparseMatrix<double> S = K;
  for (int i = 0; i < n; ++i) S.coeffRef(i, i) -= sigma * M(i);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(S);
  if (solver.info() != Eigen::Success) throw NumericalError("shift-invert factorization failed");

  auto mdot = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(M.cwiseProduct(b)); };
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;
  auto random_vec = [&] {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    return v;
  };

  int m = std::min(n, std::max(2 * k + 10, k + 20));
  while (true) {
    Eigen::MatrixXd Q(n, m);
    Eigen::VectorXd alpha(m), beta = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd q = random_vec();
    q /= std::sqrt(mdot(q, q));
    Q.col(0) = q;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd w = solver.solve(M.cwiseProduct(Q.col(j)));
      alpha(j) = mdot(Q.col(j), w);
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd proj = Q.leftCols(j + 1).transpose() * M.cwiseProduct(w);
        w -= Q.leftCols(j + 1) * proj;
      }
      if (j + 1 == m) break;
      double b = std::sqrt(std::max(mdot(w, w), 0.0));
      if (b < 1e-12 * std::max(1.0, std::abs(alpha(j)))) {
        // Invariant subspace found; continue from a fresh orthogonal direction.
        w = random_vec();
        for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * M.cwiseProduct(w));
        Q.col(j + 1) = w / std::sqrt(mdot(w, w));
        beta(j) = 0.0;
      } else {
        Q.col(j + 1) = w / b;
        beta(j) = b;
      }
    }
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      T(j, j) = alpha(j);
      if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    SpectralBasis basis;
    basis.mass = M;
    basis.eigenvalues.resize(k);
    basis.eigenfunctions.resize(n, k);
    bool converged = true;
    for (int i = 0; i < k; ++i) {
      const int col = m - 1 - i;   // largest Ritz values of the inverted operator first
      const double nu = es.eigenvalues()(col);
      const double lambda = sigma + 1.0 / nu;
      Eigen::VectorXd phi = Q * es.eigenvectors().col(col);
      phi /= std::sqrt(mdot(phi, phi));
      Eigen::Index arg;
      phi.cwiseAbs().maxCoeff(&arg);
      if (phi(arg) < 0.0) phi = -phi;
      const double res = (K * phi - lambda * M.cwiseProduct(phi)).norm() / (knorm * phi.norm());
      if (!(res < options.tolerance)) converged = false;
      basis.eigenvalues(i) = std::max(lambda, 0.0);
      basis.eigenfunctions.col(i) = phi;
    }
    if (converged || m == n) return basis;
    m = std::min(n, 2 * m);
  }
}

SpectralBasis spectral_basis(const Points3& vertices, const Faces& faces, int k, const EigenOptions& options) {
  return smallest_eigenpairs(cotan_laplacian(vertices, faces), k, options);
}

VertexMap pointmap_from_fmap(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C) {
  const int k = static_cast<int>(C.rows());
  if (C.cols() != k || k > source.size() || k > target.size())
    throw InputError("functional map size exceeds the available eigenpairs");
  const Eigen::MatrixXd src = source.eigenfunctions.leftCols(k);
  const Eigen::MatrixXd tgt = target.eigenfunctions.leftCols(k) * C.transpose();
  const Eigen::VectorXd tgt_norm = tgt.rowwise().squaredNorm();
  VertexMap map;
  map.source_to_target.resize(src.rows());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < src.rows(); start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, src.rows() - start);
    // |a - b|^2 - |a|^2 = |b|^2 - 2 a.b
    Eigen::MatrixXd d = -2.0 * src.middleRows(start, rows) * tgt.transpose();
    d.rowwise() += tgt_norm.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index arg;
      d.row(r).minCoeff(&arg);
      map.source_to_target[start + r] = static_cast<int>(arg);
    }
  }
  return map;
}

Eigen::MatrixXd fmap_from_pointmap(const SpectralBasis& source, const SpectralBasis& target, const VertexMap& map,
                                   int k) {
  if (k > source.size() || k > target.size())
    throw InputError("k = " + std::to_string(k) + " exceeds the available eigenpairs");
  const Eigen::Index n = source.eigenfunctions.rows();
  Eigen::MatrixXd pulled(n, k);
  for (Eigen::Index i = 0; i < n; ++i) pulled.row(i) = target.eigenfunctions.row(map.source_to_target[i]).head(k);
  return source.eigenfunctions.leftCols(k).transpose() * source.mass.asDiagonal() * pulled;
}

Eigen::MatrixXd landmark_init(const SpectralBasis& source, const SpectralBasis& target,
                              std::span<const int> src_lm, std::span<const int> tgt_lm, int k0) {
  if (src_lm.size() != tgt_lm.size() || src_lm.empty()) throw InputError("landmark lists must be non-empty and paired");
  if (k0 > source.size() || k0 > target.size()) throw InputError("k0 exceeds the available eigenpairs");
  const double lam_max = std::max(source.eigenvalues(k0 - 1), target.eigenvalues(k0 - 1));
  double lam_min = lam_max;
  for (int i = 0; i < k0; ++i)
    if (source.eigenvalues(i) > 1e-9 * lam_max) {
      lam_min = source.eigenvalues(i);
      break;
    }
  constexpr int kTimes = 8;
  const double t_lo = 4.0 * std::log(10.0) / lam_max, t_hi = 4.0 * std::log(10.0) / lam_min;
  const int D = static_cast<int>(src_lm.size()) * kTimes + 1;
  Eigen::MatrixXd A(k0, D), B(k0, D);
  int d = 0;
  for (std::size_t l = 0; l < src_lm.size(); ++l)
    for (int s = 0; s < kTimes; ++s, ++d) {
      const double t = t_lo * std::pow(t_hi / t_lo, s / double(kTimes - 1));
      for (int i = 0; i < k0; ++i) {
        A(i, d) = std::exp(-source.eigenvalues(i) * t) * source.eigenfunctions(src_lm[l], i);
        B(i, d) = std::exp(-target.eigenvalues(i) * t) * target.eigenfunctions(tgt_lm[l], i);
      }
      const double na = A.col(d).norm(), nb = B.col(d).norm();
      if (na > 0) A.col(d) /= na;
      if (nb > 0) B.col(d) /= nb;
    }
  // constant function: coefficients are the projection of 1 onto each basis
  A.col(d) = source.eigenfunctions.leftCols(k0).transpose() * source.mass;
  B.col(d) = target.eigenfunctions.leftCols(k0).transpose() * target.mass;
  A.col(d).normalize();
  B.col(d).normalize();

  constexpr double kAlpha = 1e-1;
  const Eigen::MatrixXd BBt = B * B.transpose();
  Eigen::MatrixXd C(k0, k0);
  for (int r = 0; r < k0; ++r) {
    Eigen::MatrixXd lhs = BBt;
    for (int j = 0; j < k0; ++j) {
      const double diff = (target.eigenvalues(j) - source.eigenvalues(r)) / lam_max;
      lhs(j, j) += kAlpha * diff * diff;
    }
    C.row(r) = lhs.ldlt().solve(B * A.row(r).transpose()).transpose();
  }
  return C;
}

double commutativity_energy(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C) {
  const int k = static_cast<int>(C.rows());
  return (C * target.eigenvalues.head(k).asDiagonal() - source.eigenvalues.head(k).asDiagonal() * C).norm();
}

ZoomOutResult zoomout(const SpectralBasis& source, const SpectralBasis& target, const Eigen::MatrixXd& C0, int k_final,
                      int step) {
  const int k0 = static_cast<int>(C0.rows());
  if (C0.cols() != k0) throw InputError("zoomout: C0 must be square");
  if (k0 < 4) throw InputError("zoomout: k0 must be >= 4");
  if (step < 1) throw InputError("zoomout: step must be >= 1");
  if (k_final < k0) throw InputError("zoomout: k_final must be >= k0");
  if (k_final > source.size() || k_final > target.size())
    throw InputError("zoomout: k_final = " + std::to_string(k_final) + " exceeds the available eigenpairs (" +
                     std::to_string(std::min(source.size(), target.size())) + ")");
  ZoomOutResult out;
  out.C = C0;
  out.energies.push_back(commutativity_energy(source, target, out.C));
  out.map = pointmap_from_fmap(source, target, out.C);
  int k = k0;
  while (k < k_final) {
    k = std::min(k + step, k_final);
    out.C = fmap_from_pointmap(source, target, out.map, k);
    out.energies.push_back(commutativity_energy(source, target, out.C));
    out.map = pointmap_from_fmap(source, target, out.C);
  }
  return out;
}

void write_vertex_map(const VertexMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "source_id,target_id\n";
  for (std::size_t i = 0; i < map.source_to_target.size(); ++i) out << i << ',' << map.source_to_target[i] << '\n';
}

VertexMap read_vertex_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  VertexMap map;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError(path.string() + ": malformed line '" + line + "'");
    const std::size_t src = std::stoul(line.substr(0, comma));
    if (src != map.source_to_target.size()) throw InputError(path.string() + ": source ids must be 0..N-1 in order");
    map.source_to_target.push_back(std::stoi(line.substr(comma + 1)));
  }
  return map;
}

}  // namespace quadfit::fmap

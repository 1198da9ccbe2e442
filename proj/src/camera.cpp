#include "quadfit/camera.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace quadfit::camera {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("intrinsics: fx and fy must be positive");
  if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw InputError("intrinsics: principal point must lie inside the image");
}

void CameraFrame::validate() const {
  intrinsics.validate();
  const Eigen::Matrix3d I = rotation.transpose() * rotation;
  if ((I - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-8)
    throw InputError("camera: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-8) throw InputError("camera: rotation determinant is not +1");
}

Projection project(const CameraFrame& cam, const Points3& points) {
  const Intrinsics& K = cam.intrinsics;
  Projection out;
  const int n = static_cast<int>(points.rows());
  out.pixels.resize(n, 2);
  out.camera_points.resize(n, 3);
  out.valid.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d c = cam.rotation * points.row(i).transpose() + cam.translation;
    out.camera_points.row(i) = c.transpose();
    if (c.z() > kMinDepth) {
      out.pixels(i, 0) = K.fx * c.x() / c.z() + K.cx;
      out.pixels(i, 1) = K.fy * c.y() / c.z() + K.cy;
      out.valid[i] = 1;
      ++out.num_valid;
    } else {
      out.pixels.row(i).setZero();
    }
  }
  return out;
}

bool project_point(const CameraFrame& cam, const Eigen::Vector3d& world, Eigen::Vector2d& pixel) {
  const Eigen::Vector3d c = cam.to_camera(world);
  if (c.z() <= kMinDepth) return false;
  pixel = {cam.intrinsics.fx * c.x() / c.z() + cam.intrinsics.cx, cam.intrinsics.fy * c.y() / c.z() + cam.intrinsics.cy};
  return true;
}

Eigen::Vector3d unproject(const CameraFrame& cam, const Eigen::Vector2d& pixel, double depth) {
  const Intrinsics& K = cam.intrinsics;
  const Eigen::Vector3d c((pixel.x() - K.cx) / K.fx * depth, (pixel.y() - K.cy) / K.fy * depth, depth);
  return cam.rotation.transpose() * (c - cam.translation);
}

Points3 project_vjp(const CameraFrame& cam, const Points3& world, const Projection& proj, const Points2& grad_pixels,
                    ExtrinsicsGrad* cam_grad) {
  const Intrinsics& K = cam.intrinsics;
  const int n = static_cast<int>(proj.camera_points.rows());
  Points3 out = Points3::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    if (!proj.valid[i]) continue;
    const double gx = grad_pixels(i, 0), gy = grad_pixels(i, 1);
    if (gx == 0.0 && gy == 0.0) continue;
    const double X = proj.camera_points(i, 0), Y = proj.camera_points(i, 1), Z = proj.camera_points(i, 2);
    const Eigen::Vector3d dc(K.fx * gx / Z, K.fy * gy / Z, -(K.fx * X * gx + K.fy * Y * gy) / (Z * Z));
    out.row(i) = (cam.rotation.transpose() * dc).transpose();
    if (cam_grad) {
      cam_grad->rotation.noalias() += dc * world.row(i);
      cam_grad->translation += dc;
    }
  }
  return out;
}

std::vector<double> reprojection_errors(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                                        std::span<const Eigen::Vector3d> p3, std::span<const Eigen::Vector2d> p2,
                                        const Intrinsics& K) {
  std::vector<double> err(p3.size());
  for (std::size_t i = 0; i < p3.size(); ++i) {
    const Eigen::Vector3d c = R * p3[i] + t;
    if (c.z() <= kMinDepth) {
      err[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    const Eigen::Vector2d px(K.fx * c.x() / c.z() + K.cx, K.fy * c.y() / c.z() + K.cy);
    err[i] = (px - p2[i]).norm();
  }
  return err;
}

namespace {

// Column of the product beta_a * beta_b (a <= b) in the distance-constraint system.
constexpr int pair_col(int a, int b) { return b * (b + 1) / 2 + a; }

struct EpnpSystem {
  int nc = 4;                                  // control points
  std::vector<Eigen::Vector3d> controls;       // world
  Eigen::MatrixXd alphas;                      // n x nc
  Eigen::MatrixXd null_vectors;                // 3nc x nc, smallest first
  Eigen::MatrixXd L;                           // pairs x nc(nc+1)/2
  Eigen::VectorXd rho;                         // pairs
};

void choose_controls(std::span<const Eigen::Vector3d> p3, EpnpSystem& sys) {
  const int n = static_cast<int>(p3.size());
  Eigen::Vector3d c0 = Eigen::Vector3d::Zero();
  for (const auto& p : p3) c0 += p;
  c0 /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : p3) cov.noalias() += (p - c0) * (p - c0).transpose();
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues();   // ascending
  const double top = ev(2);
  if (!(top > 0.0) || ev(1) <= 1e-10 * top) throw DegenerateError("3D points are collinear or coincident");
  sys.nc = ev(0) <= 1e-10 * top ? 3 : 4;
  sys.controls.assign(1, c0);
  for (int k = 2; k >= 4 - sys.nc; --k) sys.controls.push_back(c0 + std::sqrt(ev(k)) * es.eigenvectors().col(k));

  const int dirs = sys.nc - 1;
  Eigen::MatrixXd C(3, dirs);
  for (int k = 0; k < dirs; ++k) C.col(k) = sys.controls[k + 1] - c0;
  const auto solver = C.colPivHouseholderQr();
  sys.alphas.resize(n, sys.nc);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = solver.solve(p3[i] - c0);
    sys.alphas(i, 0) = 1.0 - a.sum();
    for (int k = 0; k < dirs; ++k) sys.alphas(i, k + 1) = a(k);
  }
}

void build_system(std::span<const Eigen::Vector2d> p2, const Intrinsics& K, EpnpSystem& sys) {
  const int n = static_cast<int>(p2.size());
  const int nc = sys.nc;
  Eigen::MatrixXd M(2 * n, 3 * nc);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < nc; ++j) {
      const double a = sys.alphas(i, j);
      M(2 * i, 3 * j) = a * K.fx;
      M(2 * i, 3 * j + 1) = 0.0;
      M(2 * i, 3 * j + 2) = a * (K.cx - p2[i].x());
      M(2 * i + 1, 3 * j) = 0.0;
      M(2 * i + 1, 3 * j + 1) = a * K.fy;
      M(2 * i + 1, 3 * j + 2) = a * (K.cy - p2[i].y());
    }
  }
  const Eigen::MatrixXd MtM = M.transpose() * M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(MtM);
  if (es.info() != Eigen::Success) throw DegenerateError("control-point eigen decomposition failed");
  sys.null_vectors = es.eigenvectors().leftCols(nc);

  const int pairs = nc * (nc - 1) / 2;
  const int cols = nc * (nc + 1) / 2;
  sys.L.resize(pairs, cols);
  sys.rho.resize(pairs);
  int row = 0;
  for (int a = 0; a < nc; ++a)
    for (int b = a + 1; b < nc; ++b, ++row) {
      std::vector<Eigen::Vector3d> dv(nc);
      for (int k = 0; k < nc; ++k)
        dv[k] = sys.null_vectors.col(k).segment<3>(3 * a) - sys.null_vectors.col(k).segment<3>(3 * b);
      for (int k = 0; k < nc; ++k)
        for (int l = k; l < nc; ++l) sys.L(row, pair_col(k, l)) = (k == l ? 1.0 : 2.0) * dv[k].dot(dv[l]);
      sys.rho(row) = (sys.controls[a] - sys.controls[b]).squaredNorm();
    }
}

Eigen::VectorXd lstsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return A.completeOrthogonalDecomposition().solve(b);
}

Eigen::VectorXd betas_n1(const EpnpSystem& sys) {
  const int nc = sys.nc;
  Eigen::MatrixXd A(sys.L.rows(), nc);
  for (int j = 0; j < nc; ++j) A.col(j) = sys.L.col(pair_col(0, j));
  const Eigen::VectorXd b = lstsq(A, sys.rho);
  Eigen::VectorXd betas = Eigen::VectorXd::Zero(nc);
  if (b(0) < 0.0) {
    betas(0) = std::sqrt(-b(0));
    for (int j = 1; j < nc; ++j) betas(j) = -b(j) / betas(0);
  } else {
    betas(0) = std::sqrt(b(0));
    for (int j = 1; j < nc; ++j) betas(j) = betas(0) > 0.0 ? b(j) / betas(0) : 0.0;
  }
  return betas;
}

Eigen::VectorXd betas_n2(const EpnpSystem& sys, bool third) {
  const int nc = sys.nc;
  std::vector<int> cols{pair_col(0, 0), pair_col(0, 1), pair_col(1, 1)};
  if (third) {
    cols.push_back(pair_col(0, 2));
    cols.push_back(pair_col(1, 2));
  }
  Eigen::MatrixXd A(sys.L.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) A.col(j) = sys.L.col(cols[j]);
  const Eigen::VectorXd b = lstsq(A, sys.rho);
  Eigen::VectorXd betas = Eigen::VectorXd::Zero(nc);
  if (b(0) < 0.0) {
    betas(0) = std::sqrt(-b(0));
    betas(1) = b(2) < 0.0 ? std::sqrt(-b(2)) : 0.0;
  } else {
    betas(0) = std::sqrt(b(0));
    betas(1) = b(2) > 0.0 ? std::sqrt(b(2)) : 0.0;
  }
  if (b(1) < 0.0) betas(0) = -betas(0);
  if (third) betas(2) = betas(0) != 0.0 ? b(3) / betas(0) : 0.0;
  return betas;
}

void gauss_newton(const EpnpSystem& sys, Eigen::VectorXd& betas) {
  const int nc = sys.nc;
  const int rows = static_cast<int>(sys.L.rows());
  for (int iter = 0; iter < 10; ++iter) {
    Eigen::MatrixXd J(rows, nc);
    Eigen::VectorXd r(rows);
    for (int i = 0; i < rows; ++i) {
      double pred = 0.0;
      for (int k = 0; k < nc; ++k)
        for (int l = k; l < nc; ++l) pred += sys.L(i, pair_col(k, l)) * betas(k) * betas(l);
      r(i) = sys.rho(i) - pred;
      for (int k = 0; k < nc; ++k) {
        double d = 0.0;
        for (int l = 0; l < nc; ++l) {
          const int c = k <= l ? pair_col(k, l) : pair_col(l, k);
          d += (k == l ? 2.0 : 1.0) * sys.L(i, c) * betas(l);
        }
        J(i, k) = d;
      }
    }
    const Eigen::VectorXd step = lstsq(J, r);
    if (!step.allFinite()) break;
    betas += step;
    if (step.norm() < 1e-14 * (1.0 + betas.norm())) break;
  }
}

bool pose_from_betas(const EpnpSystem& sys, std::span<const Eigen::Vector3d> p3, const Eigen::VectorXd& betas,
                     Eigen::Matrix3d& R, Eigen::Vector3d& t) {
  const int nc = sys.nc;
  const int n = static_cast<int>(p3.size());
  Eigen::VectorXd ccs = sys.null_vectors * betas;
  Eigen::MatrixXd pcs(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    for (int j = 0; j < nc; ++j) p += sys.alphas(i, j) * ccs.segment<3>(3 * j);
    pcs.row(i) = p.transpose();
  }
  if (pcs.col(2).sum() < 0.0) pcs = -pcs;

  Eigen::Vector3d mc = pcs.colwise().mean().transpose();
  Eigen::Vector3d mw = Eigen::Vector3d::Zero();
  for (const auto& p : p3) mw += p;
  mw /= n;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) H.noalias() += (pcs.row(i).transpose() - mc) * (p3[i] - mw).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) = -U.col(2);
  R = U * V.transpose();
  t = mc - R * mw;
  return R.allFinite() && t.allFinite();
}

double mean_error(const std::vector<double>& e) {
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

}  // namespace

PnPResult epnp(std::span<const Eigen::Vector3d> p3, std::span<const Eigen::Vector2d> p2, const Intrinsics& K) {
  if (p3.size() != p2.size()) throw InputError("epnp: 3D and 2D point counts differ");
  if (p3.size() < static_cast<std::size_t>(kMinPnPPoints))
    throw InputError("epnp: needs at least 6 correspondences, got " + std::to_string(p3.size()));
  EpnpSystem sys;
  choose_controls(p3, sys);
  build_system(p2, K, sys);

  std::vector<Eigen::VectorXd> candidates{betas_n1(sys), betas_n2(sys, false)};
  if (sys.nc == 4) candidates.push_back(betas_n2(sys, true));

  PnPResult best;
  best.mean_reprojection_error = std::numeric_limits<double>::infinity();
  for (Eigen::VectorXd& b : candidates) {
    gauss_newton(sys, b);
    Eigen::Matrix3d R;
    Eigen::Vector3d t;
    if (!b.allFinite() || !pose_from_betas(sys, p3, b, R, t)) continue;
    const double err = mean_error(reprojection_errors(R, t, p3, p2, K));
    if (err < best.mean_reprojection_error) best = {R, t, err};
  }
  if (!std::isfinite(best.mean_reprojection_error))
    throw DegenerateError("no EPnP candidate places the points in front of the camera");
  return best;
}

RansacResult ransac_pnp(std::span<const Eigen::Vector3d> p3, std::span<const Eigen::Vector2d> p2,
                        const Intrinsics& K, const RansacOptions& opt) {
  if (opt.iterations < 1) throw InputError("ransac_pnp: iterations must be >= 1");
  if (!(opt.inlier_px > 0.0)) throw InputError("ransac_pnp: inlier threshold must be positive");
  if (p3.size() != p2.size()) throw InputError("ransac_pnp: 3D and 2D point counts differ");
  const int n = static_cast<int>(p3.size());
  if (n < kMinPnPPoints) throw InputError("ransac_pnp: needs at least 6 correspondences, got " + std::to_string(n));

  std::mt19937_64 rng(opt.seed);
  std::vector<int> idx(n);
  std::vector<Eigen::Vector3d> s3(kMinPnPPoints);
  std::vector<Eigen::Vector2d> s2(kMinPnPPoints);

  int best_count = 0;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> best_mask;

  for (int it = 0; it < opt.iterations; ++it) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < kMinPnPPoints; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(idx[k], idx[pick(rng)]);
      s3[k] = p3[idx[k]];
      s2[k] = p2[idx[k]];
    }
    PnPResult hyp;
    try {
      hyp = epnp(s3, s2, K);
    } catch (const NumericalError&) {
      continue;
    }
    const std::vector<double> err = reprojection_errors(hyp.rotation, hyp.translation, p3, p2, K);
    int count = 0;
    double score = 0.0;
    std::vector<std::uint8_t> mask(n, 0);
    for (int i = 0; i < n; ++i)
      if (err[i] < opt.inlier_px) {
        mask[i] = 1;
        ++count;
        score += err[i];
      }
    if (count > best_count || (count == best_count && count > 0 && score < best_score)) {
      best_count = count;
      best_score = score;
      best_mask = std::move(mask);
    }
  }
  if (best_count < kMinPnPPoints)
    throw NoConsensusError("best hypothesis has " + std::to_string(best_count) + " inliers (need 6)");

  std::vector<Eigen::Vector3d> in3;
  std::vector<Eigen::Vector2d> in2;
  for (int i = 0; i < n; ++i)
    if (best_mask[i]) {
      in3.push_back(p3[i]);
      in2.push_back(p2[i]);
    }
  RansacResult out;
  out.pose = epnp(in3, in2, K);
  const std::vector<double> err = reprojection_errors(out.pose.rotation, out.pose.translation, p3, p2, K);
  out.inliers.assign(n, 0);
  for (int i = 0; i < n; ++i)
    if (err[i] < opt.inlier_px) {
      out.inliers[i] = 1;
      ++out.num_inliers;
    }
  return out;
}

CameraFrame look_at(const Intrinsics& K, const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = (-up).cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  CameraFrame cam;
  cam.intrinsics = K;
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

}  // namespace quadfit::camera

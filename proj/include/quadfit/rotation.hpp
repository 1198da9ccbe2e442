#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <type_traits>

#include <Eigen/Core>

namespace quadfit {

/// Row-major 3x3 rotation over an arbitrary scalar (double or diff::Var).
template <class T>
using Mat3T = std::array<T, 9>;

template <class T>
using Vec3T = std::array<T, 3>;

/// Rotation matrix of an axis-angle vector. Uses a second-order expansion
/// near zero so the derivative stays exact at the identity.
template <class T>
Mat3T<T> axis_angle_to_matrix(const T& rx, const T& ry, const T& rz) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T t2 = rx * rx + ry * ry + rz * rz;
  T a, b;  // R = I + a K + b K^2
  const double t2v = [&] {
    if constexpr (std::is_same_v<T, double>) return t2;
    else return t2.value();
  }();
  if (t2v < 1e-12) {
    a = T(1.0) - t2 / 6.0;
    b = T(0.5) - t2 / 24.0;
  } else {
    const T t = sqrt(t2);
    a = sin(t) / t;
    b = (T(1.0) - cos(t)) / t2;
  }
  // K = [r]x; K^2 = r r^T - t2 I
  Mat3T<T> R;
  R[0] = T(1.0) + b * (rx * rx - t2);
  R[1] = b * rx * ry - a * rz;
  R[2] = b * rx * rz + a * ry;
  R[3] = b * rx * ry + a * rz;
  R[4] = T(1.0) + b * (ry * ry - t2);
  R[5] = b * ry * rz - a * rx;
  R[6] = b * rx * rz - a * ry;
  R[7] = b * ry * rz + a * rx;
  R[8] = T(1.0) + b * (rz * rz - t2);
  return R;
}

template <class T>
Mat3T<T> matmul(const Mat3T<T>& A, const Mat3T<T>& B) {
  Mat3T<T> C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j];
  return C;
}

template <class T, class U>
Vec3T<T> matvec(const Mat3T<T>& A, const std::array<U, 3>& v) {
  return {A[0] * v[0] + A[1] * v[1] + A[2] * v[2], A[3] * v[0] + A[4] * v[1] + A[5] * v[2],
          A[6] * v[0] + A[7] * v[1] + A[8] * v[2]};
}

inline Eigen::Matrix3d to_eigen(const Mat3T<double>& R) {
  Eigen::Matrix3d M;
  M << R[0], R[1], R[2], R[3], R[4], R[5], R[6], R[7], R[8];
  return M;
}

inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& r) {
  return to_eigen(axis_angle_to_matrix(r.x(), r.y(), r.z()));
}

/// Inverse of rodrigues for proper rotations; angle in [0, pi].
inline Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& R) {
  const double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(c);
  Eigen::Vector3d w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (angle < 1e-8) return 0.5 * w;
  if (M_PI - angle < 1e-6) {
    // axis from the dominant column of R + I
    Eigen::Matrix3d S = (R + Eigen::Matrix3d::Identity()) * 0.5;
    int k = 0;
    S.diagonal().maxCoeff(&k);
    Eigen::Vector3d axis = S.col(k) / std::sqrt(std::max(S(k, k), 1e-300));
    return axis.normalized() * angle;
  }
  return w * (angle / (2.0 * std::sin(angle)));
}

/// Angle of R_a^T R_b in radians.
inline double rotation_angle_between(const Eigen::Matrix3d& Ra, const Eigen::Matrix3d& Rb) {
  const Eigen::Matrix3d D = Ra.transpose() * Rb;
  return std::acos(std::clamp((D.trace() - 1.0) * 0.5, -1.0, 1.0));
}

}  // namespace quadfit

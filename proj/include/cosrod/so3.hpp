#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace cosrod {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Skew map R^3 -> so(3): hat(w) * v == w x v.
inline Mat3 hat(const Vec3& w) {
  Mat3 W;
  W << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return W;
}

/// Inverse of hat(); expects an antisymmetric argument.
inline Vec3 vee(const Mat3& W) {
  return Vec3(W(2, 1), W(0, 2), W(1, 0));
}

/// Exponential map so(3) -> SO(3) via Rodrigues, series for small angles.
inline Mat3 exp_so3(const Vec3& w) {
  const double t2 = w.squaredNorm();
  const Mat3 W = hat(w);
  double a, b;  // R = I + a*W + b*W^2
  if (t2 < 1e-12) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    const double t = std::sqrt(t2);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  return Mat3::Identity() + a * W + b * (W * W);
}

/// Log map SO(3) -> so(3) as a rotation vector. Delegates to Eigen's
/// angle-axis conversion, which is robust near 0 and pi.
inline Vec3 log_so3(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

/// Right-trivialized inverse differential of exp: given the body angular
/// rate w at configuration exp(theta), returns d/ds of the exponential
/// coordinate. Needed for Munthe-Kaas stepping on SO(3).
inline Vec3 dexpinv_so3(const Vec3& theta, const Vec3& w) {
  const double t2 = theta.squaredNorm();
  double c;
  if (t2 < 1e-2) {
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double t = std::sqrt(t2);
    c = (1.0 - 0.5 * t * std::sin(t) / (1.0 - std::cos(t))) / t2;
  }
  return w - 0.5 * theta.cross(w) + c * theta.cross(theta.cross(w));
}

/// Frobenius distance of R^T R from the identity; orthonormality residual.
inline double orthonormality_residual(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).norm();
}

}  // namespace cosrod

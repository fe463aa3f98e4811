#pragma once

// Deformation Jacobian: sensitivity of control-point positions to
// perturbations of the rod's initial values, built column by column from
// forward finite differences of the IVP. Also hosts the damped SVD
// pseudoinverse and the wrench-block stability margin used by the controller.

#include <array>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "cosrod/rod.hpp"

namespace cosrod {

/// Arclengths of the markers tracked on the object; strictly increasing.
struct ControlPointLayout {
  std::vector<double> arclengths;

  int count() const { return static_cast<int>(arclengths.size()); }

  void validate(double rod_length) const {
    if (count() < 2) throw std::invalid_argument("ControlPointLayout: need at least two control points");
    double prev = -1.0;
    for (double s : arclengths) {
      if (s < 0.0 || s > rod_length)
        throw std::invalid_argument("ControlPointLayout: arclength outside [0, L]");
      if (s <= prev) throw std::invalid_argument("ControlPointLayout: arclengths must be strictly increasing");
      prev = s;
    }
  }
};

/// Which initial-value components the grippers can actuate. BiArm exposes the
/// full 12-dimensional tangent; ClampedBase freezes the base pose and leaves
/// only the wrench block.
enum class BcMode { BiArm, ClampedBase };

inline int column_count(BcMode mode) { return mode == BcMode::BiArm ? 12 : 6; }

inline const char* to_string(BcMode mode) { return mode == BcMode::BiArm ? "bi_arm" : "clamped_base"; }

/// Finite-difference step per perturbation block. The wrench steps scale with
/// the stiffness so the induced displacement stays numerically meaningful
/// from rubber bands to steel cables.
struct PerturbationDeltas {
  double position = 1e-5;  // [m]
  double rotation = 1e-5;  // [rad]
  double force = 1e-8;     // [N]
  double moment = 1e-8;    // [N m]

  static PerturbationDeltas ForParams(const RodParameters& params) {
    PerturbationDeltas d;
    d.force = 1e-5 * (params.Kt.norm() * 1e-3);
    d.moment = 1e-5 * params.Kr.norm() / (params.length * params.length);
    return d;
  }

  void validate() const {
    if (!(position > 0.0 && rotation > 0.0 && force > 0.0 && moment > 0.0))
      throw std::invalid_argument("PerturbationDeltas: steps must be strictly positive");
  }

  double for_column(BcMode mode, int j) const {
    const int block = (mode == BcMode::BiArm) ? j / 3 : 2 + j / 3;
    switch (block) {
      case 0: return position;
      case 1: return rotation;
      case 2: return force;
      default: return moment;
    }
  }
};

/// Column labels, pose blocks first so the wrench block is always the last
/// six columns regardless of mode.
inline std::string column_label(BcMode mode, int j) {
  static const std::array<const char*, 12> kLabels = {
      "dp0_x", "dp0_y", "dp0_z", "dth0_x", "dth0_y", "dth0_z",
      "dn0_x", "dn0_y", "dn0_z", "dm0_x", "dm0_y", "dm0_z"};
  return kLabels[(mode == BcMode::BiArm) ? j : 6 + j];
}

/// Applies one basis perturbation to the initial values. Pose and wrench
/// blocks are additive except the rotation, which moves along the
/// right-multiplied exponential so R stays on SO(3).
inline BoundaryState perturb_component(const BoundaryState& gamma0, BcMode mode, int j, double delta) {
  BoundaryState out = gamma0;
  const int k = (mode == BcMode::BiArm) ? j : 6 + j;
  const int axis = k % 3;
  Vec3 e = Vec3::Zero();
  e[axis] = delta;
  switch (k / 3) {
    case 0: out.p += e; break;
    case 1: out.R = out.R * exp_so3(e); break;
    case 2: out.n += e; break;
    default: out.m += e; break;
  }
  return out;
}

/// Applies a full tangent increment (m_l entries, same block order as the
/// Jacobian columns) to the initial values.
inline BoundaryState apply_increment(const BoundaryState& gamma0, BcMode mode,
                                     const Eigen::VectorXd& delta) {
  if (delta.size() != column_count(mode))
    throw std::invalid_argument("apply_increment: increment size does not match mode");
  BoundaryState out = gamma0;
  int off = 0;
  if (mode == BcMode::BiArm) {
    out.p += delta.segment<3>(0);
    out.R = out.R * exp_so3(delta.segment<3>(3));
    off = 6;
  }
  out.n += delta.segment<3>(off);
  out.m += delta.segment<3>(off + 3);
  return out;
}

class JacobianError : public std::runtime_error {
 public:
  explicit JacobianError(const std::string& what) : std::runtime_error(what) {}
};

/// 3 n_c x m_l sensitivity of control-point positions to initial-value
/// perturbations, with its SVD cached for the damped pseudoinverse.
struct DeformationJacobian {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd singular_values;  // descending
  double damping = 0.0;             // epsilon_d
  BcMode mode = BcMode::BiArm;

  // Cached thin-SVD factors of `matrix`.
  Eigen::MatrixXd svd_u;
  Eigen::MatrixXd svd_v;

  int rows() const { return static_cast<int>(matrix.rows()); }
  int cols() const { return static_cast<int>(matrix.cols()); }
};

inline DeformationJacobian compute_jacobian(const BoundaryState& gamma0_hat,
                                            const RodParameters& params,
                                            const ControlPointLayout& layout, BcMode mode,
                                            const PerturbationDeltas& deltas,
                                            double damping = 0.0) {
  params.validate();
  gamma0_hat.validate();
  layout.validate(params.length);
  deltas.validate();

  const int m_l = column_count(mode);
  const int n_c = layout.count();

  const RodShape base_shape = integrate_ivp(gamma0_hat, params);
  const std::vector<Vec3> base_points = positions_at(base_shape, layout.arclengths);

  DeformationJacobian jac;
  jac.mode = mode;
  jac.damping = damping;
  jac.matrix.resize(3 * n_c, m_l);

  for (int j = 0; j < m_l; ++j) {
    const double delta = deltas.for_column(mode, j);
    const BoundaryState perturbed = perturb_component(gamma0_hat, mode, j, delta);
    std::vector<Vec3> points;
    try {
      points = positions_at(integrate_ivp(perturbed, params), layout.arclengths);
    } catch (const IntegrationError& err) {
      throw JacobianError("compute_jacobian: IVP diverged for column " + column_label(mode, j) +
                          " (" + err.what() + ")");
    }
    for (int i = 0; i < n_c; ++i)
      jac.matrix.block<3, 1>(3 * i, j) = (points[i] - base_points[i]) / delta;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  jac.singular_values = svd.singularValues();
  jac.svd_u = svd.matrixU();
  jac.svd_v = svd.matrixV();
  return jac;
}

/// Damped pseudoinverse V diag(s_i / (s_i^2 + eps_d^2)) U^T. With eps_d = 0
/// and full rank this is the Moore-Penrose inverse.
inline Eigen::MatrixXd damped_pinv(const DeformationJacobian& jac) {
  const Eigen::VectorXd& s = jac.singular_values;
  Eigen::VectorXd inv(s.size());
  const double eps2 = jac.damping * jac.damping;
  for (int i = 0; i < s.size(); ++i) {
    const double denom = s[i] * s[i] + eps2;
    inv[i] = denom > 0.0 ? s[i] / denom : 0.0;
  }
  return jac.svd_v * inv.asDiagonal() * jac.svd_u.transpose();
}

/// Smallest singular value of the wrench block (the trailing six columns,
/// sensitivities to n0 and m0). The controller treats a positive margin as
/// membership in the stable neighborhood.
inline double stability_margin(const DeformationJacobian& jac) {
  const Eigen::MatrixXd block = jac.matrix.rightCols(6);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(block);
  return svd.singularValues().minCoeff();
}

/// Debug dump: one row per control-point coordinate, columns labeled by
/// perturbation block.
inline void write_jacobian_csv(std::ostream& os, const DeformationJacobian& jac) {
  os << "row";
  for (int j = 0; j < jac.cols(); ++j) os << ',' << column_label(jac.mode, j);
  os << '\n';
  char buf[64];
  static const char axis[3] = {'x', 'y', 'z'};
  for (int i = 0; i < jac.rows(); ++i) {
    os << 'p' << (i / 3) << '_' << axis[i % 3];
    for (int j = 0; j < jac.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", jac.matrix(i, j));
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace cosrod

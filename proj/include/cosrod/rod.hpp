#pragma once

// Cosserat rod statics: state types, constitutive ODE right-hand side, and a
// fixed-step 4th-order Munthe-Kaas integrator for the arclength IVP.
//
// State convention: the internal force n and moment m are world-frame
// quantities; the constitutive map pulls them into the body frame with R^T
// before applying the compliance matrices.

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cosrod/so3.hpp"

namespace cosrod {

/// Rigid pose of a cross-section or gripper.
struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
};

/// Full rod state at one arclength: position, orientation, internal force
/// [N] and internal moment [N m], force/moment in the world frame.
struct BoundaryState {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 n = Vec3::Zero();
  Vec3 m = Vec3::Zero();

  static BoundaryState Rest() { return BoundaryState{}; }

  bool is_valid(double ortho_tol = 1e-9) const {
    return p.allFinite() && R.allFinite() && n.allFinite() && m.allFinite() &&
           orthonormality_residual(R) < ortho_tol && R.determinant() > 0.0;
  }

  void validate() const {
    if (!is_valid()) throw std::invalid_argument("BoundaryState: non-finite entries or R not a rotation");
  }
};

/// Geometry, stiffness and load description of a rod.
struct RodParameters {
  double length = 1.0;              // [m]
  Mat3 Kt = Mat3::Identity();       // translational stiffness [N]
  Mat3 Kr = Mat3::Identity();       // rotational stiffness [N m^2]
  Vec3 v_rest = Vec3(0, 0, 1);      // rest linear rate (unit tangent when unstretched)
  Vec3 u_rest = Vec3::Zero();       // rest angular rate [1/m]
  Vec3 f_dist = Vec3::Zero();       // distributed force [N/m], world frame
  Vec3 l_dist = Vec3::Zero();       // distributed moment [N m / m], world frame
  int n_steps = 100;

  void validate() const {
    if (!(length > 0.0)) throw std::invalid_argument("RodParameters: length must be positive");
    if (n_steps < 10) throw std::invalid_argument("RodParameters: n_steps must be >= 10");
    check_spd(Kt, "Kt");
    check_spd(Kr, "Kr");
    if (!v_rest.allFinite() || !u_rest.allFinite() || !f_dist.allFinite() || !l_dist.allFinite())
      throw std::invalid_argument("RodParameters: non-finite rest strain or load");
  }

 private:
  static void check_spd(const Mat3& K, const char* name) {
    if (!K.allFinite() || (K - K.transpose()).norm() > 1e-9 * (1.0 + K.norm()))
      throw std::invalid_argument(std::string("RodParameters: ") + name + " must be symmetric");
    Eigen::LLT<Mat3> llt(K);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument(std::string("RodParameters: ") + name + " must be positive definite");
  }
};

struct CircularSection {
  double radius = 0.0;  // [m]
};
struct SquareSection {
  double side = 0.0;  // [m]
};
using CrossSection = std::variant<CircularSection, SquareSection>;

/// Builds diagonal stiffness matrices from a Young modulus, Poisson ratio and
/// cross-section: Kt = diag(GA, GA, EA), Kr = diag(EIx, EIy, GJ).
struct StiffnessBuilder {
  double youngs_modulus = 0.0;  // [Pa]
  double poisson_ratio = 0.0;
  CrossSection section;

  void validate() const {
    if (!(youngs_modulus > 0.0)) throw std::invalid_argument("StiffnessBuilder: E must be positive");
    if (!(poisson_ratio > -1.0 && poisson_ratio <= 0.5))
      throw std::invalid_argument("StiffnessBuilder: nu must lie in (-1, 0.5]");
    if (area() <= 0.0) throw std::invalid_argument("StiffnessBuilder: degenerate cross-section");
  }

  double shear_modulus() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }

  double area() const {
    if (const auto* c = std::get_if<CircularSection>(&section)) return M_PI * c->radius * c->radius;
    const auto& s = std::get<SquareSection>(section);
    return s.side * s.side;
  }

  // Second moments about the two bending axes (equal for both sections here)
  // and the torsion constant. The square torsion constant uses the
  // Saint-Venant coefficient 0.140625 = 2.25/16.
  double bending_inertia() const {
    if (const auto* c = std::get_if<CircularSection>(&section))
      return M_PI * std::pow(c->radius, 4) / 4.0;
    const auto& s = std::get<SquareSection>(section);
    return std::pow(s.side, 4) / 12.0;
  }

  double torsion_constant() const {
    if (const auto* c = std::get_if<CircularSection>(&section))
      return M_PI * std::pow(c->radius, 4) / 2.0;
    const auto& s = std::get<SquareSection>(section);
    return 0.140625 * std::pow(s.side, 4);
  }

  Mat3 translational() const {
    validate();
    const double EA = youngs_modulus * area();
    const double GA = shear_modulus() * area();
    return Vec3(GA, GA, EA).asDiagonal();
  }

  Mat3 rotational() const {
    validate();
    const double EI = youngs_modulus * bending_inertia();
    const double GJ = shear_modulus() * torsion_constant();
    return Vec3(EI, EI, GJ).asDiagonal();
  }
};

struct RodSample {
  double s = 0.0;
  BoundaryState state;
};

/// Integrated IVP solution: n_steps + 1 uniformly spaced samples over [0, L].
struct RodShape {
  std::vector<RodSample> samples;

  double length() const { return samples.empty() ? 0.0 : samples.back().s; }
  const BoundaryState& base() const { return samples.front().state; }
  const BoundaryState& tip() const { return samples.back().state; }
  Pose base_pose() const { return Pose{base().p, base().R}; }
  Pose tip_pose() const { return Pose{tip().p, tip().R}; }
};

/// Thrown when the IVP integration produces non-finite values.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(double s, const std::string& what)
      : std::runtime_error("integration diverged at s=" + std::to_string(s) + ": " + what),
        arclength_(s) {}
  double arclength() const { return arclength_; }

 private:
  double arclength_;
};

/// Derivative of the rod state with respect to arclength.
struct StateDerivative {
  Vec3 dp;
  Mat3 dR;
  Vec3 dn;
  Vec3 dm;
};

namespace detail {

// Rates with the rotation slope kept as the body angular rate u
// (dR = R hat(u)); this is what the Lie-group stepper consumes.
struct RatePack {
  Vec3 dp;
  Vec3 u;
  Vec3 dn;
  Vec3 dm;
};

struct ConstitutiveMap {
  Mat3 Kt_inv;
  Mat3 Kr_inv;
  Vec3 v_rest, u_rest, f_dist, l_dist;

  explicit ConstitutiveMap(const RodParameters& params)
      : Kt_inv(params.Kt.inverse()),
        Kr_inv(params.Kr.inverse()),
        v_rest(params.v_rest),
        u_rest(params.u_rest),
        f_dist(params.f_dist),
        l_dist(params.l_dist) {}

  RatePack rates(const Vec3& p, const Mat3& R, const Vec3& n, const Vec3& m) const {
    (void)p;
    RatePack r;
    const Vec3 v = Kt_inv * (R.transpose() * n) + v_rest;
    r.u = Kr_inv * (R.transpose() * m) + u_rest;
    r.dp = R * v;
    r.dn = -f_dist;
    r.dm = -r.dp.cross(n) - l_dist;
    return r;
  }
};

}  // namespace detail

/// Right-hand side of the constitutive ODEs at one state.
inline StateDerivative ode_rhs(const BoundaryState& state, const RodParameters& params) {
  params.validate();
  state.validate();
  const detail::ConstitutiveMap map(params);
  const detail::RatePack r = map.rates(state.p, state.R, state.n, state.m);
  return StateDerivative{r.dp, state.R * hat(r.u), r.dn, r.dm};
}

/// Integrates the rod IVP from gamma0 over s in [0, L] with a fixed-step
/// 4th-order Munthe-Kaas scheme. The rotation advances by right-multiplied
/// exponentials, so every sample stays on SO(3) without reprojection.
inline RodShape integrate_ivp(const BoundaryState& gamma0, const RodParameters& params) {
  params.validate();
  gamma0.validate();

  const detail::ConstitutiveMap map(params);
  const int n = params.n_steps;
  const double h = params.length / n;

  RodShape shape;
  shape.samples.reserve(n + 1);
  shape.samples.push_back({0.0, gamma0});

  Vec3 p = gamma0.p, nf = gamma0.n, mm = gamma0.m;
  Mat3 R = gamma0.R;

  for (int i = 0; i < n; ++i) {
    const auto r1 = map.rates(p, R, nf, mm);
    const Vec3 th1 = r1.u;  // dexpinv at theta = 0

    const Vec3 big2 = 0.5 * h * th1;
    const auto r2 = map.rates(p + 0.5 * h * r1.dp, R * exp_so3(big2), nf + 0.5 * h * r1.dn,
                              mm + 0.5 * h * r1.dm);
    const Vec3 th2 = dexpinv_so3(big2, r2.u);

    const Vec3 big3 = 0.5 * h * th2;
    const auto r3 = map.rates(p + 0.5 * h * r2.dp, R * exp_so3(big3), nf + 0.5 * h * r2.dn,
                              mm + 0.5 * h * r2.dm);
    const Vec3 th3 = dexpinv_so3(big3, r3.u);

    const Vec3 big4 = h * th3;
    const auto r4 = map.rates(p + h * r3.dp, R * exp_so3(big4), nf + h * r3.dn, mm + h * r3.dm);
    const Vec3 th4 = dexpinv_so3(big4, r4.u);

    const double w = h / 6.0;
    p += w * (r1.dp + 2.0 * r2.dp + 2.0 * r3.dp + r4.dp);
    R = R * exp_so3(w * (th1 + 2.0 * th2 + 2.0 * th3 + th4));
    nf += w * (r1.dn + 2.0 * r2.dn + 2.0 * r3.dn + r4.dn);
    mm += w * (r1.dm + 2.0 * r2.dm + 2.0 * r3.dm + r4.dm);

    const double s = (i + 1) * h;
    if (!p.allFinite() || !R.allFinite() || !nf.allFinite() || !mm.allFinite())
      throw IntegrationError(s, "non-finite state");
    shape.samples.push_back({s, BoundaryState{p, R, nf, mm}});
  }
  shape.samples.back().s = params.length;  // exact endpoint
  return shape;
}

/// Centerline positions at the requested arclengths, linearly interpolated
/// between samples (exact at sample points).
inline std::vector<Vec3> positions_at(const RodShape& shape, const std::vector<double>& arclengths) {
  const double L = shape.length();
  const int n = static_cast<int>(shape.samples.size()) - 1;
  const double ds = L / n;
  std::vector<Vec3> out;
  out.reserve(arclengths.size());
  for (double s : arclengths) {
    if (s < -1e-12 * L || s > L * (1.0 + 1e-12))
      throw std::out_of_range("positions_at: arclength " + std::to_string(s) + " outside [0, L]");
    const double clamped = std::min(std::max(s, 0.0), L);
    const int i = std::min(static_cast<int>(clamped / ds), n - 1);
    const double t = (clamped - shape.samples[i].s) / ds;
    out.push_back((1.0 - t) * shape.samples[i].state.p + t * shape.samples[i + 1].state.p);
  }
  return out;
}

/// Pose of the cross-section at arclength s (nearest sample; exact at 0, L).
inline Pose pose_at_sample(const RodShape& shape, std::size_t index) {
  const auto& st = shape.samples.at(index).state;
  return Pose{st.p, st.R};
}

/// CSV rows: s, position, row-major rotation, force, moment.
inline void write_shape_csv(std::ostream& os, const RodShape& shape) {
  os << "s,px,py,pz,r00,r01,r02,r10,r11,r12,r20,r21,r22,nx,ny,nz,mx,my,mz\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
    os << buf;
  };
  for (const auto& smp : shape.samples) {
    put(smp.s, ',');
    for (int i = 0; i < 3; ++i) put(smp.state.p[i], ',');
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) put(smp.state.R(r, c), ',');
    for (int i = 0; i < 3; ++i) put(smp.state.n[i], ',');
    for (int i = 0; i < 3; ++i) put(smp.state.m[i], i == 2 ? '\n' : ',');
  }
}

}  // namespace cosrod

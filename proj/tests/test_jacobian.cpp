#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cosrod/jacobian.hpp"

using namespace cosrod;

namespace {

RodParameters rubber_params() {
  StiffnessBuilder sb{3.2e6, 0.5, SquareSection{0.01}};
  RodParameters p;
  p.length = 0.6;
  p.Kt = sb.translational();
  p.Kr = sb.rotational();
  return p;
}

ControlPointLayout rubber_layout() { return ControlPointLayout{{0.15, 0.30, 0.45}}; }

// Independent column check: central differences with a 10x smaller step.
Eigen::VectorXd central_difference_column(const BoundaryState& g0, const RodParameters& params,
                                          const ControlPointLayout& layout, BcMode mode, int j,
                                          double delta) {
  const double d = delta / 10.0;
  const auto plus =
      positions_at(integrate_ivp(perturb_component(g0, mode, j, d), params), layout.arclengths);
  const auto minus =
      positions_at(integrate_ivp(perturb_component(g0, mode, j, -d), params), layout.arclengths);
  Eigen::VectorXd col(3 * layout.count());
  for (int i = 0; i < layout.count(); ++i)
    col.segment<3>(3 * i) = (plus[i] - minus[i]) / (2.0 * d);
  return col;
}

BoundaryState bent_state(const RodParameters& p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double EI = p.Kr(0, 0);
  BoundaryState g0 = BoundaryState::Rest();
  g0.p = 0.05 * Vec3(gauss(rng), gauss(rng), gauss(rng));
  g0.R = exp_so3(0.3 * Vec3(gauss(rng), gauss(rng), gauss(rng)));
  g0.n = 0.3 * EI / (p.length * p.length) * Vec3(gauss(rng), gauss(rng), gauss(rng));
  g0.m = 0.4 * EI / p.length * Vec3(gauss(rng), gauss(rng), gauss(rng));
  return g0;
}

}  // namespace

TEST(ComputeJacobian, RigidTranslationBlock) {
  const RodParameters p = rubber_params();
  const ControlPointLayout layout = rubber_layout();
  const DeformationJacobian jac =
      compute_jacobian(BoundaryState::Rest(), p, layout, BcMode::BiArm,
                       PerturbationDeltas::ForParams(p));
  ASSERT_EQ(jac.rows(), 9);
  ASSERT_EQ(jac.cols(), 12);
  // translating the base translates every control point rigidly
  for (int i = 0; i < layout.count(); ++i)
    EXPECT_LT((jac.matrix.block<3, 3>(3 * i, 0) - Mat3::Identity()).norm(), 1e-9);
}

TEST(ComputeJacobian, MomentColumnMatchesCentralDifferenceOracle) {
  const RodParameters p = rubber_params();
  const ControlPointLayout layout = rubber_layout();
  const PerturbationDeltas deltas = PerturbationDeltas::ForParams(p);
  const BoundaryState g0 = BoundaryState::Rest();
  const DeformationJacobian jac = compute_jacobian(g0, p, layout, BcMode::BiArm, deltas);

  const int col_mx = 9;  // dm0_x
  const Eigen::VectorXd oracle =
      central_difference_column(g0, p, layout, BcMode::BiArm, col_mx, deltas.moment);
  const Eigen::VectorXd column = jac.matrix.col(col_mx);
  EXPECT_LT((column - oracle).norm() / oracle.norm(), 1e-4);
  // straight rod along z, moment about x: no x-response, nonzero transverse
  for (int i = 0; i < layout.count(); ++i) {
    EXPECT_LT(std::abs(column[3 * i]), 1e-6 * oracle.norm());
    EXPECT_GT(std::abs(column[3 * i + 1]), 0.0);
  }
}

TEST(ComputeJacobian, OracleEquivalenceOnRandomConfigurations) {
  const RodParameters p = rubber_params();
  const ControlPointLayout layout = rubber_layout();
  const PerturbationDeltas deltas = PerturbationDeltas::ForParams(p);
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const BoundaryState g0 = bent_state(p, seed);
    const DeformationJacobian jac = compute_jacobian(g0, p, layout, BcMode::BiArm, deltas);
    for (int j = 0; j < jac.cols(); ++j) {
      const Eigen::VectorXd oracle = central_difference_column(
          g0, p, layout, BcMode::BiArm, j, deltas.for_column(BcMode::BiArm, j));
      EXPECT_LT((jac.matrix.col(j) - oracle).norm() / oracle.norm(), 1e-3)
          << "seed " << seed << " column " << column_label(BcMode::BiArm, j);
    }
  }
}

TEST(ComputeJacobian, ClampedBaseHasWrenchColumnsOnly) {
  const RodParameters p = rubber_params();
  const DeformationJacobian jac =
      compute_jacobian(BoundaryState::Rest(), p, rubber_layout(), BcMode::ClampedBase,
                       PerturbationDeltas::ForParams(p));
  EXPECT_EQ(jac.cols(), 6);
  EXPECT_EQ(column_label(BcMode::ClampedBase, 0), "dn0_x");
  EXPECT_EQ(column_label(BcMode::ClampedBase, 5), "dm0_z");
}

TEST(ComputeJacobian, LocalityPrediction) {
  // J_d * delta matches the integrated displacement for a small step.
  const RodParameters p = rubber_params();
  const ControlPointLayout layout = rubber_layout();
  const PerturbationDeltas deltas = PerturbationDeltas::ForParams(p);
  const BoundaryState g0 = bent_state(p, 9);
  const DeformationJacobian jac = compute_jacobian(g0, p, layout, BcMode::BiArm, deltas);

  Eigen::VectorXd delta(12);
  delta << deltas.position * 0.7, -deltas.position * 0.3, deltas.position * 0.5,
      deltas.rotation * 0.4, deltas.rotation * 0.8, -deltas.rotation * 0.2,
      deltas.force * 0.6, -deltas.force * 0.9, deltas.force * 0.3,
      -deltas.moment * 0.5, deltas.moment * 0.7, deltas.moment * 0.4;

  const auto base_points = positions_at(integrate_ivp(g0, p), layout.arclengths);
  const auto moved_points =
      positions_at(integrate_ivp(apply_increment(g0, BcMode::BiArm, delta), p), layout.arclengths);
  Eigen::VectorXd actual(3 * layout.count());
  for (int i = 0; i < layout.count(); ++i)
    actual.segment<3>(3 * i) = moved_points[i] - base_points[i];

  const Eigen::VectorXd predicted = jac.matrix * delta;
  const double cosine = predicted.dot(actual) / (predicted.norm() * actual.norm());
  EXPECT_GT(cosine, 0.99);
}

TEST(ComputeJacobian, DeterministicAcrossCalls) {
  const RodParameters p = rubber_params();
  const BoundaryState g0 = bent_state(p, 4);
  const auto a = compute_jacobian(g0, p, rubber_layout(), BcMode::BiArm,
                                  PerturbationDeltas::ForParams(p));
  const auto b = compute_jacobian(g0, p, rubber_layout(), BcMode::BiArm,
                                  PerturbationDeltas::ForParams(p));
  EXPECT_EQ(a.matrix, b.matrix);
  EXPECT_EQ(a.singular_values, b.singular_values);
}

TEST(ComputeJacobian, InvalidInputs) {
  const RodParameters p = rubber_params();
  PerturbationDeltas bad = PerturbationDeltas::ForParams(p);
  bad.rotation = 0.0;
  EXPECT_THROW(compute_jacobian(BoundaryState::Rest(), p, rubber_layout(), BcMode::BiArm, bad),
               std::invalid_argument);
  ControlPointLayout one_point{{0.3}};
  EXPECT_THROW(compute_jacobian(BoundaryState::Rest(), p, one_point, BcMode::BiArm,
                                PerturbationDeltas::ForParams(p)),
               std::invalid_argument);
}

TEST(DampedPinv, IdentityAndScalarFormula) {
  DeformationJacobian jac;
  jac.mode = BcMode::BiArm;
  jac.matrix = Eigen::MatrixXd::Identity(3, 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  jac.singular_values = svd.singularValues();
  jac.svd_u = svd.matrixU();
  jac.svd_v = svd.matrixV();
  jac.damping = 0.0;
  EXPECT_LT((damped_pinv(jac) - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-14);

  DeformationJacobian scalar;
  scalar.matrix = Eigen::MatrixXd::Constant(1, 1, 2.0);
  Eigen::JacobiSVD<Eigen::MatrixXd> ssvd(scalar.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  scalar.singular_values = ssvd.singularValues();
  scalar.svd_u = ssvd.matrixU();
  scalar.svd_v = ssvd.matrixV();
  scalar.damping = 1.0;
  EXPECT_NEAR(damped_pinv(scalar)(0, 0), 2.0 / 5.0, 1e-15);
}

TEST(DampedPinv, MoorePenroseOnFullRankWideMatrix) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DeformationJacobian jac;
  jac.matrix.resize(6, 12);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 12; ++j) jac.matrix(i, j) = gauss(rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  jac.singular_values = svd.singularValues();
  jac.svd_u = svd.matrixU();
  jac.svd_v = svd.matrixV();
  jac.damping = 0.0;
  const Eigen::MatrixXd pinv = damped_pinv(jac);
  EXPECT_LT((jac.matrix * pinv * jac.matrix - jac.matrix).norm(), 1e-10);
  EXPECT_LT((pinv * jac.matrix * pinv - pinv).norm(), 1e-10);
}

TEST(DampedPinv, SingularDirectionSuppressed) {
  DeformationJacobian jac;
  jac.matrix = Eigen::MatrixXd::Zero(2, 2);
  jac.matrix(0, 0) = 1.0;  // rank 1
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  jac.singular_values = svd.singularValues();
  jac.svd_u = svd.matrixU();
  jac.svd_v = svd.matrixV();
  jac.damping = 0.0;
  const Eigen::MatrixXd pinv = damped_pinv(jac);  // no NaN from the zero singular value
  EXPECT_TRUE(pinv.allFinite());
  EXPECT_NEAR(pinv(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(pinv(1, 1), 0.0, 1e-14);
}

TEST(DampedPinv, DampingMonotonicity) {
  const RodParameters p = rubber_params();
  DeformationJacobian jac = compute_jacobian(bent_state(p, 2), p, rubber_layout(), BcMode::BiArm,
                                             PerturbationDeltas::ForParams(p));
  Eigen::VectorXd prev;
  bool first = true;
  for (double eps : {0.0, 1e-4, 1e-2, 1.0, 100.0}) {
    jac.damping = eps;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(damped_pinv(jac));
    const Eigen::VectorXd sv = svd.singularValues();
    if (!first)
      for (int i = 0; i < sv.size(); ++i) EXPECT_LE(sv[i], prev[i] * (1.0 + 1e-12));
    prev = sv;
    first = false;
  }
}

TEST(StabilityMargin, BlockExamples) {
  DeformationJacobian jac;
  jac.mode = BcMode::BiArm;
  jac.matrix = Eigen::MatrixXd::Zero(6, 12);
  jac.matrix.rightCols(6) = Eigen::MatrixXd::Identity(6, 6);
  EXPECT_NEAR(stability_margin(jac), 1.0, 1e-14);

  jac.matrix.col(8).setZero();  // kill one wrench column
  EXPECT_NEAR(stability_margin(jac), 0.0, 1e-14);
}

TEST(StabilityMargin, PositiveAtRestForRubberObject) {
  const RodParameters p = rubber_params();
  const DeformationJacobian jac =
      compute_jacobian(BoundaryState::Rest(), p, rubber_layout(), BcMode::BiArm,
                       PerturbationDeltas::ForParams(p));
  // oracle: SVD of the assembled wrench block
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.matrix.rightCols(6));
  EXPECT_GT(stability_margin(jac), 0.0);
  EXPECT_DOUBLE_EQ(stability_margin(jac), svd.singularValues().minCoeff());
}

TEST(JacobianCsv, LabeledColumns) {
  const RodParameters p = rubber_params();
  const DeformationJacobian jac =
      compute_jacobian(BoundaryState::Rest(), p, rubber_layout(), BcMode::ClampedBase,
                       PerturbationDeltas::ForParams(p));
  std::ostringstream out;
  write_jacobian_csv(out, jac);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "row,dn0_x,dn0_y,dn0_z,dm0_x,dm0_y,dm0_z");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, jac.rows());
}

// Integrates a rubber rod under a tip moment and prints the shape as CSV.

#include <iostream>

#include "cosrod/rod.hpp"

int main() {
  using namespace cosrod;
  StiffnessBuilder sb{3.2e6, 0.5, SquareSection{0.01}};
  RodParameters params;
  params.length = 0.6;
  params.Kt = sb.translational();
  params.Kr = sb.rotational();

  BoundaryState gamma0 = BoundaryState::Rest();
  const double kappa = 2.0;  // 1/m
  gamma0.m = Vec3(kappa * params.Kr(0, 0), 0.0, 0.0);

  const RodShape shape = integrate_ivp(gamma0, params);
  write_shape_csv(std::cout, shape);
  std::cerr << "tip: " << shape.tip().p.transpose() << "\n";
  return 0;
}

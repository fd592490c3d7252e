#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sglscv/fem.hpp"

using namespace sglscv::fem;

TEST_CASE("mesh counts and mass matrix integrate constants and linears") {
  const Mesh m(6);
  CHECK(m.node_count() == 49);
  CHECK(m.triangle_count() == 72);
  const Vector one = Vector::Ones(m.node_count());
  CHECK(l2_inner(m, one, one) == doctest::Approx(1.0));
  const Vector x = m.interpolate([](double x1, double) { return x1; });
  CHECK(l2_inner(m, one, x) == doctest::Approx(0.5));
  CHECK(l2_inner(m, x, x) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("stiffness annihilates constants and is symmetric") {
  const Mesh m(5);
  const SpMat K = stiffness_matrix(m);
  CHECK((K * Vector::Ones(m.node_count())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((Eigen::MatrixXd(K) - Eigen::MatrixXd(K).transpose()).norm() < 1e-12);
}

TEST_CASE("advection of a divergence free field is skew on constants") {
  const Mesh m(5);
  AffineField V;
  V.c = {1.0, 0.5};
  const SpMat C = advection_matrix(m, V);
  // int (V . grad phi_j) phi_i summed over j is zero
  CHECK((C * Vector::Ones(m.node_count())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("poisson solve converges at second order in L2") {
  auto err = [](int n) {
    const Mesh m(n);
    const auto op = assemble(m, 1.0, std::nullopt, Boundary::dirichlet_all);
    const double pi = std::numbers::pi;
    const Vector f = m.interpolate([&](double x, double y) { return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y); });
    const Vector u = solve_state(op, m.mass() * f);
    const Vector exact = m.interpolate([&](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
    return l2_norm(m, u - exact);
  };
  const double r = err(8) / err(16);
  CHECK(r > 3.3);
  CHECK(r < 4.7);
}

TEST_CASE("transposed solve is the adjoint") {
  const Mesh m(6);
  AffineField V;
  V.c = {0.7, 0.0};
  V.J << -0.3, 0.0, 0.0, 0.3;
  const Factorization F(assemble(m, 0.8, V, Boundary::dirichlet_left));
  Vector a = Vector::LinSpaced(m.node_count(), -1.0, 2.0), b = a.array().sin().matrix();
  CHECK(a.dot(F.solve(b)) == doctest::Approx(F.solve_transposed(a).dot(b)));
}

TEST_CASE("free nodes follow the boundary condition") {
  const Mesh m(4);
  CHECK(m.free_nodes(Boundary::dirichlet_all).size() == 9);
  CHECK(m.free_nodes(Boundary::dirichlet_left).size() == 20);
  CHECK(m.free_nodes(Boundary::neumann).size() == 25);
}

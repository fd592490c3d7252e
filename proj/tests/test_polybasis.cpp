#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sglscv/polybasis.hpp"

using namespace sglscv::poly;

TEST_CASE("legendre values are orthonormal against the uniform probability") {
  CHECK(legendre_eval(0, 0.3) == doctest::Approx(1.0));
  CHECK(legendre_eval(1, 1.0) == doctest::Approx(std::sqrt(3.0)));
  CHECK(legendre_eval(4, 1.0) == doctest::Approx(3.0));
  const auto q = gauss_legendre(30);
  for (int a = 0; a < 12; ++a)
    for (int b = 0; b < 12; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weights[static_cast<Eigen::Index>(i)] * legendre_eval(a, q.nodes(i, 0)) * legendre_eval(b, q.nodes(i, 0));
      CHECK(s == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("hermite values are orthonormal against the standard gaussian") {
  const auto q = gauss_hermite(30);
  CHECK(q.weights.sum() == doctest::Approx(1.0));
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i)
        s += q.weights[static_cast<Eigen::Index>(i)] * hermite_eval(a, q.nodes(i, 0)) * hermite_eval(b, q.nodes(i, 0));
      CHECK(std::abs(s - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
}

TEST_CASE("batch evaluation matches single evaluation") {
  std::vector<double> out(9);
  legendre_all(8, -0.37, out);
  for (int n = 0; n <= 8; ++n) CHECK(out[n] == doctest::Approx(legendre_eval(n, -0.37)));
  hermite_all(8, 1.3, out);
  for (int n = 0; n <= 8; ++n) CHECK(out[n] == doctest::Approx(hermite_eval(n, 1.3)));
}

TEST_CASE("hermite center sum accumulates squared values at zero") {
  double s = 0.0;
  for (int m = 1; m <= 30; ++m) {
    s += std::pow(hermite_eval(m - 1, 0.0), 2);
    CHECK(hermite_center_sum(m) == doctest::Approx(s));
  }
}

TEST_CASE("gauss rules integrate polynomials of degree 2n-1 exactly") {
  const auto q = gauss_legendre(6, 0.0, 2.0);
  for (int k = 0; k <= 11; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += q.weights[static_cast<Eigen::Index>(i)] * std::pow(q.nodes(i, 0), k);
    CHECK(s == doctest::Approx(std::pow(2.0, k) / (k + 1)));
  }
  const auto t = tensor_gauss(4, uniform_box(3, 0.0, 1.0));
  CHECK(t.size() == 64);
  CHECK(t.weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("index set cardinalities") {
  CHECK(MultiIndexSet::build(IndexSetKind::total_degree, 4, 1).size() == 5);
  CHECK(MultiIndexSet::build(IndexSetKind::total_degree, 3, 3).size() == 20);
  CHECK(MultiIndexSet::build(IndexSetKind::full_tensor, 2, 3).size() == 27);
  CHECK(MultiIndexSet::build(IndexSetKind::hyperbolic_cross, 5, 5).size() == 56);
  CHECK(MultiIndexSet::build(IndexSetKind::hyperbolic_cross, 9, 5).size() == 136);
}

TEST_CASE("index sets are downward closed and nested") {
  for (auto kind : {IndexSetKind::total_degree, IndexSetKind::hyperbolic_cross, IndexSetKind::full_tensor}) {
    for (int m = 1; m < 8; ++m) {
      const auto a = MultiIndexSet::build(kind, m, 3);
      const auto b = MultiIndexSet::build(kind, m + 1, 3);
      CHECK(a.is_downward_closed());
      CHECK(a.is_subset_of(b));
      for (std::size_t i = 1; i < a.size(); ++i) CHECK(graded_less(a[i - 1], a[i]));
    }
  }
}

TEST_CASE("non downward closed sets are rejected") {
  CHECK_THROWS_AS(MultiIndexSet(2, {{0, 0}, {0, 2}}), std::invalid_argument);
  CHECK_NOTHROW(MultiIndexSet(2, {{0, 0}, {0, 1}, {1, 0}, {0, 1}}));
  CHECK(MultiIndexSet(2, {{0, 0}, {0, 1}, {1, 0}, {0, 1}}).size() == 3);
}

TEST_CASE("extended basis keeps existing columns in place") {
  const auto law = uniform_box(2, -1.0, 1.0);
  const BasisContext small(MultiIndexSet::build(IndexSetKind::total_degree, 2, 2), law);
  const auto big_set = MultiIndexSet::build(IndexSetKind::total_degree, 4, 2);
  const auto ext = small.extended(big_set);
  REQUIRE(ext.size() == big_set.size());
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(ext.columns()[i] == small.columns()[i]);
  Point y(2);
  y << 0.3, -0.8;
  CHECK(ext.sum_squares(y) == doctest::Approx(BasisContext(big_set, law).sum_squares(y)));
}

TEST_CASE("basis over a shifted box is orthonormal") {
  const auto law = uniform_box(2, 0.0, 1.0);
  const BasisContext ctx(MultiIndexSet::build(IndexSetKind::hyperbolic_cross, 6, 2), law);
  const auto q = tensor_gauss(8, law);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(ctx.size(), ctx.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Eigen::VectorXd phi = ctx.eval(q.node(i));
    G += q.weights[static_cast<Eigen::Index>(i)] * phi * phi.transpose();
  }
  CHECK((G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).norm() < 1e-12);
}

TEST_CASE("christoffel inverse averages to the dimension") {
  const auto law = uniform_box(1, -1.0, 1.0);
  const BasisContext ctx(MultiIndexSet::build(IndexSetKind::total_degree, 7, 1), law);
  const auto q = gauss_legendre(20);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q.weights[static_cast<Eigen::Index>(i)] * christoffel_inverse(ctx, 1.0, q.node(i));
  CHECK(s == doctest::Approx(8.0));
}

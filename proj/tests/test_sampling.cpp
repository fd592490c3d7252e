#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sglscv/kernels.hpp"
#include "sglscv/sampling.hpp"

using namespace sglscv;
using sampling::SamplingMeasure;

TEST_CASE("streams are reproducible and separated by key") {
  sampling::Stream a(1, 2, 3, 4), b(1, 2, 3, 4), c(1, 2, 4, 4), d(1, 3, 3, 4);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  CHECK(x != d.next_u64());
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) mean += a.uniform() / 20000.0;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("importance weights have unit mean under each measure") {
  const auto law = poly::uniform_box(2, 0.0, 1.0);
  const poly::BasisContext ctx(poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, 3, 2), law);
  for (const auto& mu : {SamplingMeasure::reference(law), SamplingMeasure::arcsine(law), SamplingMeasure::optimal(ctx)}) {
    const auto m = kernels::sample_moments(40000, Exec::serial, [&](std::size_t i) {
      sampling::Stream r(9, 0, i);
      Eigen::VectorXd v(1);
      v[0] = mu.weight(mu.sample(r));
      return v;
    });
    CHECK(std::abs(m.mean[0] - 1.0) < 4.0 * std::sqrt(m.variance[0] / 40000.0) + 1e-12);
  }
}

TEST_CASE("weighted gram under the optimal measure is the identity in expectation") {
  const auto law = poly::uniform_box(1, -1.0, 1.0);
  const poly::BasisContext ctx(poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, 5, 1), law);
  const auto mu = SamplingMeasure::optimal(ctx);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(6, 6);
  const int n = 50000;
  sampling::Stream r(10, 0, 0);
  for (int i = 0; i < n; ++i) {
    const auto y = mu.sample(r);
    const Eigen::VectorXd phi = ctx.eval(y);
    G += mu.weight(y) * phi * phi.transpose() / n;
  }
  CHECK((G - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 0.05);
  // w sum phi^2 = m for the optimal measure
  const auto y = mu.sample(r);
  CHECK(mu.weight(y) * ctx.sum_squares(y) == doctest::Approx(6.0));
}

TEST_CASE("arcsine weight supremum sits at the centre") {
  const auto g = sampling::weight_grid_max(SamplingMeasure::arcsine(poly::uniform_box(1, -1.0, 1.0)), 101);
  CHECK(g.value == doctest::Approx(std::numbers::pi / 2));
  CHECK(std::abs(g.argmax[0]) < 1e-12);
  CHECK_THROWS(sampling::weight_grid_max(SamplingMeasure::reference({poly::Coordinate::gaussian()}), 11));
}

TEST_CASE("samples stay inside the box") {
  const auto law = poly::uniform_box(3, 2.0, 5.0);
  const auto mu = SamplingMeasure::arcsine(law);
  sampling::Stream r(11, 0, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto y = mu.sample(r);
    CHECK((y.array() >= 2.0).all());
    CHECK((y.array() <= 5.0).all());
  }
}

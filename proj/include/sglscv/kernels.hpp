#pragma once

// Hot loops over quadrature nodes and Monte Carlo draws. Each kernel has a
// serial and an OpenMP path; per-index results are stored and then reduced in
// index order, so both paths return identical bits.

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "sglscv/parallel.hpp"
#include "sglscv/polybasis.hpp"
#include "sglscv/problems.hpp"

namespace sglscv::kernels {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// sum_i w_i grad g(u, y_i).
Vector weighted_gradient_sum(const problems::ControlProblem& problem, const Vector& u,
                             const poly::QuadratureRule& rule, Exec ex = Exec::parallel);

/// Column i holds grad g(u, y_i).
Matrix gradient_table(const problems::ControlProblem& problem, const Vector& u, const poly::QuadratureRule& rule,
                      Exec ex = Exec::parallel);

/// sum_i w_i g(u, y_i).
double weighted_objective(const problems::ControlProblem& problem, const Vector& u,
                          const poly::QuadratureRule& rule, Exec ex = Exec::parallel);

/// Sample mean and per-component sample variance.
struct Moments {
  Vector mean;
  Vector variance;
  std::size_t count = 0;
};

/// Moments of draw(i) over i in [0, n). Accumulation runs in fixed blocks so
/// the result does not depend on the thread count.
template <class Draw>
Moments sample_moments(std::size_t n, Exec ex, Draw&& draw) {
  constexpr std::size_t block = 256;
  const std::size_t blocks = (n + block - 1) / block;
  std::vector<Vector> sum(blocks), sq(blocks);
  for_each_index(blocks, ex, [&](std::size_t b) {
    for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) {
      const Vector v = draw(i);
      if (sum[b].size() == 0) {
        sum[b] = Vector::Zero(v.size());
        sq[b] = Vector::Zero(v.size());
      }
      sum[b] += v;
      sq[b] += v.cwiseAbs2();
    }
  });
  Moments out;
  out.count = n;
  if (n == 0) return out;
  Vector s = Vector::Zero(sum[0].size()), q = Vector::Zero(sum[0].size());
  for (std::size_t b = 0; b < blocks; ++b) {
    s += sum[b];
    q += sq[b];
  }
  const double dn = static_cast<double>(n);
  out.mean = s / dn;
  out.variance = n > 1 ? Vector(((q - dn * out.mean.cwiseAbs2()) / (dn - 1.0)).cwiseMax(0.0)) : Vector::Zero(s.size());
  return out;
}

}  // namespace sglscv::kernels

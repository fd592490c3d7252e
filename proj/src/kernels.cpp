#include "sglscv/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sglscv {

int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sglscv

namespace sglscv::kernels {

Matrix gradient_table(const problems::ControlProblem& problem, const Vector& u, const poly::QuadratureRule& rule,
                      Exec ex) {
  Matrix G(problem.control_dim(), static_cast<Eigen::Index>(rule.size()));
  for_each_index(rule.size(), ex, [&](std::size_t i) {
    G.col(static_cast<Eigen::Index>(i)) = problem.gradient(u, rule.node(i));
  });
  return G;
}

Vector weighted_gradient_sum(const problems::ControlProblem& problem, const Vector& u,
                             const poly::QuadratureRule& rule, Exec ex) {
  return gradient_table(problem, u, rule, ex) * rule.weights;
}

double weighted_objective(const problems::ControlProblem& problem, const Vector& u,
                          const poly::QuadratureRule& rule, Exec ex) {
  Vector vals(static_cast<Eigen::Index>(rule.size()));
  for_each_index(rule.size(), ex, [&](std::size_t i) {
    vals[static_cast<Eigen::Index>(i)] = problem.objective(u, rule.node(i));
  });
  return vals.dot(rule.weights);
}

}  // namespace sglscv::kernels

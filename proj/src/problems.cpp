#include "sglscv/problems.hpp"

#include <numbers>
#include <stdexcept>

#include "sglscv/sampling.hpp"

namespace sglscv::problems {

Matrix ControlProblem::gradient_columns(const Matrix& U, const Point& y) const {
  Matrix G(control_dim(), U.cols());
  for (Eigen::Index j = 0; j < U.cols(); ++j) G.col(j) = gradient(U.col(j), y);
  return G;
}

double ControlProblem::norm(const Vector& a) const { return std::sqrt(std::max(0.0, inner(a, a))); }

// ---------------------------------------------------------------------------

QuadraticToy::QuadraticToy(std::uint64_t seed, int dim, double beta, double noise)
    : beta_(beta), law_{poly::Coordinate::uniform(-1.0, 1.0)} {
  if (dim < 1) throw std::invalid_argument("QuadraticToy: dim must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("QuadraticToy: beta must be positive");
  sampling::Stream rng(seed, 0, 0, 0x70);
  const int rows = dim + 2;
  A0_.resize(rows, dim);
  A1_.resize(rows, dim);
  b0_.resize(rows);
  b1_.resize(rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) {
      A0_(i, j) = rng.normal() / std::sqrt(rows);
      A1_(i, j) = noise * rng.normal() / std::sqrt(rows);
    }
    b0_[i] = rng.normal();
    b1_[i] = noise * rng.normal();
  }
  // E[y] = 0 and E[y^2] = 1/3 under U[-1,1]
  H_ = A0_.transpose() * A0_ + A1_.transpose() * A1_ / 3.0 + beta_ * Matrix::Identity(dim, dim);
  c_ = A0_.transpose() * b0_ + A1_.transpose() * b1_ / 3.0;
}

double QuadraticToy::objective(const Vector& u, const Point& y) const {
  const Vector r = (A0_ + y[0] * A1_) * u - (b0_ + y[0] * b1_);
  return 0.5 * r.squaredNorm() + 0.5 * beta_ * u.squaredNorm();
}

Vector QuadraticToy::gradient(const Vector& u, const Point& y) const {
  const Matrix A = A0_ + y[0] * A1_;
  return A.transpose() * (A * u - (b0_ + y[0] * b1_)) + beta_ * u;
}

std::optional<double> QuadraticToy::expected_objective(const Vector& u) const {
  const double const_term = 0.5 * (b0_.squaredNorm() + b1_.squaredNorm() / 3.0);
  return 0.5 * u.dot(H_ * u) - c_.dot(u) + const_term;
}

Vector QuadraticToy::optimum() const { return H_.llt().solve(c_); }

// ---------------------------------------------------------------------------

Diffusion1D::Diffusion1D(DiffusionSpec spec)
    : spec_(spec), mesh_(spec.mesh), law_{poly::Coordinate::uniform(-1.0, 1.0)} {
  if (!(spec.a > 0.0) || !(spec.b > spec.a)) throw std::invalid_argument("Diffusion1D: need 0 < a < b");
  if (!(spec.beta > 0.0)) throw std::invalid_argument("Diffusion1D: beta must be positive");
  lap_ = fem::assemble(mesh_, 1.0, std::nullopt, fem::Boundary::dirichlet_all);
  solver_ = std::make_shared<const fem::Factorization>(lap_);
  zd_ = mesh_.interpolate([](double x1, double x2) {
    return std::sin(std::numbers::pi * x1) * std::sin(std::numbers::pi * x2);
  });
}

double Diffusion1D::coefficient(double y) const {
  return spec_.a * std::exp((y + 1.0) * std::log(spec_.b / spec_.a) / 2.0);
}

Vector Diffusion1D::state(const Vector& u, double y) const {
  return solver_->solve(mesh_.mass() * u) / coefficient(y);
}

double Diffusion1D::objective(const Vector& u, const Point& y) const {
  const Vector r = state(u, y[0]) - zd_;
  return 0.5 * inner(r, r) + 0.5 * spec_.beta * inner(u, u);
}

Vector Diffusion1D::gradient(const Vector& u, const Point& y) const {
  const double c = coefficient(y[0]);
  const Vector z = solver_->solve(mesh_.mass() * u) / c;
  const Vector p = solver_->solve(mesh_.mass() * (z - zd_)) / c;
  Vector g = p + spec_.beta * u;
  if (spec_.metric == GradientMetric::euclidean) g = mesh_.mass() * g;
  return g;
}

double Diffusion1D::pairing(const Vector& g, const Vector& h) const {
  return spec_.metric == GradientMetric::l2 ? inner(g, h) : g.dot(h);
}

AnalyticOptimum analytic_optimum(const DiffusionSpec& spec) {
  if (!(spec.a > 0.0) || !(spec.b >= spec.a)) throw std::invalid_argument("analytic_optimum: need 0 < a <= b");
  AnalyticOptimum out;
  const double a = spec.a, b = spec.b;
  out.lambda = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  const double L = std::log(b / a);
  if (L < 1e-14) {
    out.inv_mean = 1.0 / a;
    out.inv_sq_mean = 1.0 / (a * a);
  } else {
    out.inv_mean = (b - a) / (a * b * L);
    out.inv_sq_mean = (b * b - a * a) / (2.0 * a * a * b * b * L);
  }
  const double alpha = out.inv_mean / out.inv_sq_mean;
  const double beta_t = spec.beta / out.inv_sq_mean;
  out.coefficient = alpha * out.lambda / (out.lambda * out.lambda + beta_t);
  const fem::Mesh mesh(spec.mesh);
  out.u = out.coefficient * mesh.interpolate([](double x1, double x2) {
    return std::sin(std::numbers::pi * x1) * std::sin(std::numbers::pi * x2);
  });
  return out;
}

// ---------------------------------------------------------------------------

AdvDiff5D::AdvDiff5D(AdvDiffSpec spec) : spec_(spec), mesh_(spec.mesh), law_(poly::uniform_box(5, 0.0, 1.0)) {
  if (!(spec.beta > 0.0)) throw std::invalid_argument("AdvDiff5D: beta must be positive");
  if (!(spec.sigma > 0.0)) throw std::invalid_argument("AdvDiff5D: sigma must be positive");
  K_ = fem::stiffness_matrix(mesh_);
  fem::AffineField ex;
  ex.c = {1.0, 0.0};
  Cx_ = fem::advection_matrix(mesh_, ex);
  fem::AffineField rot;
  rot.J << -1.0, 0.0, 0.0, 1.0;
  Cr_ = fem::advection_matrix(mesh_, rot);
}

fem::AffineField AdvDiff5D::wind(const Point& y) const {
  fem::AffineField V;
  V.c = {y[3], 0.0};
  V.J << -y[4], 0.0, 0.0, y[4];
  return V;
}

Vector AdvDiff5D::source(const Point& y) const {
  const double s2 = 2.0 * spec_.sigma * spec_.sigma;
  return mesh_.interpolate([&](double x1, double x2) {
    const double d1 = x1 - y[0], d2 = x2 - y[1];
    return std::exp(-(d1 * d1 + d2 * d2) / s2);
  });
}

fem::FemOperator AdvDiff5D::operator_at(const Point& y) const {
  if (y.size() != 5) throw std::invalid_argument("AdvDiff5D: parameter must have 5 entries");
  fem::SpMat A = diffusion(y) * K_ + y[3] * Cx_ + y[4] * Cr_;
  return fem::restrict_operator(mesh_, std::move(A), fem::Boundary::dirichlet_left, false);
}

double AdvDiff5D::objective(const Vector& u, const Point& y) const {
  const fem::Factorization F(operator_at(y));
  const Vector z = F.solve(mesh_.mass() * (source(y) - u));
  return 0.5 * inner(z, z) + 0.5 * spec_.beta * inner(u, u);
}

Vector AdvDiff5D::gradient(const Vector& u, const Point& y) const {
  Matrix U = u;
  return gradient_columns(U, y).col(0);
}

Matrix AdvDiff5D::gradient_columns(const Matrix& U, const Point& y) const {
  const fem::Factorization F(operator_at(y));
  const Vector f = source(y);
  const auto& M = mesh_.mass();
  Matrix G(U.rows(), U.cols());
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    const Vector z = F.solve(M * (f - U.col(j)));
    const Vector p = F.solve_transposed(M * z);
    G.col(j) = spec_.beta * U.col(j) - p;
  }
  if (spec_.metric == GradientMetric::euclidean) G = M * G;
  return G;
}

double AdvDiff5D::pairing(const Vector& g, const Vector& h) const {
  return spec_.metric == GradientMetric::l2 ? inner(g, h) : g.dot(h);
}

// ---------------------------------------------------------------------------

Vector quadrature_stationary_point(const ControlProblem& problem, const poly::QuadratureRule& rule, Exec ex) {
  const int n = problem.control_dim();
  Matrix U = Matrix::Zero(n, n + 1);
  U.rightCols(n).setIdentity();
  const std::size_t S = rule.size();
  std::vector<Matrix> cols(S);
  for_each_index(S, ex, [&](std::size_t i) { cols[i] = problem.gradient_columns(U, rule.node(i)); });
  Matrix H = Matrix::Zero(n, n);
  Vector c = Vector::Zero(n);
  for (std::size_t i = 0; i < S; ++i) {
    const double w = rule.weights[static_cast<Eigen::Index>(i)];
    c += w * cols[i].col(0);
    H += w * (cols[i].rightCols(n).colwise() - cols[i].col(0));
  }
  return H.fullPivLu().solve(-c);
}

double fd_gradient_error(const ControlProblem& problem, const Vector& u, const Point& y, const Vector& h,
                         double step) {
  const double fd = (problem.objective(u + step * h, y) - problem.objective(u - step * h, y)) / (2.0 * step);
  const double an = problem.pairing(problem.gradient(u, y), h);
  return std::abs(fd - an) / std::max(std::abs(an), 1e-300);
}

}  // namespace sglscv::problems

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sglscv/fem.hpp"
#include "sglscv/parallel.hpp"
#include "sglscv/polybasis.hpp"

namespace sglscv::problems {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using poly::Point;

/// Riesz representation used for gradients: L2 returns the function whose
/// L2(D) pairing gives the derivative, euclidean returns the assembled
/// derivative vector (mass matrix times the L2 gradient).
enum class GradientMetric { l2, euclidean };

class ControlProblem {
 public:
  virtual ~ControlProblem() = default;

  virtual std::string name() const = 0;
  virtual int control_dim() const = 0;
  /// Product reference measure rho of the parameter.
  virtual const std::vector<poly::Coordinate>& parameter_law() const = 0;
  int parameter_dim() const { return static_cast<int>(parameter_law().size()); }

  virtual double objective(const Vector& u, const Point& y) const = 0;
  virtual Vector gradient(const Vector& u, const Point& y) const = 0;
  /// Gradients at the columns of U for one parameter value.
  virtual Matrix gradient_columns(const Matrix& U, const Point& y) const;

  /// Control-space inner product (used for all reported errors).
  virtual double inner(const Vector& a, const Vector& b) const = 0;
  double norm(const Vector& a) const;
  /// Directional derivative dg(u; h) given the gradient at u.
  virtual double pairing(const Vector& grad, const Vector& h) const = 0;

  virtual std::optional<Vector> known_optimum() const { return std::nullopt; }
  /// Closed-form J(u) when available.
  virtual std::optional<double> expected_objective(const Vector&) const { return std::nullopt; }
};

/// g(u,y) = 1/2 |A(y)u - b(y)|^2 + beta/2 |u|^2 with A, b affine in y ~ U[-1,1].
class QuadraticToy final : public ControlProblem {
 public:
  /// noise scales the y-dependent parts; 0 gives a y-independent gradient.
  QuadraticToy(std::uint64_t seed, int dim = 4, double beta = 0.1, double noise = 1.0);

  std::string name() const override { return "quadratic_toy"; }
  int control_dim() const override { return static_cast<int>(A0_.cols()); }
  const std::vector<poly::Coordinate>& parameter_law() const override { return law_; }
  double objective(const Vector& u, const Point& y) const override;
  Vector gradient(const Vector& u, const Point& y) const override;
  double inner(const Vector& a, const Vector& b) const override { return a.dot(b); }
  double pairing(const Vector& g, const Vector& h) const override { return g.dot(h); }
  std::optional<Vector> known_optimum() const override { return optimum(); }
  std::optional<double> expected_objective(const Vector& u) const override;

  const Matrix& hessian() const { return H_; }
  Vector full_gradient(const Vector& u) const { return H_ * u - c_; }
  Vector optimum() const;
  double beta() const { return beta_; }

 private:
  Matrix A0_, A1_;
  Vector b0_, b1_;
  double beta_;
  Matrix H_;
  Vector c_;
  std::vector<poly::Coordinate> law_;
};

struct DiffusionSpec {
  double a = 0.01;
  double b = 2.0;
  double beta = 0.01;
  int mesh = 8;
  GradientMetric metric = GradientMetric::l2;

  bool operator==(const DiffusionSpec&) const = default;
};

/// -div(ytilde grad z) = u on the unit square, z = 0 on the boundary,
/// ytilde = a exp((y+1) log(b/a)/2), y ~ U[-1,1], target sin(pi x1) sin(pi x2).
class Diffusion1D final : public ControlProblem {
 public:
  explicit Diffusion1D(DiffusionSpec spec);

  std::string name() const override { return "diffusion_1d"; }
  int control_dim() const override { return mesh_.node_count(); }
  const std::vector<poly::Coordinate>& parameter_law() const override { return law_; }
  double objective(const Vector& u, const Point& y) const override;
  Vector gradient(const Vector& u, const Point& y) const override;
  double inner(const Vector& a, const Vector& b) const override { return fem::l2_inner(mesh_, a, b); }
  double pairing(const Vector& g, const Vector& h) const override;

  double coefficient(double y) const;
  Vector state(const Vector& u, double y) const;
  const fem::Mesh& mesh() const { return mesh_; }
  const Vector& target() const { return zd_; }
  const DiffusionSpec& spec() const { return spec_; }

 private:
  DiffusionSpec spec_;
  fem::Mesh mesh_;
  fem::FemOperator lap_;
  std::shared_ptr<const fem::Factorization> solver_;
  Vector zd_;
  std::vector<poly::Coordinate> law_;
};

struct AnalyticOptimum {
  double coefficient;  // u* = coefficient * z_d
  double lambda;
  double inv_mean;     // E[1/Y~]
  double inv_sq_mean;  // E[1/Y~^2]
  Vector u;            // nodal interpolant on the problem mesh
};

/// Closed-form optimum of the continuous 1D problem (target must be the
/// default eigenfunction).
AnalyticOptimum analytic_optimum(const DiffusionSpec& spec);

struct AdvDiffSpec {
  double beta = 1e-4;
  double sigma = 1.0;
  int mesh = 8;
  GradientMetric metric = GradientMetric::euclidean;

  bool operator==(const AdvDiffSpec&) const = default;
};

/// Advection-diffusion with a 5-dimensional uniform parameter on [0,1]^5:
/// source centre (y1,y2), diffusion 0.5+exp(y3-1), wind (y4 - y5 x1, y5 x2),
/// Dirichlet on the left edge and Neumann elsewhere.
class AdvDiff5D final : public ControlProblem {
 public:
  explicit AdvDiff5D(AdvDiffSpec spec);

  std::string name() const override { return "advdiff_5d"; }
  int control_dim() const override { return mesh_.node_count(); }
  const std::vector<poly::Coordinate>& parameter_law() const override { return law_; }
  double objective(const Vector& u, const Point& y) const override;
  Vector gradient(const Vector& u, const Point& y) const override;
  Matrix gradient_columns(const Matrix& U, const Point& y) const override;
  double inner(const Vector& a, const Vector& b) const override { return fem::l2_inner(mesh_, a, b); }
  double pairing(const Vector& g, const Vector& h) const override;

  double diffusion(const Point& y) const { return 0.5 + std::exp(y[2] - 1.0); }
  fem::AffineField wind(const Point& y) const;
  Vector source(const Point& y) const;
  fem::FemOperator operator_at(const Point& y) const;
  const fem::Mesh& mesh() const { return mesh_; }
  const AdvDiffSpec& spec() const { return spec_; }

 private:
  AdvDiffSpec spec_;
  fem::Mesh mesh_;
  fem::SpMat K_, Cx_, Cr_;
  std::vector<poly::Coordinate> law_;
};

/// Stationary point of the quadrature-discretized objective sum_i w_i g(u, y_i).
/// Every problem here is quadratic in u, so the gradient map is affine and is
/// recovered column by column.
Vector quadrature_stationary_point(const ControlProblem& problem, const poly::QuadratureRule& rule,
                                   Exec ex = Exec::parallel);

/// Central finite-difference check of the gradient along a direction h;
/// returns the relative error between the two directional derivatives.
double fd_gradient_error(const ControlProblem& problem, const Vector& u, const Point& y, const Vector& h,
                         double step = 1e-5);

}  // namespace sglscv::problems

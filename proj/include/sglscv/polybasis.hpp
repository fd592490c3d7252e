#pragma once

// Orthonormal polynomial bases over product reference measures, downward
// closed multi-index sets, Christoffel functions and Gauss rules.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sglscv::poly {

using Point = Eigen::VectorXd;

/// Orthonormal Legendre polynomial of degree n w.r.t. dy/2 on [-1,1].
double legendre_eval(int n, double y);

/// Orthonormal (probabilists') Hermite polynomial of degree n w.r.t. the
/// standard Gaussian density.
double hermite_eval(int n, double y);

// Fill out[0..nmax] with all orthonormal values up to degree nmax.
void legendre_all(int nmax, double y, std::span<double> out);
void hermite_all(int nmax, double y, std::span<double> out);

/// S_m(0) = sum_{j<m} H_j(0)^2, the minimum of the Hermite Christoffel sum.
double hermite_center_sum(int m);

/// One coordinate of a product reference measure rho.
struct Coordinate {
  enum class Law { uniform, gaussian };
  Law law = Law::uniform;
  double lo = -1.0;
  double hi = 1.0;

  static Coordinate uniform(double lo, double hi) { return {Law::uniform, lo, hi}; }
  static Coordinate gaussian() { return {Law::gaussian, 0.0, 1.0}; }

  /// Affine map of a uniform coordinate onto [-1,1]; identity for gaussian.
  double to_reference(double y) const;
  double from_reference(double t) const;
  bool operator==(const Coordinate&) const = default;
};

std::vector<Coordinate> uniform_box(int d, double lo, double hi);

using MultiIndex = std::vector<int>;

enum class IndexSetKind { hyperbolic_cross, total_degree, full_tensor };

/// Downward closed set of multi-indices in graded lexicographic order.
class MultiIndexSet {
 public:
  MultiIndexSet() = default;
  /// Sorts, removes duplicates and rejects sets that are not downward closed.
  MultiIndexSet(int dimension, std::vector<MultiIndex> indices);

  static MultiIndexSet build(IndexSetKind kind, int m, int d);

  int dimension() const { return dim_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const MultiIndex& operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }
  const std::vector<MultiIndex>& indices() const { return indices_; }

  bool contains(const MultiIndex& nu) const;
  bool is_subset_of(const MultiIndexSet& other) const;
  bool is_downward_closed() const;
  int max_degree() const;

  bool operator==(const MultiIndexSet&) const = default;

 private:
  int dim_ = 0;
  std::vector<MultiIndex> indices_;
};

/// Graded lexicographic comparison (total degree first, then lexicographic).
bool graded_less(const MultiIndex& a, const MultiIndex& b);

/// Tensorized orthonormal basis {phi_nu}. Column order is the index-set order,
/// or the append order after extended().
class BasisContext {
 public:
  BasisContext() = default;
  BasisContext(const MultiIndexSet& set, std::vector<Coordinate> coords);
  BasisContext(std::vector<MultiIndex> columns, std::vector<Coordinate> coords);

  /// Keeps the current columns and appends the indices of `larger` that are
  /// missing, in graded lexicographic order.
  BasisContext extended(const MultiIndexSet& larger) const;

  std::size_t size() const { return columns_.size(); }
  int dimension() const { return static_cast<int>(coords_.size()); }
  const std::vector<MultiIndex>& columns() const { return columns_; }
  const std::vector<Coordinate>& coordinates() const { return coords_; }
  int max_degree(int coordinate) const { return max_deg_[coordinate]; }

  void eval(const Point& y, std::span<double> out) const;
  Eigen::VectorXd eval(const Point& y) const;
  double sum_squares(const Point& y) const;

 private:
  void init();

  std::vector<MultiIndex> columns_;
  std::vector<Coordinate> coords_;
  std::vector<int> max_deg_;
};

/// k_{m,w}(y) = w(y) sum_nu phi_nu(y)^2.
double christoffel_inverse(const BasisContext& ctx, double w, const Point& y);

/// Nodes and probability weights (sum to one) of a quadrature rule.
struct QuadratureRule {
  Eigen::MatrixXd nodes;  // one row per node, one column per coordinate
  Eigen::VectorXd weights;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  Point node(std::size_t i) const { return nodes.row(static_cast<Eigen::Index>(i)).transpose(); }
};

/// n-point Gauss-Legendre rule for the uniform probability measure on [lo,hi].
QuadratureRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0);
/// n-point Gauss-Hermite rule for the standard Gaussian.
QuadratureRule gauss_hermite(int n);
/// Tensorized Gauss rule, n points per coordinate, matching each law.
QuadratureRule tensor_gauss(int n, const std::vector<Coordinate>& coords);

}  // namespace sglscv::poly

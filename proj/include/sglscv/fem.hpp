#pragma once

// P1 finite elements on a uniform diagonally split triangulation of the unit square.

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace sglscv::fem {

using SpMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

enum class Boundary { dirichlet_all, dirichlet_left, neumann };

class Mesh {
 public:
  explicit Mesh(int n);

  int resolution() const { return n_; }
  int node_count() const { return (n_ + 1) * (n_ + 1); }
  int triangle_count() const { return 2 * n_ * n_; }
  double h() const { return 1.0 / n_; }
  int node(int i, int j) const { return i + j * (n_ + 1); }
  Eigen::Vector2d coord(int k) const { return {(k % (n_ + 1)) * h(), (k / (n_ + 1)) * h()}; }
  const std::vector<std::array<int, 3>>& triangles() const { return tris_; }
  double area(int t) const;

  bool on_boundary(int k) const;
  bool on_left(int k) const { return k % (n_ + 1) == 0; }
  /// Nodes that carry unknowns under the boundary condition, ascending.
  std::vector<int> free_nodes(Boundary bc) const;

  const SpMat& mass() const { return *mass_; }
  Vector interpolate(const std::function<double(double, double)>& f) const;

 private:
  int n_;
  std::vector<std::array<int, 3>> tris_;
  std::shared_ptr<const SpMat> mass_;
};

/// V(x) = c + J x.
struct AffineField {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  Eigen::Vector2d operator()(const Eigen::Vector2d& x) const { return c + J * x; }
};

SpMat stiffness_matrix(const Mesh& mesh);
SpMat mass_matrix(const Mesh& mesh);
/// Entries int (V . grad phi_j) phi_i, by the edge-midpoint rule.
SpMat advection_matrix(const Mesh& mesh, const AffineField& V);

/// Galerkin operator restricted to the free nodes of a boundary condition.
struct FemOperator {
  SpMat full;
  SpMat free_block;
  std::vector<int> free;
  Boundary bc = Boundary::dirichlet_all;
  bool symmetric = true;
};

FemOperator assemble(const Mesh& mesh, double diffusion, const std::optional<AffineField>& advection, Boundary bc);
FemOperator restrict_operator(const Mesh& mesh, SpMat full, Boundary bc, bool symmetric);

/// Direct factorization of an operator's free block; solves A x = b or A^T x = b.
class Factorization {
 public:
  explicit Factorization(const FemOperator& op);
  /// load is a full nodal vector; the result is nodal with zero boundary values.
  Vector solve(const Vector& load) const;
  Vector solve_transposed(const Vector& load) const;

 private:
  Vector scatter(const Vector& xf) const;
  Vector gather(const Vector& b) const;

  std::vector<int> free_;
  int n_;
  bool symmetric_;
  std::unique_ptr<Eigen::SimplicialLLT<SpMat>> llt_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_, lut_;
};

Vector solve_state(const FemOperator& op, const Vector& load);

/// a^T M b.
double l2_inner(const Mesh& mesh, const Vector& a, const Vector& b);
double l2_norm(const Mesh& mesh, const Vector& a);

}  // namespace sglscv::fem

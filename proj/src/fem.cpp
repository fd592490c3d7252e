#include "sglscv/fem.hpp"

#include <cmath>
#include <stdexcept>

namespace sglscv::fem {

namespace {

struct Element {
  std::array<int, 3> v;
  double area;
  Eigen::Matrix<double, 3, 2> grad;  // row i: grad phi_i
  std::array<Eigen::Vector2d, 3> p;
};

Element element(const Mesh& mesh, const std::array<int, 3>& t) {
  Element e;
  e.v = t;
  for (int i = 0; i < 3; ++i) e.p[i] = mesh.coord(t[i]);
  Eigen::Matrix2d B;
  B.col(0) = e.p[1] - e.p[0];
  B.col(1) = e.p[2] - e.p[0];
  e.area = 0.5 * B.determinant();
  Eigen::Matrix<double, 3, 2> ref;
  ref << -1, -1, 1, 0, 0, 1;
  e.grad = ref * B.inverse();
  return e;
}

SpMat from_triplets(int n, const std::vector<Eigen::Triplet<double>>& t) {
  SpMat A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

}  // namespace

Mesh::Mesh(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("Mesh: resolution must be >= 1");
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      tris_.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1)});
      tris_.push_back({node(i, j), node(i + 1, j + 1), node(i, j + 1)});
    }
  mass_ = std::make_shared<const SpMat>(mass_matrix(*this));
}

double Mesh::area(int t) const { return element(*this, tris_[t]).area; }

bool Mesh::on_boundary(int k) const {
  const int i = k % (n_ + 1), j = k / (n_ + 1);
  return i == 0 || j == 0 || i == n_ || j == n_;
}

std::vector<int> Mesh::free_nodes(Boundary bc) const {
  std::vector<int> out;
  for (int k = 0; k < node_count(); ++k) {
    const bool fixed = bc == Boundary::dirichlet_all ? on_boundary(k) : bc == Boundary::dirichlet_left ? on_left(k) : false;
    if (!fixed) out.push_back(k);
  }
  return out;
}

Vector Mesh::interpolate(const std::function<double(double, double)>& f) const {
  Vector v(node_count());
  for (int k = 0; k < node_count(); ++k) {
    const auto x = coord(k);
    v[k] = f(x[0], x[1]);
  }
  return v;
}

SpMat stiffness_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& tri : mesh.triangles()) {
    const Element e = element(mesh, tri);
    const Eigen::Matrix3d K = e.area * e.grad * e.grad.transpose();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(e.v[a], e.v[b], K(a, b));
  }
  return from_triplets(mesh.node_count(), t);
}

SpMat mass_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& tri : mesh.triangles()) {
    const Element e = element(mesh, tri);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(e.v[a], e.v[b], e.area / 12.0 * (a == b ? 2.0 : 1.0));
  }
  return from_triplets(mesh.node_count(), t);
}

SpMat advection_matrix(const Mesh& mesh, const AffineField& V) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& tri : mesh.triangles()) {
    const Element e = element(mesh, tri);
    Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const int a = k, b = (k + 1) % 3;
      const Eigen::Vector2d mid = 0.5 * (e.p[a] + e.p[b]);
      const Eigen::Vector3d conv = e.grad * V(mid);  // V . grad phi_j
      // phi_a = phi_b = 1/2 at the midpoint, the third vanishes
      C.row(a) += 0.5 * conv.transpose();
      C.row(b) += 0.5 * conv.transpose();
    }
    C *= e.area / 3.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(e.v[a], e.v[b], C(a, b));
  }
  return from_triplets(mesh.node_count(), t);
}

FemOperator restrict_operator(const Mesh& mesh, SpMat full, Boundary bc, bool symmetric) {
  FemOperator op;
  op.free = mesh.free_nodes(bc);
  op.bc = bc;
  op.symmetric = symmetric;
  std::vector<int> map(mesh.node_count(), -1);
  for (std::size_t i = 0; i < op.free.size(); ++i) map[op.free[i]] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < full.outerSize(); ++k)
    for (SpMat::InnerIterator it(full, k); it; ++it) {
      const int r = map[it.row()], c = map[it.col()];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  op.free_block = from_triplets(static_cast<int>(op.free.size()), t);
  op.full = std::move(full);
  return op;
}

FemOperator assemble(const Mesh& mesh, double diffusion, const std::optional<AffineField>& advection, Boundary bc) {
  if (!(diffusion > 0.0)) throw std::invalid_argument("assemble: diffusion coefficient must be positive");
  SpMat A = diffusion * stiffness_matrix(mesh);
  if (advection) A += advection_matrix(mesh, *advection);
  return restrict_operator(mesh, std::move(A), bc, !advection.has_value());
}

Factorization::Factorization(const FemOperator& op)
    : free_(op.free), n_(static_cast<int>(op.full.rows())), symmetric_(op.symmetric) {
  if (symmetric_) {
    llt_ = std::make_unique<Eigen::SimplicialLLT<SpMat>>(op.free_block);
    if (llt_->info() != Eigen::Success) throw std::runtime_error("Factorization: singular or indefinite system; check boundary conditions");
  } else {
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->compute(op.free_block);
    if (lu_->info() != Eigen::Success) throw std::runtime_error("Factorization: singular system; check boundary conditions");
    const SpMat At = op.free_block.transpose();
    lut_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lut_->compute(At);
    if (lut_->info() != Eigen::Success) throw std::runtime_error("Factorization: singular transposed system");
  }
}

Vector Factorization::gather(const Vector& b) const {
  if (b.size() != n_) throw std::invalid_argument("Factorization: load vector size mismatch");
  Vector bf(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t i = 0; i < free_.size(); ++i) bf[static_cast<Eigen::Index>(i)] = b[free_[i]];
  return bf;
}

Vector Factorization::scatter(const Vector& xf) const {
  Vector x = Vector::Zero(n_);
  for (std::size_t i = 0; i < free_.size(); ++i) x[free_[i]] = xf[static_cast<Eigen::Index>(i)];
  return x;
}

Vector Factorization::solve(const Vector& load) const {
  const Vector bf = gather(load);
  return scatter(symmetric_ ? Vector(llt_->solve(bf)) : Vector(lu_->solve(bf)));
}

Vector Factorization::solve_transposed(const Vector& load) const {
  if (symmetric_) return solve(load);
  return scatter(lut_->solve(gather(load)));
}

Vector solve_state(const FemOperator& op, const Vector& load) { return Factorization(op).solve(load); }

double l2_inner(const Mesh& mesh, const Vector& a, const Vector& b) {
  if (a.size() != mesh.node_count() || b.size() != mesh.node_count())
    throw std::invalid_argument("l2_inner: vector size mismatch");
  return a.dot(mesh.mass() * b);
}

double l2_norm(const Mesh& mesh, const Vector& a) { return std::sqrt(std::max(0.0, l2_inner(mesh, a, a))); }

}  // namespace sglscv::fem

#include "sglscv/polybasis.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace sglscv::poly {

void legendre_all(int nmax, double y, std::span<double> out) {
  assert(static_cast<int>(out.size()) > nmax);
  out[0] = 1.0;
  if (nmax == 0) return;
  out[1] = std::sqrt(3.0) * y;
  for (int n = 1; n < nmax; ++n) {
    const double a = std::sqrt((2.0 * n + 3.0) * (2.0 * n + 1.0)) / (n + 1.0);
    const double b = n / (n + 1.0) * std::sqrt((2.0 * n + 3.0) / (2.0 * n - 1.0));
    out[n + 1] = a * y * out[n] - b * out[n - 1];
  }
}

void hermite_all(int nmax, double y, std::span<double> out) {
  assert(static_cast<int>(out.size()) > nmax);
  out[0] = 1.0;
  if (nmax == 0) return;
  out[1] = y;
  for (int n = 1; n < nmax; ++n)
    out[n + 1] = (y * out[n] - std::sqrt(static_cast<double>(n)) * out[n - 1]) / std::sqrt(n + 1.0);
}

double legendre_eval(int n, double y) {
  if (n < 0) throw std::invalid_argument("legendre_eval: negative degree");
  assert(y >= -1.0 - 1e-12 && y <= 1.0 + 1e-12);
  std::vector<double> v(n + 1);
  legendre_all(n, y, v);
  return v[n];
}

double hermite_eval(int n, double y) {
  if (n < 0) throw std::invalid_argument("hermite_eval: negative degree");
  std::vector<double> v(n + 1);
  hermite_all(n, y, v);
  return v[n];
}

double hermite_center_sum(int m) {
  if (m < 1) throw std::invalid_argument("hermite_center_sum: m must be >= 1");
  std::vector<double> v(m);
  hermite_all(m - 1, 0.0, v);
  double s = 0.0;
  for (double h : v) s += h * h;
  return s;
}

double Coordinate::to_reference(double y) const {
  if (law == Law::gaussian) return y;
  return (2.0 * y - lo - hi) / (hi - lo);
}

double Coordinate::from_reference(double t) const {
  if (law == Law::gaussian) return t;
  return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
}

std::vector<Coordinate> uniform_box(int d, double lo, double hi) {
  return std::vector<Coordinate>(static_cast<std::size_t>(d), Coordinate::uniform(lo, hi));
}

// ---------------------------------------------------------------------------
// multi-index sets

static int total(const MultiIndex& a) { return std::accumulate(a.begin(), a.end(), 0); }

bool graded_less(const MultiIndex& a, const MultiIndex& b) {
  const int ta = total(a), tb = total(b);
  if (ta != tb) return ta < tb;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

MultiIndexSet::MultiIndexSet(int dimension, std::vector<MultiIndex> indices)
    : dim_(dimension), indices_(std::move(indices)) {
  if (dim_ < 1) throw std::invalid_argument("MultiIndexSet: dimension must be >= 1");
  for (const auto& nu : indices_) {
    if (static_cast<int>(nu.size()) != dim_)
      throw std::invalid_argument("MultiIndexSet: index length differs from dimension");
    if (std::any_of(nu.begin(), nu.end(), [](int v) { return v < 0; }))
      throw std::invalid_argument("MultiIndexSet: negative entry");
  }
  std::sort(indices_.begin(), indices_.end(), graded_less);
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (!is_downward_closed()) throw std::invalid_argument("MultiIndexSet: set is not downward closed");
}

namespace {

template <class Accept>
void enumerate(int d, int bound, MultiIndex& cur, int pos, const Accept& accept, std::vector<MultiIndex>& out) {
  if (pos == d) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= bound; ++v) {
    cur[pos] = v;
    if (!accept(cur, pos)) break;
    enumerate(d, bound, cur, pos + 1, accept, out);
  }
  cur[pos] = 0;
}

}  // namespace

MultiIndexSet MultiIndexSet::build(IndexSetKind kind, int m, int d) {
  if (d < 1) throw std::invalid_argument("build_index_set: d must be >= 1");
  if (m < 0) throw std::invalid_argument("build_index_set: m must be >= 0");
  std::vector<MultiIndex> out;
  MultiIndex cur(d, 0);
  switch (kind) {
    case IndexSetKind::hyperbolic_cross: {
      auto ok = [m](const MultiIndex& nu, int pos) {
        long long p = 1;
        for (int j = 0; j <= pos; ++j) p *= nu[j] + 1;
        return p <= m + 1;
      };
      enumerate(d, m, cur, 0, ok, out);
      break;
    }
    case IndexSetKind::total_degree: {
      auto ok = [m](const MultiIndex& nu, int pos) {
        int s = 0;
        for (int j = 0; j <= pos; ++j) s += nu[j];
        return s <= m;
      };
      enumerate(d, m, cur, 0, ok, out);
      break;
    }
    case IndexSetKind::full_tensor:
      enumerate(d, m, cur, 0, [](const MultiIndex&, int) { return true; }, out);
      break;
  }
  return MultiIndexSet(d, std::move(out));
}

bool MultiIndexSet::contains(const MultiIndex& nu) const {
  return std::binary_search(indices_.begin(), indices_.end(), nu, graded_less);
}

bool MultiIndexSet::is_subset_of(const MultiIndexSet& other) const {
  if (other.dim_ != dim_ && !indices_.empty()) return false;
  return std::all_of(indices_.begin(), indices_.end(), [&](const MultiIndex& nu) { return other.contains(nu); });
}

bool MultiIndexSet::is_downward_closed() const {
  for (const auto& nu : indices_) {
    MultiIndex pred = nu;
    for (int j = 0; j < dim_; ++j) {
      if (nu[j] == 0) continue;
      --pred[j];
      if (!contains(pred)) return false;
      ++pred[j];
    }
  }
  return true;
}

int MultiIndexSet::max_degree() const {
  int m = 0;
  for (const auto& nu : indices_)
    for (int v : nu) m = std::max(m, v);
  return m;
}

// ---------------------------------------------------------------------------
// basis

BasisContext::BasisContext(const MultiIndexSet& set, std::vector<Coordinate> coords)
    : columns_(set.indices()), coords_(std::move(coords)) {
  init();
}

BasisContext::BasisContext(std::vector<MultiIndex> columns, std::vector<Coordinate> coords)
    : columns_(std::move(columns)), coords_(std::move(coords)) {
  init();
}

void BasisContext::init() {
  if (columns_.empty()) throw std::invalid_argument("BasisContext: empty index set");
  const int d = dimension();
  max_deg_.assign(d, 0);
  for (const auto& nu : columns_) {
    if (static_cast<int>(nu.size()) != d)
      throw std::invalid_argument("BasisContext: index length differs from coordinate count");
    for (int j = 0; j < d; ++j) max_deg_[j] = std::max(max_deg_[j], nu[j]);
  }
  if (std::any_of(columns_[0].begin(), columns_[0].end(), [](int v) { return v != 0; }))
    throw std::invalid_argument("BasisContext: first column must be the zero index");
}

BasisContext BasisContext::extended(const MultiIndexSet& larger) const {
  std::vector<MultiIndex> cols = columns_;
  std::vector<MultiIndex> sorted = columns_;
  std::sort(sorted.begin(), sorted.end(), graded_less);
  for (const auto& nu : larger) {
    if (!std::binary_search(sorted.begin(), sorted.end(), nu, graded_less)) cols.push_back(nu);
  }
  return BasisContext(std::move(cols), coords_);
}

void BasisContext::eval(const Point& y, std::span<double> out) const {
  const int d = dimension();
  if (y.size() != d) throw std::invalid_argument("basis_eval: point dimension mismatch");
  assert(out.size() >= columns_.size());
  int stride = 0;
  for (int v : max_deg_) stride = std::max(stride, v + 1);
  std::vector<double> uni(static_cast<std::size_t>(stride * d));
  for (int j = 0; j < d; ++j) {
    std::span<double> row(uni.data() + j * stride, max_deg_[j] + 1);
    const double t = coords_[j].to_reference(y[j]);
    if (coords_[j].law == Coordinate::Law::uniform)
      legendre_all(max_deg_[j], t, row);
    else
      hermite_all(max_deg_[j], t, row);
  }
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    double p = 1.0;
    for (int j = 0; j < d; ++j) p *= uni[j * stride + columns_[c][j]];
    out[c] = p;
  }
}

Eigen::VectorXd BasisContext::eval(const Point& y) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
  eval(y, std::span<double>(v.data(), size()));
  return v;
}

double BasisContext::sum_squares(const Point& y) const { return eval(y).squaredNorm(); }

double christoffel_inverse(const BasisContext& ctx, double w, const Point& y) {
  return w * ctx.sum_squares(y);
}

// ---------------------------------------------------------------------------
// Gauss rules (Golub-Welsch)

static QuadratureRule golub_welsch(int n, const std::function<double(int)>& offdiag) {
  if (n < 1) throw std::invalid_argument("gauss rule: node count must be >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = offdiag(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule q;
  q.nodes = es.eigenvalues();
  q.weights = es.eigenvectors().row(0).transpose().array().square();
  q.weights /= q.weights.sum();
  return q;
}

QuadratureRule gauss_legendre(int n, double lo, double hi) {
  auto q = golub_welsch(n, [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); });
  q.nodes = (0.5 * (lo + hi) + 0.5 * (hi - lo) * q.nodes.array()).matrix();
  return q;
}

QuadratureRule gauss_hermite(int n) {
  return golub_welsch(n, [](int k) { return std::sqrt(static_cast<double>(k)); });
}

QuadratureRule tensor_gauss(int n, const std::vector<Coordinate>& coords) {
  const int d = static_cast<int>(coords.size());
  if (d < 1) throw std::invalid_argument("tensor_gauss: no coordinates");
  std::vector<QuadratureRule> rules;
  for (const auto& c : coords)
    rules.push_back(c.law == Coordinate::Law::uniform ? gauss_legendre(n, c.lo, c.hi) : gauss_hermite(n));
  long long total = 1;
  for (int j = 0; j < d; ++j) {
    total *= n;
    if (total > 50'000'000) throw std::invalid_argument("tensor_gauss: grid of " + std::to_string(total) + "+ nodes is too large");
  }
  QuadratureRule q;
  q.nodes.resize(total, d);
  q.weights.resize(total);
  std::vector<int> idx(d, 0);
  for (long long i = 0; i < total; ++i) {
    double w = 1.0;
    for (int j = 0; j < d; ++j) {
      q.nodes(i, j) = rules[j].nodes(idx[j], 0);
      w *= rules[j].weights[idx[j]];
    }
    q.weights[i] = w;
    for (int j = d - 1; j >= 0; --j) {
      if (++idx[j] < n) break;
      idx[j] = 0;
    }
  }
  return q;
}

}  // namespace sglscv::poly

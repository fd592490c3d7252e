#include "sglscv/leastsq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace sglscv::lsq {

Matrix build_vandermonde(const std::vector<poly::Point>& points, const poly::BasisContext& ctx) {
  Matrix V(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(ctx.size()));
  for (std::size_t i = 0; i < points.size(); ++i) V.row(static_cast<Eigen::Index>(i)) = ctx.eval(points[i]).transpose();
  return V;
}

Matrix build_vandermonde(const Memory& memory, const poly::BasisContext& ctx, std::size_t first) {
  std::vector<poly::Point> pts;
  for (std::size_t i = first; i < memory.size(); ++i) pts.push_back(memory[i].y);
  return build_vandermonde(pts, ctx);
}

Matrix gram(const Matrix& V, const Vector& w, double s) {
  Matrix G = V.transpose() * w.asDiagonal() * V / s;
  return 0.5 * (G + G.transpose());
}

bool conditioning_check(const Matrix& G, double delta) {
  const auto m = G.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(G - Matrix::Identity(m, m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff() <= delta;
}

bool conditioning_check_fast(const Matrix& G, double delta) {
  const auto m = G.rows();
  const Matrix I = Matrix::Identity(m, m);
  Eigen::LLT<Matrix> lo(G - (1.0 - delta) * I);
  if (lo.info() != Eigen::Success) return false;
  Eigen::LLT<Matrix> hi((1.0 + delta) * I - G);
  return hi.info() == Eigen::Success;
}

// ---------------------------------------------------------------------------
// QRState

QRState::QRState(const Matrix& A, const Matrix& B, QMode mode) { reset(A, B, mode); }

void QRState::reset(const Matrix& A, const Matrix& B) { reset(A, B, mode_); }

void QRState::reset(const Matrix& A, const Matrix& B, QMode mode) {
  if (A.rows() != B.rows()) throw std::invalid_argument("QRState: A and B row counts differ");
  mode_ = mode;
  s_ = static_cast<std::size_t>(A.rows());
  m_ = static_cast<std::size_t>(A.cols());
  n_ = static_cast<std::size_t>(B.cols());
  const auto cap = static_cast<Eigen::Index>(2 * s_ + 16);
  front_ = 8;
  Qbuf_.setZero(cap, mode_ == QMode::stored ? static_cast<Eigen::Index>(m_) : 0);
  Abuf_.setZero(cap, static_cast<Eigen::Index>(m_));
  Bbuf_.setZero(cap, static_cast<Eigen::Index>(n_));
  Abuf_.block(front_, 0, s_, m_) = A;
  Bbuf_.block(front_, 0, s_, n_) = B;
  updates_ = 0;
  refactor();
}

void QRState::refactor() {
  if (s_ < m_) throw std::invalid_argument("QRState: fewer rows than columns");
  const Matrix A = this->A();
  Eigen::HouseholderQR<Matrix> h(A);
  const auto s = static_cast<Eigen::Index>(s_), m = static_cast<Eigen::Index>(m_);
  R_ = h.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  if (mode_ == QMode::stored) {
    Qbuf_.block(front_, 0, s_, m_) = h.householderQ() * Matrix::Identity(s, m);
    Z_ = Q().transpose() * B();
  } else {
    Matrix QtB = B();
    QtB.applyOnTheLeft(h.householderQ().transpose());
    Z_ = QtB.topRows(m);
  }
}

double QRState::orthogonality_error() const {
  if (mode_ == QMode::implicit) throw std::logic_error("QRState::orthogonality_error: Q is not stored");
  const auto m = static_cast<Eigen::Index>(m_);
  return (Q().transpose() * Q() - Matrix::Identity(m, m)).cwiseAbs().maxCoeff();
}

void QRState::after_update() {
  ++updates_;
  if (mode_ == QMode::implicit) {
    if (check_interval_ != 0 && updates_ % std::max(check_interval_, s_) == 0) {
      refactor();
      ++refactors_;
    }
    return;
  }
  if (check_interval_ != 0 && updates_ % check_interval_ == 0 && orthogonality_error() > 1e-8) {
    refactor();
    ++refactors_;
  }
}

void QRState::ensure_room(bool at_front) {
  const auto cap = static_cast<std::size_t>(Qbuf_.rows());
  if (at_front ? front_ > 0 : front_ + s_ < cap) return;
  const std::size_t ncap = std::max(cap, 2 * (s_ + 1) + 16);
  const std::size_t slack = ncap - s_;
  const std::size_t nfront = at_front ? slack / 2 : std::max<std::size_t>(1, slack / 8);
  auto move = [&](Matrix& buf) {
    Matrix nb = Matrix::Zero(static_cast<Eigen::Index>(ncap), buf.cols());
    nb.middleRows(static_cast<Eigen::Index>(nfront), static_cast<Eigen::Index>(s_)) =
        buf.middleRows(static_cast<Eigen::Index>(front_), static_cast<Eigen::Index>(s_));
    buf.swap(nb);
  };
  move(Qbuf_);
  move(Abuf_);
  move(Bbuf_);
  front_ = nfront;
}

void QRState::append_row(const Vector& a, const Vector& b, bool at_front) {
  if (static_cast<std::size_t>(a.size()) != m_ || static_cast<std::size_t>(b.size()) != n_)
    throw std::invalid_argument("QRState::append_row: dimension mismatch");
  ensure_room(at_front);
  const std::size_t r = at_front ? front_ - 1 : front_ + s_;
  if (at_front) --front_;
  ++s_;
  const auto ri = static_cast<Eigen::Index>(r);
  Abuf_.row(ri) = a.transpose();
  Bbuf_.row(ri) = b.transpose();
  const bool stored = mode_ == QMode::stored;
  if (stored) Qbuf_.row(ri).setZero();

  const auto s = static_cast<Eigen::Index>(s_), m = static_cast<Eigen::Index>(m_), n = static_cast<Eigen::Index>(n_);
  const auto f = static_cast<Eigen::Index>(front_);
  if (stored) {
    work_.setZero(s);
    work_[ri - f] = 1.0;
  }
  Vector ra = a, zb = b;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double x = R_(j, j), y = ra[j];
    if (y == 0.0) continue;
    const double rr = std::hypot(x, y), c = x / rr, sn = y / rr;
    R_(j, j) = rr;
    ra[j] = 0.0;
    for (Eigen::Index l = j + 1; l < m; ++l) {
      const double t1 = R_(j, l), t2 = ra[l];
      R_(j, l) = c * t1 + sn * t2;
      ra[l] = -sn * t1 + c * t2;
    }
    for (Eigen::Index l = 0; l < n; ++l) {
      const double t1 = Z_(j, l), t2 = zb[l];
      Z_(j, l) = c * t1 + sn * t2;
      zb[l] = -sn * t1 + c * t2;
    }
    if (!stored) continue;
    double* q = Qbuf_.col(j).data() + f;
    for (Eigen::Index i = 0; i < s; ++i) {
      const double t1 = q[i], t2 = work_[i];
      q[i] = c * t1 + sn * t2;
      work_[i] = -sn * t1 + c * t2;
    }
  }
  after_update();
}

void QRState::delete_oldest_row() {
  if (s_ <= m_) throw std::logic_error("QRState::delete_oldest_row: would leave fewer rows than columns");
  if (mode_ == QMode::implicit) {
    downdate_implicit();
    return;
  }
  const auto s = static_cast<Eigen::Index>(s_), m = static_cast<Eigen::Index>(m_), n = static_cast<Eigen::Index>(n_);
  const auto f = static_cast<Eigen::Index>(front_);
  auto Qb = Qbuf_.block(f, 0, s, m);
  const Vector q = Qb.row(0).transpose();
  Vector u = -(Qb * q);
  u[0] += 1.0;
  u.noalias() -= Qb * (Qb.transpose() * u);
  const double gamma = u.norm();
  if (gamma < 1e-8) {
    ++front_;
    --s_;
    refactor();
    ++refactors_;
    return;
  }
  u /= gamma;
  Vector zx = Bbuf_.block(f, 0, s, n).transpose() * u;
  Vector rx = Vector::Zero(m);
  Vector v(m + 1);
  v.head(m) = q;
  v[m] = u[0];

  for (Eigen::Index k = m - 1; k >= 0; --k) {
    const double x = v[k], y = v[k + 1];
    if (y == 0.0) continue;
    const double rr = std::hypot(x, y), c = x / rr, sn = y / rr;
    v[k] = rr;
    v[k + 1] = 0.0;
    const bool last = (k + 1 == m);
    for (Eigen::Index l = k; l < m; ++l) {
      const double t1 = R_(k, l);
      double& b2 = last ? rx[l] : R_(k + 1, l);
      const double t2 = b2;
      R_(k, l) = c * t1 + sn * t2;
      b2 = -sn * t1 + c * t2;
    }
    for (Eigen::Index l = 0; l < n; ++l) {
      const double t1 = Z_(k, l);
      double& b2 = last ? zx[l] : Z_(k + 1, l);
      const double t2 = b2;
      Z_(k, l) = c * t1 + sn * t2;
      b2 = -sn * t1 + c * t2;
    }
    double* q1 = Qbuf_.col(k).data() + f;
    double* q2 = last ? u.data() : Qbuf_.col(k + 1).data() + f;
    for (Eigen::Index i = 0; i < s; ++i) {
      const double t1 = q1[i], t2 = q2[i];
      q1[i] = c * t1 + sn * t2;
      q2[i] = -sn * t1 + c * t2;
    }
  }

  // drop the leading augmented column and row
  if (m > 1) {
    R_.topRows(m - 1) = R_.bottomRows(m - 1).eval();
    Z_.topRows(m - 1) = Z_.bottomRows(m - 1).eval();
    for (Eigen::Index j = 0; j + 1 < m; ++j) Qbuf_.col(j).segment(f, s) = Qbuf_.col(j + 1).segment(f, s);
  }
  R_.row(m - 1) = rx.transpose();
  Z_.row(m - 1) = zx.transpose();
  Qbuf_.col(m - 1).segment(f, s) = u;
  for (Eigen::Index i = 1; i < m; ++i) R_.row(i).head(i).setZero();

  Qbuf_.row(f).setZero();
  ++front_;
  --s_;
  after_update();
}

// Row downdate without Q, as in LINPACK dchdd: rotations are built from
// p = R^{-T} a and applied to R and Z.
void QRState::downdate_implicit() {
  const auto m = static_cast<Eigen::Index>(m_), n = static_cast<Eigen::Index>(n_);
  const auto f = static_cast<Eigen::Index>(front_);
  Vector p = Abuf_.row(f).transpose();
  const Vector y = Bbuf_.row(f).transpose();
  ++front_;
  --s_;
  R_.transpose().triangularView<Eigen::Lower>().solveInPlace(p);
  const double norm2 = p.squaredNorm();
  if (!(norm2 < 1.0 - 1e-12)) {
    refactor();
    ++refactors_;
    return;
  }
  double alpha = std::sqrt(1.0 - norm2);
  Vector c(m), sn(m);
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    const double scale = alpha + std::abs(p[i]);
    const double a = alpha / scale, b = p[i] / scale, nrm = std::hypot(a, b);
    c[i] = a / nrm;
    sn[i] = b / nrm;
    alpha = scale * nrm;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    double xx = 0.0;
    for (Eigen::Index i = j; i >= 0; --i) {
      const double t = c[i] * xx + sn[i] * R_(i, j);
      R_(i, j) = c[i] * R_(i, j) - sn[i] * xx;
      xx = t;
    }
  }
  for (Eigen::Index l = 0; l < n; ++l) {
    double zeta = y[l];
    for (Eigen::Index i = 0; i < m; ++i) {
      Z_(i, l) = (Z_(i, l) - sn[i] * zeta) / c[i];
      zeta = c[i] * zeta - sn[i] * Z_(i, l);
    }
  }
  after_update();
}

void QRState::append_columns(const Matrix& C) {
  const auto k = C.cols();
  if (k == 0) return;
  if (static_cast<std::size_t>(C.rows()) != s_) throw std::invalid_argument("QRState::append_columns: row mismatch");
  if (m_ + static_cast<std::size_t>(k) > s_) throw std::invalid_argument("QRState::append_columns: more columns than rows");
  if (mode_ == QMode::implicit) {
    const auto m = static_cast<Eigen::Index>(m_);
    Abuf_.conservativeResize(Eigen::NoChange, m + k);
    Abuf_.rightCols(k).setZero();
    Abuf_.block(static_cast<Eigen::Index>(front_), m, static_cast<Eigen::Index>(s_), k) = C;
    m_ += static_cast<std::size_t>(k);
    refactor();
    return;
  }
  const auto s = static_cast<Eigen::Index>(s_), m = static_cast<Eigen::Index>(m_), f = static_cast<Eigen::Index>(front_);
  const Matrix Qb = Q();
  Matrix C1 = Qb.transpose() * C;
  Matrix Cr = C - Qb * C1;
  const Matrix C2 = Qb.transpose() * Cr;
  Cr.noalias() -= Qb * C2;
  C1 += C2;
  Eigen::HouseholderQR<Matrix> h(Cr);
  const Matrix Qr = h.householderQ() * Matrix::Identity(s, k);
  const Matrix Rr = h.matrixQR().topRows(k).triangularView<Eigen::Upper>();

  Qbuf_.conservativeResize(Eigen::NoChange, m + k);
  Abuf_.conservativeResize(Eigen::NoChange, m + k);
  Qbuf_.rightCols(k).setZero();
  Abuf_.rightCols(k).setZero();
  Qbuf_.block(f, m, s, k) = Qr;
  Abuf_.block(f, m, s, k) = C;

  Matrix R = Matrix::Zero(m + k, m + k);
  R.topLeftCorner(m, m) = R_;
  R.topRightCorner(m, k) = C1;
  R.bottomRightCorner(k, k) = Rr;
  R_.swap(R);
  Matrix Z(m + k, static_cast<Eigen::Index>(n_));
  Z.topRows(m) = Z_;
  Z.bottomRows(k) = Qr.transpose() * B();
  Z_.swap(Z);
  m_ += static_cast<std::size_t>(k);
  after_update();
}

Matrix QRState::gram() const {
  Matrix G = R_.transpose() * R_ / static_cast<double>(s_);
  return 0.5 * (G + G.transpose());
}

Matrix QRState::coefficients() const { return R_.triangularView<Eigen::Upper>().solve(Z_); }

void QRState::predict(const Vector& phi, Vector& value, Vector& mean) const {
  const auto m = static_cast<Eigen::Index>(m_);
  Matrix rhs = Matrix::Zero(m, 2);
  rhs.col(0) = phi;
  rhs(0, 1) = 1.0;
  R_.transpose().triangularView<Eigen::Lower>().solveInPlace(rhs);
  value.noalias() = Z_.transpose() * rhs.col(0);
  mean.noalias() = Z_.transpose() * rhs.col(1);
}

// ---------------------------------------------------------------------------

Vector FittedModel::operator()(const poly::BasisContext& ctx, const poly::Point& y) const {
  return coef.transpose() * ctx.eval(y);
}

Vector expectation_of_fit(const FittedModel& model) { return model.coef.row(0).transpose(); }

void weighted_system(const Memory& memory, const poly::BasisContext& ctx, const sampling::SamplingMeasure& measure,
                     std::size_t first, Matrix& A, Matrix& B) {
  if (first > memory.size()) throw std::invalid_argument("weighted_system: first beyond memory");
  const auto s = static_cast<Eigen::Index>(memory.size() - first);
  const auto m = static_cast<Eigen::Index>(ctx.size());
  const auto n = memory.empty() ? Eigen::Index{0} : memory[0].grad.size();
  A.resize(s, m);
  B.resize(s, n);
  for (Eigen::Index i = 0; i < s; ++i) {
    const Record& r = memory[first + static_cast<std::size_t>(i)];
    const double sw = std::sqrt(measure.weight(r.y));
    A.row(i) = sw * ctx.eval(r.y).transpose();
    B.row(i) = sw * r.grad.transpose();
  }
}

FittedModel conditioned_fit(const QRState& qr) {
  FittedModel out;
  if (conditioning_check(qr.gram())) {
    out.coef = qr.coefficients();
    out.conditioned = true;
  } else {
    out.coef = Matrix::Zero(static_cast<Eigen::Index>(qr.cols()), static_cast<Eigen::Index>(qr.data_cols()));
  }
  return out;
}

FittedModel conditioned_fit(const Memory& memory, const poly::BasisContext& ctx,
                            const sampling::SamplingMeasure& measure) {
  if (memory.size() < ctx.size()) throw std::invalid_argument("conditioned_fit: memory smaller than the space");
  Matrix A, B;
  weighted_system(memory, ctx, measure, 0, A, B);
  return conditioned_fit(QRState(A, B));
}

void rebuild_weights(QRState& state, const Memory& memory, const poly::BasisContext& ctx,
                     const sampling::SamplingMeasure& measure, std::size_t first) {
  Matrix A, B;
  weighted_system(memory, ctx, measure, first, A, B);
  state.reset(A, B);
}

}  // namespace sglscv::lsq

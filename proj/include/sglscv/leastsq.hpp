#pragma once

// Conditioned weighted least squares with an incrementally maintained thin QR
// of the weighted Vandermonde matrix.

#include <cstddef>

#include <Eigen/Dense>

#include "sglscv/memory.hpp"
#include "sglscv/polybasis.hpp"
#include "sglscv/sampling.hpp"

namespace sglscv::lsq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Row i holds basis values at record i of points.
Matrix build_vandermonde(const std::vector<poly::Point>& points, const poly::BasisContext& ctx);
Matrix build_vandermonde(const Memory& memory, const poly::BasisContext& ctx, std::size_t first = 0);

/// G = (1/s) V^T W V.
Matrix gram(const Matrix& V, const Vector& w, double s);

/// ||G - I||_2 <= 1/2 via symmetric eigenvalues.
bool conditioning_check(const Matrix& G, double delta = 0.5);
/// Same decision through two Cholesky definiteness tests on G - (1-delta)I
/// and (1+delta)I - G; used in the optimizer loop.
bool conditioning_check_fast(const Matrix& G, double delta = 0.5);

/// Whether the thin Q factor is kept. Without it, row updates touch only R and
/// Z (Cholesky-style up- and downdates, O(m^2 + mn) per row).
enum class QMode { stored, implicit };

/// Thin QR of A = sqrt(W) V (s x m) together with Z = Q^T B for a weighted
/// data block B = sqrt(W) Psi (s x n). A and B are kept as a snapshot so the
/// factors can be rebuilt at any time.
class QRState {
 public:
  QRState() = default;
  QRState(const Matrix& A, const Matrix& B, QMode mode = QMode::stored);

  std::size_t rows() const { return s_; }
  std::size_t cols() const { return m_; }
  std::size_t data_cols() const { return n_; }

  QMode mode() const { return mode_; }
  /// Only valid in QMode::stored.
  auto Q() const { return Qbuf_.block(front_, 0, s_, m_); }
  auto A() const { return Abuf_.block(front_, 0, s_, m_); }
  auto B() const { return Bbuf_.block(front_, 0, s_, n_); }
  const Matrix& R() const { return R_; }
  const Matrix& Z() const { return Z_; }

  /// Givens update; at_front places the row before the current first row.
  void append_row(const Vector& a, const Vector& b, bool at_front = false);
  /// Givens downdate of the first row.
  void delete_oldest_row();
  /// Appends columns C (s x k, current row order) by projection plus a
  /// Householder factorization of the re-orthogonalized residual.
  void append_columns(const Matrix& C);
  /// Factor a fresh snapshot from scratch.
  void reset(const Matrix& A, const Matrix& B);
  void reset(const Matrix& A, const Matrix& B, QMode mode);
  void refactor();

  double orthogonality_error() const;
  std::size_t refactor_count() const { return refactors_; }
  /// Orthogonality is tested every `interval` updates; 0 disables. In
  /// QMode::implicit the factors are instead rebuilt from the snapshot every
  /// max(interval, rows) updates.
  void set_check_interval(std::size_t interval) { check_interval_ = interval; }

  /// (1/s) R^T R.
  Matrix gram() const;
  /// R c = Z.
  Matrix coefficients() const;
  /// Evaluate the fit at basis values phi and its rho-mean (coefficient of the
  /// constant function, which sits in column 0) without forming coefficients.
  void predict(const Vector& phi, Vector& value, Vector& mean) const;

 private:
  void ensure_room(bool at_front);
  void after_update();
  void downdate_implicit();

  QMode mode_ = QMode::stored;
  std::size_t s_ = 0, m_ = 0, n_ = 0, front_ = 0;
  Matrix Qbuf_, Abuf_, Bbuf_;
  Matrix R_, Z_;
  Vector work_;
  std::size_t updates_ = 0;
  std::size_t check_interval_ = 512;
  std::size_t refactors_ = 0;
};

/// Coefficients in the basis column order, one column per data component.
struct FittedModel {
  Matrix coef;
  bool conditioned = false;

  Vector operator()(const poly::BasisContext& ctx, const poly::Point& y) const;
};

/// Coefficient of the constant basis function.
Vector expectation_of_fit(const FittedModel& model);

FittedModel conditioned_fit(const Memory& memory, const poly::BasisContext& ctx,
                            const sampling::SamplingMeasure& measure);
FittedModel conditioned_fit(const QRState& qr);

/// Weighted snapshot (A, B) of memory records [first, size) under a measure.
void weighted_system(const Memory& memory, const poly::BasisContext& ctx, const sampling::SamplingMeasure& measure,
                     std::size_t first, Matrix& A, Matrix& B);

/// Recompute every weight under a new measure and refactor.
void rebuild_weights(QRState& state, const Memory& memory, const poly::BasisContext& ctx,
                     const sampling::SamplingMeasure& measure, std::size_t first = 0);

}  // namespace sglscv::lsq

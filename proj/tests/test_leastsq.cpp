#include "doctest.h"
#include "sglscv/leastsq.hpp"

using namespace sglscv;
using lsq::Matrix;
using lsq::QMode;
using lsq::QRState;
using lsq::Vector;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, sampling::Stream& rng) {
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return M;
}

Matrix fresh_coefficients(const QRState& st) {
  return Matrix(st.A()).colPivHouseholderQr().solve(Matrix(st.B()));
}

}  // namespace

TEST_CASE("noiseless data in the span is recovered") {
  sampling::Stream rng(1, 0, 0);
  const Matrix A = random_matrix(40, 7, rng), C = random_matrix(7, 5, rng);
  for (auto mode : {QMode::stored, QMode::implicit}) {
    const QRState st(A, A * C, mode);
    CHECK((st.coefficients() - C).norm() < 1e-12);
  }
}

TEST_CASE("row updates match a fresh factorization") {
  for (auto mode : {QMode::stored, QMode::implicit}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      sampling::Stream rng(2, seed, 0);
      QRState st(random_matrix(12, 5, rng), random_matrix(12, 2, rng), mode);
      for (int k = 0; k < 500; ++k) {
        const double u = rng.uniform();
        if (u < 0.45 || st.rows() < 8) st.append_row(random_matrix(5, 1, rng), random_matrix(2, 1, rng));
        else if (u < 0.9) st.delete_oldest_row();
        else st.append_row(random_matrix(5, 1, rng), random_matrix(2, 1, rng), true);
      }
      const Matrix f = fresh_coefficients(st);
      CHECK((st.coefficients() - f).norm() / f.norm() < 1e-10);
      if (mode == QMode::stored) CHECK(st.orthogonality_error() < 1e-10);
    }
  }
}

TEST_CASE("appending columns extends the model") {
  sampling::Stream rng(3, 0, 0);
  for (auto mode : {QMode::stored, QMode::implicit}) {
    QRState st(random_matrix(30, 4, rng), random_matrix(30, 2, rng), mode);
    st.append_row(random_matrix(4, 1, rng), random_matrix(2, 1, rng));
    st.delete_oldest_row();
    st.append_columns(random_matrix(static_cast<Eigen::Index>(st.rows()), 2, rng));
    CHECK(st.cols() == 6);
    CHECK((st.coefficients() - fresh_coefficients(st)).norm() < 1e-10);
  }
}

TEST_CASE("implicit mode has no Q") {
  sampling::Stream rng(4, 0, 0);
  const QRState st(random_matrix(10, 3, rng), random_matrix(10, 1, rng), QMode::implicit);
  CHECK(st.mode() == QMode::implicit);
  CHECK_THROWS(st.orthogonality_error());
}

TEST_CASE("fast and eigenvalue conditioning checks agree") {
  sampling::Stream rng(5, 0, 0);
  for (int t = 0; t < 200; ++t) {
    const Matrix X = random_matrix(6, 6, rng);
    const double scale = 0.05 + 0.6 * rng.uniform();
    const Matrix G = Matrix::Identity(6, 6) + scale * (X + X.transpose()) / 2.0;
    CHECK(lsq::conditioning_check(G) == lsq::conditioning_check_fast(G));
  }
  CHECK(lsq::conditioning_check(Matrix::Identity(4, 4)));
  CHECK_FALSE(lsq::conditioning_check(2.0 * Matrix::Identity(4, 4)));
}

TEST_CASE("gram from the factor equals the explicit weighted gram") {
  sampling::Stream rng(6, 0, 0);
  const Matrix V = random_matrix(25, 4, rng);
  Vector w(25);
  for (int i = 0; i < 25; ++i) w[i] = 0.5 + rng.uniform();
  const Matrix A = w.cwiseSqrt().asDiagonal() * V;
  const QRState st(A, random_matrix(25, 1, rng));
  CHECK((st.gram() - lsq::gram(V, w, 25.0)).norm() < 1e-12);
}

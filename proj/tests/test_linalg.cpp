#include "doctest.h"

#include <limits>

#include "cbicl/errors.hpp"
#include "cbicl/linalg.hpp"
#include "cbicl/rng.hpp"
#include "helpers.hpp"

using namespace cbicl;

TEST_CASE("pinv_psd on textbook inputs") {
  const auto id = pinv_psd(Matrix::Identity(3, 3));
  CHECK(id.rank == 3);
  CHECK((id.inverse - Matrix::Identity(3, 3)).norm() < 1e-15);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const auto p = pinv_psd(d);
  CHECK(p.rank == 1);
  CHECK(p.inverse(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(p.inverse(1, 1)) < 1e-15);
  CHECK(std::abs(p.inverse(0, 1)) < 1e-15);
}

TEST_CASE("pinv_psd satisfies the Moore-Penrose conditions on random rank-deficient PSD matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = rng.uniform_int(2, 7);
    const int r = rng.uniform_int(1, k);
    Matrix b(k, r);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < r; ++j) b(i, j) = rng.normal();
    const Matrix a = symmetrized(b * b.transpose());
    const auto p = pinv_psd(a);
    CHECK(p.rank == r);
    const Matrix& x = p.inverse;
    const double scale = std::max(1.0, a.norm());
    CHECK((a * x * a - a).norm() < 1e-9 * scale);
    CHECK((x * a * x - x).norm() < 1e-9 * std::max(1.0, x.norm()));
    CHECK(((a * x).transpose() - a * x).norm() < 1e-9);
    CHECK((x - testing::reference_pinv(a)).norm() < 1e-7 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("pinv_psd rejects bad input") {
  Matrix ns(2, 2);
  ns << 1, 2, 0, 1;
  CHECK_THROWS_AS(pinv_psd(ns), Error);
  try {
    pinv_psd(ns);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
  Matrix nan = Matrix::Identity(2, 2);
  nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pinv_psd(nan), Error);
  CHECK_THROWS_AS(pinv_psd(Matrix::Zero(2, 3)), Error);
  CHECK_THROWS_AS(pinv_psd(Matrix::Identity(2, 2), 0.0), Error);
}

TEST_CASE("tolerance factor moves the rank cutoff") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 1e-14;
  CHECK(pinv_psd(a).rank == 2);
  CHECK(pinv_psd(a, 1e6).rank == 1);
}

TEST_CASE("lambda1_product agrees with a nonsymmetric eigen solve") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = rng.uniform_int(2, 6);
    Matrix ba(k, k), bb(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        ba(i, j) = rng.normal();
        bb(i, j) = rng.normal();
      }
    const Matrix a = symmetrized(ba * ba.transpose());
    const Matrix b = symmetrized(bb * bb.transpose() + 0.1 * Matrix::Identity(k, k));
    const double got = lambda1_product(a, pinv_psd(b));
    const double want = testing::reference_lambda1(a, b.inverse());
    CHECK(got == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("top_k_eigen_sum and lambda_max_sym") {
  Matrix d = Matrix::Zero(4, 4);
  d.diagonal() << 0.5, 3.0, 1.0, 2.0;
  CHECK(lambda_max_sym(d) == doctest::Approx(3.0));
  CHECK(top_k_eigen_sum(d, 1) == doctest::Approx(3.0));
  CHECK(top_k_eigen_sum(d, 2) == doctest::Approx(5.0));
  CHECK(top_k_eigen_sum(d, 10) == doctest::Approx(6.5));
}

TEST_CASE("pinv_sqrt squares to the pseudo-inverse") {
  Matrix a(3, 3);
  a << 2, 1, 0, 1, 2, 0, 0, 0, 0;
  const auto p = pinv_psd(a);
  const Matrix s = pinv_sqrt(p);
  CHECK((s * s - p.inverse).norm() < 1e-12);
}

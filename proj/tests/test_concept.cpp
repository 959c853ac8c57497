#include "doctest.h"

#include "cbicl/concept.hpp"
#include "cbicl/errors.hpp"
#include "helpers.hpp"

using namespace cbicl;
using testing::kInvSqrt2;

TEST_CASE("extract_concept on the worked embedding") {
  const auto e = testing::worked_embedding();
  const auto c1 = extract_concept(DemonstrationSet({{"a", e, 0}}));
  CHECK(c1.pool_rank == 2);
  CHECK(c1.coefficients(0) == doctest::Approx(kInvSqrt2).epsilon(1e-14));
  CHECK(c1.coefficients(1) == doctest::Approx(kInvSqrt2).epsilon(1e-14));

  // Posterior at the same embedding reads back the one-hot label.
  const auto p = predict_posterior(c1, {"q", e, std::nullopt});
  CHECK(p.values(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(p.values(1)) < 1e-14);
  CHECK(predict_label(p) == 0);
}

TEST_CASE("extract_concept with only the bias row") {
  Matrix raw = Matrix::Zero(1, 2);
  const auto e = normalize_embedding(raw);
  const auto c = extract_concept(DemonstrationSet({{"a", e, 1}, {"b", e, 0}}));
  CHECK(c.pool_rank == 1);
  CHECK(std::abs(c.coefficients(0)) < 1e-15);
  CHECK(c.coefficients(1) == doctest::Approx(kInvSqrt2).epsilon(1e-14));
  const auto p = predict_posterior(c, {"q", e, std::nullopt});
  CHECK(p.values(0) == doctest::Approx(0.5));
  CHECK(p.values(1) == doctest::Approx(0.5));
}

TEST_CASE("duplicating the whole demonstration set leaves alpha_hat unchanged") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = rng.uniform_int(2, 4);
    std::vector<Demonstration> demos;
    for (int i = 0; i < 3; ++i)
      demos.push_back({"d" + std::to_string(i), testing::random_embedding(rng, 3, m), rng.uniform_int(0, m - 1)});
    std::vector<Demonstration> twice = demos;
    twice.insert(twice.end(), demos.begin(), demos.end());
    const auto a = extract_concept(DemonstrationSet(demos));
    const auto b = extract_concept(DemonstrationSet(twice));
    CHECK((a.coefficients - b.coefficients).norm() < 1e-10);
  }
}

TEST_CASE("extract_concept matches a reference pseudo-inverse on singular pools") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = rng.uniform_int(2, 3);
    const int d = rng.uniform_int(3, 6);
    const auto e = testing::random_embedding(rng, d, m);
    const DemonstrationSet demos({{"a", e, 0}, {"b", e, m - 1}});
    const auto c = extract_concept(demos);
    CHECK(c.pool_rank < d + 1);
    const Vector want = testing::reference_pinv(gram_pool(demos).gram) * mean_feature(demos);
    CHECK((c.coefficients - want).norm() < 1e-8);
  }
}

TEST_CASE("posterior special cases") {
  Rng rng(23);
  const auto e = testing::random_embedding(rng, 3, 4);
  ConceptVector uniform;
  uniform.coefficients = Vector::Zero(4);
  uniform.coefficients(3) = 0.5;  // 1/sqrt(4)
  const auto p = predict_posterior(uniform, {"q", e, std::nullopt});
  for (int y = 0; y < 4; ++y) CHECK(p.values(y) == doctest::Approx(0.25).epsilon(1e-14));

  ConceptVector zero;
  zero.coefficients = Vector::Zero(4);
  CHECK(predict_posterior(zero, {"q", e, std::nullopt}).values.isZero(0.0));

  ConceptVector wrong;
  wrong.coefficients = Vector::Zero(3);
  try {
    predict_posterior(wrong, {"q", e, std::nullopt});
    FAIL("expected ShapeMismatch");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("argmax ties go to the lowest index") {
  Vector a(2), b(2), c(3);
  a << 1.0, 0.0;
  b << 0.5, 0.5;
  c << 0.1, 0.2, 0.9;
  CHECK(argmax_lowest(a) == 0);
  CHECK(argmax_lowest(b) == 0);
  CHECK(argmax_lowest(c) == 2);
}

TEST_CASE("squared_risk") {
  Vector truth(2), est(2);
  truth << 0.7121, 0.2879;
  est << 1.0, 0.0;
  const double want = 2.0 * 0.2879 * 0.2879;
  CHECK(squared_risk({est, "q"}, truth).value == doctest::Approx(want).epsilon(1e-12));
  CHECK(want == doctest::Approx(0.16578).epsilon(1e-4));
  CHECK(squared_risk({truth, "q"}, truth).value == 0.0);

  Vector one_hot(2), zero = Vector::Zero(2);
  one_hot << 1.0, 0.0;
  CHECK(squared_risk({zero, "q"}, one_hot).value == doctest::Approx(1.0));

  Vector bad(2);
  bad << 0.7, 0.7;
  CHECK_THROWS_AS(squared_risk({est, "q"}, bad), Error);
}

TEST_CASE("bias coordinate fixes the posterior sum") {
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = rng.uniform_int(2, 6);
    const int d = rng.uniform_int(1, 5);
    std::vector<Demonstration> demos;
    const int n = rng.uniform_int(1, 4);
    for (int i = 0; i < n; ++i)
      demos.push_back({"d" + std::to_string(i), testing::random_embedding(rng, d, m), rng.uniform_int(0, m - 1)});
    const auto c = extract_concept(DemonstrationSet(demos));
    const auto p = predict_posterior(c, {"q", testing::random_embedding(rng, d, m), std::nullopt});
    CHECK(p.values.sum() == doctest::Approx(std::sqrt(static_cast<double>(m)) * c.coefficients(d)).epsilon(1e-10));
  }
}

TEST_CASE("label permutation permutes the posterior") {
  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = rng.uniform_int(2, 5);
    const int d = rng.uniform_int(2, 5);
    std::vector<int> pi(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) pi[static_cast<std::size_t>(j)] = j;
    for (int j = m - 1; j > 0; --j) std::swap(pi[static_cast<std::size_t>(j)], pi[static_cast<std::size_t>(rng.uniform_int(0, j))]);
    // Column j of the permuted matrix is column pi[j] of the original.
    auto permute = [&](const EmbeddingMatrix& e) {
      Matrix out(e.K(), e.M());
      for (int j = 0; j < m; ++j) out.col(j) = e.matrix().col(pi[static_cast<std::size_t>(j)]);
      return EmbeddingMatrix::from_normalized(out);
    };
    auto inverse_label = [&](int y) {
      for (int j = 0; j < m; ++j)
        if (pi[static_cast<std::size_t>(j)] == y) return j;
      return -1;
    };
    std::vector<Demonstration> demos, permuted;
    for (int i = 0; i < 3; ++i) {
      const auto e = testing::random_embedding(rng, d, m);
      const int y = rng.uniform_int(0, m - 1);
      demos.push_back({"d", e, y});
      permuted.push_back({"d", permute(e), inverse_label(y)});
    }
    const auto q = testing::random_embedding(rng, d, m);
    const auto p = predict_posterior(extract_concept(DemonstrationSet(demos)), {"q", q, std::nullopt});
    const auto pp = predict_posterior(extract_concept(DemonstrationSet(permuted)), {"q", permute(q), std::nullopt});
    for (int j = 0; j < m; ++j) CHECK(pp.values(j) == doctest::Approx(p.values(pi[static_cast<std::size_t>(j)])).epsilon(1e-9));
    const int label = predict_label(p);
    const int plabel = predict_label(pp);
    // Exact ties resolve by index, which the permutation reorders.
    if ((p.values.array() >= p.values.maxCoeff() - 1e-9).count() == 1)
      CHECK(pi[static_cast<std::size_t>(plabel)] == label);
  }
}

#include "doctest.h"

#include "cbicl/errors.hpp"
#include "cbicl/lab.hpp"
#include "helpers.hpp"

using namespace cbicl;

namespace {

bool same_world(const SyntheticWorld& a, const SyntheticWorld& b) {
  if (a.alphabet_size() != b.alphabet_size()) return false;
  for (std::size_t x = 0; x < a.alphabet_size(); ++x)
    if (a.f(x) != b.f(x)) return false;
  return a.p_x == b.p_x && a.alpha == b.alpha && a.residual == b.residual && a.conditionals == b.conditionals;
}

std::vector<int> draw(Rng& rng, const SyntheticWorld& w, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(lab::draw_input(w.p_x, rng.uniform()));
  return out;
}

}  // namespace

TEST_CASE("generated worlds satisfy the model") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int m = rng.uniform_int(2, 5);
    const int k = rng.uniform_int(2, 6);
    const std::size_t x = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto w = lab::generate_world(seed, x, m, k);
    CHECK(w.complete());
    CHECK(w.alpha(k - 1) == 1.0 / std::sqrt(static_cast<double>(m)));
    CHECK(w.conditionals.minCoeff() >= 0.01 - 1e-12);
    for (std::size_t i = 0; i < x; ++i) CHECK(w.conditional(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.p_x.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(same_world(w, lab::generate_world(seed, x, m, k)));
  }
}

TEST_CASE("residual worlds hit the requested scale and stay orthogonal") {
  int exact = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto w = lab::generate_world(seed, 6, 3, 3, lab::Completeness{0.01});
    CHECK_FALSE(w.complete());
    validate_world(w);
    if (w.residual_shrink_steps == 0) {
      CHECK(std::abs(w.rho_achieved - 0.01) < 1e-6);
      ++exact;
    } else {
      CHECK(w.rho_achieved < 0.01);
    }
    // Matched seeds share everything but the residual.
    const auto c = lab::generate_world(seed, 6, 3, 3);
    CHECK(c.p_x == w.p_x);
    CHECK(c.alpha == w.alpha);
    for (std::size_t x = 0; x < 6; ++x) CHECK(c.f(x) == w.f(x));
    const auto fit = fit_concept_residual(w);
    CHECK(std::abs(mean_residual(fit, w.p_x) - w.rho_achieved) < 1e-10);
  }
  CHECK(exact > 50);
}

TEST_CASE("generator rejects bad shapes") {
  CHECK_THROWS_AS(lab::generate_world(1, 3, 1, 3), Error);
  CHECK_THROWS_AS(lab::generate_world(1, 3, 2, 1), Error);
  CHECK_THROWS_AS(lab::generate_world(1, 0, 2, 2), Error);
}

TEST_CASE("enumeration on the worked world") {
  const auto w = testing::worked_world();
  const double p = w.conditionals(0, 0);
  const std::vector<int> one{0}, two{0, 0};
  CHECK(lab::enumerate_risk(w, one, 0).value == doctest::Approx(2 * p * (1 - p)).epsilon(1e-12));
  CHECK(std::abs(lab::enumerate_risk(w, one, 0).value - 0.41) < 1e-12);
  CHECK(std::abs(lab::enumerate_risk(w, two, 0).value - 0.205) < 1e-12);
  CHECK(std::abs(lab::closed_form_risk(w, one, 0).value - 0.41) < 1e-12);
  CHECK(std::abs(lab::closed_form_risk(w, two, 0).value - 0.205) < 1e-12);
}

TEST_CASE("enumeration agrees with the independent concept path") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed + 50);
    const int m = rng.uniform_int(2, 3);
    const int k = rng.uniform_int(2, 5);
    const auto w = lab::generate_world(seed, 4, m, k, lab::Completeness{seed % 2 ? 0.01 : 0.0});
    const auto demos = draw(rng, w, rng.uniform_int(1, 4));
    const int q = lab::draw_input(w.p_x, rng.uniform());
    CHECK(lab::enumerate_risk(w, demos, q).value ==
          doctest::Approx(testing::brute_force_risk(w, demos, q)).epsilon(1e-10));
  }
}

TEST_CASE("closed form equals enumeration on complete worlds") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed + 77);
    const int m = rng.uniform_int(2, 4);
    const int k = rng.uniform_int(2, 6);
    const auto w = lab::generate_world(seed, 5, m, k);
    const auto demos = draw(rng, w, rng.uniform_int(1, 5));
    const int q = lab::draw_input(w.p_x, rng.uniform());
    CHECK(std::abs(lab::closed_form_risk(w, demos, q).value - lab::enumerate_risk(w, demos, q).value) <= 1e-9);
  }
  const auto incomplete = lab::generate_world(3, 6, 3, 3, lab::Completeness{0.01});
  const std::vector<int> demos{0, 1};
  CHECK_THROWS_AS(lab::closed_form_risk(incomplete, demos, 0), Error);
}

TEST_CASE("risk follows the 1/n law when the pool is repeated") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed + 99);
    const auto w = lab::generate_world(seed, 4, 2, 3);
    const auto base = draw(rng, w, 2);
    std::vector<int> tripled;
    for (int r = 0; r < 3; ++r) tripled.insert(tripled.end(), base.begin(), base.end());
    const int q = lab::draw_input(w.p_x, rng.uniform());
    const double a = lab::enumerate_risk(w, base, q).value;
    const double b = lab::enumerate_risk(w, tripled, q).value;
    Matrix fn = Matrix::Zero(3, 3);
    for (int x : base) fn += gram_query(w.embeddings[static_cast<std::size_t>(x)]);
    if (pinv_psd(symmetrized(fn / 2.0)).rank == 3) CHECK(std::abs(b - a / 3.0) <= 1e-9);
    else CHECK(b >= a / 3.0 - 1e-12);
  }
}

TEST_CASE("budget guard") {
  const auto w = lab::generate_world(1, 3, 4, 3);
  const std::vector<int> demos(7, 0);  // 4^7 > 4096
  try {
    lab::enumerate_risk(w, demos, 0);
    FAIL("expected BudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BudgetExceeded);
  }
  CHECK(lab::enumerate_risk(w, demos, 0, 1 << 14).value >= 0.0);
  CHECK(lab::outcome_count(4, 7) == 16384);
}

TEST_CASE("Monte Carlo matches the exact risk and is schedule independent") {
  const auto w = testing::worked_world();
  const std::vector<int> one{0};
  const auto mc = lab::montecarlo_risk(w, one, 0, 100000, 42);
  CHECK(std::abs(mc.value - 0.41) <= 4 * mc.standard_error);
  CHECK(mc.trials == 100000);
  const auto mc4 = lab::montecarlo_risk(w, one, 0, 100000, 42, 4);
  CHECK(mc4.value == mc.value);
  CHECK(mc4.standard_error == mc.standard_error);
  CHECK_THROWS_AS(lab::montecarlo_risk(w, one, 0, 99, 42), Error);

  Vector p_x(1);
  p_x << 1.0;
  Vector alpha(2);
  alpha << testing::kInvSqrt2, testing::kInvSqrt2;
  const auto det = make_world(p_x, {testing::worked_embedding()}, alpha, Matrix());
  const auto zero = lab::montecarlo_risk(det, one, 0, 1000, 1);
  CHECK(zero.value < 1e-25);
  CHECK(zero.standard_error < 1e-25);

  const auto g = lab::generate_world(8, 5, 3, 4, lab::Completeness{0.01});
  const std::vector<int> demos{0, 1, 2, 3};
  const auto avg = lab::montecarlo_averaged_risk(g, demos, 20000, 9, 3);
  const double exact = lab::enumerate_averaged_risk(g, demos).value;
  CHECK(std::abs(avg.value - exact) <= 4 * avg.standard_error);
  CHECK(avg.value == lab::montecarlo_averaged_risk(g, demos, 20000, 9, 1).value);
}

TEST_CASE("alpha_hat is unbiased") {
  int invertible = 0, singular = 0;
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    Rng rng(seed + 500);
    const int m = rng.uniform_int(2, 3);
    const int k = rng.uniform_int(2, 5);
    const auto w = lab::generate_world(seed, 4, m, k);
    const auto demos = draw(rng, w, rng.uniform_int(1, 4));
    Matrix fn = Matrix::Zero(k, k);
    for (int x : demos) fn += gram_query(w.embeddings[static_cast<std::size_t>(x)]);
    fn = symmetrized(fn / static_cast<double>(demos.size()));
    const auto inv = pinv_psd(fn);
    const Vector want = inv.rank == k ? Vector(w.alpha) : Vector(inv.inverse * fn * w.alpha);
    (inv.rank == k ? invertible : singular)++;
    CHECK((lab::expected_concept_exact(w, demos) - want).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK(invertible > 5);
  CHECK(singular > 5);
}

TEST_CASE("verification sweeps are deterministic across worker counts") {
  lab::TrialPlan plan;
  plan.seed = 123;
  plan.sweeps = 40;
  for (int theorem = 1; theorem <= 3; ++theorem) {
    plan.workers = 1;
    const auto a = lab::verify_theorem(plan, theorem);
    plan.workers = 3;
    const auto b = lab::verify_theorem(plan, theorem);
    CHECK(a.all_passed());
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) {
      CHECK(a.checks[i].bound == b.checks[i].bound);
      CHECK(*a.checks[i].risk == *b.checks[i].risk);
      CHECK(a.checks[i].terms == b.checks[i].terms);
      CHECK(a.checks[i].world_seed == b.checks[i].world_seed);
    }
    CHECK(a.summary == b.summary);
  }
  plan.sweeps = 4;
  plan.samples = 2000;
  const auto e = lab::verify_error_probability(plan);
  CHECK(e.checks.size() == 8);
  CHECK(e.all_passed());
}

TEST_CASE("each sweep configuration is reproducible on its own") {
  lab::TrialPlan plan;
  plan.seed = 9;
  plan.sweeps = 12;
  const auto full = lab::verify_theorem(plan, 1);
  plan.sweeps = 5;
  const auto prefix = lab::verify_theorem(plan, 1);
  for (std::size_t i = 0; i < prefix.checks.size(); ++i) {
    CHECK(prefix.checks[i].bound == full.checks[i].bound);
    CHECK(*prefix.checks[i].risk == *full.checks[i].risk);
  }
}

TEST_CASE("Monte Carlo fallback beyond the enumeration budget") {
  lab::TrialPlan plan;
  plan.seed = 5;
  plan.sweeps = 6;
  plan.n_min = plan.n_max = 6;
  plan.m_min = plan.m_max = 4;
  plan.enumeration_budget = 100;
  plan.mc_trials = 2000;
  const auto r = lab::verify_theorem(plan, 1);
  for (const auto& c : r.checks) {
    CHECK(c.risk_kind == "monte_carlo");
    CHECK(c.slack == doctest::Approx(4 * c.risk_standard_error));
  }
  CHECK(r.all_passed());
}

TEST_CASE("plan validation") {
  lab::TrialPlan plan;
  plan.sweeps = 0;
  CHECK_THROWS_AS(lab::verify_theorem(plan, 1), Error);
  plan.sweeps = 1;
  CHECK_THROWS_AS(lab::verify_theorem(plan, 4), Error);
  plan.n_min = 3;
  plan.n_max = 2;
  CHECK_THROWS_AS(lab::verify_theorem(plan, 1), Error);
}

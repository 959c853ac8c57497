#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/world.hpp"

namespace cbicl::lab {

/// rho <= 0 plants no residual (complete world).
struct Completeness {
  double rho = 0.0;

  static Completeness complete() { return {0.0}; }
  static Completeness residual(double rho) { return {rho}; }
  bool is_complete() const { return rho <= 0.0; }
};

/// Seeded synthetic world. Embeddings are Gaussian then normalized; the
/// concept has alpha_K = 1/sqrt(M) and uniform[-1,1] feature weights,
/// projected onto the identifiable span and halved until every
/// alpha^T f >= 0.01. A residual, when requested, is centered per input,
/// projected onto the P_X-weighted orthogonal complement of the features,
/// scaled to mean residual rho, and halved while any conditional leaves
/// [0,1]. GenerationFailed after 60 halvings.
SyntheticWorld generate_world(std::uint64_t seed, std::size_t alphabet, int labels, int features,
                              Completeness completeness = Completeness::complete());

/// Number of label outcomes M^n, saturating at SIZE_MAX.
std::size_t outcome_count(int labels, std::size_t n);

/// Exact expected risk by enumerating every y^n. BudgetExceeded when
/// M^n > budget.
RiskEstimate enumerate_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                            int query_input, std::size_t budget = 4096, double tol_factor = 1.0);

/// Exact expected risk averaged over queries drawn from P_X.
RiskEstimate enumerate_averaged_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                                     std::size_t budget = 4096, double tol_factor = 1.0);

/// Trace formula for the expected risk of a complete world, adding the
/// null-space penalty when F_n is singular. RegimeError on incomplete worlds.
RiskEstimate closed_form_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                              int query_input, double tol_factor = 1.0);

/// Monte Carlo estimate. Trial t draws its labels from a generator seeded
/// with stable_hash(seed, t), and losses are reduced in trial order, so the
/// result is bit-identical for any worker count. InvalidInput if trials < 100.
RiskEstimate montecarlo_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                             int query_input, std::size_t trials, std::uint64_t seed,
                             unsigned workers = 1, double tol_factor = 1.0);

/// P_X-averaged Monte Carlo risk with a combined standard error.
RiskEstimate montecarlo_averaged_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                                      std::size_t trials, std::uint64_t seed, unsigned workers = 1,
                                      double tol_factor = 1.0);

/// E[alpha_hat] over every y^n, by enumeration.
Vector expected_concept_exact(const SyntheticWorld& world, std::span<const int> demo_inputs,
                              std::size_t budget = 4096, double tol_factor = 1.0);

/// Sample an input index from P_X using one uniform draw.
int draw_input(const Vector& p_x, double u);

struct TrialPlan {
  std::uint64_t seed = 0;
  std::size_t sweeps = 100;
  int n_min = 1;
  int n_max = 5;
  int m_min = 2;
  int m_max = 4;
  int k_max = 6;
  std::size_t enumeration_budget = 4096;
  std::size_t mc_trials = 20000;
  std::size_t samples = 100000;  // per distribution, error-probability checks
  unsigned workers = 1;
  double tol_factor = 1.0;
  std::vector<double> rho_levels{0.0, 0.005, 0.02};
};

struct VerificationReport {
  std::uint64_t world_seed = 0;
  std::string theorem;
  TrialPlan plan;
  std::vector<BoundReport> checks;
  double pass_rate = 0.0;
  double runtime_ms = 0.0;
  std::vector<std::pair<std::string, double>> summary;

  bool all_passed() const { return !checks.empty() && pass_rate == 1.0; }
};

/// Sweep plan.sweeps seeded configurations for theorem 1, 2 or 3. Each
/// configuration is reproducible from (plan.seed, index) alone and the sweep
/// aggregates by configuration index regardless of plan.workers.
VerificationReport verify_theorem(const TrialPlan& plan, int theorem);

/// Adversarial search over plan.sweeps random label distributions with
/// plan.samples estimates each: checks the Lemma-2 floor on single
/// estimates and the Theorem-4 floor on two-point mixtures.
VerificationReport verify_error_probability(const TrialPlan& plan);

}  // namespace cbicl::lab

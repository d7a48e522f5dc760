#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fqme/basis.hpp"
#include "fqme/dataset.hpp"
#include "fqme/estimate.hpp"

namespace fqme {

struct SimexConfig {
  std::vector<double> lambdas;  // at least three distinct values
  int S = 100;                  // error draws per λ
  std::uint64_t rng_seed = 0;

  // λ = 0, 0.25, …, 2.
  static SimexConfig simulation_default();
  // λ = 0.0001, 0.0501, …, 2.0001.
  static SimexConfig application_default();

  void validate() const;
};

struct SimexTrajectory {
  std::vector<double> lambdas;
  Eigen::MatrixXd theta_bar;      // lambdas × p, averaged over the S draws
  Eigen::VectorXd extrapolated;   // quadratic in λ evaluated at λ = −1
  Eigen::VectorXd naive_at_zero;  // the same quadratic at λ = 0
  double clipped_mass = 0.0;      // negative eigenvalue mass removed from Σ̂_u1
};

struct SimexResult {
  SimexTrajectory trajectory;
  EstimateSet estimate;  // from the extrapolated coefficients
  EstimateSet naive;     // from naive_at_zero
};

// Replicate-deviation covariance of basis coefficients. `coefficients[i]` is the
// J_i × K matrix of subject i's per-day projections. Deviations from the subject
// mean are pooled and divided by Σ(J_i − 1), which is n(J − 1) when balanced.
Eigen::MatrixXd estimate_error_covariance(const std::vector<Eigen::MatrixXd>& coefficients);

// Σᵢ Σₗ (W₂ᵢₗ − W̄₂ᵢ·)² / (n(L − 1)) for a balanced n × L matrix.
double estimate_scalar_error_variance(const Eigen::Ref<const Eigen::MatrixXd>& W2);
// Ragged version; the divisor is Σ(L_i − 1).
double estimate_scalar_error_variance(const ScalarReplicates& W2);

// Least-squares fit of φ₀ + φ₁λ + φ₂λ², returned as (φ₀, φ₁, φ₂).
Eigen::Vector3d fit_quadratic(const std::vector<double>& lambdas, const Eigen::Ref<const Eigen::VectorXd>& values);
// φ₀ − φ₁ + φ₂ from the fit above.
double quadratic_extrapolate(const std::vector<double>& lambdas, const Eigen::Ref<const Eigen::VectorXd>& values);

// Full SIMEX at one quantile level with the basis held fixed. Each draw s
// generates one set of subject-mean errors Ū₁ᵢ ~ MVN(0, Σ̂_u1/J_i) and
// Ū₂ᵢ ~ N(0, σ̂²_u2/L_i), reused for every λ. Inner fits run on `jobs` threads;
// the result does not depend on the thread count.
SimexResult simex_fit(const FunctionalDataset& data, const SplineBasis& basis, double tau,
                      const SimexConfig& config, const SolverOptions& solver = {}, int jobs = 1);

// Long CSV with header lambda,coefficient,estimate. The extrapolated
// coefficients are written with lambda = -1.
void write_trajectory_csv(std::ostream& out, const SimexTrajectory& trajectory);

}  // namespace fqme

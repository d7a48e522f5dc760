#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fqme/dataset.hpp"
#include "fqme/estimate.hpp"
#include "fqme/rng.hpp"
#include "fqme/simex.hpp"

namespace fqme {

struct FitOptions {
  int degree = 3;
  std::vector<int> candidate_K = {4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  int fixed_K = 0;    // > 0 skips BIC selection
  int naive_day = 1;  // 1-based replicate used by the naive estimator
  int fsmi_window = 5;
  SimexConfig simex = SimexConfig::simulation_default();
  SolverOptions solver;
  int jobs = 1;  // threads for SIMEX inner fits
};

// Covariates a method feeds to the quantile model: curves on the grid and the
// error-prone scalar. SIMEX has no single set and is rejected here.
struct MethodCovariates {
  Eigen::MatrixXd functional;  // n × T
  Eigen::VectorXd scalar;      // n
};
MethodCovariates method_covariates(const FunctionalDataset& data, Method method, const FitOptions& options);

// Basis dimension chosen by BIC for `method`. SIMEX uses the average-covariate
// design, which is its λ = 0 model. Returns options.fixed_K when set.
int select_K(const FunctionalDataset& data, Method method, double tau, const FitOptions& options);

// Fits one estimator at one quantile level. Oracle needs the latent truth and
// throws MissingTruth without it.
EstimateSet fit(const FunctionalDataset& data, Method method, double tau, const FitOptions& options = {});

// SIMEX with its trajectory, for diagnostics.
SimexResult fit_simex(const FunctionalDataset& data, double tau, const FitOptions& options = {});

// Percentile rules for bootstrap endpoints. Type6 interpolates the order
// statistics at position (B + 1)p; InverseEcdf takes the ⌈Bp⌉-th one.
enum class PercentileRule { Type6, InverseEcdf };

// `sorted` must be in ascending order.
double percentile(const std::vector<double>& sorted, double prob, PercentileRule rule);

// Draws n subject indices with replacement.
using Resampler = std::function<std::vector<Eigen::Index>(Eigen::Index n, Rng& rng)>;
std::vector<Eigen::Index> uniform_resample(Eigen::Index n, Rng& rng);

struct BootstrapOptions {
  int B = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  PercentileRule rule = PercentileRule::Type6;
  bool refit_K = false;              // reselect K in every replicate
  double max_failure_fraction = 0.1;  // abort above this share of failed refits
  int jobs = 1;
  Resampler resampler;                               // defaults to uniform_resample
  std::function<void(const std::string&)> log;       // receives skipped-replicate messages
};

struct BootstrapResult {
  EstimateSet point;
  int B = 0;
  int failures = 0;
  double level = 0.95;
  Eigen::VectorXd beta1_lower, beta1_upper;  // on the grid
  double beta0_lower = 0.0, beta0_upper = 0.0;
  double beta2_lower = 0.0, beta2_upper = 0.0;
  Eigen::VectorXd gamma_lower, gamma_upper;
  std::vector<EstimateSet> replicates;  // successful refits in replicate order
};

// Subject-level nonparametric bootstrap. Each resampled subject keeps all of
// its replicates. Failed refits are skipped and logged; if more than
// max_failure_fraction of B fail the run aborts with FitError.
BootstrapResult bootstrap_ci(const FunctionalDataset& data, Method method, double tau,
                             const FitOptions& options, const BootstrapOptions& boot);

struct PercentDifference {
  double functional = 0.0;  // mean over usable grid points, in percent
  double scalar = 0.0;      // NaN when the naive β₂ is (near) zero
  int excluded_points = 0;  // grid points with |β₁,naive(t)| < 1e-8
};

PercentDifference percent_difference(const EstimateSet& corrected, const EstimateSet& naive);

}  // namespace fqme

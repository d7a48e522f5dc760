#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fqme/covkern.hpp"
#include "fqme/dataset.hpp"
#include "fqme/estimate.hpp"
#include "fqme/estimators.hpp"
#include "fqme/rng.hpp"

namespace fqme {

struct SimConfig {
  std::string label = "base";
  int n = 500;
  int T = 100;
  int J = 7;
  int L = 7;
  CovarianceSpec x1_cov{CovStructure::AR1, 100, 0.5, 3.0, 1};
  CovarianceSpec u1_cov{CovStructure::AR1, 100, 0.5, 2.5, 2};
  ErrorLaw u1_law = ErrorLaw::normal();
  ErrorLaw u2_law = ErrorLaw::normal();
  double sigma_x2 = 0.5;
  double sigma_u2 = 0.25;
  double beta2 = 0.5;
  Eigen::Vector2d gamma{1.0, 1.0};
  double sigma_zc = 0.5;
  double p_zb = 0.6;
  double sigma_eps = 0.1;
  std::vector<double> taus{0.25, 0.5, 0.75, 0.95};
  int R = 500;
  std::uint64_t seed = 20240501;

  // Throws DomainError on invalid values.
  void validate() const;
};

// Mean curve of the latent functional covariate, 1 / (1 + exp(8(t − 0.5))).
double latent_mean_curve(double t);
// True functional coefficient sin(2πt).
double true_beta1(double t);

struct SimDataset {
  Eigen::VectorXd grid;
  Eigen::MatrixXd X1;       // n × T
  FunctionalReplicates W1;  // n matrices J × T
  FunctionalReplicates U1;  // W1 − X1, kept for checks
  Eigen::VectorXd X2;
  Eigen::MatrixXd W2;  // n × L
  Eigen::VectorXd Zc, Zb;
  Eigen::VectorXd Y;

  // Library dataset with the latent truth attached; covariates are (Zc, Zb).
  FunctionalDataset to_dataset() const;
};

// Covariance matrices of one configuration. Built once per condition because
// the UN matrix is a property of the condition, not of a replicate.
struct SimKernels {
  Eigen::MatrixXd x1;
  Eigen::MatrixXd u1;
};
SimKernels build_kernels(const SimConfig& config);

SimDataset generate_dataset(const SimConfig& config, Rng& rng);
SimDataset generate_dataset(const SimConfig& config, const SimKernels& kernels, Rng& rng);

// Context handed to an estimator for one (replicate, tau) cell.
struct ReplicateContext {
  int replicate = 0;
  std::uint64_t seed = 0;  // for estimator-internal randomness
  int shared_K = 0;        // > 0 when the run fixes K per replicate
};

struct StudyEstimator {
  std::string name;
  std::function<EstimateSet(const FunctionalDataset&, double tau, const ReplicateContext&)> fit;
};

// Library estimator wrapped for run_study; SIMEX draws use ctx.seed.
StudyEstimator make_study_estimator(Method method, const FitOptions& options);

struct MetricsRow {
  std::string condition;
  std::string estimator;
  double tau = 0.5;
  double abias2 = 0.0;
  double avar = 0.0;
  double aimse = 0.0;
  double bias = 0.0;      // mean β̂₂ − β₂
  double bias_abs = 0.0;  // |bias|
  double var = 0.0;
  double aimse_scalar = 0.0;
  Eigen::VectorXd gamma_bias;  // mean γ̂ − γ
  int completed = 0;
  int failed = 0;
  double mean_K = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  const MetricsRow& find(const std::string& estimator, double tau, const std::string& condition = "") const;
};

// Metrics of one estimator from its replicate estimates.
MetricsRow compute_metrics(const std::vector<EstimateSet>& estimates, const Eigen::VectorXd& true_curve,
                           double true_beta2, const Eigen::VectorXd& true_gamma);

struct StudyOptions {
  int R = 0;  // > 0 overrides config.R
  int jobs = 1;
  // When set, K is chosen by BIC once per (replicate, tau) on this method's
  // design and shared by every estimator; empty means each estimator runs its
  // own BIC selection.
  std::optional<Method> shared_K_reference = Method::Naive;
  FitOptions fit;
  std::function<void(const std::string&)> log;
};

MetricsTable run_study(const SimConfig& config, const std::vector<StudyEstimator>& estimators,
                       const StudyOptions& options = {});

// Configurations of the six simulation studies.
std::vector<SimConfig> study_presets(int id);

// One row per (condition, estimator) at a single tau.
void write_metrics_csv(std::ostream& out, const MetricsTable& table, double tau);

}  // namespace fqme

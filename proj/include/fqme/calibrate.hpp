#pragma once

#include <Eigen/Dense>
#include <span>

#include "fqme/basis.hpp"
#include "fqme/dataset.hpp"
#include "fqme/estimate.hpp"

namespace fqme {

// One-way random-intercept model w_ij = η₀ + η_i + ε_ij fitted with the ANOVA
// moment estimators. Unbalanced groups use the effective group size
// n₀ = (N − Σ J_i²/N)/(n − 1); balanced data reduce to the textbook table.
struct RandomInterceptFit {
  double fixed_intercept = 0.0;  // grand mean
  Eigen::VectorXd subject_means;
  Eigen::VectorXd subject_blups;  // shrinkage_i · (mean_i − grand mean)
  double var_between = 0.0;       // truncated at zero
  double var_within = 0.0;
  // var_between / (var_between + var_within / J_i); 1 when var_within is 0.
  // Constant across subjects for balanced data.
  Eigen::VectorXd shrinkage;

  // (1 − s_i)·grand mean + s_i·mean_i, i.e. the fixed intercept plus the BLUP.
  Eigen::VectorXd predictions() const;
};

// Balanced n × L replicate matrix.
RandomInterceptFit fit_scalar_random_intercept(const Eigen::Ref<const Eigen::MatrixXd>& W);
// Ragged replicates, at least two per subject.
RandomInterceptFit fit_random_intercept(const ScalarReplicates& groups);
// Flat storage: group g owns values[offsets[g], offsets[g+1]).
RandomInterceptFit fit_random_intercept(std::span<const double> values,
                                        std::span<const Eigen::Index> offsets);

// Point-wise calibration: an independent random-intercept fit per grid index.
Eigen::MatrixXd fui_calibrate(const FunctionalReplicates& W);

// Moving-window calibration. For each grid index the odd `window` centred on
// it (truncated at the edges) is treated as a short multivariate observation:
// a multivariate random-intercept model is fitted by MANOVA moment estimators
// and the BLUP of the centre point is returned. window = 1 is fui_calibrate.
Eigen::MatrixXd fsmi_calibrate(const FunctionalReplicates& W, int window);

struct CalibratedCovariates {
  Eigen::MatrixXd xhat_functional;  // n × T
  Eigen::VectorXd xhat_scalar;      // n
  Method method = Method::Fui;
  int window = 1;
};

// Calibrates both error-prone covariates of a dataset (method Fui or Fsmi).
CalibratedCovariates calibrate_covariates(const FunctionalDataset& data, Method method, int window = 5);

// Second stage: project the calibrated curves, fit the quantile model, and
// reconstruct β̂₁ on the grid.
EstimateSet calibrated_quantile_fit(const CalibratedCovariates& calibrated, const SplineBasis& basis,
                                    const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau,
                                    const Eigen::VectorXd& weights = Eigen::VectorXd(),
                                    const SolverOptions& options = {});

}  // namespace fqme

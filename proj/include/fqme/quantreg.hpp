#pragma once

#include <Eigen/Dense>
#include <string_view>
#include <vector>

namespace fqme {

enum class FitStatus { Optimal, MaxIter };

std::string_view to_string(FitStatus s);

// Result of minimizing Σ wᵢ ρ_τ(yᵢ − xᵢᵀθ). Coefficients follow the design's
// column order; for the regression models in this library that is
// (intercept, ω₁…ω_K, β₂, γ₁…γ_P).
struct QuantileFit {
  double tau = 0.5;
  Eigen::VectorXd coefficients;
  double objective = 0.0;    // attained (weighted) check loss
  double lower_bound = 0.0;  // dual objective certifying the optimum
  int iterations = 0;
  FitStatus status = FitStatus::Optimal;
};

struct SolverOptions {
  double tol = 1e-8;  // relative duality gap
  int max_iter = 100;
};

// Σ rᵢ (τ − 1[rᵢ < 0]).
double check_loss(const Eigen::Ref<const Eigen::VectorXd>& residuals, double tau);
// Weighted variant; `weights` must have the residuals' length.
double check_loss(const Eigen::Ref<const Eigen::VectorXd>& residuals, double tau,
                  const Eigen::Ref<const Eigen::VectorXd>& weights);

// Dense quantile regression. X includes the intercept column. An empty
// `weights` means unit weights. Throws SingularDesign when X has dependent
// columns and DomainError on invalid tau or shapes.
QuantileFit fit_quantile(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXd>& y, double tau,
                         const SolverOptions& options = {},
                         const Eigen::Ref<const Eigen::VectorXd>& weights = Eigen::VectorXd());

// Zero-based indices of columns of X that are (numerically) linear
// combinations of the remaining ones; empty when X has full column rank.
std::vector<int> dependent_columns(const Eigen::Ref<const Eigen::MatrixXd>& X);

// [1 | blocks...] with one row per observation.
Eigen::MatrixXd assemble_design(const std::vector<Eigen::MatrixXd>& blocks, Eigen::Index n);

}  // namespace fqme

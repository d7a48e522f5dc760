#pragma once

#include <Eigen/Dense>
#include <string_view>

#include "fqme/basis.hpp"
#include "fqme/quantreg.hpp"

namespace fqme {

enum class Method { Oracle, Naive, Average, Simex, Fui, Fsmi };

std::string_view to_string(Method m);
// Column labels used in metric tables: Oracle, Naive, Ave, SIMEX, FUI, FSMI.
std::string_view display_name(Method m);
// Accepts to_string and display names, case-insensitively.
Method parse_method(std::string_view name);

// One fitted model at one quantile level.
struct EstimateSet {
  Method method = Method::Naive;
  double tau = 0.5;
  double beta0 = 0.0;
  Eigen::VectorXd beta1_curve;  // on the dataset grid
  double beta2 = 0.0;
  Eigen::VectorXd gammas;
  int selected_K = 0;
  Eigen::VectorXd coefficients;  // (β₀, ω₁…ω_K, β₂, γ₁…γ_P)
  FitStatus status = FitStatus::Optimal;
};

// Splits a coefficient vector laid out as (β₀, ω, β₂, γ) and reconstructs β₁.
EstimateSet make_estimate(Method method, double tau, const Eigen::VectorXd& coefficients,
                          const SplineBasis& basis, FitStatus status = FitStatus::Optimal);

}  // namespace fqme

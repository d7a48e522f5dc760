#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fqme/quantreg.hpp"

namespace fqme {

// Clamped B-spline basis on [0, 1] with equally spaced interior knots,
// evaluated on an observation grid. Immutable after construction.
class SplineBasis {
 public:
  SplineBasis(int degree, int n_interior, Eigen::VectorXd grid);

  int degree() const { return degree_; }
  int n_interior() const { return n_interior_; }
  int dimension() const { return static_cast<int>(values_.cols()); }
  const Eigen::VectorXd& knots() const { return knots_; }
  const Eigen::VectorXd& grid() const { return grid_; }
  // grid × K matrix of basis values.
  const Eigen::MatrixXd& values() const { return values_; }
  // Trapezoid weights over the grid.
  const Eigen::VectorXd& weights() const { return weights_; }

  // Basis values at arbitrary points in [0, 1]; rows follow `points`.
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& points) const;

  // k-th entry: trapezoid quadrature of curve(t)·b_k(t) over the grid.
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& curve) const;
  // Row-wise projection of an (m × grid) matrix of curves; returns m × K.
  Eigen::MatrixXd project_rows(const Eigen::Ref<const Eigen::MatrixXd>& curves) const;

  // Σ_k omega_k b_k(t) on the grid.
  Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& omega) const;

 private:
  int degree_;
  int n_interior_;
  Eigen::VectorXd knots_;
  Eigen::VectorXd grid_;
  Eigen::MatrixXd values_;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd projector_;  // diag(weights) · values
};

SplineBasis make_basis(int degree, int n_interior, const Eigen::VectorXd& grid);
// Basis with K functions (K − degree − 1 interior knots).
SplineBasis make_basis_with_dimension(int degree, int K, const Eigen::VectorXd& grid);

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);
Eigen::VectorXd uniform_grid(Eigen::Index T);

Eigen::VectorXd reconstruct_beta(const Eigen::Ref<const Eigen::VectorXd>& omega, const SplineBasis& basis);

// 2n·ln(mean weighted check loss) + p·ln(n), with n the number of positively
// weighted observations and p the number of coefficients.
double bic_score(double objective, double total_weight, Eigen::Index n, Eigen::Index p);

struct BicSelection {
  int K = 0;
  std::vector<int> candidates;
  std::vector<double> scores;
  std::vector<QuantileFit> fits;
  std::size_t best_index = 0;
};

// Fits [1 | projections[c] | other] for each candidate and keeps the K with
// the lowest BIC; ties go to the smaller K. A loss below 1e-10·Σwᵢ|yᵢ| counts
// as an exact fit (score −∞), so nested bases that both interpolate tie.
// A failing candidate is rethrown with its K in the message.
BicSelection select_K_bic(const Eigen::VectorXd& y, const std::vector<int>& candidate_K,
                          const std::vector<Eigen::MatrixXd>& projections,
                          const Eigen::MatrixXd& other, double tau,
                          const Eigen::VectorXd& weights = Eigen::VectorXd(),
                          const SolverOptions& options = {});

}  // namespace fqme

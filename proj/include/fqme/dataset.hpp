#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace fqme {

// Replicated functional observations: one (J_i × T) matrix per subject.
using FunctionalReplicates = std::vector<Eigen::MatrixXd>;
// Replicated scalar observations: one length-L_i vector per subject.
using ScalarReplicates = std::vector<Eigen::VectorXd>;

// Latent covariates, known only for simulated data.
struct LatentTruth {
  Eigen::MatrixXd x1;  // n × T
  Eigen::VectorXd x2;  // n
};

// Subject-level data on a common grid in [0, 1]. Replicate counts may differ
// between subjects.
struct FunctionalDataset {
  Eigen::VectorXd grid;
  FunctionalReplicates w1;
  ScalarReplicates w2;
  Eigen::MatrixXd z;  // n × P error-free covariates
  Eigen::VectorXd y;
  Eigen::VectorXd weights;  // n; empty means unit weights
  std::vector<std::string> subject_ids;
  std::vector<std::string> covariate_names;
  std::optional<LatentTruth> truth;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index grid_size() const { return grid.size(); }
  Eigen::Index covariate_count() const { return z.cols(); }
  bool balanced() const;
  bool has_weights() const { return weights.size() != 0; }

  // Throws ShapeError on inconsistent shapes.
  void validate() const;

  // Rows may repeat (bootstrap resamples); each selected subject keeps all of
  // its replicates and its latent truth.
  FunctionalDataset subset(const std::vector<Eigen::Index>& rows) const;

  // Per-subject replicate means: n × T and n.
  Eigen::MatrixXd w1_mean() const;
  Eigen::VectorXd w2_mean() const;
};

// Mean that returns the common value exactly when all inputs are equal.
double stable_mean(const double* values, Eigen::Index count, Eigen::Index stride = 1);

}  // namespace fqme

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>

#include "fqme/rng.hpp"

namespace fqme {

enum class CovStructure { CS, SE, AR1, IND, UN };

std::string_view to_string(CovStructure s);
CovStructure parse_cov_structure(std::string_view name);

// Parametric covariance kernel on the equally spaced unit-interval grid of
// `dim` points (or `dim` exchangeable replicates).
struct CovarianceSpec {
  CovStructure structure = CovStructure::AR1;
  int dim = 1;
  double rho = 0.0;    // serial correlation, in [0, 1)
  double sigma = 1.0;  // marginal standard deviation
  std::uint64_t seed = 0;  // only used by UN
};

enum class ErrorLawKind { Normal, StudentT, Laplace };

// How a law is scaled. MatchCovariance rescales the elliptical mixture so its
// covariance equals the requested matrix. Standard keeps only the matrix's
// correlation and draws the canonical unit-scale law: standard normal, raw t
// with `df` degrees of freedom (variance df/(df-2)), Laplace(0, 1) (variance 2).
enum class LawScale { MatchCovariance, Standard };

struct ErrorLaw {
  ErrorLawKind kind = ErrorLawKind::Normal;
  double df = 4.0;
  LawScale scale = LawScale::MatchCovariance;

  static ErrorLaw normal() { return {}; }
  static ErrorLaw student_t(double df = 4.0, LawScale scale = LawScale::MatchCovariance) {
    return {ErrorLawKind::StudentT, df, scale};
  }
  static ErrorLaw laplace(LawScale scale = LawScale::MatchCovariance) {
    return {ErrorLawKind::Laplace, 4.0, scale};
  }
};

std::string_view to_string(ErrorLawKind k);
std::string describe(const ErrorLaw& law);

Eigen::MatrixXd build_covariance(const CovarianceSpec& spec);

// Human-readable record of how the matrix for `spec` is realized; includes the
// UN construction parameters so a run can be reproduced from its manifest.
std::string describe(const CovarianceSpec& spec);

// Square-root factor F (cov = F Fᵀ) of a PSD matrix, computed once and reused
// for many draws.
class CorrelatedSampler {
 public:
  explicit CorrelatedSampler(const Eigen::MatrixXd& cov);

  Eigen::Index dim() const { return factor_.rows(); }
  const Eigen::MatrixXd& factor() const { return factor_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }

  // n_draws × dim matrix of i.i.d. zero-mean rows.
  Eigen::MatrixXd draw(const ErrorLaw& law, Eigen::Index n_draws, Rng& rng) const;

 private:
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd factor_;
};

Eigen::MatrixXd sample_correlated(const Eigen::MatrixXd& cov, const ErrorLaw& law,
                                  Eigen::Index n_draws, Rng& rng);

// Scalar draws with variance sigma² (MatchCovariance) or the canonical law's
// variance (Standard, sigma ignored).
Eigen::VectorXd sample_scalar(double sigma, const ErrorLaw& law, Eigen::Index n, Rng& rng);

// Smallest eigenvalue; used for the PSD invariant.
double min_eigenvalue(const Eigen::MatrixXd& m);

}  // namespace fqme

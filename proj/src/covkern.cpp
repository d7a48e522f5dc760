#include "fqme/covkern.hpp"

#include <cmath>
#include <sstream>

#include "fqme/error.hpp"

namespace fqme {

namespace {

void check_spec(const CovarianceSpec& spec) {
  if (spec.dim < 1) throw DomainError("covariance dim must be >= 1");
  if (!(spec.rho >= 0.0 && spec.rho < 1.0))
    throw DomainError("covariance rho must lie in [0, 1), got " + std::to_string(spec.rho));
  if (!(spec.sigma > 0.0)) throw DomainError("covariance sigma must be > 0");
}

// Correlation matrix of A Aᵀ for a seeded standard-normal A, blended so the
// average off-diagonal correlation equals rho: toward the identity when it is
// above rho, toward the all-ones matrix when below. Both blends are convex
// combinations of correlation matrices, so the result stays PSD.
struct UnstructuredParts {
  Eigen::MatrixXd corr;
  double raw_mean_offdiag = 0.0;
  double blend = 1.0;
  bool toward_identity = true;
};

UnstructuredParts unstructured_correlation(const CovarianceSpec& spec) {
  const int d = spec.dim;
  UnstructuredParts out;
  if (d == 1) {
    out.corr = Eigen::MatrixXd::Ones(1, 1);
    return out;
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) a(i, j) = normal(rng);
  Eigen::MatrixXd g = a * a.transpose();
  Eigen::VectorXd inv_sd = g.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd c = inv_sd.asDiagonal() * g * inv_sd.asDiagonal();
  c = 0.5 * (c + c.transpose()).eval();
  c.diagonal().setOnes();
  const double off = (c.sum() - d) / (static_cast<double>(d) * (d - 1));
  out.raw_mean_offdiag = off;
  if (off >= spec.rho) {
    out.toward_identity = true;
    out.blend = off > 0.0 ? spec.rho / off : 1.0;
    out.corr = out.blend * c + (1.0 - out.blend) * Eigen::MatrixXd::Identity(d, d);
  } else {
    out.toward_identity = false;
    out.blend = (1.0 - spec.rho) / (1.0 - off);
    out.corr = out.blend * c + (1.0 - out.blend) * Eigen::MatrixXd::Ones(d, d);
  }
  out.corr.diagonal().setOnes();
  return out;
}

}  // namespace

std::string_view to_string(CovStructure s) {
  switch (s) {
    case CovStructure::CS: return "CS";
    case CovStructure::SE: return "SE";
    case CovStructure::AR1: return "AR1";
    case CovStructure::IND: return "IND";
    case CovStructure::UN: return "UN";
  }
  return "?";
}

CovStructure parse_cov_structure(std::string_view name) {
  if (name == "CS" || name == "cs") return CovStructure::CS;
  if (name == "SE" || name == "se") return CovStructure::SE;
  if (name == "AR1" || name == "ar1" || name == "AR(1)") return CovStructure::AR1;
  if (name == "IND" || name == "ind") return CovStructure::IND;
  if (name == "UN" || name == "un") return CovStructure::UN;
  throw DomainError("unknown covariance structure '" + std::string(name) + "'");
}

std::string_view to_string(ErrorLawKind k) {
  switch (k) {
    case ErrorLawKind::Normal: return "normal";
    case ErrorLawKind::StudentT: return "t";
    case ErrorLawKind::Laplace: return "laplace";
  }
  return "?";
}

std::string describe(const ErrorLaw& law) {
  std::ostringstream os;
  os << to_string(law.kind);
  if (law.kind == ErrorLawKind::StudentT) os << "(df=" << law.df << ")";
  if (law.kind != ErrorLawKind::Normal)
    os << (law.scale == LawScale::Standard ? "[standard]" : "[matched]");
  return os.str();
}

Eigen::MatrixXd build_covariance(const CovarianceSpec& spec) {
  check_spec(spec);
  const int d = spec.dim;
  const double var = spec.sigma * spec.sigma;
  Eigen::MatrixXd m(d, d);
  switch (spec.structure) {
    case CovStructure::IND:
      m = var * Eigen::MatrixXd::Identity(d, d);
      break;
    case CovStructure::AR1:
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) m(i, j) = var * std::pow(spec.rho, std::abs(i - j));
      break;
    case CovStructure::CS:
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) m(i, j) = var * (i == j ? 1.0 : spec.rho);
      break;
    case CovStructure::SE:
      // Length scale chosen so adjacent grid points correlate at exactly rho,
      // which makes the (i, j) correlation rho^((i-j)^2).
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) {
          const double lag = static_cast<double>(i - j);
          m(i, j) = var * (i == j ? 1.0 : std::pow(spec.rho, lag * lag));
        }
      break;
    case CovStructure::UN:
      m = var * unstructured_correlation(spec).corr;
      break;
  }
  const double lo = min_eigenvalue(m);
  if (lo < -1e-10 * var)
    throw InternalError("covariance for " + describe(spec) + " is not PSD (min eigenvalue " +
                        std::to_string(lo) + ")");
  return m;
}

std::string describe(const CovarianceSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(spec.structure) << "(dim=" << spec.dim << ",rho=" << spec.rho
     << ",sigma=" << spec.sigma;
  if (spec.structure == CovStructure::SE && spec.dim > 1 && spec.rho > 0.0) {
    const double dt = 1.0 / (spec.dim - 1);
    os << ",length_scale=" << dt / std::sqrt(-2.0 * std::log(spec.rho));
  }
  if (spec.structure == CovStructure::UN) {
    check_spec(spec);
    const auto parts = unstructured_correlation(spec);
    os << ",seed=" << spec.seed << ",construction=corr(AA^T) A~N(0,1)^{dim x dim}"
       << ",raw_mean_offdiag=" << parts.raw_mean_offdiag
       << ",blend=" << parts.blend << (parts.toward_identity ? ",toward=identity" : ",toward=ones");
  }
  os << ")";
  return os.str();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

CorrelatedSampler::CorrelatedSampler(const Eigen::MatrixXd& cov) : cov_(cov) {
  if (cov.rows() != cov.cols()) throw ShapeError("covariance must be square");
  const Eigen::Index d = cov.rows();
  if (d == 0) throw ShapeError("covariance must be non-empty");
  if (!cov.allFinite()) throw DomainError("covariance has non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + cov.cwiseAbs().maxCoeff()))
    throw DomainError("covariance is not symmetric");
  const double scale = cov.diagonal().cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    factor_ = Eigen::MatrixXd::Zero(d, d);
    return;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw DomainError("eigendecomposition of covariance failed");
  if (es.eigenvalues().minCoeff() < -1e-8 * scale)
    throw DomainError("covariance is not positive semidefinite (min eigenvalue " +
                      std::to_string(es.eigenvalues().minCoeff()) + ")");
  Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = es.eigenvectors() * root.asDiagonal();
}

Eigen::MatrixXd CorrelatedSampler::draw(const ErrorLaw& law, Eigen::Index n_draws, Rng& rng) const {
  const Eigen::Index d = dim();
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(n_draws, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < n_draws; ++i) z(i, j) = normal(rng);
  Eigen::MatrixXd out = z * factor_.transpose();
  switch (law.kind) {
    case ErrorLawKind::Normal:
      break;
    case ErrorLawKind::StudentT: {
      if (!(law.df > 2.0)) throw DomainError("Student-t errors need df > 2 for finite variance");
      std::chi_squared_distribution<double> chi2(law.df);
      const double rescale =
          law.scale == LawScale::MatchCovariance ? std::sqrt((law.df - 2.0) / law.df) : 1.0;
      for (Eigen::Index i = 0; i < n_draws; ++i)
        out.row(i) *= rescale / std::sqrt(chi2(rng) / law.df);
      break;
    }
    case ErrorLawKind::Laplace: {
      // Normal scale mixture with Exp(1) mixing variance has covariance equal
      // to the normal's; the unit-scale Laplace has variance 2.
      std::exponential_distribution<double> expo(1.0);
      const double rescale = law.scale == LawScale::Standard ? std::sqrt(2.0) : 1.0;
      for (Eigen::Index i = 0; i < n_draws; ++i) out.row(i) *= rescale * std::sqrt(expo(rng));
      break;
    }
  }
  if (law.scale == LawScale::Standard) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = cov_(j, j);
      if (v > 0.0) out.col(j) /= std::sqrt(v);
    }
  }
  return out;
}

Eigen::MatrixXd sample_correlated(const Eigen::MatrixXd& cov, const ErrorLaw& law,
                                  Eigen::Index n_draws, Rng& rng) {
  return CorrelatedSampler(cov).draw(law, n_draws, rng);
}

Eigen::VectorXd sample_scalar(double sigma, const ErrorLaw& law, Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd cov(1, 1);
  cov(0, 0) = sigma * sigma;
  return CorrelatedSampler(cov).draw(law, n, rng).col(0);
}

}  // namespace fqme

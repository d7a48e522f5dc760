#include "fqme/calibrate.hpp"

#include <algorithm>
#include <vector>

#include "fqme/error.hpp"

namespace fqme {

Eigen::VectorXd RandomInterceptFit::predictions() const {
  Eigen::VectorXd out(subject_means.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) = (1.0 - shrinkage(i)) * fixed_intercept + shrinkage(i) * subject_means(i);
  return out;
}

RandomInterceptFit fit_random_intercept(std::span<const double> values,
                                        std::span<const Eigen::Index> offsets) {
  if (offsets.size() < 3) throw DomainError("random-intercept model needs at least two subjects");
  const auto n = static_cast<Eigen::Index>(offsets.size() - 1);
  const auto N = static_cast<Eigen::Index>(values.size());
  if (offsets.front() != 0 || offsets.back() != N) throw ShapeError("group offsets do not cover the values");

  RandomInterceptFit fit;
  fit.subject_means.resize(n);
  double sum_sq_sizes = 0.0;
  for (Eigen::Index g = 0; g < n; ++g) {
    const Eigen::Index begin = offsets[static_cast<std::size_t>(g)];
    const Eigen::Index size = offsets[static_cast<std::size_t>(g) + 1] - begin;
    if (size < 2) throw InsufficientReplicates("every subject needs at least two replicates");
    fit.subject_means(g) = stable_mean(values.data() + begin, size);
    sum_sq_sizes += static_cast<double>(size) * static_cast<double>(size);
  }
  fit.fixed_intercept = stable_mean(values.data(), N);

  double ssw = 0.0, ssb = 0.0;
  for (Eigen::Index g = 0; g < n; ++g) {
    const Eigen::Index begin = offsets[static_cast<std::size_t>(g)];
    const Eigen::Index end = offsets[static_cast<std::size_t>(g) + 1];
    const double m = fit.subject_means(g);
    for (Eigen::Index k = begin; k < end; ++k) {
      const double d = values[static_cast<std::size_t>(k)] - m;
      ssw += d * d;
    }
    const double d = m - fit.fixed_intercept;
    ssb += static_cast<double>(end - begin) * d * d;
  }
  const double msw = ssw / static_cast<double>(N - n);
  const double msb = ssb / static_cast<double>(n - 1);
  const double n0 = (static_cast<double>(N) - sum_sq_sizes / static_cast<double>(N)) / static_cast<double>(n - 1);
  fit.var_within = msw;
  fit.var_between = std::max(0.0, (msb - msw) / n0);

  fit.shrinkage.resize(n);
  fit.subject_blups.resize(n);
  for (Eigen::Index g = 0; g < n; ++g) {
    const double size = static_cast<double>(offsets[static_cast<std::size_t>(g) + 1] - offsets[static_cast<std::size_t>(g)]);
    const double s = fit.var_within == 0.0 ? 1.0 : fit.var_between / (fit.var_between + fit.var_within / size);
    fit.shrinkage(g) = s;
    fit.subject_blups(g) = s * (fit.subject_means(g) - fit.fixed_intercept);
  }
  return fit;
}

RandomInterceptFit fit_scalar_random_intercept(const Eigen::Ref<const Eigen::MatrixXd>& W) {
  if (W.cols() < 2) throw InsufficientReplicates("scalar random-intercept model needs L >= 2 replicates");
  const Eigen::Index n = W.rows(), L = W.cols();
  std::vector<double> values(static_cast<std::size_t>(n * L));
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    offsets[static_cast<std::size_t>(i)] = i * L;
    for (Eigen::Index l = 0; l < L; ++l) values[static_cast<std::size_t>(i * L + l)] = W(i, l);
  }
  offsets[static_cast<std::size_t>(n)] = n * L;
  return fit_random_intercept(values, offsets);
}

RandomInterceptFit fit_random_intercept(const ScalarReplicates& groups) {
  std::vector<double> values;
  std::vector<Eigen::Index> offsets{0};
  for (const auto& g : groups) {
    if (g.size() < 2) throw InsufficientReplicates("every subject needs at least two scalar replicates");
    values.insert(values.end(), g.data(), g.data() + g.size());
    offsets.push_back(static_cast<Eigen::Index>(values.size()));
  }
  return fit_random_intercept(values, offsets);
}

namespace {

void check_functional(const FunctionalReplicates& W) {
  if (W.size() < 2) throw DomainError("calibration needs at least two subjects");
  const Eigen::Index T = W.front().cols();
  for (const auto& m : W) {
    if (m.cols() != T) throw ShapeError("functional replicates have inconsistent grid lengths");
    if (m.rows() < 2) throw InsufficientReplicates("every subject needs at least two functional replicates");
  }
}

// Moore-Penrose inverse of a symmetric PSD matrix; eigenvalues below a
// relative 1e-10 count as zero.
Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cut = 1e-10 * std::max(0.0, ev.maxCoeff());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev(k) > cut && ev(k) > 0.0) inv(k) = 1.0 / ev(k);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// Multivariate random-intercept fit on the window [lo, hi] for every centre t:
// MANOVA moment estimators of the between and within covariance, the between
// matrix clipped to PSD, and the BLUP of the centre coordinate.
Eigen::MatrixXd window_blup(const FunctionalReplicates& W, int half_width) {
  check_functional(W);
  const auto n = static_cast<Eigen::Index>(W.size());
  const Eigen::Index T = W.front().cols();
  double N = 0.0, sum_sq_sizes = 0.0;
  for (const auto& m : W) {
    N += static_cast<double>(m.rows());
    sum_sq_sizes += static_cast<double>(m.rows()) * static_cast<double>(m.rows());
  }
  const double n0 = (N - sum_sq_sizes / N) / static_cast<double>(n - 1);

  Eigen::MatrixXd out(n, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half_width);
    const Eigen::Index hi = std::min<Eigen::Index>(T - 1, t + half_width);
    const Eigen::Index d = hi - lo + 1, c = t - lo;
    Eigen::MatrixXd means(n, d);
    Eigen::VectorXd grand = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& m = W[static_cast<std::size_t>(i)];
      for (Eigen::Index k = 0; k < d; ++k) means(i, k) = stable_mean(m.col(lo + k).data(), m.rows());
      const Eigen::MatrixXd dev = m.middleCols(lo, d).rowwise() - means.row(i);
      sw.noalias() += dev.transpose() * dev;
      grand += static_cast<double>(m.rows()) * means.row(i).transpose();
    }
    grand /= N;
    Eigen::MatrixXd sb = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd dev = means.row(i).transpose() - grand;
      sb.noalias() += static_cast<double>(W[static_cast<std::size_t>(i)].rows()) * dev * dev.transpose();
    }
    sw /= N - static_cast<double>(n);
    sb /= static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((sb - sw) / n0);
    const Eigen::MatrixXd between =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();

    // One gain row per distinct replicate count.
    std::vector<std::pair<Eigen::Index, Eigen::RowVectorXd>> gains;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index J = W[static_cast<std::size_t>(i)].rows();
      auto it = std::find_if(gains.begin(), gains.end(), [J](const auto& g) { return g.first == J; });
      if (it == gains.end()) {
        const Eigen::MatrixXd a = between + sw / static_cast<double>(J);
        gains.emplace_back(J, between.row(c) * psd_pinv(0.5 * (a + a.transpose())));
        it = gains.end() - 1;
      }
      out(i, t) = grand(c) + it->second.dot(means.row(i).transpose() - grand);
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd fui_calibrate(const FunctionalReplicates& W) {
  check_functional(W);
  const auto n = static_cast<Eigen::Index>(W.size());
  const Eigen::Index T = W.front().cols();
  Eigen::MatrixXd out(n, T);
  std::vector<double> values;
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(n + 1));
  for (Eigen::Index t = 0; t < T; ++t) {
    values.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      offsets[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(values.size());
      const auto& m = W[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < m.rows(); ++j) values.push_back(m(j, t));
    }
    offsets[static_cast<std::size_t>(n)] = static_cast<Eigen::Index>(values.size());
    out.col(t) = fit_random_intercept(values, offsets).predictions();
  }
  return out;
}

Eigen::MatrixXd fsmi_calibrate(const FunctionalReplicates& W, int window) {
  if (window < 1 || window % 2 == 0) throw DomainError("FSMI window must be a positive odd integer");
  if (!W.empty() && window > W.front().cols()) throw DomainError("FSMI window exceeds the grid length");
  if (window == 1) return fui_calibrate(W);
  return window_blup(W, window / 2);
}

CalibratedCovariates calibrate_covariates(const FunctionalDataset& data, Method method, int window) {
  CalibratedCovariates out;
  out.method = method;
  if (method == Method::Fui) {
    out.window = 1;
    out.xhat_functional = fui_calibrate(data.w1);
  } else if (method == Method::Fsmi) {
    out.window = window;
    out.xhat_functional = fsmi_calibrate(data.w1, window);
  } else {
    throw DomainError("calibration method must be FUI or FSMI");
  }
  out.xhat_scalar = fit_random_intercept(data.w2).predictions();
  return out;
}

EstimateSet calibrated_quantile_fit(const CalibratedCovariates& calibrated, const SplineBasis& basis,
                                    const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau,
                                    const Eigen::VectorXd& weights, const SolverOptions& options) {
  const Eigen::Index n = y.size();
  if (calibrated.xhat_functional.rows() != n || calibrated.xhat_scalar.size() != n)
    throw ShapeError("calibrated covariates do not match the response length");
  const Eigen::MatrixXd proj = basis.project_rows(calibrated.xhat_functional);
  const Eigen::MatrixXd X = assemble_design({proj, calibrated.xhat_scalar, z}, n);
  const QuantileFit fit = fit_quantile(X, y, tau, options, weights);
  return make_estimate(calibrated.method, tau, fit.coefficients, basis, fit.status);
}

}  // namespace fqme

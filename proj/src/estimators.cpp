#include "fqme/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "fqme/basis.hpp"
#include "fqme/calibrate.hpp"
#include "fqme/error.hpp"
#include "fqme/parallel.hpp"

namespace fqme {

MethodCovariates method_covariates(const FunctionalDataset& data, Method method, const FitOptions& options) {
  MethodCovariates out;
  switch (method) {
    case Method::Oracle:
      if (!data.truth) throw MissingTruth("oracle estimator needs the latent covariates, which real data lack");
      out.functional = data.truth->x1;
      out.scalar = data.truth->x2;
      break;
    case Method::Naive: {
      const Eigen::Index d = options.naive_day - 1;
      if (d < 0) throw DomainError("naive day index is 1-based");
      out.functional.resize(data.n(), data.grid_size());
      out.scalar.resize(data.n());
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const auto& w1 = data.w1[static_cast<std::size_t>(i)];
        const auto& w2 = data.w2[static_cast<std::size_t>(i)];
        if (d >= w1.rows() || d >= w2.size())
          throw DomainError("subject " + std::to_string(i) + " has no replicate " + std::to_string(d + 1));
        out.functional.row(i) = w1.row(d);
        out.scalar(i) = w2(d);
      }
      break;
    }
    case Method::Average:
      out.functional = data.w1_mean();
      out.scalar = data.w2_mean();
      break;
    case Method::Fui:
    case Method::Fsmi: {
      CalibratedCovariates c = calibrate_covariates(data, method, options.fsmi_window);
      out.functional = std::move(c.xhat_functional);
      out.scalar = std::move(c.xhat_scalar);
      break;
    }
    case Method::Simex:
      throw DomainError("SIMEX has no single covariate set");
  }
  return out;
}

namespace {

Eigen::MatrixXd other_block(const Eigen::VectorXd& scalar, const Eigen::MatrixXd& z) {
  Eigen::MatrixXd other(scalar.size(), 1 + z.cols());
  other.col(0) = scalar;
  other.rightCols(z.cols()) = z;
  return other;
}

BicSelection run_bic(const FunctionalDataset& data, const MethodCovariates& cov, double tau,
                     const FitOptions& options) {
  std::vector<Eigen::MatrixXd> projections;
  projections.reserve(options.candidate_K.size());
  for (int K : options.candidate_K)
    projections.push_back(make_basis_with_dimension(options.degree, K, data.grid).project_rows(cov.functional));
  return select_K_bic(data.y, options.candidate_K, projections, other_block(cov.scalar, data.z), tau,
                      data.weights, options.solver);
}

EstimateSet fit_covariates(const FunctionalDataset& data, const MethodCovariates& cov, Method method, double tau,
                           const FitOptions& options) {
  if (options.fixed_K > 0) {
    const SplineBasis basis = make_basis_with_dimension(options.degree, options.fixed_K, data.grid);
    const Eigen::MatrixXd X = assemble_design({basis.project_rows(cov.functional), other_block(cov.scalar, data.z)}, data.n());
    const QuantileFit q = fit_quantile(X, data.y, tau, options.solver, data.weights);
    return make_estimate(method, tau, q.coefficients, basis, q.status);
  }
  const BicSelection sel = run_bic(data, cov, tau, options);
  const SplineBasis basis = make_basis_with_dimension(options.degree, sel.K, data.grid);
  const QuantileFit& q = sel.fits[sel.best_index];
  return make_estimate(method, tau, q.coefficients, basis, q.status);
}

}  // namespace

int select_K(const FunctionalDataset& data, Method method, double tau, const FitOptions& options) {
  if (options.fixed_K > 0) return options.fixed_K;
  const Method design = method == Method::Simex ? Method::Average : method;
  return run_bic(data, method_covariates(data, design, options), tau, options).K;
}

SimexResult fit_simex(const FunctionalDataset& data, double tau, const FitOptions& options) {
  const int K = select_K(data, Method::Simex, tau, options);
  const SplineBasis basis = make_basis_with_dimension(options.degree, K, data.grid);
  return simex_fit(data, basis, tau, options.simex, options.solver, options.jobs);
}

EstimateSet fit(const FunctionalDataset& data, Method method, double tau, const FitOptions& options) {
  data.validate();
  if (method == Method::Simex) return fit_simex(data, tau, options).estimate;
  return fit_covariates(data, method_covariates(data, method, options), method, tau, options);
}

double percentile(const std::vector<double>& sorted, double prob, PercentileRule rule) {
  if (sorted.empty()) throw DomainError("percentile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("percentile probability outside [0, 1]");
  const auto m = static_cast<double>(sorted.size());
  if (rule == PercentileRule::InverseEcdf) {
    const double k = std::clamp(std::ceil(m * prob - 1e-9), 1.0, m);
    return sorted[static_cast<std::size_t>(k) - 1];
  }
  const double h = (m + 1.0) * prob;
  if (h <= 1.0) return sorted.front();
  if (h >= m) return sorted.back();
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo) - 1;
  return sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i]);
}

std::vector<Eigen::Index> uniform_resample(Eigen::Index n, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pick(rng);
  return rows;
}

BootstrapResult bootstrap_ci(const FunctionalDataset& data, Method method, double tau,
                             const FitOptions& options, const BootstrapOptions& boot) {
  if (boot.B < 2) throw DomainError("bootstrap needs B >= 2");
  if (!(boot.level > 0.0 && boot.level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");

  BootstrapResult result;
  result.B = boot.B;
  result.level = boot.level;
  result.point = fit(data, method, tau, options);

  FitOptions inner = options;
  inner.fixed_K = boot.refit_K ? options.fixed_K : result.point.selected_K;
  inner.jobs = 1;
  const Resampler resample = boot.resampler ? boot.resampler : Resampler(uniform_resample);

  const auto B = static_cast<std::size_t>(boot.B);
  std::vector<std::optional<EstimateSet>> fits(B);
  std::vector<std::string> errors(B);
  parallel_for(B, boot.jobs, [&](std::size_t b) {
    Rng rng = make_rng(boot.seed, {static_cast<std::uint64_t>(b)});
    const std::vector<Eigen::Index> rows = resample(data.n(), rng);
    FitOptions local = inner;
    local.simex.rng_seed = derive_seed(boot.seed, {static_cast<std::uint64_t>(b), 1});
    try {
      fits[b] = fit(data.subset(rows), method, tau, local);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  });

  for (std::size_t b = 0; b < B; ++b) {
    if (fits[b]) {
      result.replicates.push_back(std::move(*fits[b]));
    } else {
      ++result.failures;
      if (boot.log) boot.log("bootstrap replicate " + std::to_string(b) + " skipped: " + errors[b]);
    }
  }
  if (static_cast<double>(result.failures) > boot.max_failure_fraction * static_cast<double>(boot.B)) {
    std::ostringstream os;
    os << result.failures << " of " << boot.B << " bootstrap refits failed";
    for (std::size_t b = 0; b < B; ++b)
      if (!fits[b]) {
        os << "; first failure (replicate " << b << "): " << errors[b];
        break;
      }
    throw FitError(os.str());
  }

  const double p_lo = (1.0 - boot.level) / 2.0, p_hi = (1.0 + boot.level) / 2.0;
  std::vector<double> buf(result.replicates.size());
  auto interval = [&](auto&& get, double& lo, double& hi) {
    for (std::size_t r = 0; r < buf.size(); ++r) buf[r] = get(result.replicates[r]);
    std::sort(buf.begin(), buf.end());
    lo = percentile(buf, p_lo, boot.rule);
    hi = percentile(buf, p_hi, boot.rule);
  };
  const Eigen::Index T = result.point.beta1_curve.size();
  const Eigen::Index P = result.point.gammas.size();
  result.beta1_lower.resize(T);
  result.beta1_upper.resize(T);
  for (Eigen::Index t = 0; t < T; ++t)
    interval([t](const EstimateSet& e) { return e.beta1_curve(t); }, result.beta1_lower(t), result.beta1_upper(t));
  interval([](const EstimateSet& e) { return e.beta0; }, result.beta0_lower, result.beta0_upper);
  interval([](const EstimateSet& e) { return e.beta2; }, result.beta2_lower, result.beta2_upper);
  result.gamma_lower.resize(P);
  result.gamma_upper.resize(P);
  for (Eigen::Index g = 0; g < P; ++g)
    interval([g](const EstimateSet& e) { return e.gammas(g); }, result.gamma_lower(g), result.gamma_upper(g));
  return result;
}

PercentDifference percent_difference(const EstimateSet& corrected, const EstimateSet& naive) {
  if (corrected.beta1_curve.size() != naive.beta1_curve.size())
    throw ShapeError("percent difference needs estimates on the same grid");
  if (corrected.tau != naive.tau) throw DomainError("percent difference needs estimates at the same tau");
  constexpr double eps = 1e-8;
  PercentDifference out;
  double acc = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index t = 0; t < naive.beta1_curve.size(); ++t) {
    const double base = naive.beta1_curve(t);
    if (std::abs(base) < eps) {
      ++out.excluded_points;
      continue;
    }
    acc += std::abs((corrected.beta1_curve(t) - base) / base);
    ++used;
  }
  out.functional = used > 0 ? 100.0 * acc / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
  out.scalar = std::abs(naive.beta2) < eps ? std::numeric_limits<double>::quiet_NaN()
                                           : 100.0 * std::abs((corrected.beta2 - naive.beta2) / naive.beta2);
  return out;
}

}  // namespace fqme

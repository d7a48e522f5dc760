#include "fqme/simex.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "fqme/covkern.hpp"
#include "fqme/error.hpp"
#include "fqme/parallel.hpp"
#include "fqme/rng.hpp"

namespace fqme {

SimexConfig SimexConfig::simulation_default() {
  SimexConfig c;
  for (int m = 0; m <= 8; ++m) c.lambdas.push_back(0.25 * m);
  return c;
}

SimexConfig SimexConfig::application_default() {
  SimexConfig c;
  for (int m = 0; m <= 40; ++m) c.lambdas.push_back(0.0001 + 0.05 * m);
  return c;
}

void SimexConfig::validate() const {
  if (S < 1) throw DomainError("SIMEX needs S >= 1");
  std::set<double> distinct;
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw DomainError("SIMEX lambdas must be finite and non-negative");
    distinct.insert(l);
  }
  if (distinct.size() < 3) throw DomainError("SIMEX needs at least three distinct lambdas");
}

Eigen::MatrixXd estimate_error_covariance(const std::vector<Eigen::MatrixXd>& coefficients) {
  if (coefficients.empty()) throw DomainError("no subjects for error covariance");
  const Eigen::Index K = coefficients.front().cols();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K, K);
  double dof = 0.0;
  for (const auto& c : coefficients) {
    if (c.cols() != K) throw ShapeError("inconsistent basis dimension across subjects");
    if (c.rows() < 2) throw InsufficientReplicates("error covariance needs at least two replicates per subject");
    Eigen::RowVectorXd mean(K);
    for (Eigen::Index k = 0; k < K; ++k) mean(k) = stable_mean(c.col(k).data(), c.rows());
    const Eigen::MatrixXd dev = c.rowwise() - mean;
    acc.noalias() += dev.transpose() * dev;
    dof += static_cast<double>(c.rows() - 1);
  }
  acc /= dof;
  return 0.5 * (acc + acc.transpose());
}

double estimate_scalar_error_variance(const Eigen::Ref<const Eigen::MatrixXd>& W2) {
  if (W2.cols() < 2) throw InsufficientReplicates("scalar error variance needs L >= 2");
  if (W2.rows() < 1) throw DomainError("no subjects for scalar error variance");
  double ss = 0.0;
  for (Eigen::Index i = 0; i < W2.rows(); ++i) {
    const Eigen::RowVectorXd row = W2.row(i);
    ss += (row.array() - stable_mean(row.data(), row.size())).square().sum();
  }
  return ss / static_cast<double>(W2.rows() * (W2.cols() - 1));
}

double estimate_scalar_error_variance(const ScalarReplicates& W2) {
  if (W2.empty()) throw DomainError("no subjects for scalar error variance");
  double ss = 0.0, dof = 0.0;
  for (const auto& w : W2) {
    if (w.size() < 2) throw InsufficientReplicates("scalar error variance needs at least two replicates per subject");
    ss += (w.array() - stable_mean(w.data(), w.size())).square().sum();
    dof += static_cast<double>(w.size() - 1);
  }
  return ss / dof;
}

Eigen::Vector3d fit_quadratic(const std::vector<double>& lambdas, const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (static_cast<Eigen::Index>(lambdas.size()) != values.size())
    throw ShapeError("lambda and value counts differ");
  if (std::set<double>(lambdas.begin(), lambdas.end()).size() < 3)
    throw DomainError("quadratic extrapolation needs at least three distinct lambdas");
  const auto m = static_cast<Eigen::Index>(lambdas.size());
  Eigen::MatrixXd A(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double l = lambdas[static_cast<std::size_t>(i)];
    A(i, 0) = 1.0;
    A(i, 1) = l;
    A(i, 2) = l * l;
  }
  return A.colPivHouseholderQr().solve(values);
}

double quadratic_extrapolate(const std::vector<double>& lambdas, const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Eigen::Vector3d phi = fit_quadratic(lambdas, values);
  return phi(0) - phi(1) + phi(2);
}

SimexResult simex_fit(const FunctionalDataset& data, const SplineBasis& basis, double tau,
                      const SimexConfig& config, const SolverOptions& solver, int jobs) {
  config.validate();
  data.validate();
  const Eigen::Index n = data.n();
  const Eigen::Index K = basis.dimension();

  std::vector<Eigen::MatrixXd> coef(static_cast<std::size_t>(n));
  const Eigen::MatrixXd mean_coef = basis.project_rows(data.w1_mean());
  Eigen::VectorXd J(n), L(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w = data.w1[static_cast<std::size_t>(i)];
    coef[static_cast<std::size_t>(i)] = basis.project_rows(w);
    J(i) = static_cast<double>(w.rows());
    L(i) = static_cast<double>(data.w2[static_cast<std::size_t>(i)].size());
  }
  const Eigen::VectorXd w2_mean = data.w2_mean();

  Eigen::MatrixXd sigma_u1 = estimate_error_covariance(coef);
  const double sigma2_u2 = estimate_scalar_error_variance(data.w2);

  SimexResult result;
  SimexTrajectory& traj = result.trajectory;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_u1);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    Eigen::VectorXd ev = eig.eigenvalues();
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      if (ev(k) < 0.0) {
        traj.clipped_mass += -ev(k);
        ev(k) = 0.0;
      }
    }
    sigma_u1 = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    sigma_u1 = 0.5 * (sigma_u1 + sigma_u1.transpose());
  }
  const CorrelatedSampler sampler(sigma_u1);
  const double sd_u2 = std::sqrt(sigma2_u2);

  // Subject-mean errors per draw, shared across λ.
  const auto S = static_cast<std::size_t>(config.S);
  std::vector<Eigen::MatrixXd> u1(S);
  std::vector<Eigen::VectorXd> u2(S);
  for (std::size_t s = 0; s < S; ++s) {
    Rng rng = make_rng(config.rng_seed, {static_cast<std::uint64_t>(s)});
    u1[s] = sampler.draw(ErrorLaw::normal(), n, rng);
    u2[s].resize(n);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < n; ++i) {
      u1[s].row(i) /= std::sqrt(J(i));
      u2[s](i) = normal(rng) * sd_u2 / std::sqrt(L(i));
    }
  }

  const std::size_t M = config.lambdas.size();
  const Eigen::Index p = 1 + K + 1 + data.z.cols();
  std::vector<Eigen::VectorXd> thetas(S * M);
  std::vector<FitStatus> statuses(S * M, FitStatus::Optimal);
  parallel_for(S * M, jobs, [&](std::size_t idx) {
    const std::size_t s = idx / M, m = idx % M;
    const double root = std::sqrt(config.lambdas[m]);
    const Eigen::MatrixXd x1 = mean_coef + root * u1[s];
    const Eigen::VectorXd x2 = w2_mean + root * u2[s];
    const Eigen::MatrixXd X = assemble_design({x1, x2, data.z}, n);
    const QuantileFit fit = fit_quantile(X, data.y, tau, solver, data.weights);
    thetas[idx] = fit.coefficients;
    statuses[idx] = fit.status;
  });

  traj.lambdas = config.lambdas;
  traj.theta_bar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M), p);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t s = 0; s < S; ++s) traj.theta_bar.row(static_cast<Eigen::Index>(m)) += thetas[s * M + m].transpose();
  }
  traj.theta_bar /= static_cast<double>(S);

  traj.extrapolated.resize(p);
  traj.naive_at_zero.resize(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const Eigen::Vector3d phi = fit_quadratic(traj.lambdas, traj.theta_bar.col(c));
    traj.extrapolated(c) = phi(0) - phi(1) + phi(2);
    traj.naive_at_zero(c) = phi(0);
  }
  const FitStatus status =
      std::any_of(statuses.begin(), statuses.end(), [](FitStatus st) { return st != FitStatus::Optimal; })
          ? FitStatus::MaxIter
          : FitStatus::Optimal;
  result.estimate = make_estimate(Method::Simex, tau, traj.extrapolated, basis, status);
  result.naive = make_estimate(Method::Naive, tau, traj.naive_at_zero, basis, status);
  return result;
}

void write_trajectory_csv(std::ostream& out, const SimexTrajectory& trajectory) {
  out << "lambda,coefficient,estimate\n";
  out << std::setprecision(17);
  for (std::size_t m = 0; m < trajectory.lambdas.size(); ++m)
    for (Eigen::Index c = 0; c < trajectory.theta_bar.cols(); ++c)
      out << trajectory.lambdas[m] << ',' << c << ',' << trajectory.theta_bar(static_cast<Eigen::Index>(m), c) << '\n';
  for (Eigen::Index c = 0; c < trajectory.extrapolated.size(); ++c)
    out << -1 << ',' << c << ',' << trajectory.extrapolated(c) << '\n';
}

}  // namespace fqme

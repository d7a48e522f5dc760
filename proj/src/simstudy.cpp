#include "fqme/simstudy.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "fqme/basis.hpp"
#include "fqme/error.hpp"
#include "fqme/parallel.hpp"

namespace fqme {

void SimConfig::validate() const {
  if (n < 2) throw DomainError("simulation needs n >= 2");
  if (T < 2) throw DomainError("simulation needs T >= 2");
  if (J < 1 || L < 1) throw DomainError("simulation needs J, L >= 1");
  if (!(sigma_x2 >= 0.0 && sigma_u2 >= 0.0 && sigma_zc >= 0.0 && sigma_eps >= 0.0))
    throw DomainError("simulation scales must be non-negative");
  if (!(x1_cov.sigma >= 0.0 && u1_cov.sigma >= 0.0)) throw DomainError("functional scales must be non-negative");
  if (!(p_zb > 0.0 && p_zb < 1.0)) throw DomainError("p_zb must lie in (0, 1)");
  if (taus.empty()) throw DomainError("at least one tau is required");
  for (double tau : taus)
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("taus must lie in (0, 1)");
}

double latent_mean_curve(double t) { return 1.0 / (1.0 + std::exp(8.0 * (t - 0.5))); }

double true_beta1(double t) { return std::sin(2.0 * std::numbers::pi * t); }

FunctionalDataset SimDataset::to_dataset() const {
  FunctionalDataset d;
  const Eigen::Index n = Y.size();
  d.grid = grid;
  d.w1 = W1;
  d.w2.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d.w2.emplace_back(W2.row(i).transpose());
  d.z.resize(n, 2);
  d.z.col(0) = Zc;
  d.z.col(1) = Zb;
  d.y = Y;
  d.covariate_names = {"zc", "zb"};
  d.truth = LatentTruth{X1, X2};
  return d;
}

namespace {

Eigen::MatrixXd kernel(CovarianceSpec spec, int T) {
  spec.dim = T;
  if (spec.sigma == 0.0) return Eigen::MatrixXd::Zero(T, T);
  return build_covariance(spec);
}

}  // namespace

SimKernels build_kernels(const SimConfig& config) {
  config.validate();
  return {kernel(config.x1_cov, config.T), kernel(config.u1_cov, config.T)};
}

SimDataset generate_dataset(const SimConfig& config, Rng& rng) {
  return generate_dataset(config, build_kernels(config), rng);
}

SimDataset generate_dataset(const SimConfig& config, const SimKernels& kernels, Rng& rng) {
  config.validate();
  const Eigen::Index n = config.n, T = config.T, J = config.J, L = config.L;
  if (kernels.x1.rows() != T || kernels.u1.rows() != T) throw ShapeError("kernels do not match the grid size");
  SimDataset d;
  d.grid = uniform_grid(T);

  Eigen::RowVectorXd mean(T);
  for (Eigen::Index t = 0; t < T; ++t) mean(t) = latent_mean_curve(d.grid(t));
  d.X1 = CorrelatedSampler(kernels.x1).draw(ErrorLaw::normal(), n, rng);
  d.X1.rowwise() += mean;

  const Eigen::MatrixXd u = CorrelatedSampler(kernels.u1).draw(config.u1_law, n * J, rng);
  d.W1.resize(static_cast<std::size_t>(n));
  d.U1.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d.U1[static_cast<std::size_t>(i)] = u.middleRows(i * J, J);
    d.W1[static_cast<std::size_t>(i)] = d.U1[static_cast<std::size_t>(i)].rowwise() + d.X1.row(i);
  }

  std::normal_distribution<double> normal;
  d.X2.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.X2(i) = 2.0 + config.sigma_x2 * normal(rng);
  const Eigen::VectorXd u2 = sample_scalar(config.sigma_u2, config.u2_law, n * L, rng);
  d.W2.resize(n, L);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < L; ++l) d.W2(i, l) = d.X2(i) + u2(i * L + l);

  std::bernoulli_distribution coin(config.p_zb);
  d.Zc.resize(n);
  d.Zb.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.Zc(i) = 1.0 + config.sigma_zc * normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) d.Zb(i) = coin(rng) ? 1.0 : 0.0;

  Eigen::VectorXd beta_w(T);
  const Eigen::VectorXd w = trapezoid_weights(d.grid);
  for (Eigen::Index t = 0; t < T; ++t) beta_w(t) = w(t) * true_beta1(d.grid(t));
  d.Y = d.X1 * beta_w + config.beta2 * d.X2 + config.gamma(0) * d.Zc + config.gamma(1) * d.Zb;
  for (Eigen::Index i = 0; i < n; ++i) d.Y(i) += config.sigma_eps * normal(rng);
  return d;
}

StudyEstimator make_study_estimator(Method method, const FitOptions& options) {
  StudyEstimator e;
  e.name = std::string(display_name(method));
  e.fit = [method, options](const FunctionalDataset& data, double tau, const ReplicateContext& ctx) {
    FitOptions local = options;
    if (ctx.shared_K > 0) local.fixed_K = ctx.shared_K;
    local.simex.rng_seed = ctx.seed;
    return fit(data, method, tau, local);
  };
  return e;
}

const MetricsRow& MetricsTable::find(const std::string& estimator, double tau, const std::string& condition) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && std::abs(r.tau - tau) < 1e-12 && (condition.empty() || r.condition == condition))
      return r;
  throw DomainError("no metrics row for " + estimator + " at tau " + std::to_string(tau));
}

MetricsRow compute_metrics(const std::vector<EstimateSet>& estimates, const Eigen::VectorXd& true_curve,
                           double true_beta2, const Eigen::VectorXd& true_gamma) {
  MetricsRow row;
  row.completed = static_cast<int>(estimates.size());
  if (estimates.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.abias2 = row.avar = row.aimse = row.bias = row.bias_abs = row.var = row.aimse_scalar = nan;
    row.mean_K = nan;
    row.gamma_bias = Eigen::VectorXd::Constant(true_gamma.size(), nan);
    return row;
  }
  const double R = static_cast<double>(estimates.size());
  const Eigen::Index T = true_curve.size();
  Eigen::VectorXd mean_curve = Eigen::VectorXd::Zero(T);
  Eigen::VectorXd mean_gamma = Eigen::VectorXd::Zero(true_gamma.size());
  double mean_b2 = 0.0, mean_K = 0.0;
  for (const auto& e : estimates) {
    if (e.beta1_curve.size() != T) throw ShapeError("estimate curve does not match the true curve's grid");
    if (e.gammas.size() != true_gamma.size()) throw ShapeError("estimate has the wrong number of gammas");
    mean_curve += e.beta1_curve;
    mean_b2 += e.beta2;
    mean_gamma += e.gammas;
    mean_K += e.selected_K;
  }
  mean_curve /= R;
  mean_b2 /= R;
  mean_gamma /= R;
  row.mean_K = mean_K / R;

  row.abias2 = (mean_curve - true_curve).squaredNorm() / static_cast<double>(T);
  double avar = 0.0, var = 0.0;
  for (const auto& e : estimates) {
    avar += (e.beta1_curve - mean_curve).squaredNorm() / static_cast<double>(T);
    var += (e.beta2 - mean_b2) * (e.beta2 - mean_b2);
  }
  row.avar = avar / R;
  row.aimse = row.abias2 + row.avar;
  const double bias = mean_b2 - true_beta2;
  row.bias = bias;
  row.bias_abs = std::abs(bias);
  row.var = var / R;
  row.aimse_scalar = bias * bias + row.var;
  row.gamma_bias = mean_gamma - true_gamma;
  return row;
}

MetricsTable run_study(const SimConfig& config, const std::vector<StudyEstimator>& estimators,
                       const StudyOptions& options) {
  config.validate();
  const int R = options.R > 0 ? options.R : config.R;
  if (R < 2) throw DomainError("a study needs at least two replicates");
  const SimKernels kernels = build_kernels(config);
  const std::size_t Q = config.taus.size(), E = estimators.size();

  // cells[r][q * E + e]
  std::vector<std::vector<std::optional<EstimateSet>>> cells(static_cast<std::size_t>(R));
  std::vector<std::vector<std::string>> errors(static_cast<std::size_t>(R));
  parallel_for(static_cast<std::size_t>(R), options.jobs, [&](std::size_t r) {
    auto& out = cells[r];
    auto& err = errors[r];
    out.assign(Q * E, std::nullopt);
    err.assign(Q * E, std::string());
    Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(r)});
    const FunctionalDataset data = generate_dataset(config, kernels, rng).to_dataset();
    for (std::size_t q = 0; q < Q; ++q) {
      const double tau = config.taus[q];
      ReplicateContext ctx;
      ctx.replicate = static_cast<int>(r);
      ctx.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(r), q, 0x5e});
      std::string shared_error;
      if (options.shared_K_reference) {
        try {
          ctx.shared_K = select_K(data, *options.shared_K_reference, tau, options.fit);
        } catch (const std::exception& ex) {
          shared_error = std::string("shared K selection failed: ") + ex.what();
        }
      }
      for (std::size_t e = 0; e < E; ++e) {
        if (!shared_error.empty()) {
          err[q * E + e] = shared_error;
          continue;
        }
        try {
          out[q * E + e] = estimators[e].fit(data, tau, ctx);
        } catch (const std::exception& ex) {
          err[q * E + e] = ex.what();
        }
      }
    }
  });

  Eigen::VectorXd true_curve(config.T);
  const Eigen::VectorXd grid = uniform_grid(config.T);
  for (Eigen::Index t = 0; t < config.T; ++t) true_curve(t) = true_beta1(grid(t));
  const Eigen::VectorXd true_gamma = config.gamma;

  MetricsTable table;
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t e = 0; e < E; ++e) {
      std::vector<EstimateSet> ok;
      int failed = 0;
      for (std::size_t r = 0; r < static_cast<std::size_t>(R); ++r) {
        auto& cell = cells[r][q * E + e];
        if (cell) {
          ok.push_back(std::move(*cell));
        } else {
          ++failed;
          if (options.log)
            options.log(config.label + " " + estimators[e].name + " tau=" + std::to_string(config.taus[q]) +
                        " replicate " + std::to_string(r) + " failed: " + errors[r][q * E + e]);
        }
      }
      MetricsRow row = compute_metrics(ok, true_curve, config.beta2, true_gamma);
      row.condition = config.label;
      row.estimator = estimators[e].name;
      row.tau = config.taus[q];
      row.failed = failed;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

namespace {

SimConfig base_config() { return SimConfig{}; }

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::vector<SimConfig> study_presets(int id) {
  std::vector<SimConfig> out;
  switch (id) {
    case 1:
      for (int n : {100, 500, 1000, 2000, 5000}) {
        SimConfig c = base_config();
        c.n = n;
        c.label = "n=" + std::to_string(n);
        out.push_back(c);
      }
      break;
    case 2: {
      // U1 keeps its covariance under every law; U2 uses the canonical
      // unit-scale t and Laplace laws.
      const std::pair<std::string, std::pair<ErrorLaw, ErrorLaw>> laws[] = {
          {"Normal", {ErrorLaw::normal(), ErrorLaw::normal()}},
          {"t(4)", {ErrorLaw::student_t(4.0), ErrorLaw::student_t(4.0, LawScale::Standard)}},
          {"Laplace", {ErrorLaw::laplace(), ErrorLaw::laplace(LawScale::Standard)}},
      };
      for (const auto& [name, pair] : laws) {
        SimConfig c = base_config();
        c.u1_law = pair.first;
        c.u2_law = pair.second;
        c.label = "law=" + name;
        out.push_back(c);
      }
      break;
    }
    case 3: {
      using S = CovStructure;
      const std::vector<S> all = {S::CS, S::SE, S::AR1, S::IND, S::UN};
      const std::pair<S, std::vector<S>> pairs[] = {
          {S::CS, all}, {S::SE, all}, {S::AR1, all}, {S::IND, {S::CS, S::SE, S::UN}}, {S::UN, all}};
      for (const auto& [xs, us] : pairs) {
        for (S us_one : us) {
          SimConfig c = base_config();
          c.x1_cov.structure = xs;
          c.u1_cov.structure = us_one;
          c.label = "X=" + std::string(to_string(xs)) + ",U=" + std::string(to_string(us_one));
          out.push_back(c);
        }
      }
      break;
    }
    case 4:
      for (double rho : {0.25, 0.5, 0.75}) {
        for (CovStructure s : {CovStructure::CS, CovStructure::AR1, CovStructure::UN}) {
          SimConfig c = base_config();
          c.x1_cov.structure = c.u1_cov.structure = s;
          c.x1_cov.rho = c.u1_cov.rho = rho;
          c.label = "rho=" + fmt_num(rho) + ",structure=" + std::string(to_string(s));
          out.push_back(c);
        }
      }
      break;
    case 5: {
      const double sx[] = {1.0, 1.5, 2.0, 4.0};
      const double su[] = {0.5, 1.0, 2.0};
      for (double x : sx) {
        for (double u : su) {
          SimConfig c = base_config();
          c.x1_cov.sigma = x;
          c.u1_cov.sigma = u;
          c.label = "functional sigma_x=" + fmt_num(x) + ",sigma_u=" + fmt_num(u) + ",ratio=" + fmt_num(x / u);
          out.push_back(c);
        }
      }
      for (double x : sx) {
        for (double u : su) {
          SimConfig c = base_config();
          c.sigma_x2 = x;
          c.sigma_u2 = u;
          c.label = "scalar sigma_x=" + fmt_num(x) + ",sigma_u=" + fmt_num(u) + ",ratio=" + fmt_num(x / u);
          out.push_back(c);
        }
      }
      break;
    }
    case 6:
      for (double b : {0.5, 1.0, 1.5, 2.0, 4.0}) {
        SimConfig c = base_config();
        c.beta2 = b;
        c.label = "beta2=" + fmt_num(b);
        out.push_back(c);
      }
      break;
    default:
      throw DomainError("unknown study id " + std::to_string(id) + " (expected 1..6)");
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsTable& table, double tau) {
  out << "condition,estimator,tau,abias2,avar,aimse,bias_abs,var,aimse_scalar,completed,failed,mean_K";
  std::size_t gammas = 0;
  for (const auto& r : table.rows) gammas = std::max<std::size_t>(gammas, static_cast<std::size_t>(r.gamma_bias.size()));
  for (std::size_t g = 0; g < gammas; ++g) out << ",gamma" << (g + 1) << "_bias";
  out << '\n' << std::setprecision(10);
  for (const auto& r : table.rows) {
    if (std::abs(r.tau - tau) > 1e-12) continue;
    out << '"' << r.condition << "\"," << r.estimator << ',' << r.tau << ',' << r.abias2 << ',' << r.avar << ','
        << r.aimse << ',' << r.bias_abs << ',' << r.var << ',' << r.aimse_scalar << ',' << r.completed << ','
        << r.failed << ',' << r.mean_K;
    for (std::size_t g = 0; g < gammas; ++g)
      out << ',' << (static_cast<Eigen::Index>(g) < r.gamma_bias.size() ? r.gamma_bias(static_cast<Eigen::Index>(g)) : 0.0);
    out << '\n';
  }
}

}  // namespace fqme

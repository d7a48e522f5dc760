// Acceptance suite: one PASS/FAIL line per criterion. Exits 0 once every
// criterion has been evaluated; with --strict any FAIL gives exit code 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fqme/basis.hpp"
#include "fqme/calibrate.hpp"
#include "fqme/covkern.hpp"
#include "fqme/estimators.hpp"
#include "fqme/quantreg.hpp"
#include "fqme/simex.hpp"
#include "fqme/simstudy.hpp"

using namespace fqme;

namespace {

constexpr int kSimexDraws = 20;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

int failures = 0;

void report(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %s (%.1fs):%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.str().c_str());
  std::fflush(stdout);
}

SimConfig study_one(int n, std::vector<double> taus) {
  SimConfig c = study_presets(1).front();
  c.n = n;
  c.label = "n=" + std::to_string(n);
  c.taus = std::move(taus);
  c.seed = 1;
  return c;
}

MetricsTable run(const SimConfig& c, int R, const std::vector<Method>& methods) {
  StudyOptions opt;
  opt.R = R;
  opt.fit.simex.S = kSimexDraws;
  opt.log = [](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); };
  std::vector<StudyEstimator> est;
  for (Method m : methods) est.push_back(make_study_estimator(m, opt.fit));
  return run_study(c, est, opt);
}

std::string name(Method m) { return std::string(display_name(m)); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

const std::vector<Method> kAll{Method::Oracle, Method::Simex, Method::Fui, Method::Fsmi, Method::Average, Method::Naive};
const std::vector<Method> kCorrected{Method::Simex, Method::Fui, Method::Fsmi};

// Minimum check loss over every basic solution (p rows interpolated exactly).
double vertex_oracle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau) {
  const int n = static_cast<int>(X.rows()), p = static_cast<int>(X.cols());
  std::vector<int> idx(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) idx[static_cast<std::size_t>(k)] = k;
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Eigen::MatrixXd A(p, p);
    Eigen::VectorXd b(p);
    for (int k = 0; k < p; ++k) {
      A.row(k) = X.row(idx[static_cast<std::size_t>(k)]);
      b(k) = y(idx[static_cast<std::size_t>(k)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
      const Eigen::VectorXd r = y - X * lu.solve(b);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < r.size(); ++i) loss += r(i) * (tau - (r(i) < 0 ? 1.0 : 0.0));
      best = std::min(best, loss);
    }
    int k = p - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - p + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (int m = k + 1; m < p; ++m) idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  std::printf("acceptance suite, SIMEX draws per lambda S = %d\n", kSimexDraws);

  report("scalar attenuation of Naive and Average at n=5000", [](Outcome& o) {
    const MetricsTable t = run(study_one(5000, {0.5}), 100, {Method::Naive, Method::Average});
    const double naive = t.find("Naive", 0.5).bias, ave = t.find("Ave", 0.5).bias;
    o.detail << " Naive beta2 bias " << fmt(naive) << " (target -0.100 +- 0.010), Ave " << fmt(ave)
             << " (target -0.0175 +- 0.005)";
    o.require(std::abs(naive + 0.100) <= 0.010, "Naive band");
    o.require(std::abs(ave + 0.0175) <= 0.005, "Ave band");
  });

  report("corrected scalar bias at n=2000", [](Outcome& o) {
    const MetricsTable t = run(study_one(2000, {0.5}), 100, {Method::Simex, Method::Fui, Method::Fsmi});
    for (Method m : kCorrected) {
      const double b = t.find(name(m), 0.5).bias;
      o.detail << ' ' << name(m) << ' ' << fmt(b);
      o.require(std::abs(b) <= 0.01, name(m) + " |bias| <= 0.01");
    }
  });

  const MetricsTable n500 = run(study_one(500, {0.25, 0.5, 0.75}), 200, kAll);
  auto row = [&n500](Method m, double tau) -> const MetricsRow& { return n500.find(name(m), tau); };

  report("functional bias separation at n=500", [&](Outcome& o) {
    const double naive = row(Method::Naive, 0.5).abias2, ave = row(Method::Average, 0.5).abias2;
    o.detail << " tau=0.5 ABias2 Naive " << fmt(naive) << " Ave " << fmt(ave);
    o.require(naive >= 0.065 && naive <= 0.11, "Naive in [0.065, 0.11]");
    o.require(ave >= 0.006 && ave <= 0.012, "Ave in [0.006, 0.012]");
    for (Method m : {Method::Oracle, Method::Simex, Method::Fui, Method::Fsmi}) {
      const double v = row(m, 0.5).abias2;
      o.detail << ' ' << name(m) << ' ' << fmt(v);
      o.require(v <= 0.007, name(m) + " <= 0.007");
    }
    for (double tau : {0.25, 0.5, 0.75}) {
      const double oracle = row(Method::Oracle, tau).abias2;
      double worst = 0.0;
      for (Method m : kCorrected) worst = std::max(worst, row(m, tau).abias2);
      const double a = row(Method::Average, tau).abias2, nv = row(Method::Naive, tau).abias2;
      o.detail << "; tau=" << fmt(tau) << " Oracle " << fmt(oracle) << " worst corrected " << fmt(worst) << " Ave "
               << fmt(a) << " Naive " << fmt(nv);
      for (Method m : kCorrected)
        o.require(oracle <= row(m, tau).abias2, "Oracle <= " + name(m) + " at tau " + fmt(tau));
      o.require(1.5 * worst <= a, "Ave >= 1.5 x corrected at tau " + fmt(tau));
      o.require(5.0 * a <= nv, "Naive >= 5 x Ave at tau " + fmt(tau));
    }
  });

  report("variance ordering SIMEX > FUI >= FSMI > Ave >= Oracle at n=500", [&](Outcome& o) {
    const double s = row(Method::Simex, 0.5).avar, f = row(Method::Fui, 0.5).avar, m = row(Method::Fsmi, 0.5).avar,
                 a = row(Method::Average, 0.5).avar, r = row(Method::Oracle, 0.5).avar;
    o.detail << " Avar SIMEX " << fmt(s) << " FUI " << fmt(f) << " FSMI " << fmt(m) << " Ave " << fmt(a) << " Oracle "
             << fmt(r);
    o.require(s > f, "SIMEX > FUI");
    o.require(f >= m, "FUI >= FSMI");
    o.require(m > a, "FSMI > Ave");
    o.require(a >= r, "Ave >= Oracle");
  });

  report("interior point matches vertex enumeration on 200 instances", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N;
    std::uniform_int_distribution<int> n_of(5, 30), p_of(1, 3), tau_of(1, 9);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
      const int n = n_of(rng), p = p_of(rng);
      const double tau = 0.1 * tau_of(rng);
      Eigen::MatrixXd X(n, p);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int k = 1; k < p; ++k) X(i, k) = N(rng);
        y(i) = X.row(i).sum() + 1.5 * N(rng);
      }
      const double ip = fit_quantile(X, y, tau).objective, oracle = vertex_oracle(X, y, tau);
      worst = std::max(worst, std::abs(ip - oracle) / std::max(1.0, std::abs(oracle)));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail << " worst relative gap " << fmt(worst) << ", " << fmt(secs) << " s";
    o.require(worst <= 1e-8, "gap <= 1e-8");
    o.require(secs < 30.0, "runtime < 30 s");
  });

  report("SIMEX extrapolation exactness and zero-error degenerate case", [](Outcome& o) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N;
    double worst = 0.0;
    for (const auto& lambdas : {SimexConfig::simulation_default().lambdas, SimexConfig::application_default().lambdas})
      for (int rep = 0; rep < 50; ++rep) {
        const double a = N(rng), b = N(rng), c = N(rng);
        Eigen::VectorXd v(static_cast<Eigen::Index>(lambdas.size()));
        for (std::size_t m = 0; m < lambdas.size(); ++m)
          v(static_cast<Eigen::Index>(m)) = a + b * lambdas[m] + c * lambdas[m] * lambdas[m];
        worst = std::max(worst, std::abs(quadratic_extrapolate(lambdas, v) - (a - b + c)));
      }
    o.detail << " worst extrapolation error " << fmt(worst);
    o.require(worst <= 1e-10, "quadratic recovery to 1e-10");

    SimConfig cfg = study_one(300, {0.5});
    Rng data_rng(11);
    const SimDataset s = generate_dataset(cfg, data_rng);
    FunctionalDataset d = s.to_dataset();
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      d.w1[static_cast<std::size_t>(i)] = s.X1.row(i).replicate(cfg.J, 1);
      d.w2[static_cast<std::size_t>(i)] = Eigen::VectorXd::Constant(cfg.L, s.X2(i));
    }
    FitOptions opt;
    opt.simex.S = kSimexDraws;
    const EstimateSet simex = fit(d, Method::Simex, 0.5, opt), naive = fit(d, Method::Naive, 0.5, opt),
                      ave = fit(d, Method::Average, 0.5, opt);
    const double scale = 1.0 + ave.coefficients.cwiseAbs().maxCoeff();
    const double gap = std::max((simex.coefficients - ave.coefficients).cwiseAbs().maxCoeff(),
                                (naive.coefficients - ave.coefficients).cwiseAbs().maxCoeff()) /
                       scale;
    o.detail << "; zero-error SIMEX/Naive/Ave relative gap " << fmt(gap);
    o.require(gap <= 1e-7, "zero-error fits agree");
  });

  report("error covariance estimators on simulated replicates", [](Outcome& o) {
    const int n = 5000, J = 7, T = 100;
    const Eigen::MatrixXd sigma_u = build_covariance({CovStructure::AR1, T, 0.5, 2.5});
    const SplineBasis basis = make_basis_with_dimension(3, 8, uniform_grid(T));
    const Eigen::MatrixXd P = basis.weights().asDiagonal() * basis.values();
    const Eigen::MatrixXd truth = P.transpose() * sigma_u * P;
    Rng rng(3);
    const CorrelatedSampler sampler(sigma_u);
    std::normal_distribution<double> N;
    std::vector<Eigen::MatrixXd> coef;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd w = sampler.draw(ErrorLaw::normal(), J, rng);
      w.rowwise() += Eigen::RowVectorXd::Constant(T, 3.0 * N(rng));
      coef.push_back(basis.project_rows(w));
    }
    const double rel = (estimate_error_covariance(coef) - truth).norm() / truth.norm();
    Eigen::MatrixXd W(n, J);
    for (int i = 0; i < n; ++i) {
      const double x = 0.5 * N(rng);
      for (int l = 0; l < J; ++l) W(i, l) = x + 0.25 * N(rng);
    }
    const double scalar = estimate_scalar_error_variance(W);
    o.detail << " functional Frobenius error " << fmt(100 * rel) << "%, scalar variance " << fmt(scalar)
             << " (truth 0.0625)";
    o.require(rel <= 0.05, "functional within 5%");
    o.require(std::abs(scalar / 0.0625 - 1.0) <= 0.03, "scalar within 3%");
  });

  report("robustness to error laws at n=500", [](Outcome& o) {
    std::vector<MetricsTable> tables;
    std::vector<std::string> labels;
    for (SimConfig c : study_presets(2)) {
      c.n = 500;
      c.taus = {0.5};
      c.seed = 1;
      labels.push_back(c.label);
      tables.push_back(run(c, 100, {Method::Simex, Method::Fui, Method::Fsmi, Method::Naive}));
    }
    for (Method m : kCorrected) {
      const double normal = tables[0].find(name(m), 0.5).abias2;
      o.detail << ' ' << name(m) << " ABias2";
      for (std::size_t k = 0; k < tables.size(); ++k) {
        const double v = tables[k].find(name(m), 0.5).abias2;
        o.detail << ' ' << labels[k] << ' ' << fmt(v);
        if (k > 0) o.require(std::abs(v - normal) <= 0.25 * normal, name(m) + " " + labels[k]);
      }
      o.detail << ';';
    }
    const double normal = tables[0].find("Naive", 0.5).bias_abs, laplace = tables[2].find("Naive", 0.5).bias_abs;
    o.detail << " Naive |beta2 bias| Normal " << fmt(normal) << " Laplace " << fmt(laplace);
    o.require(laplace >= 2.0 * normal, "Laplace >= 2 x Normal");
  });

  report("property suites", [&](Outcome& o) {
    double unity = 0.0;
    for (int degree : {1, 2, 3})
      for (int n_int : {0, 3, 9}) {
        const SplineBasis b(degree, n_int, uniform_grid(101));
        unity = std::max(unity, (b.values().rowwise().sum().array() - 1.0).abs().maxCoeff());
      }
    o.require(unity < 1e-12, "partition of unity");

    double min_eig = 0.0, asym = 0.0;
    for (CovStructure s : {CovStructure::CS, CovStructure::AR1, CovStructure::UN, CovStructure::SE, CovStructure::IND})
      for (double rho : {0.25, 0.5, 0.75}) {
        const Eigen::MatrixXd k = build_covariance({s, 50, rho, 1.0});
        asym = std::max(asym, (k - k.transpose()).cwiseAbs().maxCoeff());
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff());
      }
    o.require(asym == 0.0 && min_eig >= -1e-10, "PSD symmetric kernels");

    Rng rng(5);
    std::normal_distribution<double> N;
    bool bounded = true;
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::MatrixXd W(15, 4);
      for (int i = 0; i < 15; ++i) {
        const double u = N(rng);
        for (int j = 0; j < 4; ++j) W(i, j) = u + (0.2 + 0.1 * rep) * N(rng);
      }
      const auto f = fit_scalar_random_intercept(W);
      const Eigen::VectorXd p = f.predictions();
      for (int i = 0; i < 15; ++i)
        bounded = bounded && p(i) >= std::min(f.fixed_intercept, f.subject_means(i)) &&
                  p(i) <= std::max(f.fixed_intercept, f.subject_means(i));
    }
    o.require(bounded, "BLUP bounds");

    Rng data_rng(9);
    const SimDataset s = generate_dataset(study_one(100, {0.5}), data_rng);
    o.require(fsmi_calibrate(s.W1, 1) == fui_calibrate(s.W1), "FSMI(window=1) = FUI");

    bool additive = true;
    for (const auto& r : n500.rows) additive = additive && r.aimse == r.abias2 + r.avar;
    o.require(additive, "AIMSE = ABias2 + Avar");

    const FunctionalDataset d = s.to_dataset();
    BootstrapOptions boot;
    boot.B = 10;
    boot.seed = 4;
    const BootstrapResult a = bootstrap_ci(d, Method::Fui, 0.5, {}, boot);
    boot.jobs = 2;
    const BootstrapResult b = bootstrap_ci(d, Method::Fui, 0.5, {}, boot);
    o.require(a.beta1_lower == b.beta1_lower && a.beta1_upper == b.beta1_upper && a.beta2_lower == b.beta2_lower &&
                  a.beta2_upper == b.beta2_upper,
              "bootstrap determinism");
    o.detail << " partition-of-unity error " << fmt(unity) << ", kernel min eigenvalue " << fmt(min_eig);
  });

  std::printf("%d criteria failed\n", failures);
  return strict && failures > 0 ? 1 : 0;
}

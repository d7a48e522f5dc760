#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "fqme/error.hpp"
#include "fqme/simstudy.hpp"

using namespace fqme;

namespace {

SimConfig small_grid(int n, int T) {
  SimConfig c;
  c.n = n;
  c.T = T;
  c.J = 2;
  c.L = 2;
  c.x1_cov.dim = T;
  c.u1_cov.dim = T;
  return c;
}

StudyEstimator stub(const std::string& name, std::function<double(double)> curve, double beta2,
                    Eigen::Vector2d gamma) {
  StudyEstimator e;
  e.name = name;
  e.fit = [curve, beta2, gamma](const FunctionalDataset& d, double tau, const ReplicateContext&) {
    EstimateSet s;
    s.tau = tau;
    s.beta1_curve.resize(d.grid.size());
    for (Eigen::Index t = 0; t < d.grid.size(); ++t) s.beta1_curve(t) = curve(d.grid(t));
    s.beta2 = beta2;
    s.gammas = gamma;
    s.selected_K = 4;
    return s;
  };
  return e;
}

EstimateSet curve_estimate(std::initializer_list<double> values, double beta2) {
  EstimateSet e;
  e.beta1_curve.resize(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) e.beta1_curve(i++) = v;
  e.beta2 = beta2;
  e.gammas = Eigen::Vector2d(1.0, 1.0);
  return e;
}

}  // namespace

TEST_CASE("latent curve has mean one half at the midpoint") {
  // With sigma 3 the standard error at n = 10⁵ is 0.0095, so a ±0.01 band is
  // one standard error; 10⁶ draws bring it to 0.003.
  SimConfig c = small_grid(1000000, 3);
  Rng rng(1);
  const SimDataset d = generate_dataset(c, rng);
  CHECK(std::abs(d.X1.col(1).mean() - 0.5) < 0.01);
  CHECK(latent_mean_curve(0.5) == 0.5);
}

TEST_CASE("without functional noise every replicate is the mean curve") {
  SimConfig c;
  c.n = 20;
  c.x1_cov.sigma = 0.0;
  c.u1_cov.sigma = 0.0;
  Rng rng(2);
  const SimDataset d = generate_dataset(c, rng);
  for (const auto& w : d.W1)
    for (Eigen::Index j = 0; j < w.rows(); ++j)
      for (Eigen::Index t = 0; t < w.cols(); ++t) CHECK(w(j, t) == latent_mean_curve(d.grid(t)));
}

TEST_CASE("noise-free response is the integral of beta1 against the mean curve") {
  SimConfig c;
  c.n = 5;
  c.x1_cov.sigma = 0.0;
  c.u1_cov.sigma = 0.0;
  c.sigma_x2 = c.sigma_u2 = c.sigma_zc = c.sigma_eps = 0.0;
  c.gamma = Eigen::Vector2d::Zero();
  c.beta2 = 0.0;
  Rng rng(3);
  const SimDataset d = generate_dataset(c, rng);
  const int fine = 10000;
  double oracle = 0.0;
  for (int i = 0; i < fine; ++i) {
    const double t = static_cast<double>(i) / (fine - 1);
    const double w = (i == 0 || i == fine - 1) ? 0.5 : 1.0;
    oracle += w * std::sin(2 * std::numbers::pi * t) / (1.0 + std::exp(8.0 * (t - 0.5)));
  }
  oracle /= fine - 1;
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(d.Y(i) - oracle) < 1e-4);
}

TEST_CASE("replicates are the latent values plus the stored errors") {
  SimConfig c;
  c.n = 30;
  Rng rng(4);
  const SimDataset d = generate_dataset(c, rng);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const auto k = static_cast<std::size_t>(i);
    CHECK(((d.W1[k] - d.U1[k]).rowwise() - d.X1.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(d.Y.allFinite());
  CHECK((d.Zb.array() * (1.0 - d.Zb.array())).abs().maxCoeff() == 0.0);
}

TEST_CASE("metric formulas on a hand-computed two-replicate example") {
  const Eigen::Vector4d truth(1, 1, 1, 1);
  const std::vector<EstimateSet> est{curve_estimate({1, 2, 3, 4}, 0.4), curve_estimate({3, 2, 1, 0}, 0.6)};
  const MetricsRow r = compute_metrics(est, truth, 0.45, Eigen::Vector2d(1.0, 1.0));
  // Mean curve (2, 2, 2, 2); deviations (∓1, 0, ±1, ±2) give 6/4 per replicate.
  CHECK(r.abias2 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.avar == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(r.aimse == r.abias2 + r.avar);
  CHECK(r.bias_abs == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(r.bias == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(r.var == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(r.aimse_scalar == doctest::Approx(0.0125).epsilon(1e-12));
  CHECK(r.gamma_bias.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.completed == 2);
}

TEST_CASE("estimator returning the truth has zero error and zero curve has half") {
  SimConfig c;
  c.n = 20;
  c.R = 3;
  c.taus = {0.5};
  StudyOptions opt;
  opt.shared_K_reference.reset();
  const auto truth = stub("truth", true_beta1, c.beta2, c.gamma);
  const auto zero = stub("zero", [](double) { return 0.0; }, 0.0, c.gamma);
  const MetricsTable tab = run_study(c, {truth, zero}, opt);
  const MetricsRow& a = tab.find("truth", 0.5);
  CHECK(a.abias2 < 1e-30);
  CHECK(a.avar < 1e-30);
  CHECK(a.aimse < 1e-30);
  CHECK(a.bias_abs == 0.0);
  CHECK(a.var == 0.0);
  const MetricsRow& z = tab.find("zero", 0.5);
  // Σ sin²(2πi/99) over i = 0..99 is 99/2, so the grid mean is 0.495.
  CHECK(z.abias2 == doctest::Approx(0.495).epsilon(1e-12));
  CHECK(std::abs(z.abias2 - 0.5) < 0.01);
  CHECK(z.avar == 0.0);
  CHECK(z.bias_abs == doctest::Approx(0.5));
}

TEST_CASE("squared bias plus variance equals AIMSE in every row") {
  SimConfig c;
  c.n = 80;
  c.R = 3;
  c.taus = {0.25, 0.5};
  FitOptions fo;
  fo.simex.S = 2;
  const MetricsTable tab = run_study(
      c, {make_study_estimator(Method::Naive, fo), make_study_estimator(Method::Fui, fo),
          make_study_estimator(Method::Simex, fo)});
  REQUIRE(tab.rows.size() == 6);
  for (const auto& r : tab.rows) {
    CHECK(r.aimse == r.abias2 + r.avar);
    CHECK(r.aimse_scalar == doctest::Approx(r.bias_abs * r.bias_abs + r.var).epsilon(1e-12));
    CHECK(r.completed == 3);
  }
}

TEST_CASE("a fixed seed fixes the metrics table") {
  SimConfig c;
  c.n = 60;
  c.R = 2;
  c.taus = {0.5};
  FitOptions fo;
  fo.simex.S = 2;
  const std::vector<StudyEstimator> est{make_study_estimator(Method::Average, fo),
                                        make_study_estimator(Method::Simex, fo)};
  StudyOptions one, two;
  two.jobs = 2;
  const MetricsTable a = run_study(c, est, one), b = run_study(c, est, two);
  std::ostringstream sa, sb;
  write_metrics_csv(sa, a, 0.5);
  write_metrics_csv(sb, b, 0.5);
  CHECK(sa.str() == sb.str());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].abias2 == b.rows[k].abias2);
    CHECK(a.rows[k].avar == b.rows[k].avar);
    CHECK(a.rows[k].var == b.rows[k].var);
  }
  c.seed += 1;
  CHECK(run_study(c, est, one).rows[0].abias2 != a.rows[0].abias2);
}

TEST_CASE("failed replicates are counted, not averaged") {
  SimConfig c;
  c.n = 20;
  c.R = 4;
  c.taus = {0.5};
  StudyOptions opt;
  opt.shared_K_reference.reset();
  StudyEstimator flaky = stub("flaky", true_beta1, c.beta2, c.gamma);
  auto inner = flaky.fit;
  flaky.fit = [inner](const FunctionalDataset& d, double tau, const ReplicateContext& ctx) {
    if (ctx.replicate % 2 == 1) throw FitError("synthetic failure");
    return inner(d, tau, ctx);
  };
  std::vector<std::string> log;
  opt.log = [&log](const std::string& m) { log.push_back(m); };
  const MetricsRow& r = run_study(c, {flaky}, opt).rows.at(0);
  CHECK(r.completed == 2);
  CHECK(r.failed == 2);
  CHECK(r.abias2 == 0.0);
  CHECK(log.size() == 2);
}

TEST_CASE("study presets have the documented sizes") {
  CHECK(study_presets(1).size() == 5);
  CHECK(study_presets(2).size() == 3);
  CHECK(study_presets(3).size() == 23);
  CHECK(study_presets(4).size() == 9);
  CHECK(study_presets(5).size() == 24);
  CHECK(study_presets(6).size() == 5);
  CHECK_THROWS_AS(study_presets(7), DomainError);
  const auto s1 = study_presets(1);
  std::set<int> ns;
  for (const auto& c : s1) {
    ns.insert(c.n);
    SimConfig base = c;
    base.n = 500;
    base.label = "base";
    CHECK(base.x1_cov.sigma == SimConfig{}.x1_cov.sigma);
    CHECK(base.u1_cov.rho == SimConfig{}.u1_cov.rho);
    CHECK(base.beta2 == SimConfig{}.beta2);
    CHECK(base.sigma_u2 == SimConfig{}.sigma_u2);
  }
  CHECK(ns == std::set<int>{100, 500, 1000, 2000, 5000});
  std::set<std::string> labels;
  for (int id = 1; id <= 6; ++id)
    for (const auto& c : study_presets(id)) {
      c.validate();
      labels.insert(std::to_string(id) + c.label);
    }
  CHECK(labels.size() == 5 + 3 + 23 + 9 + 24 + 5);
  for (const auto& c : study_presets(6)) CHECK(c.n == 500);
}

TEST_CASE("invalid configurations are rejected") {
  SimConfig c;
  c.p_zb = 1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = SimConfig{};
  c.taus = {0.5, 1.0};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = SimConfig{};
  CHECK_THROWS_AS(run_study(c, {}, StudyOptions{.R = 1}), DomainError);
}

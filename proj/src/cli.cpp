#include "fqme/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "fqme/dataio.hpp"
#include "fqme/error.hpp"

#ifndef FQME_VERSION
#define FQME_VERSION "unknown"
#endif

namespace fqme {

using Json = nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string tau_tag(double tau) {
  std::ostringstream os;
  os << tau;
  return os.str();
}

Json law_to_json(const ErrorLaw& law) {
  Json j;
  j["kind"] = std::string(to_string(law.kind));
  j["df"] = law.df;
  j["scale"] = law.scale == LawScale::Standard ? "standard" : "match_covariance";
  return j;
}

ErrorLaw law_from_json(const Json& j) {
  ErrorLaw law;
  const std::string kind = j.value("kind", std::string("Normal"));
  if (kind == "Normal" || kind == "normal") law.kind = ErrorLawKind::Normal;
  else if (kind == "StudentT" || kind == "t" || kind == "student_t") law.kind = ErrorLawKind::StudentT;
  else if (kind == "Laplace" || kind == "laplace") law.kind = ErrorLawKind::Laplace;
  else throw DomainError("unknown error law '" + kind + "'");
  law.df = j.value("df", 4.0);
  const std::string scale = j.value("scale", std::string("match_covariance"));
  if (scale == "standard") law.scale = LawScale::Standard;
  else if (scale == "match_covariance") law.scale = LawScale::MatchCovariance;
  else throw DomainError("unknown law scale '" + scale + "'");
  return law;
}

Json cov_to_json(const CovarianceSpec& s) {
  return Json{{"structure", std::string(to_string(s.structure))}, {"rho", s.rho}, {"sigma", s.sigma},
              {"seed", s.seed}, {"realization", describe(s)}};
}

CovarianceSpec cov_from_json(const Json& j, CovarianceSpec s) {
  if (j.contains("structure")) s.structure = parse_cov_structure(j.at("structure").get<std::string>());
  s.rho = j.value("rho", s.rho);
  s.sigma = j.value("sigma", s.sigma);
  s.seed = j.value("seed", s.seed);
  return s;
}

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
      throw Error("IoError", "cannot create output directory " + dir_.string());
  }
  void write(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f || !(f << content) || !f.flush()) throw Error("IoError", "cannot write " + (dir_ / name).string());
    files_.push_back(name);
  }
  const std::filesystem::path& path() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

void write_manifest_files(const OutputDir& out, const std::string& command, const Json& config,
                          unsigned long long seed, const std::string& started) {
  Json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["version"] = FQME_VERSION;
  m["started"] = started;
  m["finished"] = utc_now();
  Json files = Json::array();
  std::vector<std::string> names = out.files();
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const auto p = out.path() / name;
    files.push_back({{"file", name}, {"sha256", sha256_file(p)}, {"bytes", std::filesystem::file_size(p)}});
  }
  m["outputs"] = files;
  std::ofstream f(out.path() / "manifest.json");
  if (!f || !(f << m.dump(2) << '\n')) throw Error("IoError", "cannot write manifest");
}

unsigned long long resolve_seed(const std::optional<unsigned long long>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  return (static_cast<unsigned long long>(rd()) << 32) ^ rd();
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& raw : names) {
    std::stringstream ss(raw);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(parse_method(part));
  }
  return out;
}

// ---- simulate ----

struct SimulateArgs {
  std::optional<int> study;
  std::string config_path;
  std::optional<int> replicates;
  std::optional<unsigned long long> seed;
  std::string out = "fqme-out";
  std::vector<double> taus;
  int jobs = 0;
  bool full = false;
  std::vector<std::string> methods{"oracle,simex,fui,fsmi,average,naive"};
  int simex_s = 100;
  int fixed_k = 0;
  std::string k_policy = "shared-naive";
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const std::string started = utc_now();
  const unsigned long long seed = resolve_seed(a.seed);
  std::vector<SimConfig> configs;
  std::string stem;
  if (a.study) {
    configs = study_presets(*a.study);
    stem = "study" + std::to_string(*a.study);
  } else {
    std::ifstream f(a.config_path);
    if (!f) throw Error("IoError", "cannot open " + a.config_path);
    Json j;
    try {
      j = Json::parse(f);
    } catch (const Json::exception& e) {
      throw ParseError(a.config_path + ": " + e.what(), 0);
    }
    if (j.is_array()) {
      for (const auto& c : j) configs.push_back(sim_config_from_json(c));
    } else {
      configs.push_back(sim_config_from_json(j));
    }
    stem = std::filesystem::path(a.config_path).stem().string();
  }
  const int R = a.replicates ? *a.replicates : (a.full ? 500 : 100);
  const std::vector<Method> methods = parse_methods(a.methods);

  FitOptions fit;
  fit.simex.S = a.simex_s;
  fit.fixed_K = a.fixed_k;
  StudyOptions opts;
  opts.R = R;
  opts.jobs = a.jobs;
  opts.fit = fit;
  if (a.k_policy == "shared-naive") opts.shared_K_reference = Method::Naive;
  else if (a.k_policy == "shared-average") opts.shared_K_reference = Method::Average;
  else if (a.k_policy == "per-estimator") opts.shared_K_reference.reset();
  else throw DomainError("--k-policy must be shared-naive, shared-average or per-estimator");
  opts.log = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
  std::vector<StudyEstimator> estimators;
  for (Method m : methods) estimators.push_back(make_study_estimator(m, fit));

  MetricsTable all;
  std::vector<double> taus;
  Json conditions = Json::array();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    SimConfig cfg = configs[c];
    if (!a.taus.empty()) cfg.taus = a.taus;
    cfg.R = R;
    cfg.seed = derive_seed(seed, {static_cast<std::uint64_t>(a.study.value_or(0)), c});
    for (double t : cfg.taus)
      if (std::find(taus.begin(), taus.end(), t) == taus.end()) taus.push_back(t);
    conditions.push_back(to_json(cfg));
    out << "condition " << (c + 1) << "/" << configs.size() << ": " << cfg.label << std::endl;
    MetricsTable t = run_study(cfg, estimators, opts);
    all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
  }

  OutputDir dir(a.out);
  for (double tau : taus) {
    std::ostringstream csv;
    write_metrics_csv(csv, all, tau);
    dir.write(stem + "_tau" + tau_tag(tau) + ".csv", csv.str());
  }
  Json config{{"study", a.study ? Json(*a.study) : Json(nullptr)},
              {"config_file", a.config_path},
              {"replicates", R},
              {"methods", a.methods},
              {"simex_S", a.simex_s},
              {"fixed_K", a.fixed_k},
              {"k_policy", a.k_policy},
              {"jobs", a.jobs},
              {"full", a.full},
              {"conditions", conditions}};
  write_manifest_files(dir, "simulate", config, seed, started);
  out << "wrote " << dir.files().size() << " tables to " << dir.path().string() << '\n';
  return 0;
}

// ---- fit ----

struct FitArgs {
  std::string data;
  std::vector<std::string> methods;
  std::vector<double> taus{0.5};
  int bootstrap = 0;
  double level = 0.95;
  std::optional<unsigned long long> seed;
  std::string out = "fqme-out";
  int jobs = 0;
  int fixed_k = 0;
  int simex_s = 100;
  int naive_day = 1;
  int fsmi_window = 5;
  std::string percentile_rule = "type6";
  std::string lambdas = "application";
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const std::string started = utc_now();
  const unsigned long long seed = resolve_seed(a.seed);
  const std::vector<Method> methods = parse_methods(a.methods);
  if (methods.empty()) throw DomainError("no methods requested");
  LoadResult loaded = load_dataset(a.data);
  const FunctionalDataset& data = loaded.dataset;
  for (Method m : methods)
    if (m == Method::Oracle && !data.truth)
      throw MissingTruth("MissingTruth: the oracle estimator needs latent covariates, which loaded data never carry");

  FitOptions opts;
  opts.fixed_K = a.fixed_k;
  opts.naive_day = a.naive_day;
  opts.fsmi_window = a.fsmi_window;
  if (a.lambdas == "application") opts.simex = SimexConfig::application_default();
  else if (a.lambdas == "simulation") opts.simex = SimexConfig::simulation_default();
  else throw DomainError("--lambdas must be application or simulation");
  opts.simex.S = a.simex_s;
  opts.simex.rng_seed = derive_seed(seed, {0x51});
  opts.jobs = a.jobs;

  BootstrapOptions boot;
  boot.B = a.bootstrap;
  boot.level = a.level;
  boot.seed = derive_seed(seed, {0xb0});
  boot.jobs = a.jobs;
  if (a.percentile_rule == "type6") boot.rule = PercentileRule::Type6;
  else if (a.percentile_rule == "inverse-ecdf") boot.rule = PercentileRule::InverseEcdf;
  else throw DomainError("--percentile-rule must be type6 or inverse-ecdf");
  boot.log = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };

  const auto& rep = loaded.report;
  out << "loaded " << rep.retained_subjects << " of " << rep.input_subjects << " subjects";
  for (const auto& [rule, count] : rep.dropped) out << "; dropped " << count << " (" << rule << ")";
  out << '\n';

  OutputDir dir(a.out);
  std::ostringstream est_csv, summary;
  est_csv << "method,tau,target,index,t,estimate,lower,upper\n";
  summary << "method,tau,K,status,beta0,beta2,bootstrap_B,bootstrap_failures\n" << std::setprecision(17);
  for (Method m : methods) {
    for (double tau : a.taus) {
      std::optional<BootstrapResult> br;
      EstimateSet e;
      if (a.bootstrap > 0) {
        br = bootstrap_ci(data, m, tau, opts, boot);
        e = br->point;
      } else {
        e = fit(data, m, tau, opts);
      }
      std::ostringstream rows;
      write_estimates_csv(rows, e, data.grid, data.covariate_names, br ? &*br : nullptr);
      const std::string body = rows.str();
      est_csv << body.substr(body.find('\n') + 1);
      summary << to_string(m) << ',' << tau << ',' << e.selected_K << ',' << to_string(e.status) << ',' << e.beta0
              << ',' << e.beta2 << ',' << (br ? br->B : 0) << ',' << (br ? br->failures : 0) << '\n';
      const std::string tag = std::string(to_string(m)) + "_tau" + tau_tag(tau);
      dir.write("beta1_" + tag + ".svg", render_beta1_svg(data.grid, e, br ? &*br : nullptr));
      if (m == Method::Simex) {
        std::ostringstream traj;
        write_trajectory_csv(traj, fit_simex(data, tau, opts).trajectory);
        dir.write("simex_trajectory_tau" + tau_tag(tau) + ".csv", traj.str());
      }
      out << to_string(m) << " tau=" << tau << " K=" << e.selected_K << " beta2=" << e.beta2 << '\n';
    }
  }
  dir.write("estimates.csv", est_csv.str());
  dir.write("fit_summary.csv", summary.str());

  Json report{{"input_subjects", rep.input_subjects},
              {"retained_subjects", rep.retained_subjects},
              {"dropped", rep.dropped},
              {"incomplete_days_dropped", rep.incomplete_days_dropped},
              {"outlier_cells", rep.outlier_cells},
              {"outlier_days_dropped", rep.outlier_days_dropped}};
  dir.write("inclusion_report.json", report.dump(2) + "\n");
  Json config{{"data", a.data},           {"methods", a.methods},        {"taus", a.taus},
              {"bootstrap", a.bootstrap}, {"level", a.level},            {"fixed_K", a.fixed_k},
              {"simex_S", a.simex_s},     {"lambdas", opts.simex.lambdas}, {"naive_day", a.naive_day},
              {"fsmi_window", a.fsmi_window}, {"percentile_rule", a.percentile_rule}, {"jobs", a.jobs}};
  write_manifest_files(dir, "fit", config, seed, started);
  return 0;
}

// ---- compare ----

struct CompareArgs {
  std::vector<std::string> inputs;
  std::string out = "fqme-out";
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream&) {
  const std::string started = utc_now();
  std::vector<EstimateSet> all;
  Eigen::VectorXd grid;
  for (const auto& in : a.inputs) {
    std::filesystem::path p = in;
    if (std::filesystem::is_directory(p)) p /= "estimates.csv";
    Eigen::VectorXd g;
    auto es = read_estimates_csv(p, g);
    if (grid.size() == 0) {
      grid = g;
    } else if (g.size() != grid.size() || (g - grid).cwiseAbs().maxCoeff() > 1e-12) {
      throw ShapeError("estimate files are on different grids: " + p.string());
    }
    all.insert(all.end(), es.begin(), es.end());
  }
  std::map<double, const EstimateSet*> naive;
  for (const auto& e : all)
    if (e.method == Method::Naive) naive[e.tau] = &e;
  if (naive.empty()) throw DomainError("compare needs a naive estimate among the inputs");

  std::ostringstream csv;
  csv << "method,tau,functional_percent,scalar_percent,excluded_points\n" << std::setprecision(10);
  int rows = 0;
  for (const auto& e : all) {
    if (e.method == Method::Naive) continue;
    const auto it = naive.find(e.tau);
    if (it == naive.end()) continue;
    const PercentDifference pd = percent_difference(e, *it->second);
    csv << to_string(e.method) << ',' << e.tau << ',' << pd.functional << ',' << pd.scalar << ','
        << pd.excluded_points << '\n';
    out << display_name(e.method) << " tau=" << e.tau << " functional=" << pd.functional << "% scalar=" << pd.scalar
        << "%\n";
    ++rows;
  }
  if (rows == 0) throw DomainError("no corrected estimate shares a tau with the naive estimate");
  OutputDir dir(a.out);
  dir.write("percent_difference.csv", csv.str());
  write_manifest_files(dir, "compare", Json{{"inputs", a.inputs}}, 0, started);
  return 0;
}

}  // namespace

Json to_json(const SimConfig& c) {
  return Json{{"label", c.label},
              {"n", c.n},
              {"T", c.T},
              {"J", c.J},
              {"L", c.L},
              {"x1_cov", cov_to_json(c.x1_cov)},
              {"u1_cov", cov_to_json(c.u1_cov)},
              {"u1_law", law_to_json(c.u1_law)},
              {"u2_law", law_to_json(c.u2_law)},
              {"sigma_x2", c.sigma_x2},
              {"sigma_u2", c.sigma_u2},
              {"beta2", c.beta2},
              {"gamma", {c.gamma(0), c.gamma(1)}},
              {"sigma_zc", c.sigma_zc},
              {"p_zb", c.p_zb},
              {"sigma_eps", c.sigma_eps},
              {"taus", c.taus},
              {"R", c.R},
              {"seed", c.seed}};
}

SimConfig sim_config_from_json(const Json& j) {
  SimConfig c;
  try {
    c.label = j.value("label", c.label);
    c.n = j.value("n", c.n);
    c.T = j.value("T", c.T);
    c.J = j.value("J", c.J);
    c.L = j.value("L", c.L);
    if (j.contains("x1_cov")) c.x1_cov = cov_from_json(j.at("x1_cov"), c.x1_cov);
    if (j.contains("u1_cov")) c.u1_cov = cov_from_json(j.at("u1_cov"), c.u1_cov);
    if (j.contains("u1_law")) c.u1_law = law_from_json(j.at("u1_law"));
    if (j.contains("u2_law")) c.u2_law = law_from_json(j.at("u2_law"));
    c.sigma_x2 = j.value("sigma_x2", c.sigma_x2);
    c.sigma_u2 = j.value("sigma_u2", c.sigma_u2);
    c.beta2 = j.value("beta2", c.beta2);
    if (j.contains("gamma")) {
      const auto g = j.at("gamma").get<std::vector<double>>();
      if (g.size() != 2) throw DomainError("gamma needs two entries");
      c.gamma = Eigen::Vector2d(g[0], g[1]);
    }
    c.sigma_zc = j.value("sigma_zc", c.sigma_zc);
    c.p_zb = j.value("p_zb", c.p_zb);
    c.sigma_eps = j.value("sigma_eps", c.sigma_eps);
    if (j.contains("taus")) c.taus = j.at("taus").get<std::vector<double>>();
    c.R = j.value("R", c.R);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("simulation config: ") + e.what(), 0);
  }
  c.validate();
  return c;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("IoError", "cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (f) {
    f.read(buf, sizeof buf);
    if (f.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

void write_estimates_csv(std::ostream& out, const EstimateSet& e, const Eigen::VectorXd& grid,
                         const std::vector<std::string>& covariate_names, const BootstrapResult* boot) {
  out << "method,tau,target,index,t,estimate,lower,upper\n" << std::setprecision(17);
  const std::string head = std::string(to_string(e.method)) + "," + [&] {
    std::ostringstream os;
    os << std::setprecision(17) << e.tau;
    return os.str();
  }();
  auto row = [&](const std::string& target, Eigen::Index index, double t, double est, double lo, double hi) {
    out << head << ',' << target << ',' << index << ',';
    if (std::isnan(t)) out << ','; else out << t << ',';
    out << est << ',';
    if (boot) out << lo << ',' << hi; else out << ',';
    out << '\n';
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row("beta0", 0, nan, e.beta0, boot ? boot->beta0_lower : 0, boot ? boot->beta0_upper : 0);
  for (Eigen::Index t = 0; t < e.beta1_curve.size(); ++t)
    row("beta1", t, grid(t), e.beta1_curve(t), boot ? boot->beta1_lower(t) : 0, boot ? boot->beta1_upper(t) : 0);
  row("beta2", 0, nan, e.beta2, boot ? boot->beta2_lower : 0, boot ? boot->beta2_upper : 0);
  for (Eigen::Index g = 0; g < e.gammas.size(); ++g) {
    const std::string name = static_cast<std::size_t>(g) < covariate_names.size()
                                 ? covariate_names[static_cast<std::size_t>(g)]
                                 : "z" + std::to_string(g + 1);
    row("gamma:" + name, g, nan, e.gammas(g), boot ? boot->gamma_lower(g) : 0, boot ? boot->gamma_upper(g) : 0);
  }
}

std::vector<EstimateSet> read_estimates_csv(const std::filesystem::path& path, Eigen::VectorXd& grid) {
  std::ifstream f(path);
  if (!f) throw Error("IoError", "cannot open " + path.string());
  std::string line;
  std::getline(f, line);
  if (line.rfind("method,tau,target", 0) != 0) throw ParseError(path.string() + ": not an estimates file", 1);
  struct Acc {
    EstimateSet e;
    std::vector<std::pair<Eigen::Index, double>> curve, grid, gammas;
  };
  std::vector<std::pair<std::pair<Method, double>, Acc>> accs;
  long number = 1;
  while (std::getline(f, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    while (fields.size() < 8) fields.emplace_back();
    try {
      const Method m = parse_method(fields[0]);
      const double tau = std::stod(fields[1]);
      auto it = std::find_if(accs.begin(), accs.end(), [&](const auto& a) { return a.first == std::make_pair(m, tau); });
      if (it == accs.end()) {
        accs.push_back({{m, tau}, Acc{}});
        it = accs.end() - 1;
        it->second.e.method = m;
        it->second.e.tau = tau;
      }
      Acc& acc = it->second;
      const std::string& target = fields[2];
      const auto index = static_cast<Eigen::Index>(std::stol(fields[3]));
      const double est = std::stod(fields[5]);
      if (target == "beta0") acc.e.beta0 = est;
      else if (target == "beta2") acc.e.beta2 = est;
      else if (target == "beta1") {
        acc.curve.emplace_back(index, est);
        acc.grid.emplace_back(index, std::stod(fields[4]));
      } else if (target.rfind("gamma", 0) == 0) acc.gammas.emplace_back(index, est);
      else throw ParseError("unknown target '" + target + "'", number);
    } catch (const std::logic_error&) {
      throw ParseError(path.string() + " line " + std::to_string(number) + ": malformed row", number);
    }
  }
  std::vector<EstimateSet> out;
  for (auto& [key, acc] : accs) {
    std::sort(acc.curve.begin(), acc.curve.end());
    std::sort(acc.grid.begin(), acc.grid.end());
    std::sort(acc.gammas.begin(), acc.gammas.end());
    acc.e.beta1_curve.resize(static_cast<Eigen::Index>(acc.curve.size()));
    Eigen::VectorXd g(static_cast<Eigen::Index>(acc.grid.size()));
    for (std::size_t k = 0; k < acc.curve.size(); ++k) {
      acc.e.beta1_curve(static_cast<Eigen::Index>(k)) = acc.curve[k].second;
      g(static_cast<Eigen::Index>(k)) = acc.grid[k].second;
    }
    acc.e.gammas.resize(static_cast<Eigen::Index>(acc.gammas.size()));
    for (std::size_t k = 0; k < acc.gammas.size(); ++k) acc.e.gammas(static_cast<Eigen::Index>(k)) = acc.gammas[k].second;
    if (grid.size() == 0) grid = g;
    else if (g.size() != grid.size() || (g - grid).cwiseAbs().maxCoeff() > 1e-12)
      throw ShapeError(path.string() + ": estimates inside one file use different grids");
    out.push_back(std::move(acc.e));
  }
  return out;
}

std::string render_beta1_svg(const Eigen::VectorXd& grid, const EstimateSet& e, const BootstrapResult* boot) {
  const double W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 50;
  double lo = e.beta1_curve.minCoeff(), hi = e.beta1_curve.maxCoeff();
  if (boot) {
    lo = std::min(lo, boot->beta1_lower.minCoeff());
    hi = std::max(hi, boot->beta1_upper.maxCoeff());
  }
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double gx0 = grid.size() ? grid(0) : 0.0, gx1 = grid.size() ? grid(grid.size() - 1) : 1.0;
  auto X = [&](double t) { return ml + (t - gx0) / (gx1 - gx0 > 0 ? gx1 - gx0 : 1.0) * (W - ml - mr); };
  auto Y = [&](double v) { return mt + (hi - v) / (hi - lo) * (H - mt - mb); };
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
    << display_name(e.method) << " beta1(t), tau = " << e.tau << "</text>\n";
  if (boot) {
    s << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
    for (Eigen::Index t = 0; t < grid.size(); ++t) s << X(grid(t)) << ',' << Y(boot->beta1_upper(t)) << ' ';
    for (Eigen::Index t = grid.size() - 1; t >= 0; --t) s << X(grid(t)) << ',' << Y(boot->beta1_lower(t)) << ' ';
    s << "\"/>\n";
  }
  s << "<line x1=\"" << ml << "\" y1=\"" << Y(0) << "\" x2=\"" << W - mr << "\" y2=\"" << Y(0)
    << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (Eigen::Index t = 0; t < grid.size(); ++t) s << X(grid(t)) << ',' << Y(e.beta1_curve(t)) << ' ';
  s << "\"/>\n";
  s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double t = gx0 + (gx1 - gx0) * k / 4.0;
    const double v = lo + (hi - lo) * k / 4.0;
    s << "<text x=\"" << X(t) << "\" y=\"" << H - mb + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << std::setprecision(2) << t << "</text>\n";
    s << "<text x=\"" << ml - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << std::setprecision(3) << v << "</text>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"12\">t</text>\n";
  s << "</svg>\n";
  return s.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scalar-on-function quantile regression with measurement-error correction", "fqme"};
  app.set_version_flag("--version", FQME_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation study and write metric tables");
  auto* study_opt = simulate->add_option("--study", sim.study, "Preset study id (1-6)")->check(CLI::Range(1, 6));
  auto* config_opt = simulate->add_option("--config", sim.config_path, "Simulation config JSON (object or array)")
                         ->check(CLI::ExistingFile);
  study_opt->excludes(config_opt);
  simulate->add_option("--replicates", sim.replicates, "Monte-Carlo replicates per condition")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "Base seed; drawn and recorded when omitted");
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--taus", sim.taus, "Quantile levels")->delimiter(',');
  simulate->add_option("--jobs", sim.jobs, "Concurrent replicates (0 = all cores)");
  simulate->add_flag("--full", sim.full, "Full-scale run: 500 replicates unless --replicates is given");
  simulate->add_option("--methods", sim.methods, "Estimators, comma separated");
  simulate->add_option("--simex-s", sim.simex_s, "SIMEX draws per lambda")->check(CLI::PositiveNumber);
  simulate->add_option("--fixed-k", sim.fixed_k, "Fix the basis dimension instead of BIC");
  simulate->add_option("--k-policy", sim.k_policy, "shared-naive | shared-average | per-estimator");

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit estimators to CSV data");
  fitc->add_option("--data", fa.data, "Data config JSON")->required()->check(CLI::ExistingFile);
  fitc->add_option("--method", fa.methods, "Estimators, comma separated")->required();
  fitc->add_option("--tau", fa.taus, "Quantile levels")->delimiter(',');
  fitc->add_option("--bootstrap", fa.bootstrap, "Bootstrap replicates (0 = none)");
  fitc->add_option("--level", fa.level, "Confidence level");
  fitc->add_option("--seed", fa.seed, "Base seed; drawn and recorded when omitted");
  fitc->add_option("--out", fa.out, "Output directory");
  fitc->add_option("--jobs", fa.jobs, "Concurrent fits (0 = all cores)");
  fitc->add_option("--fixed-k", fa.fixed_k, "Fix the basis dimension instead of BIC");
  fitc->add_option("--simex-s", fa.simex_s, "SIMEX draws per lambda")->check(CLI::PositiveNumber);
  fitc->add_option("--naive-day", fa.naive_day, "Replicate used by the naive estimator (1-based)");
  fitc->add_option("--fsmi-window", fa.fsmi_window, "FSMI window width (odd)");
  fitc->add_option("--percentile-rule", fa.percentile_rule, "type6 | inverse-ecdf");
  fitc->add_option("--lambdas", fa.lambdas, "SIMEX lambda grid: application | simulation");

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Percent differences against the naive estimate");
  compare->add_option("inputs", ca.inputs, "estimates.csv files or fit output directories")->required();
  compare->add_option("--out", ca.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (*simulate) {
      if (!sim.study && sim.config_path.empty()) {
        err << "error: simulate needs --study or --config\n";
        return static_cast<int>(CLI::ExitCodes::RequiredError);
      }
      return cmd_simulate(sim, out, err);
    }
    if (*fitc) return cmd_fit(fa, out, err);
    if (*compare) return cmd_compare(ca, out, err);
  } catch (const MissingTruth& e) {
    err << "error [MissingTruth]: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error [" << e.kind() << "]: " << e.what() << '\n';
    return e.kind() == "IoError" ? 4 : 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fqme

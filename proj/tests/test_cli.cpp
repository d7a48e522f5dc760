#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "fqme/cli.hpp"
#include "fqme/dataio.hpp"
#include "fqme/error.hpp"

using namespace fqme;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fqme_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "fqme");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Json manifest(const fs::path& dir) { return Json::parse(slurp(dir / "manifest.json")); }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// A small simulated data set written as CSV files.
fs::path write_fixture(const fs::path& dir, int n) {
  SimConfig cfg;
  cfg.n = n;
  Rng rng(17);
  write_dataset_csv(generate_dataset(cfg, rng).to_dataset(), dir);
  return dir / "data.json";
}

}  // namespace

TEST_CASE("file digests are SHA-256") {
  TempDir tmp("sha");
  std::ofstream(tmp.path / "abc.txt", std::ios::binary) << "abc";
  CHECK(sha256_file(tmp.path / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::ofstream(tmp.path / "empty.txt", std::ios::binary);
  CHECK(sha256_file(tmp.path / "empty.txt") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("simulate with a fixed seed is reproducible and its manifest digests match") {
  TempDir a("sim_a"), b("sim_b");
  const std::vector<std::string> common{"simulate", "--study", "1", "--replicates", "2", "--seed", "7",
                                        "--taus", "0.5", "--methods", "naive,average", "--jobs", "1"};
  auto args = common;
  args.insert(args.end(), {"--out", a.path.string()});
  const Run ra = run(args);
  REQUIRE(ra.code == 0);
  args = common;
  args.insert(args.end(), {"--out", b.path.string()});
  REQUIRE(run(args).code == 0);
  const std::string table = slurp(a.path / "study1_tau0.5.csv");
  // Header plus five conditions times two methods.
  CHECK(count_lines(table) == 1 + 5 * 2);
  CHECK(table == slurp(b.path / "study1_tau0.5.csv"));
  const Json ma = manifest(a.path), mb = manifest(b.path);
  CHECK(ma.at("seed") == 7);
  CHECK(ma.at("command") == "simulate");
  CHECK(ma.at("outputs") == mb.at("outputs"));
  for (const auto& f : ma.at("outputs")) {
    const fs::path p = a.path / f.at("file").get<std::string>();
    CHECK(f.at("sha256") == sha256_file(p));
    CHECK(f.at("bytes") == fs::file_size(p));
  }
  CHECK(ma.at("config").at("conditions").size() == 5);
}

TEST_CASE("study three produces one row per condition") {
  TempDir tmp("sim3");
  const Run r = run({"simulate", "--study", "3", "--replicates", "2", "--seed", "3", "--taus", "0.5", "--methods",
                     "naive", "--jobs", "1", "--out", tmp.path.string()});
  REQUIRE(r.code == 0);
  CHECK(count_lines(slurp(tmp.path / "study3_tau0.5.csv")) == 1 + 23);
}

TEST_CASE("simulate argument errors") {
  CHECK(run({"simulate", "--replicates", "2"}).code != 0);
  CHECK(run({"simulate", "--study", "9"}).code != 0);
  CHECK(run({"simulate", "--study", "1", "--config", "x.json"}).code != 0);
  CHECK(run({}).code != 0);
}

TEST_CASE("fit writes the library estimate") {
  TempDir data("fit_data"), out("fit_out");
  const fs::path cfg = write_fixture(data.path, 120);
  const Run r = run({"fit", "--data", cfg.string(), "--method", "fui,naive", "--tau", "0.5", "--seed", "1", "--jobs",
                     "1", "--out", out.path.string()});
  REQUIRE(r.code == 0);
  Eigen::VectorXd grid;
  const auto est = read_estimates_csv(out.path / "estimates.csv", grid);
  REQUIRE(est.size() == 2);
  const FunctionalDataset d = load_dataset(cfg).dataset;
  const EstimateSet lib = fit(d, Method::Fui, 0.5);
  CHECK(est[0].method == Method::Fui);
  CHECK(grid == d.grid);
  CHECK(est[0].beta1_curve == lib.beta1_curve);
  CHECK(est[0].beta2 == lib.beta2);
  CHECK(est[0].beta0 == lib.beta0);
  CHECK(est[0].gammas == lib.gammas);
  for (const char* name : {"fit_summary.csv", "inclusion_report.json", "beta1_fui_tau0.5.svg"})
    CHECK(fs::exists(out.path / name));
  const Json report = Json::parse(slurp(out.path / "inclusion_report.json"));
  CHECK(report.at("retained_subjects") == 120);

  // Comparing the fit against its own naive estimate.
  TempDir cmp("fit_cmp");
  const Run c = run({"compare", out.path.string(), "--out", cmp.path.string()});
  REQUIRE(c.code == 0);
  CHECK(count_lines(slurp(cmp.path / "percent_difference.csv")) == 2);
}

TEST_CASE("oracle on loaded data exits with the missing-truth code") {
  TempDir data("oracle_data"), out("oracle_out");
  const fs::path cfg = write_fixture(data.path, 40);
  const Run r = run({"fit", "--data", cfg.string(), "--method", "oracle", "--out", out.path.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("MissingTruth") != std::string::npos);
}

TEST_CASE("bootstrap runs with one seed give identical output") {
  TempDir data("boot_data"), a("boot_a"), b("boot_b");
  const fs::path cfg = write_fixture(data.path, 80);
  for (const auto* dir : {&a, &b})
    REQUIRE(run({"fit", "--data", cfg.string(), "--method", "average", "--bootstrap", "8", "--seed", "5", "--jobs",
                 "1", "--out", dir->path.string()})
                .code == 0);
  const std::string ea = slurp(a.path / "estimates.csv");
  CHECK(ea == slurp(b.path / "estimates.csv"));
  // Every row carries an interval.
  std::istringstream rows(ea);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) CHECK(line.back() != ',');
}

namespace {

// Estimates file holding a naive fit and a second method scaled by `factor`.
void write_estimates(const fs::path& path, const Eigen::VectorXd& grid, double factor) {
  EstimateSet naive;
  naive.method = Method::Naive;
  naive.tau = 0.5;
  naive.beta1_curve = Eigen::VectorXd::LinSpaced(grid.size(), 1.0, 2.0);
  naive.beta2 = 0.4;
  naive.gammas = Eigen::Vector2d(1.0, -1.0);
  EstimateSet other = naive;
  other.method = Method::Fui;
  other.beta1_curve *= factor;
  other.beta2 *= factor;
  std::ostringstream a, b;
  write_estimates_csv(a, naive, grid, {}, nullptr);
  write_estimates_csv(b, other, grid, {}, nullptr);
  const std::string sb = b.str();
  std::ofstream(path) << a.str() << sb.substr(sb.find('\n') + 1);
}

}  // namespace

TEST_CASE("compare reports percent differences against the naive estimate") {
  TempDir tmp("compare");
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(11, 0.0, 1.0);
  for (auto [factor, percent] : {std::pair{1.0, 0.0}, std::pair{2.0, 100.0}}) {
    write_estimates(tmp.path / "est.csv", grid, factor);
    const fs::path out = tmp.path / ("out" + std::to_string(static_cast<int>(factor)));
    REQUIRE(run({"compare", (tmp.path / "est.csv").string(), "--out", out.string()}).code == 0);
    std::istringstream csv(slurp(out / "percent_difference.csv"));
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    std::istringstream fields(row);
    std::string method, tau, functional, scalar;
    std::getline(fields, method, ',');
    std::getline(fields, tau, ',');
    std::getline(fields, functional, ',');
    std::getline(fields, scalar, ',');
    CHECK(method == "fui");
    CHECK(std::stod(functional) == doctest::Approx(percent));
    CHECK(std::stod(scalar) == doctest::Approx(percent));
  }
  write_estimates(tmp.path / "coarse.csv", Eigen::VectorXd::LinSpaced(6, 0.0, 1.0), 1.0);
  const Run mixed = run({"compare", (tmp.path / "est.csv").string(), (tmp.path / "coarse.csv").string(), "--out",
                         (tmp.path / "mixed").string()});
  CHECK(mixed.code == 3);
  CHECK(mixed.err.find("ShapeError") != std::string::npos);
}

TEST_CASE("simulation configs round-trip through JSON") {
  SimConfig c;
  c.n = 321;
  c.u1_cov.rho = 0.3;
  c.u1_law = ErrorLaw::laplace();
  c.taus = {0.1, 0.9};
  const SimConfig back = sim_config_from_json(to_json(c));
  CHECK(back.n == 321);
  CHECK(back.u1_cov.rho == 0.3);
  CHECK(back.taus == c.taus);
  CHECK(to_json(back) == to_json(c));
  const SimConfig defaults = sim_config_from_json(Json::object());
  CHECK(to_json(defaults) == to_json(SimConfig{}));
}

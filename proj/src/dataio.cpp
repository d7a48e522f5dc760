#include "fqme/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fqme/error.hpp"

namespace fqme {

namespace {

using Json = nlohmann::json;

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> lines;

  int column(const std::string& col, bool required = true) const {
    const auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) {
      if (required) throw ParseError(name + ": missing column '" + col + "'", 1);
      return -1;
    }
    return static_cast<int>(it - header.begin());
  }
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  CsvTable t;
  t.name = path.filename().string();
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(t.name + " line " + std::to_string(number) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       number);
    t.rows.push_back(std::move(fields));
    t.lines.push_back(number);
  }
  if (t.header.empty()) throw ParseError(t.name + ": empty file", 0);
  return t;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

double parse_double(const std::string& s, const CsvTable& t, std::size_t row, const std::string& what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const char* begin = s.data();
  if (!s.empty() && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw ParseError(t.name + " line " + std::to_string(t.lines[row]) + ": " + what + " '" + s + "' is not a number",
                     t.lines[row]);
  return v;
}

long parse_long(const std::string& s, const CsvTable& t, std::size_t row, const std::string& what) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(t.name + " line " + std::to_string(t.lines[row]) + ": " + what + " '" + s + "' is not an integer",
                     t.lines[row]);
  return v;
}

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct CovariateRow {
  bool complete = true;
  double response = 0.0;
  double weight = 1.0;
  std::vector<double> values;
};

}  // namespace

DataConfig read_data_config(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ParseError("cannot open " + json_path.string(), 0);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(json_path.string() + ": " + e.what(), 0);
  }
  const auto base = json_path.parent_path();
  auto path_of = [&](const char* key) {
    if (!j.contains(key)) throw ParseError(json_path.string() + ": missing key '" + key + "'", 0);
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  DataConfig c;
  try {
    c.functional = path_of("functional");
    c.scalar = path_of("scalar");
    c.covariates = path_of("covariates");
    c.min_days = j.value("min_days", c.min_days);
    c.min_scalar_replicates = j.value("min_scalar_replicates", c.min_scalar_replicates);
    const std::string incomplete = j.value("incomplete_days", std::string("drop"));
    if (incomplete == "drop") c.incomplete_days = IncompleteDays::Drop;
    else if (incomplete == "error") c.incomplete_days = IncompleteDays::Error;
    else throw DomainError("incomplete_days must be 'drop' or 'error'");
    if (j.contains("iqr_multiplier") && !j.at("iqr_multiplier").is_null())
      c.iqr_multiplier = j.at("iqr_multiplier").get<double>();
    const std::string scope = j.value("iqr_scope", std::string("global"));
    if (scope == "global") c.iqr_scope = OutlierScope::Global;
    else if (scope == "subject") c.iqr_scope = OutlierScope::Subject;
    else throw DomainError("iqr_scope must be 'global' or 'subject'");
    c.expected_grid_points = j.value("expected_grid_points", 0);
    c.response_column = j.value("response_column", c.response_column);
    c.weight_column = j.value("weight_column", std::string());
    if (j.contains("covariate_columns")) c.covariate_columns = j.at("covariate_columns").get<std::vector<std::string>>();
    if (j.contains("one_hot")) c.one_hot = j.at("one_hot").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const Json::exception& e) {
    throw ParseError(json_path.string() + ": " + e.what(), 0);
  }
  if (c.min_days < 1 || c.min_scalar_replicates < 1) throw DomainError("inclusion thresholds must be positive");
  if (!(c.iqr_multiplier > 0.0)) throw DomainError("iqr_multiplier must be positive");
  return c;
}

std::vector<double> rescale_grid(const std::vector<double>& t) {
  if (t.size() < 2) throw ShapeError("a grid needs at least two points");
  const auto [lo_it, hi_it] = std::minmax_element(t.begin(), t.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw ShapeError("grid has no spread");
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == lo) out[i] = 0.0;
    else if (t[i] == hi) out[i] = 1.0;
    else out[i] = std::clamp((t[i] - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

LoadResult load_csv(const DataConfig& config) {
  const CsvTable cov = read_csv(config.covariates);
  const CsvTable fun = read_csv(config.functional);
  const CsvTable sca = read_csv(config.scalar);

  // Covariates.
  const int c_id = cov.column("subject_id");
  const int c_resp = cov.column(config.response_column);
  const int c_weight = config.weight_column.empty() ? -1 : cov.column(config.weight_column);
  std::vector<std::string> cov_cols = config.covariate_columns;
  if (cov_cols.empty()) {
    for (int k = 0; k < static_cast<int>(cov.header.size()); ++k)
      if (k != c_id && k != c_resp && k != c_weight) cov_cols.push_back(cov.header[static_cast<std::size_t>(k)]);
  }
  std::vector<std::string> names;
  std::vector<int> col_index;
  for (const auto& name : cov_cols) {
    col_index.push_back(cov.column(name));
    const auto oh = config.one_hot.find(name);
    if (oh == config.one_hot.end()) {
      names.push_back(name);
    } else {
      if (oh->second.size() < 2) throw DomainError("one-hot column '" + name + "' needs at least two levels");
      for (std::size_t l = 1; l < oh->second.size(); ++l) names.push_back(name + "=" + oh->second[l]);
    }
  }
  std::vector<std::string> order;
  std::map<std::string, CovariateRow> covariates;
  for (std::size_t r = 0; r < cov.rows.size(); ++r) {
    const auto& row = cov.rows[r];
    const std::string& id = row[static_cast<std::size_t>(c_id)];
    if (covariates.count(id)) throw DuplicateKey(cov.name + ": duplicate subject_id '" + id + "'");
    CovariateRow cr;
    auto read_num = [&](int col, const std::string& what, double& dst) {
      const std::string& s = row[static_cast<std::size_t>(col)];
      if (is_missing(s)) cr.complete = false;
      else dst = parse_double(s, cov, r, what);
    };
    read_num(c_resp, config.response_column, cr.response);
    if (c_weight >= 0) read_num(c_weight, config.weight_column, cr.weight);
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      const std::string& s = row[static_cast<std::size_t>(col_index[k])];
      const auto oh = config.one_hot.find(cov_cols[k]);
      if (is_missing(s)) {
        cr.complete = false;
        const std::size_t width = oh == config.one_hot.end() ? 1 : oh->second.size() - 1;
        cr.values.insert(cr.values.end(), width, 0.0);
      } else if (oh == config.one_hot.end()) {
        cr.values.push_back(parse_double(s, cov, r, cov_cols[k]));
      } else {
        const auto& levels = oh->second;
        const auto it = std::find(levels.begin(), levels.end(), s);
        if (it == levels.end())
          throw ParseError(cov.name + " line " + std::to_string(cov.lines[r]) + ": unknown level '" + s + "' for " +
                               cov_cols[k],
                           cov.lines[r]);
        for (std::size_t l = 1; l < levels.size(); ++l) cr.values.push_back(it == levels.begin() + static_cast<long>(l) ? 1.0 : 0.0);
      }
    }
    covariates.emplace(id, std::move(cr));
    order.push_back(id);
  }

  // Functional long rows.
  const int f_id = fun.column("subject_id"), f_day = fun.column("day"), f_t = fun.column("t"), f_v = fun.column("value");
  std::map<std::string, std::map<long, std::map<double, double>>> cells;
  std::set<double> t_values;
  for (std::size_t r = 0; r < fun.rows.size(); ++r) {
    const auto& row = fun.rows[r];
    const std::string& id = row[static_cast<std::size_t>(f_id)];
    const long day = parse_long(row[static_cast<std::size_t>(f_day)], fun, r, "day");
    const double t = parse_double(row[static_cast<std::size_t>(f_t)], fun, r, "t");
    t_values.insert(t);
    const std::string& vs = row[static_cast<std::size_t>(f_v)];
    auto& day_cells = cells[id][day];
    if (day_cells.count(t))
      throw DuplicateKey(fun.name + " line " + std::to_string(fun.lines[r]) + ": duplicate (subject " + id + ", day " +
                         std::to_string(day) + ", t " + row[static_cast<std::size_t>(f_t)] + ")");
    if (is_missing(vs)) {
      day_cells.emplace(t, std::numeric_limits<double>::quiet_NaN());
    } else {
      day_cells.emplace(t, parse_double(vs, fun, r, "value"));
    }
  }
  const std::vector<double> raw_grid(t_values.begin(), t_values.end());
  if (config.expected_grid_points > 0 && static_cast<int>(raw_grid.size()) != config.expected_grid_points)
    throw ShapeError("expected " + std::to_string(config.expected_grid_points) + " grid points, found " +
                     std::to_string(raw_grid.size()));
  const std::vector<double> grid = rescale_grid(raw_grid);
  const auto T = static_cast<Eigen::Index>(grid.size());

  // Scalar replicates.
  const int s_id = sca.column("subject_id"), s_rep = sca.column("replicate"), s_v = sca.column("value");
  std::map<std::string, std::map<long, double>> scalars;
  for (std::size_t r = 0; r < sca.rows.size(); ++r) {
    const auto& row = sca.rows[r];
    const std::string& id = row[static_cast<std::size_t>(s_id)];
    const long rep = parse_long(row[static_cast<std::size_t>(s_rep)], sca, r, "replicate");
    auto& reps = scalars[id];
    if (reps.count(rep))
      throw DuplicateKey(sca.name + " line " + std::to_string(sca.lines[r]) + ": duplicate (subject " + id +
                         ", replicate " + std::to_string(rep) + ")");
    const std::string& vs = row[static_cast<std::size_t>(s_v)];
    if (!is_missing(vs)) reps.emplace(rep, parse_double(vs, sca, r, "value"));
  }

  std::set<std::string> universe(order.begin(), order.end());
  for (const auto& [id, _] : cells) universe.insert(id);
  for (const auto& [id, _] : scalars) universe.insert(id);

  LoadResult result;
  InclusionReport& report = result.report;
  report.input_subjects = static_cast<int>(universe.size());
  for (const auto& id : universe)
    if (!covariates.count(id)) ++report.dropped["missing_covariates"];

  FunctionalDataset& d = result.dataset;
  d.grid = Eigen::Map<const Eigen::VectorXd>(grid.data(), T);
  d.covariate_names = names;
  std::vector<double> y, w;
  std::vector<std::vector<double>> z;
  std::ostringstream missing_cells;
  int missing_count = 0;
  for (const auto& id : order) {
    const CovariateRow& cr = covariates.at(id);
    if (!cr.complete) {
      ++report.dropped["missing_covariates"];
      continue;
    }
    std::vector<Eigen::RowVectorXd> days;
    const auto fit = cells.find(id);
    if (fit != cells.end()) {
      for (const auto& [day, day_cells] : fit->second) {
        Eigen::RowVectorXd curve(T);
        bool complete = true;
        for (Eigen::Index k = 0; k < T; ++k) {
          const auto c = day_cells.find(raw_grid[static_cast<std::size_t>(k)]);
          if (c == day_cells.end() || std::isnan(c->second)) {
            complete = false;
            if (config.incomplete_days == IncompleteDays::Error && missing_count < 20)
              missing_cells << " (" << id << ", " << day << ", " << fmt17(raw_grid[static_cast<std::size_t>(k)]) << ")";
            ++missing_count;
          } else {
            curve(k) = c->second;
          }
        }
        if (complete) days.push_back(curve);
        else ++report.incomplete_days_dropped;
      }
    }
    if (static_cast<int>(days.size()) < config.min_days) {
      ++report.dropped["min_days"];
      continue;
    }
    const auto sit = scalars.find(id);
    const int n_scalar = sit == scalars.end() ? 0 : static_cast<int>(sit->second.size());
    if (n_scalar < config.min_scalar_replicates) {
      ++report.dropped["min_scalar_replicates"];
      continue;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(days.size()), T);
    for (std::size_t j = 0; j < days.size(); ++j) m.row(static_cast<Eigen::Index>(j)) = days[j];
    Eigen::VectorXd s(n_scalar);
    Eigen::Index l = 0;
    for (const auto& [rep, v] : sit->second) s(l++) = v;
    d.w1.push_back(std::move(m));
    d.w2.push_back(std::move(s));
    d.subject_ids.push_back(id);
    y.push_back(cr.response);
    w.push_back(cr.weight);
    z.push_back(cr.values);
  }
  if (config.incomplete_days == IncompleteDays::Error && missing_count > 0) {
    std::string more = missing_count > 20 ? " and " + std::to_string(missing_count - 20) + " more" : "";
    throw RowIntegrity("missing grid cells (subject, day, t):" + missing_cells.str() + more);
  }

  const auto n = static_cast<Eigen::Index>(y.size());
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  if (c_weight >= 0) d.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
  d.z.resize(n, static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d.z.cols(); ++k) d.z(i, k) = z[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];

  if (std::isfinite(config.iqr_multiplier)) {
    OutlierReport o;
    d = outlier_filter(d, config.iqr_multiplier, o, config.iqr_scope, config.min_days);
    report.outlier_cells = o.cells_removed;
    report.outlier_days_dropped = o.days_dropped;
    if (o.subjects_dropped > 0) report.dropped["iqr_outliers"] += o.subjects_dropped;
  }
  report.retained_subjects = static_cast<int>(d.n());
  d.validate();
  return result;
}

LoadResult load_dataset(const std::filesystem::path& json_path) { return load_csv(read_data_config(json_path)); }

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

FunctionalDataset outlier_filter(const FunctionalDataset& data, double multiplier, OutlierReport& report,
                                 OutlierScope scope, int min_days) {
  if (!(multiplier > 0.0)) throw DomainError("IQR multiplier must be positive");
  report = OutlierReport{};
  if (std::isinf(multiplier)) return data;
  auto threshold_of = [&](const std::vector<const Eigen::MatrixXd*>& mats) {
    std::vector<double> all;
    for (const auto* m : mats) all.insert(all.end(), m->data(), m->data() + m->size());
    const double q1 = quantile_type7(all, 0.25), q3 = quantile_type7(all, 0.75);
    return q3 + multiplier * (q3 - q1);
  };
  double global = 0.0;
  if (scope == OutlierScope::Global) {
    std::vector<const Eigen::MatrixXd*> mats;
    for (const auto& m : data.w1) mats.push_back(&m);
    if (!mats.empty()) global = threshold_of(mats);
  }
  std::vector<Eigen::Index> keep;
  FunctionalDataset filtered = data;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const auto& m = data.w1[static_cast<std::size_t>(i)];
    const double limit = scope == OutlierScope::Global ? global : threshold_of({&m});
    std::vector<Eigen::Index> days;
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      const auto above = (m.row(j).array() > limit).count();
      report.cells_removed += static_cast<int>(above);
      if (above == 0) days.push_back(j);
      else ++report.days_dropped;
    }
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(days.size()), m.cols());
    for (std::size_t k = 0; k < days.size(); ++k) kept.row(static_cast<Eigen::Index>(k)) = m.row(days[k]);
    filtered.w1[static_cast<std::size_t>(i)] = std::move(kept);
    if (static_cast<int>(days.size()) >= min_days) keep.push_back(i);
    else ++report.subjects_dropped;
  }
  if (static_cast<Eigen::Index>(keep.size()) == data.n()) return filtered;
  filtered.truth.reset();
  FunctionalDataset out = filtered.subset(keep);
  if (data.truth) {
    out.truth = LatentTruth{Eigen::MatrixXd(out.n(), data.grid_size()), Eigen::VectorXd(out.n())};
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.truth->x1.row(static_cast<Eigen::Index>(k)) = data.truth->x1.row(keep[k]);
      out.truth->x2(static_cast<Eigen::Index>(k)) = data.truth->x2(keep[k]);
    }
  }
  return out;
}

std::vector<LongRow> aggregate_bins(const std::vector<LongRow>& rows, double width, int bins, int min_per_bin) {
  if (!(width > 0.0) || bins < 1 || min_per_bin < 1) throw DomainError("invalid aggregation bins");
  std::map<std::pair<std::string, long>, std::vector<std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    const double k = std::floor(r.t / width);
    if (k < 0 || k >= bins) continue;
    auto& slots = acc[{r.subject, r.day}];
    if (slots.empty()) slots.assign(static_cast<std::size_t>(bins), {0.0, 0});
    slots[static_cast<std::size_t>(k)].first += r.value;
    slots[static_cast<std::size_t>(k)].second += 1;
  }
  std::vector<LongRow> out;
  for (const auto& [key, slots] : acc)
    for (int k = 0; k < bins; ++k) {
      const auto& [sum, count] = slots[static_cast<std::size_t>(k)];
      if (count >= min_per_bin) out.push_back({key.first, key.second, static_cast<double>(k), sum / count});
    }
  return out;
}

void write_dataset_csv(const FunctionalDataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::filesystem::create_directories(dir);
  auto id_of = [&](Eigen::Index i) {
    return data.subject_ids.empty() ? "s" + std::to_string(i + 1) : data.subject_ids[static_cast<std::size_t>(i)];
  };
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("IoError", "cannot write " + (dir / name).string());
    f << std::setprecision(17);
    return f;
  };
  {
    auto f = open("functional.csv");
    f << "subject_id,day,t,value\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const auto& m = data.w1[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < m.rows(); ++j)
        for (Eigen::Index t = 0; t < m.cols(); ++t)
          f << id_of(i) << ',' << (j + 1) << ',' << data.grid(t) << ',' << m(j, t) << '\n';
    }
  }
  {
    auto f = open("scalar.csv");
    f << "subject_id,replicate,value\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const auto& v = data.w2[static_cast<std::size_t>(i)];
      for (Eigen::Index l = 0; l < v.size(); ++l) f << id_of(i) << ',' << (l + 1) << ',' << v(l) << '\n';
    }
  }
  std::vector<std::string> names = data.covariate_names;
  for (Eigen::Index k = static_cast<Eigen::Index>(names.size()); k < data.z.cols(); ++k)
    names.push_back("z" + std::to_string(k + 1));
  {
    auto f = open("covariates.csv");
    f << "subject_id,response";
    if (data.has_weights()) f << ",weight";
    for (const auto& nm : names) f << ',' << nm;
    f << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      f << id_of(i) << ',' << data.y(i);
      if (data.has_weights()) f << ',' << data.weights(i);
      for (Eigen::Index k = 0; k < data.z.cols(); ++k) f << ',' << data.z(i, k);
      f << '\n';
    }
  }
  Json j;
  j["functional"] = "functional.csv";
  j["scalar"] = "scalar.csv";
  j["covariates"] = "covariates.csv";
  j["min_days"] = 1;
  j["min_scalar_replicates"] = 1;
  j["response_column"] = "response";
  if (data.has_weights()) j["weight_column"] = "weight";
  j["covariate_columns"] = names;
  auto f = open("data.json");
  f << j.dump(2) << '\n';
}

}  // namespace fqme

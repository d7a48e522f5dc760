#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fqme/dataset.hpp"

namespace fqme {

enum class IncompleteDays { Drop, Error };
enum class OutlierScope { Global, Subject };

// Input description, normally read from a JSON file. Relative paths are
// resolved against the JSON file's directory.
struct DataConfig {
  std::filesystem::path functional;  // subject_id,day,t,value
  std::filesystem::path scalar;      // subject_id,replicate,value
  std::filesystem::path covariates;  // subject_id,response[,weight],covariates...
  int min_days = 2;
  int min_scalar_replicates = 2;
  IncompleteDays incomplete_days = IncompleteDays::Drop;
  double iqr_multiplier = std::numeric_limits<double>::infinity();  // inf disables the filter
  OutlierScope iqr_scope = OutlierScope::Global;
  int expected_grid_points = 0;  // > 0 checks the number of distinct t values
  std::string response_column = "response";
  std::string weight_column;              // empty: no weights
  std::vector<std::string> covariate_columns;  // empty: every remaining column
  // Categorical columns expanded into indicators for every level but the first.
  std::map<std::string, std::vector<std::string>> one_hot;
};

DataConfig read_data_config(const std::filesystem::path& json_path);

struct InclusionReport {
  int input_subjects = 0;
  int retained_subjects = 0;
  std::map<std::string, int> dropped;  // rule → subjects removed by it
  int incomplete_days_dropped = 0;
  int outlier_cells = 0;
  int outlier_days_dropped = 0;
};

struct LoadResult {
  FunctionalDataset dataset;
  InclusionReport report;
};

// Reads the three CSV files, pivots the long functional rows into per-day
// curves on the common grid (rescaled to [0, 1]) and applies the inclusion
// rules. Subjects keep the order of the covariates file.
LoadResult load_csv(const DataConfig& config);
// read_data_config followed by load_csv.
LoadResult load_dataset(const std::filesystem::path& json_path);

struct OutlierReport {
  int cells_removed = 0;
  int days_dropped = 0;
  int subjects_dropped = 0;
};

// Drops every day holding a value strictly above Q3 + multiplier·IQR (type-7
// quartiles over all functional values, or per subject), then subjects left
// with fewer than min_days days.
FunctionalDataset outlier_filter(const FunctionalDataset& data, double multiplier, OutlierReport& report,
                                 OutlierScope scope = OutlierScope::Global, int min_days = 2);

// Type-7 sample quantile of unsorted values.
double quantile_type7(std::vector<double> values, double prob);

// (t − min) / (max − min) with exact endpoints.
std::vector<double> rescale_grid(const std::vector<double>& t);

struct LongRow {
  std::string subject;
  long day = 0;
  double t = 0.0;
  double value = 0.0;
};

// Averages fine-grained rows within bins [k·width, (k+1)·width) of t, k =
// 0..bins−1, and emits t = k. A bin with fewer than min_per_bin observations
// is left out, which makes the day incomplete for the loader.
std::vector<LongRow> aggregate_bins(const std::vector<LongRow>& rows, double width, int bins, int min_per_bin);

// Writes functional.csv, scalar.csv, covariates.csv and data.json into `dir`
// with 17 significant digits, so load_dataset(dir / "data.json") reproduces
// the arrays bitwise. Missing subject ids become s1, s2, …
void write_dataset_csv(const FunctionalDataset& data, const std::filesystem::path& dir);

}  // namespace fqme

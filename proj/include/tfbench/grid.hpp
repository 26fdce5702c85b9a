#pragma once

// Experiment grid: every (model, input window, horizon) cell is trained on
// the chronological training split and scored on the test split. Results,
// checkpoints and a manifest land in a run directory:
//
//   <output_dir>/manifest                      JSON: config, hash, per-cell status
//   <output_dir>/cells/<model>_<w>_<h>/checkpoint
//   <output_dir>/cells/<model>_<w>_<h>/losses.csv
//   <output_dir>/cells/<model>_<w>_<h>/metrics.csv
//   <output_dir>/cells/<model>_<w>_<h>/predictions.csv

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tfbench/data.hpp"
#include "tfbench/forecasters.hpp"
#include "tfbench/metrics.hpp"

namespace tfbench {

struct GridConfig {
  // A CSV path, or "synth:<kind>:<n>[:<seed>]".
  std::string data = "synth:sine_trend:1000:0";
  std::filesystem::path output_dir = "runs";
  std::vector<std::string> models;  // defaults to the full catalog
  std::vector<std::size_t> windows = {5, 10, 15};
  std::vector<std::size_t> horizons = {1, 5, 10};
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  double train_fraction = 0.7;
  ForecasterOptions options;

  GridConfig();

  // Flat `key = value` lines; `#` starts a comment. Relative paths resolve
  // against `base_dir`. Throws ConfigError naming the line on unknown keys,
  // duplicates or bad values.
  static GridConfig parse(std::string_view text, const std::filesystem::path& base_dir = {},
                          const std::string& source = "<config>");
  static GridConfig load(const std::filesystem::path& path);

  // Every setting that influences results, one `key = value` per line in a
  // fixed order. Excludes the output directory, parallelism and the model,
  // window and horizon lists, which only select cells.
  std::string canonical() const;
  std::string hash() const;
};

// Loads a CSV or generates the synthetic series named by `spec`.
PriceSeries load_series(const std::string& spec);

struct CellKey {
  std::string model;
  std::size_t window = 0;
  std::size_t horizon = 0;

  std::string name() const;  // "<model>_<w>_<h>"
  bool operator==(const CellKey&) const = default;
};

// Parses "<model>,<w>,<h>". Throws ConfigError.
CellKey parse_cell(const std::string& text);

std::uint64_t cell_seed(std::uint64_t base, const CellKey& cell);

struct CellFailure {
  CellKey cell;
  std::string error;
};

struct GridResult {
  // Ordered by window, horizon, then model table order.
  std::vector<MetricsReport> reports;
  // Parallel to reports: lowest MAE among the models of the same (w, h),
  // ties going to lower MSE, then earlier table order.
  std::vector<bool> best;
  std::vector<CellFailure> failures;
  std::size_t trained = 0;
  std::size_t reused = 0;
};

// Sorts the reports into table order and recomputes the best flags.
void rank_reports(GridResult& result);

struct RunOptions {
  std::ostream* log = nullptr;  // progress lines, one per finished cell
};

// Trains and evaluates every cell not already completed in the run
// directory. Cell failures are recorded and do not stop the grid. Throws
// ConfigError when the run directory holds a different configuration.
GridResult run_grid(const GridConfig& config, const RunOptions& options = {});

// Completed cells recorded in a run directory.
GridResult load_grid(const std::filesystem::path& run_dir);

// Everything needed to rebuild and score one trained cell.
struct CellArtifacts {
  CellKey cell;
  std::unique_ptr<Forecaster> forecaster;
  PriceSeries series;
  Normalizer normalizer{0.0, 1.0};
  WindowedDataset test;
};

// Loads the checkpoint in a cell directory and rebuilds its test windows
// from the recorded data source.
CellArtifacts load_cell(const std::filesystem::path& cell_dir);

enum class TableFormat { Markdown, Csv };
TableFormat parse_table_format(const std::string& text);

// Markdown bolds the best model of each (w, h). CSV has the columns
// input_window,horizon,model,mae,mse with round-trip precision. Both report
// normalized-scale errors.
std::string emit_table(const GridResult& result, TableFormat format);

struct TableRow {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::string model;
  double mae = 0.0;
  double mse = 0.0;
};
// Reads the CSV form of emit_table. Throws ParseError.
std::vector<TableRow> parse_table_csv(std::string_view text);

// One row per test window: the date and raw close of its first target and
// the inverse-normalized one-step prediction.
void emit_predictions(const Forecaster& forecaster, const WindowedDataset& test, const Normalizer& norm,
                      const PriceSeries& series, const std::filesystem::path& path);

}  // namespace tfbench

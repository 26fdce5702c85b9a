// Command-line front end for the forecasting benchmark.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 one or more
// grid cells failed.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tfbench/errors.hpp"
#include "tfbench/grid.hpp"
#include "tfbench/metrics.hpp"
#include "tfbench/selftest.hpp"

namespace fs = std::filesystem;
using namespace tfbench;

namespace {

constexpr int kConfigError = 1;
constexpr int kDataError = 2;
constexpr int kCellFailures = 3;

void write_output(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw ContractError("cannot write " + out);
}

int cmd_run(const std::string& config_path, bool quiet) {
  const GridConfig config = GridConfig::load(config_path);
  RunOptions options;
  if (!quiet) options.log = &std::cerr;
  const GridResult result = run_grid(config, options);
  std::cout << emit_table(result, TableFormat::Markdown);
  std::cerr << result.trained << " cells trained, " << result.reused << " reused, " << result.failures.size()
            << " failed\n";
  for (const auto& f : result.failures) std::cerr << "  " << f.cell.name() << ": " << f.error << '\n';
  return result.failures.empty() ? 0 : kCellFailures;
}

int cmd_eval(const std::string& cell_dir) {
  const CellArtifacts cell = load_cell(cell_dir);
  const auto predictions = cell.forecaster->predict(cell.test);
  const MetricsReport r = evaluate(cell.cell.model, predictions, cell.test, cell.normalizer, cell.series.closes);
  std::printf("model %s\nwindow %zu\nhorizon %zu\nn_test %zu\n", r.model.c_str(), r.window, r.horizon, r.n_test);
  std::printf("mae_normalized %.17g\nmse_normalized %.17g\nmae_price %.17g\nmse_price %.17g\n", r.mae_normalized,
              r.mse_normalized, r.mae_price, r.mse_price);
  return 0;
}

int cmd_table(const std::string& runs, const std::string& format, const std::string& out) {
  const GridResult result = load_grid(runs);
  write_output(emit_table(result, parse_table_format(format)), out);
  return 0;
}

int cmd_dump(const std::string& runs, const std::string& cell_text, const std::string& out) {
  const CellKey key = parse_cell(cell_text);
  const CellArtifacts cell = load_cell(fs::path(runs) / "cells" / key.name());
  emit_predictions(*cell.forecaster, cell.test, cell.normalizer, cell.series, out);
  std::cerr << "wrote " << cell.test.rows << " rows to " << out << '\n';
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftest()) {
    std::printf("%s %-28s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_synth(const std::string& kind, std::size_t n, std::uint64_t seed, const std::string& out) {
  const PriceSeries s = synth_series(parse_synth_kind(kind), n, seed);
  save_csv(s, out);
  std::cerr << "wrote " << s.size() << " points to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer forecasting benchmark"};
  app.require_subcommand(1);

  std::string config_path, cell_dir, runs = "runs", format = "md", out, cell, kind = "sine_trend";
  bool quiet = false;
  std::size_t n = 1000;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Train and evaluate a grid of cells");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_flag("--quiet", quiet, "Suppress per-cell progress");

  auto* eval = app.add_subcommand("eval", "Score a trained cell on its test split");
  eval->add_option("--checkpoint", cell_dir, "Cell directory holding the checkpoint")->required();

  auto* table = app.add_subcommand("table", "Print the results table of a run directory");
  table->add_option("--runs", runs, "Run directory")->capture_default_str();
  table->add_option("--format", format, "md or csv")->capture_default_str();
  table->add_option("--out", out, "Write to a file instead of stdout");

  auto* dump = app.add_subcommand("dump", "Write the one-step prediction trace of a cell");
  dump->add_option("--cell", cell, "model,window,horizon")->required();
  dump->add_option("--out", out, "Output CSV")->required();
  dump->add_option("--runs", runs, "Run directory")->capture_default_str();

  auto* selftest = app.add_subcommand("selftest", "Run the gradient and oracle checks");

  auto* synth = app.add_subcommand("synth", "Write a synthetic price series");
  synth->add_option("--kind", kind, "sine_trend, random_walk or constant")->capture_default_str();
  synth->add_option("--n", n, "Number of points")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed")->capture_default_str();
  synth->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, quiet);
    if (*eval) return cmd_eval(cell_dir);
    if (*table) return cmd_table(runs, format, out);
    if (*dump) return cmd_dump(runs, cell, out);
    if (*selftest) return cmd_selftest();
    if (*synth) return cmd_synth(kind, n, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return 0;
}

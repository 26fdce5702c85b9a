#include "tfbench/grid.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tfbench/checkpoint.hpp"
#include "tfbench/errors.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string exact(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto r = std::from_chars(text.data(), text.data() + text.size(), out);
  return r.ec == std::errc() && r.ptr == text.data() + text.size() && !text.empty();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw ContractError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

const std::set<std::string>& reserved_model_keys() {
  static const std::set<std::string> keys = {"variant", "window", "horizon", "seed"};
  return keys;
}

}  // namespace

GridConfig::GridConfig() {
  for (const auto& m : model_catalog()) models.push_back(m.id);
}

GridConfig GridConfig::parse(std::string_view text, const fs::path& base_dir, const std::string& source) {
  GridConfig c;
  std::map<std::string, std::string> train_values;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    const auto bad = [&](const std::string& what) {
      return ConfigError(where + "bad value '" + value + "' for '" + key + "': " + what);
    };
    const auto count = [&] {
      std::size_t v = 0;
      if (!parse_number(value, v)) throw bad("expected a non-negative integer");
      return v;
    };
    const auto real = [&] {
      double v = 0;
      if (!parse_number(value, v)) throw bad("expected a number");
      return v;
    };
    const auto flag = [&] {
      if (value == "true" || value == "1" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "no") return false;
      throw bad("expected true or false");
    };
    const auto counts = [&] {
      std::vector<std::size_t> out;
      for (const auto& item : split(value, ',')) {
        std::size_t v = 0;
        if (!parse_number(std::string_view(item), v) || v == 0) throw bad("expected positive integers separated by commas");
        if (std::find(out.begin(), out.end(), v) != out.end()) throw bad("repeated entry " + item);
        out.push_back(v);
      }
      return out;
    };

    if (key == "data") {
      if (value.empty()) throw bad("empty");
      c.data = value.starts_with("synth:") || base_dir.empty() ? value : (base_dir / value).lexically_normal().string();
    } else if (key == "output_dir") {
      if (value.empty()) throw bad("empty");
      c.output_dir = base_dir.empty() ? fs::path(value) : (base_dir / value).lexically_normal();
    } else if (key == "models") {
      c.models.clear();
      if (value == "all") {
        for (const auto& m : model_catalog()) c.models.push_back(m.id);
      } else {
        for (const auto& item : split(value, ',')) {
          try {
            model_rank(item);
          } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
          }
          if (std::find(c.models.begin(), c.models.end(), item) != c.models.end()) throw bad("repeated model " + item);
          c.models.push_back(item);
        }
      }
    } else if (key == "windows") {
      c.windows = counts();
    } else if (key == "horizons") {
      c.horizons = counts();
    } else if (key == "seed") {
      c.seed = count();
    } else if (key == "parallelism") {
      c.parallelism = count();
      if (c.parallelism == 0) throw bad("must be at least 1");
    } else if (key == "train_fraction") {
      c.train_fraction = real();
      if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw bad("must lie in (0, 1)");
    } else if (key == "anchor") {
      c.options.anchor = flag();
    } else if (key.starts_with("model.")) {
      const std::string field = key.substr(6);
      const auto known = ModelConfig().to_map();
      if (!known.contains(field) || reserved_model_keys().contains(field)) {
        throw ConfigError(where + "unknown or grid-controlled model key '" + field + "'");
      }
      c.options.model_overrides[field] = value;
    } else if (key == "svr_C") {
      c.options.svr.C = real();
    } else if (key == "svr_epsilon") {
      c.options.svr.epsilon = real();
    } else if (key == "svr_gamma") {
      c.options.svr.gamma = real();
    } else if (key == "svr_tolerance") {
      c.options.svr.tolerance = real();
    } else if (key == "svr_max_iterations") {
      c.options.svr.max_iterations = count();
    } else if (key == "rf_n_trees") {
      c.options.forest.n_trees = count();
    } else if (key == "rf_max_depth") {
      c.options.forest.max_depth = value == "unlimited" ? kUnlimitedDepth : count();
    } else if (key == "rf_min_leaf") {
      c.options.forest.min_leaf = count();
    } else if (key == "rf_max_features") {
      c.options.forest.max_features = count();
    } else if (key == "rf_bootstrap") {
      c.options.forest.bootstrap = flag();
    } else if (key != "seed" && std::find(TrainConfig::keys().begin(), TrainConfig::keys().end(), key) !=
                                    TrainConfig::keys().end()) {
      train_values[key] = value;
    } else {
      throw ConfigError(where + "unknown key '" + key + "'");
    }
  }

  c.options.train = TrainConfig::from_map(train_values);
  c.options.train.validate();
  if (c.models.empty()) throw ConfigError(source + ": no models selected");
  const auto& svr = c.options.svr;
  if (!(svr.C > 0.0) || !(svr.epsilon >= 0.0) || !(svr.gamma >= 0.0) || !(svr.tolerance > 0.0) ||
      svr.max_iterations == 0) {
    throw ConfigError(source + ": svr_C and svr_tolerance must be positive, svr_epsilon and svr_gamma non-negative");
  }
  const auto& rf = c.options.forest;
  if (rf.n_trees == 0 || rf.max_depth == 0 || rf.min_leaf == 0) {
    throw ConfigError(source + ": rf_n_trees, rf_max_depth and rf_min_leaf must be positive");
  }
  // Surface bad model overrides before any training starts.
  for (const auto& id : c.models) {
    if (!model_info(id).variant) continue;
    for (auto w : c.windows) {
      for (auto h : c.horizons) {
        try {
          make_forecaster(id, w, h, 0, c.options);
        } catch (const ConfigError& e) {
          throw ConfigError(source + ": " + e.what());
        } catch (const Error& e) {
          throw ConfigError(source + ": model " + id + " at window " + std::to_string(w) + ", horizon " +
                            std::to_string(h) + ": " + e.what());
        }
      }
    }
  }
  return c;
}

GridConfig GridConfig::load(const fs::path& path) {
  return parse(read_file(path), path.parent_path(), path.string());
}

std::string GridConfig::canonical() const {
  std::ostringstream os;
  os << "data = " << data << '\n';
  os << "seed = " << seed << '\n';
  os << "train_fraction = " << exact(train_fraction) << '\n';
  os << "anchor = " << (options.anchor ? "true" : "false") << '\n';
  for (const auto& [key, value] : options.train.to_map()) {
    if (key != "seed") os << key << " = " << value << '\n';
  }
  for (const auto& [key, value] : options.model_overrides) os << "model." << key << " = " << value << '\n';
  os << "svr_C = " << exact(options.svr.C) << '\n';
  os << "svr_epsilon = " << exact(options.svr.epsilon) << '\n';
  os << "svr_gamma = " << exact(options.svr.gamma) << '\n';
  os << "svr_tolerance = " << exact(options.svr.tolerance) << '\n';
  os << "svr_max_iterations = " << options.svr.max_iterations << '\n';
  os << "rf_n_trees = " << options.forest.n_trees << '\n';
  os << "rf_max_depth = "
     << (options.forest.max_depth == kUnlimitedDepth ? std::string("unlimited") : std::to_string(options.forest.max_depth))
     << '\n';
  os << "rf_min_leaf = " << options.forest.min_leaf << '\n';
  os << "rf_max_features = " << options.forest.max_features << '\n';
  os << "rf_bootstrap = " << (options.forest.bootstrap ? "true" : "false") << '\n';
  return os.str();
}

std::string GridConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(canonical())));
  return buf;
}

PriceSeries load_series(const std::string& spec) {
  if (!spec.starts_with("synth:")) return load_csv(spec);
  const auto parts = split(spec, ':');
  if (parts.size() < 3 || parts.size() > 4) {
    throw ConfigError("synthetic data must be written synth:<kind>:<n>[:<seed>], got '" + spec + "'");
  }
  std::size_t n = 0;
  std::uint64_t seed = 0;
  if (!parse_number(std::string_view(parts[2]), n) || n == 0) throw ConfigError("bad series length in '" + spec + "'");
  if (parts.size() == 4 && !parse_number(std::string_view(parts[3]), seed)) {
    throw ConfigError("bad seed in '" + spec + "'");
  }
  return synth_series(parse_synth_kind(parts[1]), n, seed);
}

std::string CellKey::name() const { return model + "_" + std::to_string(window) + "_" + std::to_string(horizon); }

CellKey parse_cell(const std::string& text) {
  const auto parts = split(text, ',');
  CellKey key;
  if (parts.size() != 3 || !parse_number(std::string_view(parts[1]), key.window) ||
      !parse_number(std::string_view(parts[2]), key.horizon) || key.window == 0 || key.horizon == 0) {
    throw ConfigError("cell must be written <model>,<window>,<horizon>, got '" + text + "'");
  }
  model_rank(parts[0]);
  key.model = parts[0];
  return key;
}

std::uint64_t cell_seed(std::uint64_t base, const CellKey& cell) {
  return hash_combine(hash_combine(hash_combine(base, hash_string(cell.model)), cell.window), cell.horizon);
}

void rank_reports(GridResult& result) {
  auto& r = result.reports;
  std::stable_sort(r.begin(), r.end(), [](const MetricsReport& a, const MetricsReport& b) {
    if (a.window != b.window) return a.window < b.window;
    if (a.horizon != b.horizon) return a.horizon < b.horizon;
    return model_rank(a.model) < model_rank(b.model);
  });
  result.best.assign(r.size(), false);
  for (std::size_t begin = 0; begin < r.size();) {
    std::size_t end = begin;
    std::size_t best = begin;
    while (end < r.size() && r[end].window == r[begin].window && r[end].horizon == r[begin].horizon) {
      const auto& c = r[end];
      const auto& b = r[best];
      if (c.mae_normalized < b.mae_normalized ||
          (c.mae_normalized == b.mae_normalized && c.mse_normalized < b.mse_normalized)) {
        best = end;
      }
      ++end;
    }
    result.best[best] = true;
    begin = end;
  }
}

namespace {

const char* kMetricsHeader = "model,window,horizon,mae_normalized,mse_normalized,mae_price,mse_price,n_test";

void write_metrics(const MetricsReport& r, const fs::path& path) {
  std::ostringstream os;
  os << kMetricsHeader << '\n'
     << r.model << ',' << r.window << ',' << r.horizon << ',' << exact(r.mae_normalized) << ','
     << exact(r.mse_normalized) << ',' << exact(r.mae_price) << ',' << exact(r.mse_price) << ',' << r.n_test << '\n';
  write_file_atomic(path, os.str());
}

MetricsReport read_metrics(const fs::path& path) {
  std::ifstream in(path);
  std::string header, row;
  if (!in || !std::getline(in, header) || trim(header) != kMetricsHeader || !std::getline(in, row)) {
    throw ParseError(path.string() + ": not a metrics file");
  }
  const auto f = split(row, ',');
  MetricsReport r;
  if (f.size() != 8 || !parse_number(std::string_view(f[1]), r.window) ||
      !parse_number(std::string_view(f[2]), r.horizon) || !parse_number(std::string_view(f[3]), r.mae_normalized) ||
      !parse_number(std::string_view(f[4]), r.mse_normalized) || !parse_number(std::string_view(f[5]), r.mae_price) ||
      !parse_number(std::string_view(f[6]), r.mse_price) || !parse_number(std::string_view(f[7]), r.n_test)) {
    throw ParseError(path.string() + ": malformed metrics row");
  }
  r.model = f[0];
  return r;
}

void write_losses(const TrainResult& t, const fs::path& path) {
  std::ostringstream os;
  os << "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < t.train_loss.size(); ++e) {
    os << e + 1 << ',' << exact(t.train_loss[e]) << ',';
    if (e < t.validation_loss.size()) os << exact(t.validation_loss[e]);
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

// Inputs shared by every cell of a grid.
struct Prepared {
  PriceSeries series;
  std::size_t n_train = 0;
  Normalizer norm{0.0, 1.0};
  std::vector<double> train_scaled;
  std::vector<double> test_scaled;
};

Prepared prepare(const PriceSeries& series, double train_fraction) {
  Prepared p;
  p.series = series;
  const auto [train, test] = chronological_split(series, train_fraction);
  p.n_train = train.size();
  p.norm = Normalizer::fit(train.closes);
  p.train_scaled = p.norm.apply(train.closes);
  p.test_scaled = p.norm.apply(test.closes);
  return p;
}

struct CellOutcome {
  MetricsReport report;
  TrainResult training;
};

CellOutcome run_cell(const GridConfig& config, const Prepared& data, const CellKey& cell, const fs::path& dir) {
  const auto train = make_windows(data.train_scaled, cell.window, cell.horizon, 0);
  const auto test = make_windows(data.test_scaled, cell.window, cell.horizon, data.n_train);
  const std::uint64_t seed = cell_seed(config.seed, cell);
  auto forecaster = make_forecaster(cell.model, cell.window, cell.horizon, seed, config.options);
  CellOutcome out;
  out.training = forecaster->fit(train);
  const auto predictions = forecaster->predict(test);
  out.report = evaluate(cell.model, predictions, test, data.norm, data.series.closes);

  fs::create_directories(dir);
  Checkpoint ckpt = forecaster->to_checkpoint();
  ckpt.metadata["data"] = config.data;
  ckpt.metadata["train_fraction"] = exact(config.train_fraction);
  ckpt.metadata["normalizer_min"] = exact(data.norm.min());
  ckpt.metadata["normalizer_max"] = exact(data.norm.max());
  ckpt.metadata["cell_seed"] = std::to_string(seed);
  save_checkpoint(ckpt, dir / "checkpoint");
  write_losses(out.training, dir / "losses.csv");
  emit_predictions(*forecaster, test, data.norm, data.series, dir / "predictions.csv");
  write_metrics(out.report, dir / "metrics.csv");
  return out;
}

class Manifest {
 public:
  Manifest(fs::path path, const GridConfig& config) : path_(std::move(path)) {
    if (fs::exists(path_)) {
      try {
        doc_ = json::parse(read_file(path_));
      } catch (const json::exception& e) {
        throw ConfigError(path_.string() + ": unreadable manifest: " + e.what());
      }
      if (doc_.value("config_hash", "") != config.hash()) {
        throw ConfigError(path_.string() + " belongs to a run with a different configuration (hash " +
                          doc_.value("config_hash", "?") + ", this config " + config.hash() +
                          "); choose another output_dir");
      }
    } else {
      doc_ = {{"format", 1},
              {"config_hash", config.hash()},
              {"config", config.canonical()},
              {"base_seed", config.seed},
              {"cells", json::object()}};
      save();
    }
  }

  bool complete(const CellKey& cell) const {
    std::lock_guard lock(mutex_);
    const auto& cells = doc_["cells"];
    const auto it = cells.find(cell.name());
    return it != cells.end() && it->value("status", "") == "complete";
  }

  void record(const CellKey& cell, json entry) {
    std::lock_guard lock(mutex_);
    entry["model"] = cell.model;
    entry["window"] = cell.window;
    entry["horizon"] = cell.horizon;
    doc_["cells"][cell.name()] = std::move(entry);
    save();
  }

 private:
  void save() const { write_file_atomic(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  json doc_;
  mutable std::mutex mutex_;
};

}  // namespace

GridResult run_grid(const GridConfig& config, const RunOptions& options) {
  const Prepared data = prepare(load_series(config.data), config.train_fraction);
  fs::create_directories(config.output_dir / "cells");
  Manifest manifest(config.output_dir / "manifest", config);

  std::vector<CellKey> cells;
  for (auto w : config.windows)
    for (auto h : config.horizons)
      for (const auto& m : config.models) cells.push_back({m, w, h});

  struct Slot {
    std::optional<MetricsReport> report;
    std::optional<std::string> error;
    bool reused = false;
  };
  std::vector<Slot> slots(cells.size());
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const CellKey& cell = cells[i];
      const fs::path dir = config.output_dir / "cells" / cell.name();
      Slot& slot = slots[i];
      if (manifest.complete(cell)) {
        try {
          slot.report = read_metrics(dir / "metrics.csv");
          slot.reused = true;
          continue;
        } catch (const Error&) {
          // Missing or damaged results: train the cell again.
        }
      }
      const auto start = std::chrono::steady_clock::now();
      json entry = {{"seed", cell_seed(config.seed, cell)}};
      try {
        const CellOutcome out = run_cell(config, data, cell, dir);
        slot.report = out.report;
        entry["status"] = "complete";
        entry["epochs_run"] = out.training.epochs_run;
        entry["best_epoch"] = out.training.best_epoch;
      } catch (const std::exception& e) {
        slot.error = e.what();
        entry["status"] = "failed";
        entry["error"] = e.what();
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      entry["seconds"] = seconds;
      manifest.record(cell, entry);
      if (options.log) {
        std::lock_guard lock(log_mutex);
        *options.log << cell.name() << ": ";
        if (slot.report) {
          *options.log << "mae " << slot.report->mae_normalized << " mse " << slot.report->mse_normalized;
        } else {
          *options.log << "FAILED " << *slot.error;
        }
        *options.log << " (" << seconds << " s)" << std::endl;
      }
    }
  };

  const std::size_t threads = std::min(config.parallelism, cells.size());
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  GridResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (slots[i].report) {
      result.reports.push_back(*slots[i].report);
      ++(slots[i].reused ? result.reused : result.trained);
    } else {
      result.failures.push_back({cells[i], *slots[i].error});
    }
  }
  rank_reports(result);
  return result;
}

GridResult load_grid(const fs::path& run_dir) {
  json doc;
  try {
    doc = json::parse(read_file(run_dir / "manifest"));
  } catch (const json::exception& e) {
    throw ParseError((run_dir / "manifest").string() + ": " + e.what());
  }
  GridResult result;
  for (const auto& [name, entry] : doc.at("cells").items()) {
    const CellKey cell{entry.at("model").get<std::string>(), entry.at("window").get<std::size_t>(),
                       entry.at("horizon").get<std::size_t>()};
    if (entry.value("status", "") == "complete") {
      result.reports.push_back(read_metrics(run_dir / "cells" / name / "metrics.csv"));
      ++result.reused;
    } else {
      result.failures.push_back({cell, entry.value("error", "")});
    }
  }
  rank_reports(result);
  return result;
}

CellArtifacts load_cell(const fs::path& cell_dir) {
  const Checkpoint ckpt = load_checkpoint(cell_dir / "checkpoint");
  CellArtifacts a;
  a.forecaster = load_forecaster(ckpt);
  a.cell = {a.forecaster->id(), a.forecaster->window(), a.forecaster->horizon()};
  a.series = load_series(ckpt.meta("data"));
  double train_fraction = 0, lo = 0, hi = 0;
  if (!parse_number(std::string_view(ckpt.meta("train_fraction")), train_fraction) ||
      !parse_number(std::string_view(ckpt.meta("normalizer_min")), lo) ||
      !parse_number(std::string_view(ckpt.meta("normalizer_max")), hi)) {
    throw ParseError(cell_dir.string() + ": malformed checkpoint metadata");
  }
  a.normalizer = Normalizer(lo, hi);
  const auto [train, test] = chronological_split(a.series, train_fraction);
  a.test = make_windows(a.normalizer.apply(test.closes), a.cell.window, a.cell.horizon, train.size());
  return a;
}

TableFormat parse_table_format(const std::string& text) {
  if (text == "md" || text == "markdown") return TableFormat::Markdown;
  if (text == "csv") return TableFormat::Csv;
  throw ConfigError("unknown table format '" + text + "' (expected md or csv)");
}

std::string emit_table(const GridResult& result, TableFormat format) {
  std::ostringstream os;
  if (format == TableFormat::Csv) {
    os << "input_window,horizon,model,mae,mse\n";
    for (const auto& r : result.reports) {
      os << r.window << ',' << r.horizon << ',' << r.model << ',' << exact(r.mae_normalized) << ','
         << exact(r.mse_normalized) << '\n';
    }
    return os.str();
  }
  os << "| Input window | Horizon | Model | MAE | MSE |\n";
  os << "|---:|---:|---|---:|---:|\n";
  char mae[32], mse[32];
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    const bool best = i < result.best.size() && result.best[i];
    const char* b = best ? "**" : "";
    std::snprintf(mae, sizeof mae, "%.6f", r.mae_normalized);
    std::snprintf(mse, sizeof mse, "%.6f", r.mse_normalized);
    os << "| " << r.window << " | " << r.horizon << " | " << b << model_info(r.model).display << b << " | " << b << mae
       << b << " | " << b << mse << b << " |\n";
  }
  return os.str();
}

std::vector<TableRow> parse_table_csv(std::string_view text) {
  std::vector<TableRow> rows;
  std::size_t pos = 0, line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    const std::string_view line = trim(text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      if (line != "input_window,horizon,model,mae,mse") throw ParseError("table CSV: unexpected header");
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    TableRow r;
    if (f.size() != 5 || !parse_number(std::string_view(f[0]), r.window) ||
        !parse_number(std::string_view(f[1]), r.horizon) || !parse_number(std::string_view(f[3]), r.mae) ||
        !parse_number(std::string_view(f[4]), r.mse)) {
      throw ParseError("table CSV line " + std::to_string(line_no) + ": malformed row");
    }
    r.model = f[2];
    rows.push_back(std::move(r));
  }
  if (header) throw ParseError("table CSV: missing header");
  return rows;
}

void emit_predictions(const Forecaster& forecaster, const WindowedDataset& test, const Normalizer& norm,
                      const PriceSeries& series, const fs::path& path) {
  if (test.rows == 0) throw ContractError("emit_predictions: empty test set");
  if (test.source_offset + test.rows + test.window > series.size()) {
    throw ContractError("emit_predictions: series is shorter than the test windows require");
  }
  const auto predictions = forecaster.predict(test);
  std::ostringstream os;
  os << "date,actual_price,predicted_price\n";
  for (std::size_t i = 0; i < test.rows; ++i) {
    const std::size_t t = test.first_target_index(i);
    os << format_date(series.dates[t]) << ',' << exact(series.closes[t]) << ','
       << exact(norm.invert(predictions[i * test.horizon])) << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace tfbench

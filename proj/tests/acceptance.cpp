// Acceptance checks. Each named check prints one PASS or FAIL line; with no
// arguments every check runs. Exit status is nonzero when any check fails.
//
//   acceptance [check...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attention_oracle.hpp"
#include "classical_oracle.hpp"
#include "json.hpp"
#include "test_util.hpp"
#include "tfbench/attention.hpp"
#include "tfbench/classical.hpp"
#include "tfbench/data.hpp"
#include "tfbench/forecasters.hpp"
#include "tfbench/gradcheck.hpp"
#include "tfbench/grid.hpp"
#include "tfbench/metrics.hpp"
#include "tfbench/models.hpp"
#include "tfbench/nn.hpp"
#include "tfbench/ops.hpp"

using namespace tfbench;
using namespace tfbench::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

const fs::path kWork = fs::path(TFBENCH_ACCEPTANCE_DIR);

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  const GradCheckOptions per_op{1e-5, 1e-4, 1e-7, 1e-6};
  // Inputs kept away from zero so relu is differentiable at every sample.
  auto away = [&](const Shape& s) {
    Tensor t = random_tensor(s, rng);
    for (double& v : t.mutable_data()) v = (v < 0 ? -0.1 : 0.1) + v;
    return t.set_requires_grad();
  };
  using Case = std::function<Tensor(const Tensor&, const Tensor&)>;
  const std::vector<std::pair<std::string, Case>> ops = {
      {"matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, transpose(b, 1, 2)); }},
      {"matmul_broadcast",
       [](const Tensor& a, const Tensor& b) { return matmul(a, transpose(reshape(slice(b, 0, 0, 1), {3, 4}), 0, 1)); }},
      {"add", [](const Tensor& a, const Tensor& b) { return add(a, b); }},
      {"add_suffix", [](const Tensor& a, const Tensor& b) { return add(a, reshape(slice(b, 0, 0, 1), {3, 4})); }},
      {"sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
      {"mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
      {"scale", [](const Tensor& a, const Tensor&) { return scale(a, -1.7); }},
      {"relu", [](const Tensor& a, const Tensor&) { return relu(a); }},
      {"gelu", [](const Tensor& a, const Tensor&) { return gelu(a); }},
      {"tanh", [](const Tensor& a, const Tensor&) { return tanh(a); }},
      {"sigmoid", [](const Tensor& a, const Tensor&) { return sigmoid(a); }},
      {"softmax", [](const Tensor& a, const Tensor&) { return softmax_lastdim(a); }},
      {"layer_norm",
       [](const Tensor& a, const Tensor& b) {
         return layer_norm(a, reshape(slice(slice(b, 0, 0, 1), 1, 0, 1), {4}),
                           reshape(slice(slice(b, 0, 1, 1), 1, 1, 1), {4}));
       }},
      {"sum", [](const Tensor& a, const Tensor& b) { return mul(sum(a), sum(b)); }},
      {"mean", [](const Tensor& a, const Tensor& b) { return mul(mean(a), mean(b)); }},
      {"mean_axis", [](const Tensor& a, const Tensor&) { return mean_axis(a, 1); }},
      {"reshape", [](const Tensor& a, const Tensor& b) { return mul(reshape(a, {6, 4}), reshape(b, {6, 4})); }},
      {"transpose", [](const Tensor& a, const Tensor& b) { return mul(transpose(a, 0, 2), transpose(b, 0, 2)); }},
      {"slice", [](const Tensor& a, const Tensor&) { return slice(a, 1, 1, 2); }},
      {"concat", [](const Tensor& a, const Tensor& b) { return concat({a, b}, 1); }},
      {"dropout",
       [](const Tensor& a, const Tensor&) {
         std::mt19937_64 mask_rng(7);
         return dropout(a, 0.3, mask_rng);
       }},
      {"mse_loss", [](const Tensor& a, const Tensor& b) { return mse_loss(a, b); }},
  };
  double worst = 0.0;
  for (const auto& [name, op] : ops) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a = away({2, 3, 4});
      Tensor b = away({2, 3, 4});
      const Tensor w = random_tensor(op(a, b).shape(), rng);
      const auto r = finite_diff_check([&] { return sum(mul(op(a, b), w)); }, {a, b}, per_op);
      worst = std::max(worst, r.max_rel_error);
      if (!r.passed) return {false, name + " trial " + std::to_string(trial) + ": " + r.detail};
    }
  }

  // One encoder layer feeding one decoder layer, gradients through every
  // parameter and both inputs. GELU: central differences across a relu kink
  // measure the kink, not the gradient.
  double worst_block = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParameterStore store;
    nn::EncoderLayer enc(store, "enc", 8, 2, 16, nn::Activation::gelu, rng);
    nn::DecoderLayer dec(store, "dec", 8, 2, 16, nn::Activation::gelu, true, rng);
    Tensor src = random_tensor({2, 5, 8}, rng).set_requires_grad();
    Tensor tgt = random_tensor({2, 4, 8}, rng).set_requires_grad();
    const Tensor w = random_tensor({2, 4, 8}, rng);
    std::vector<Tensor> wrt = {src, tgt};
    for (const auto& [name, p] : store.entries()) wrt.push_back(p);
    const nn::ForwardContext ctx{};
    const auto r = finite_diff_check(
        [&] {
          const Tensor memory = enc(src, ctx, std::nullopt);
          return sum(mul(dec(tgt, &memory, ctx, std::nullopt), w));
        },
        wrt, GradCheckOptions{1e-5, 1e-3, 1e-7, 1e-6});
    worst_block = std::max(worst_block, r.max_rel_error);
    if (!r.passed) return {false, "block trial " + std::to_string(trial) + ": " + r.detail};
  }
  const double secs = seconds_since(start);
  return {secs < 120.0, std::to_string(ops.size()) + " ops x 20 inputs, max rel err " + fmt("%.2e", worst) +
                            "; block x 20, max rel err " + fmt("%.2e", worst_block) + "; " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------

AttentionInputs random_self_attention(std::size_t L, std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  return {random_tensor({L, d}, rng), random_tensor({L, d}, rng), random_tensor({L, d}, rng), heads,
          std::nullopt, std::nullopt, std::nullopt};
}

Outcome probsparse_equivalence() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 2 + uniform_index(rng, 31);
    const std::size_t heads = 1 + uniform_index(rng, 2);
    const auto in = random_self_attention(L, 4 * heads, heads, rng);
    const ProbSparseConfig all{1e6, 1e6, static_cast<std::uint64_t>(trial)};
    if (all.active_queries(L) != L || all.sampled_keys(L) != L) return {false, "config does not select u = L"};
    const Tensor dense = full_attention(in), sparse = probsparse_attention(in, all);
    worst = std::max(worst, max_abs_diff(dense.data(), sparse.data()));
  }
  if (worst > 1e-10) return {false, "u = L: max abs diff " + fmt("%.2e", worst)};

  std::size_t checked_rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 16 + uniform_index(rng, 17);
    const ProbSparseConfig cfg{5.0, 5.0, static_cast<std::uint64_t>(1000 + trial)};
    const std::size_t u = cfg.active_queries(L);
    if (u >= L) return {false, "u >= L at L=" + std::to_string(L)};
    const auto in = random_self_attention(L, 4, 1, rng);
    std::vector<std::vector<bool>> selected;
    literal_probsparse(to_matrix(in.q), to_matrix(in.k), to_matrix(in.v), 1, cfg, &selected);
    const Tensor got = probsparse_attention(in, cfg);
    std::size_t passive = 0;
    for (std::size_t i = 0; i < L; ++i) {
      if (selected[0][i]) continue;
      ++passive;
      for (std::size_t c = 0; c < 4; ++c) {
        if (got.at({i, c}) != in.v.at({i, c})) return {false, "passive row differs from its value row"};
      }
    }
    if (passive != L - u) return {false, "wrong number of passive rows"};
    checked_rows += passive;
  }
  return {true, "u = L: 100 instances, max abs diff " + fmt("%.2e", worst) + "; u < L: " +
                    std::to_string(checked_rows) + " passive rows exact"};
}

// ---------------------------------------------------------------------------

Outcome causality() {
  std::mt19937_64 rng(103);
  std::size_t trials = 0;
  for (std::size_t L : {5, 10, 15}) {
    const auto model = build_model(ModelConfig::defaults(Variant::DecoderOnly, L, 1, 11));
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor x = random_tensor({2, L, 1}, rng);
      const std::size_t i = uniform_index(rng, L - 1);
      std::vector<double> moved(x.data().begin(), x.data().end());
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = i + 1; t < L; ++t) moved[b * L + t] += uniform(rng, -5.0, 5.0);
      const Tensor before = model->sequence_states(x, nn::ForwardContext{});
      const Tensor after = model->sequence_states(Tensor::from({2, L, 1}, moved), nn::ForwardContext{});
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t <= i; ++t)
          for (std::size_t c = 0; c < before.size(2); ++c)
            if (before.at({b, t, c}) != after.at({b, t, c})) {
              return {false, "L=" + std::to_string(L) + " position " + std::to_string(t) + " moved"};
            }
      ++trials;
    }
  }
  return {true, std::to_string(trials) + " perturbations over L in {5,10,15}, earlier positions bit-identical"};
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(104);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 256);
    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = uniform(rng, -10, 10), p[i] = uniform(rng, -10, 10);
    double a = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += std::abs(y[i] - p[i]);
      s += (y[i] - p[i]) * (y[i] - p[i]);
    }
    a /= static_cast<double>(n);
    s /= static_cast<double>(n);
    const double m1 = mae(y, p), m2 = mse(y, p);
    worst = std::max({worst, std::abs(m1 - a), std::abs(m2 - s)});
    if (m2 < m1 * m1) return {false, "mse < mae^2 at trial " + std::to_string(trial)};
  }
  if (worst > 1e-12) return {false, "loop oracle differs by " + fmt("%.2e", worst)};

  double worst_scale = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto series = synth_series(SynthKind::RandomWalk, 200, static_cast<std::uint64_t>(trial));
    const auto [train, test] = chronological_split(series);
    const auto norm = Normalizer::fit(train.closes);
    const auto ds = make_windows(norm.apply(test.closes), 10, 5, train.size());
    std::vector<double> pred = ds.targets;
    for (auto& v : pred) v += uniform(rng, -0.2, 0.2);
    const auto r = evaluate("x", pred, ds, norm, series.closes);
    worst_scale = std::max(worst_scale, std::abs(r.mae_price - (norm.max() - norm.min()) * r.mae_normalized));
  }
  return {worst_scale <= 1e-9, "1000 vectors within " + fmt("%.1e", worst) + "; dual-scale gap " +
                                   fmt("%.1e", worst_scale)};
}

// ---------------------------------------------------------------------------

Outcome windowing() {
  std::size_t layouts = 0;
  for (std::size_t len = 50; len <= 200; ++len) {
    std::vector<double> s(len);
    std::iota(s.begin(), s.end(), 0.0);
    for (std::size_t w : {5, 10, 15})
      for (std::size_t h : {1, 5, 10}) {
        const auto ds = make_windows(s, w, h);
        if (ds.rows != len - w - h + 1) return {false, "row count at len " + std::to_string(len)};
        for (std::size_t i = 0; i < ds.rows; ++i) {
          for (std::size_t j = 0; j < w; ++j)
            if (ds.input_row(i)[j] != static_cast<double>(i + j)) return {false, "input index"};
          for (std::size_t k = 0; k < h; ++k)
            if (ds.target_row(i)[k] != static_cast<double>(i + w + k)) return {false, "target index"};
        }
        ++layouts;

        // Disjointness: every index feeding a training row precedes every
        // test target.
        std::vector<double> idx(len);
        std::iota(idx.begin(), idx.end(), 0.0);
        PriceSeries series;
        series.closes = idx;
        series.dates.assign(len, std::chrono::sys_days{});
        const auto [train, test] = chronological_split(series);
        if (test.size() < w + h) continue;
        const auto tr = make_windows(train.closes, w, h, 0);
        const auto te = make_windows(test.closes, w, h, train.size());
        std::set<double> train_indices(tr.inputs.begin(), tr.inputs.end());
        train_indices.insert(tr.targets.begin(), tr.targets.end());
        for (double t : te.targets)
          if (train_indices.count(t)) return {false, "test target index used in training"};
        for (std::size_t i = 0; i < te.rows; ++i)
          if (te.target_row(i)[0] != static_cast<double>(te.first_target_index(i))) return {false, "test offset"};
      }
  }
  return {true, std::to_string(layouts) + " layouts exact, train/test indices disjoint"};
}

// ---------------------------------------------------------------------------

fs::path fixture_path() {
  if (const char* env = std::getenv("TFBENCH_FIXTURE")) return env;
  return TFBENCH_FIXTURE;
}

Outcome fixture_statistics() {
  const fs::path path = fixture_path();
  if (!fs::exists(path)) return {false, "fixture not found at " + path.string()};
  const PriceSeries s = load_csv(path);
  const double mean = std::accumulate(s.closes.begin(), s.closes.end(), 0.0) / static_cast<double>(s.size());
  const auto [lo, hi] = std::minmax_element(s.closes.begin(), s.closes.end());
  const bool ok = s.size() == 2286 && std::abs(mean - 3251.59) <= 0.5 && std::abs(*lo - 1829.08) <= 0.01 &&
                  std::abs(*hi - 5321.41) <= 0.01;
  return {ok, "count " + std::to_string(s.size()) + fmt(", mean %.6f, min %.6f, max %.6f", mean, *lo, *hi)};
}

// ---------------------------------------------------------------------------

Outcome overfit_sanity() {
  const auto start = Clock::now();
  const auto series = synth_series(SynthKind::SineTrend, 200, 0);
  const auto norm = Normalizer::fit(series.closes);
  const auto scaled = norm.apply(series.closes);
  // 50 samples: rows 0..49 of the w=10, h=1 windows.
  const auto ds = make_windows(std::span<const double>(scaled).first(60), 10, 1);
  if (ds.rows != 50) return {false, "dataset is not 50 samples"};
  ForecasterOptions opts;
  opts.train.max_epochs = 2000;
  opts.train.early_stop_patience = 2000;
  opts.train.validation_fraction = 0.0;
  opts.train.target_train_mse = 1e-3;
  std::ostringstream detail;
  bool ok = true;
  for (const auto& info : model_catalog()) {
    if (!info.variant) continue;
    const auto cell_start = Clock::now();
    auto f = make_forecaster(info.id, 10, 1, 1, opts);
    const auto r = f->fit(ds);
    const double train_mse = mse(ds.targets, f->predict(ds));
    ok = ok && train_mse < 1e-3;
    detail << info.id << fmt(" %.1e@%g ", train_mse, static_cast<double>(r.epochs_run))
           << fmt("(%.1fs) ", seconds_since(cell_start));
  }
  const double secs = seconds_since(start);
  detail << fmt("total %.1f s", secs);
  return {ok && secs < 300.0, detail.str()};
}

// ---------------------------------------------------------------------------

Outcome classical_oracles() {
  // SVR on three points against the brute-force dual.
  const std::vector<double> x = {0.0, 0.5, 1.2}, y = {0.1, 0.9, 0.4};
  const MatrixView X(x, 3, 1);
  const double C = 1.0, eps = 0.05, gamma = 1.5;
  const SVRModel m = fit_svr(X, y, SVRParams{C, eps, gamma, 1e-6, 100000});
  const auto oracle = brute_force_dual(X, y, C, gamma, eps);
  const auto coef = full_coefficients(m, 3);
  double svr_gap = std::abs(svr_dual_objective(X, y, coef, gamma, eps) - oracle.objective);
  for (std::size_t i = 0; i < 3; ++i) svr_gap = std::max(svr_gap, std::abs(coef[i] - oracle.coef[i]));
  if (svr_gap > 1e-3) return {false, "svr differs from the dual grid search by " + fmt("%.2e", svr_gap)};

  std::mt19937_64 rng(108);
  auto random_data = [&](std::size_t n, std::size_t w) {
    std::pair<std::vector<double>, std::vector<double>> d{std::vector<double>(n * w), std::vector<double>(n)};
    for (auto& v : d.first) v = uniform01(rng);
    for (auto& v : d.second) v = uniform(rng, -1.0, 1.0);
    return d;
  };

  // Fully grown single tree memorizes.
  for (std::size_t w : {1, 5, 10, 15}) {
    const auto [xs, ys] = random_data(100, w);
    const MatrixView Xt(xs, 100, w);
    const auto forest = fit_random_forest(Xt, ys, ForestParams{1, kUnlimitedDepth, 1, 0, false, 3});
    if (predict_classical(forest, Xt) != ys) return {false, "full tree does not memorize at w=" + std::to_string(w)};
  }

  // Depth-2 splits against exhaustive search.
  for (int trial = 0; trial < 20; ++trial) {
    const auto [xs, ys] = random_data(20, 3);
    const MatrixView Xt(xs, 20, 3);
    const auto forest = fit_random_forest(Xt, ys, ForestParams{1, 2, 1, 3, false, 0});
    const auto& nodes = forest.trees[0].nodes;
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), 0);
    const auto [f0, t0] = best_split(Xt, ys, all);
    if (nodes[0].feature != f0 || nodes[0].threshold != t0) return {false, "root split differs"};
    std::vector<std::size_t> left, right;
    for (auto r : all) (Xt.row(r)[static_cast<std::size_t>(f0)] <= t0 ? left : right).push_back(r);
    for (const auto& [child, rows] : {std::pair{nodes[0].left, left}, std::pair{nodes[0].right, right}}) {
      const auto& node = nodes[static_cast<std::size_t>(child)];
      const auto [f, t] = rows.size() < 2 ? std::pair{-1, 0.0} : best_split(Xt, ys, rows);
      if (node.feature != f || (f >= 0 && node.threshold != t)) return {false, "depth-2 split differs"};
    }
  }
  return {true, "svr within " + fmt("%.1e", svr_gap) + " of the dual grid search; trees memorize; depth-2 splits exact"};
}

// ---------------------------------------------------------------------------

// 18-cell grid shared by the directional and horizon checks: all models at
// w=10, h in {1, 10} on sine_trend n=1000, default training settings.
struct SyntheticRun {
  GridResult result;
  std::map<std::string, double> seconds;
  double persistence_mae = 0.0;
};

SyntheticRun synthetic_run() {
  GridConfig config = GridConfig::parse("data = synth:sine_trend:1000:0\nwindows = 10\nhorizons = 1,10\n");
  config.output_dir = kWork / "synthetic";
  SyntheticRun run;
  run.result = run_grid(config);
  std::ifstream in(config.output_dir / "manifest");
  const auto manifest = nlohmann::json::parse(in);
  for (const auto& [name, entry] : manifest.at("cells").items()) run.seconds[name] = entry.at("seconds").get<double>();

  const auto series = load_series(config.data);
  const auto [train, test] = chronological_split(series, config.train_fraction);
  const auto norm = Normalizer::fit(train.closes);
  const auto ds = make_windows(norm.apply(test.closes), 10, 1, train.size());
  run.persistence_mae = mae(ds.targets, persistence_predictions(ds));
  return run;
}

const MetricsReport* find_report(const GridResult& g, const std::string& model, std::size_t h) {
  for (const auto& r : g.reports)
    if (r.model == model && r.window == 10 && r.horizon == h) return &r;
  return nullptr;
}

Outcome directional_benchmark() {
  const SyntheticRun run = synthetic_run();
  std::ostringstream detail;
  detail << fmt("persistence %.6f;", run.persistence_mae);
  bool ok = run.result.failures.empty();
  for (const auto& info : model_catalog()) {
    if (!info.variant) continue;
    const MetricsReport* r = find_report(run.result, info.id, 1);
    if (!r) return {false, "missing cell " + info.id};
    const double secs = run.seconds.at(CellKey{info.id, 10, 1}.name());
    ok = ok && r->mae_normalized < run.persistence_mae && secs < 180.0;
    detail << " " << info.id << fmt(" %.6f (%.0fs)", r->mae_normalized, secs);
  }
  return {ok, detail.str()};
}

Outcome horizon_monotonicity() {
  const SyntheticRun run = synthetic_run();
  std::ostringstream detail;
  bool ok = run.result.failures.empty();
  for (const auto& info : model_catalog()) {
    const MetricsReport* short_h = find_report(run.result, info.id, 1);
    const MetricsReport* long_h = find_report(run.result, info.id, 10);
    if (!short_h || !long_h) return {false, "missing cell " + info.id};
    ok = ok && short_h->mae_normalized <= long_h->mae_normalized;
    detail << " " << info.id << fmt(" %.4f<=%.4f", short_h->mae_normalized, long_h->mae_normalized);
  }
  return {ok, detail.str()};
}

// ---------------------------------------------------------------------------

// Checks the markdown table: header, alignment rule, one row per report with
// five cells, and exactly one bold row per (window, horizon).
std::string table_problem(const std::string& md, std::size_t expected_rows) {
  std::istringstream in(md);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() != expected_rows + 2) return "table has " + std::to_string(lines.size()) + " lines";
  if (lines[0] != "| Input window | Horizon | Model | MAE | MSE |") return "bad header";
  if (lines[1].rfind("|---", 0) != 0) return "bad rule";
  std::map<std::string, int> bold;
  std::set<std::string> groups;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (std::count(l.begin(), l.end(), '|') != 6) return "row " + std::to_string(i) + " is not five cells";
    std::istringstream cells(l.substr(1));
    std::string w, h;
    std::getline(cells, w, '|');
    std::getline(cells, h, '|');
    groups.insert(w + "/" + h);
    if (l.find("**") != std::string::npos) ++bold[w + "/" + h];
  }
  for (const auto& g : groups)
    if (bold[g] != 1) return "cell " + g + " has " + std::to_string(bold[g]) + " bold rows";
  return "";
}

Outcome full_grid_smoke() {
  const auto start = Clock::now();
  GridConfig config = GridConfig::parse("data = synth:sine_trend:500:0\n");
  config.output_dir = kWork / "smoke";
  fs::remove_all(config.output_dir);
  const GridResult first = run_grid(config);
  const double secs = seconds_since(start);
  const std::string table = emit_table(first, TableFormat::Markdown);
  std::string problem = table_problem(table, 81);
  if (first.reports.size() != 81) problem = std::to_string(first.reports.size()) + " reports";
  if (!first.failures.empty()) problem = first.failures[0].cell.name() + " failed: " + first.failures[0].error;

  const GridResult again = run_grid(config);
  const bool resumed = again.trained == 0 && again.reused == 81 && emit_table(again, TableFormat::Markdown) == table;
  if (problem.empty() && !resumed) problem = "rerun retrained " + std::to_string(again.trained) + " cells";
  std::printf("%s", table.c_str());
  return {problem.empty() && secs < 3600.0,
          (problem.empty() ? std::string("81 cells, 0 failures, one bold per cell, rerun reused 81") : problem) +
              fmt("; first run %.0f s", secs)};
}

// Not a criterion: the real-data ranking is printed for comparison only.
int report_fixture_ranking() {
  const fs::path path = fixture_path();
  if (!fs::exists(path)) {
    std::printf("REPORT fixture_ranking: skipped, fixture not found at %s\n", path.string().c_str());
    return 0;
  }
  GridConfig config = GridConfig::parse("data = " + path.string() + "\n");
  config.output_dir = kWork / "fixture";
  const GridResult g = run_grid(config);
  std::printf("%s", emit_table(g, TableFormat::Markdown).c_str());
  for (std::size_t i = 0; i < g.reports.size(); ++i)
    if (g.best[i])
      std::printf("REPORT fixture_ranking: w=%zu h=%zu best %s\n", g.reports[i].window, g.reports[i].horizon,
                  g.reports[i].model.c_str());
  return 0;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kChecks = {
    {"gradient_correctness", gradient_correctness},
    {"probsparse_equivalence", probsparse_equivalence},
    {"causality", causality},
    {"metric_oracles", metric_oracles},
    {"windowing", windowing},
    {"fixture_statistics", fixture_statistics},
    {"overfit_sanity", overfit_sanity},
    {"classical_oracles", classical_oracles},
    {"directional_benchmark", directional_benchmark},
    {"horizon_monotonicity", horizon_monotonicity},
    {"full_grid_smoke", full_grid_smoke},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.size() == 1 && wanted[0] == "fixture_ranking") return report_fixture_ranking();
  if (wanted.empty())
    for (const auto& [name, fn] : kChecks) wanted.push_back(name);
  fs::create_directories(kWork);
  int failures = 0;
  for (const auto& name : wanted) {
    const auto it = std::find_if(kChecks.begin(), kChecks.end(), [&](const auto& c) { return c.first == name; });
    if (it == kChecks.end()) {
      std::fprintf(stderr, "unknown check '%s'\n", name.c_str());
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.passed ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}

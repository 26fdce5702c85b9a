#include "tfbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tfbench/errors.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  const bool shaped = text.size() == 10 && text[4] == '-' && text[7] == '-';
  if (!shaped || !parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      !parse_int(text.substr(8, 2), d)) {
    throw ParseError("expected a YYYY-MM-DD date, got '" + std::string(text) + "'");
  }
  const Date date{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(m)),
                  std::chrono::day(static_cast<unsigned>(d))};
  if (!date.ok()) throw ParseError("not a calendar date: '" + std::string(text) + "'");
  return date;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

void PriceSeries::validate() const {
  if (dates.size() != closes.size()) throw ValidationError("dates and closes differ in length");
  for (std::size_t i = 0; i < closes.size(); ++i) {
    if (!std::isfinite(closes[i]) || closes[i] <= 0.0) {
      throw ValidationError("row " + std::to_string(i) + " (" + format_date(dates[i]) + "): close must be positive");
    }
    if (i > 0 && dates[i] <= dates[i - 1]) {
      throw ValidationError("row " + std::to_string(i) + ": date " + format_date(dates[i]) +
                            (dates[i] == dates[i - 1] ? " is duplicated" : " is out of order"));
    }
  }
}

PriceSeries parse_csv(std::string_view text, const std::string& source) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  PriceSeries out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "date,close") {
        throw ParseError(at_line(source, line_no) + "expected header 'date,close', got '" + std::string(line) + "'");
      }
      header_seen = true;
      continue;
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      throw ParseError(at_line(source, line_no) + "expected two fields, got '" + std::string(line) + "'");
    }
    Date date;
    try {
      date = parse_date(trim(line.substr(0, comma)));
    } catch (const ParseError& e) {
      throw ParseError(at_line(source, line_no) + e.what());
    }
    const std::string_view field = trim(line.substr(comma + 1));
    double close = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), close);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
      throw ParseError(at_line(source, line_no) + "bad close value '" + std::string(field) + "'");
    }
    if (!std::isfinite(close) || close <= 0.0) {
      throw ValidationError(at_line(source, line_no) + "close must be positive and finite, got " + std::string(field));
    }
    if (!out.dates.empty() && date <= out.dates.back()) {
      throw ValidationError(at_line(source, line_no) + "date " + format_date(date) +
                            (date == out.dates.back() ? " is duplicated" : " is out of order"));
    }
    out.dates.push_back(date);
    out.closes.push_back(close);
  }
  if (!header_seen) throw ParseError(source + ": empty file, expected header 'date,close'");
  return out;
}

PriceSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path.string());
}

void save_csv(const PriceSeries& series, const std::filesystem::path& path) {
  series.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << "date,close\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof buf, series.closes[i]);
    out << format_date(series.dates[i]) << ',' << std::string_view(buf, res.ptr - buf) << '\n';
  }
  if (!out) throw ContractError("failed writing " + path.string());
}

SeriesSummary summarize(std::span<const double> values) {
  if (values.empty()) throw ContractError("summarize needs at least one value");
  SeriesSummary s;
  s.count = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.count);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  s.min = sorted.front();
  s.max = sorted.back();
  s.q25 = quantile(0.25);
  s.median = quantile(0.5);
  s.q75 = quantile(0.75);
  return s;
}

std::pair<PriceSeries, PriceSeries> chronological_split(const PriceSeries& series, double train_fraction) {
  if (series.size() < 10) {
    throw ContractError("chronological_split needs at least 10 points, got " + std::to_string(series.size()));
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train fraction must lie in (0, 1)");
  // The tolerance keeps e.g. 0.7 * 90 = 62.999... from flooring to 62.
  const auto cut =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(series.size()) + 1e-9));
  if (cut == 0 || cut == series.size()) throw ContractError("split leaves an empty side");
  PriceSeries train, test;
  train.dates.assign(series.dates.begin(), series.dates.begin() + cut);
  train.closes.assign(series.closes.begin(), series.closes.begin() + cut);
  test.dates.assign(series.dates.begin() + cut, series.dates.end());
  test.closes.assign(series.closes.begin() + cut, series.closes.end());
  return {std::move(train), std::move(test)};
}

Normalizer::Normalizer(double min, double max) : min_(min), max_(max) {
  if (!(max > min) || !std::isfinite(min) || !std::isfinite(max)) {
    throw ValidationError("degenerate normalization range [" + std::to_string(min) + ", " + std::to_string(max) + "]");
  }
}

Normalizer Normalizer::fit(std::span<const double> train) {
  if (train.size() < 2) throw ValidationError("normalizer needs at least 2 training values");
  const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
  return Normalizer(*lo, *hi);
}

std::vector<double> Normalizer::apply(std::span<const double> xs) const {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [this](double x) { return apply(x); });
  return out;
}

std::vector<double> Normalizer::invert(std::span<const double> ys) const {
  std::vector<double> out(ys.size());
  std::transform(ys.begin(), ys.end(), out.begin(), [this](double y) { return invert(y); });
  return out;
}

WindowedDataset make_windows(std::span<const double> series, std::size_t window, std::size_t horizon,
                             std::size_t source_offset) {
  if (window == 0 || horizon == 0) throw ContractError("window and horizon must be positive");
  if (series.size() < window + horizon) {
    throw ContractError("series of length " + std::to_string(series.size()) + " is too short for window " +
                        std::to_string(window) + " and horizon " + std::to_string(horizon) + ": needs at least " +
                        std::to_string(window + horizon) + " points");
  }
  WindowedDataset ds;
  ds.rows = series.size() - window - horizon + 1;
  ds.window = window;
  ds.horizon = horizon;
  ds.source_offset = source_offset;
  ds.inputs.reserve(ds.rows * window);
  ds.targets.reserve(ds.rows * horizon);
  for (std::size_t i = 0; i < ds.rows; ++i) {
    ds.inputs.insert(ds.inputs.end(), series.begin() + i, series.begin() + i + window);
    ds.targets.insert(ds.targets.end(), series.begin() + i + window, series.begin() + i + window + horizon);
  }
  return ds;
}

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "sine_trend") return SynthKind::SineTrend;
  if (text == "random_walk") return SynthKind::RandomWalk;
  if (text == "constant") return SynthKind::Constant;
  throw ConfigError("unknown synthetic series kind '" + text + "'");
}

PriceSeries synth_series(SynthKind kind, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("synth_series needs n >= 1");
  PriceSeries s;
  s.dates.reserve(n);
  s.closes.reserve(n);
  std::chrono::sys_days day = std::chrono::sys_days(std::chrono::year(2000) / 1 / 3);
  std::mt19937_64 rng(seed);
  double walk = 100.0;
  const double pi = std::acos(-1.0);
  for (std::size_t t = 0; t < n; ++t) {
    while (std::chrono::weekday(day).iso_encoding() > 5) day += std::chrono::days(1);
    s.dates.emplace_back(day);
    day += std::chrono::days(1);
    const double td = static_cast<double>(t);
    switch (kind) {
      case SynthKind::SineTrend:
        s.closes.push_back(100.0 + 0.05 * td + 5.0 * std::sin(2.0 * pi * td / 20.0));
        break;
      case SynthKind::RandomWalk:
        if (t > 0) walk = std::max(1.0, walk + standard_normal(rng));
        s.closes.push_back(walk);
        break;
      case SynthKind::Constant:
        s.closes.push_back(100.0);
        break;
    }
  }
  return s;
}

}  // namespace tfbench

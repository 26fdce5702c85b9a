#pragma once

// Price series ingestion, chronological splitting, min-max scaling and
// sliding-window construction.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tfbench {

using Date = std::chrono::year_month_day;

// "YYYY-MM-DD"; throws ParseError on anything else, including impossible
// calendar dates.
Date parse_date(std::string_view text);
std::string format_date(const Date& d);

struct PriceSeries {
  std::vector<Date> dates;
  std::vector<double> closes;

  std::size_t size() const { return closes.size(); }
  // Throws ValidationError if dates are not strictly increasing or a close
  // is non-positive or non-finite.
  void validate() const;
};

PriceSeries load_csv(const std::filesystem::path& path);
// Parses CSV text; `source` names the input in error messages.
PriceSeries parse_csv(std::string_view text, const std::string& source = "<memory>");
// Closes are written in shortest round-trip form so a reload is exact.
void save_csv(const PriceSeries& series, const std::filesystem::path& path);

struct SeriesSummary {
  std::size_t count = 0;
  double mean = 0, std = 0, min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};
// Sample standard deviation; quartiles by linear interpolation between order
// statistics.
SeriesSummary summarize(std::span<const double> values);

// First floor(fraction * N) points train, the rest test. Needs N >= 10.
std::pair<PriceSeries, PriceSeries> chronological_split(const PriceSeries& series, double train_fraction = 0.7);

class Normalizer {
 public:
  // Throws ValidationError on a degenerate range (max == min) or empty input.
  static Normalizer fit(std::span<const double> train);
  Normalizer(double min, double max);

  double min() const { return min_; }
  double max() const { return max_; }
  double range() const { return max_ - min_; }

  double apply(double x) const { return (x - min_) / (max_ - min_); }
  double invert(double y) const { return y * (max_ - min_) + min_; }
  std::vector<double> apply(std::span<const double> xs) const;
  std::vector<double> invert(std::span<const double> ys) const;

 private:
  double min_;
  double max_;
};

struct WindowedDataset {
  std::size_t rows = 0;
  std::size_t window = 0;
  std::size_t horizon = 0;
  // Index of series[0] within the full series the windows were cut from.
  std::size_t source_offset = 0;
  std::vector<double> inputs;   // [rows, window] row-major
  std::vector<double> targets;  // [rows, horizon] row-major

  std::span<const double> input_row(std::size_t i) const { return {inputs.data() + i * window, window}; }
  std::span<const double> target_row(std::size_t i) const { return {targets.data() + i * horizon, horizon}; }
  // Position in the full series of targets[i][0].
  std::size_t first_target_index(std::size_t i) const { return source_offset + i + window; }
};

// Row i holds series[i .. i+w-1] as input and series[i+w .. i+w+h-1] as target.
WindowedDataset make_windows(std::span<const double> series, std::size_t window, std::size_t horizon,
                             std::size_t source_offset = 0);

enum class SynthKind { SineTrend, RandomWalk, Constant };
SynthKind parse_synth_kind(const std::string& text);

// Weekday dates starting 2000-01-03.
PriceSeries synth_series(SynthKind kind, std::size_t n, std::uint64_t seed = 0);

}  // namespace tfbench

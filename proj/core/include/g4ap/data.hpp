#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace g4ap {

// Column order of every station record: six pollutants then four
// meteorological variables. PM2.5 (index 0) is the forecast target.
inline constexpr std::size_t kNumVariables = 10;
inline constexpr std::size_t kPm25Channel = 0;
inline constexpr std::array<const char*, kNumVariables> kVariableNames = {
    "PM2.5", "PM10", "SO2", "NO2", "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN"};

using TimePoint = std::int64_t;  // seconds since epoch, timezone-naive
inline constexpr TimePoint kHourSeconds = 3600;

// One station's hourly multivariate record. After ingestion the timestamps
// are strictly increasing with a constant 1-hour step; cells that were
// imputed (or synthesized for gap hours) are flagged in missing_mask.
struct StationSeries {
  std::string station_id;
  TimePoint start_time = 0;
  std::vector<double> values;      // row-major [hours x kNumVariables]
  std::vector<std::uint8_t> mask;  // same layout; 1 = value was missing in the source

  std::size_t hours() const { return values.size() / kNumVariables; }
  double at(std::size_t hour, std::size_t var) const {
    return values[hour * kNumVariables + var];
  }
  bool missing(std::size_t hour, std::size_t var) const {
    return mask[hour * kNumVariables + var] != 0;
  }
  TimePoint time_at(std::size_t hour) const {
    return start_time + static_cast<TimePoint>(hour) * kHourSeconds;
  }
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t gap_hours_inserted = 0;
  std::size_t cells_imputed = 0;
  std::size_t leading_rows_dropped = 0;
  std::array<double, kNumVariables> missing_fraction{};
  std::vector<std::string> warnings;  // e.g. per-variable >20% missing
};

// Maps canonical variable names (and "timestamp") to the CSV header names
// actually present in the file. Unmapped names default to themselves.
using CsvSchema = std::map<std::string, std::string>;

struct LoadResult {
  StationSeries series;
  LoadReport report;
};

LoadResult load_csv(const std::string& path, const CsvSchema& schema = {});

// ISO-8601 helpers (timezone-naive; 'T' or ' ' separator accepted).
TimePoint parse_timestamp(const std::string& text);
std::string format_timestamp(TimePoint t);

// ---------------------------------------------------------------------------
// Synthetic stations
// ---------------------------------------------------------------------------

// Every channel is base level + annual sinusoid + diurnal sinusoid + AR(1)
// noise; PM2.5 is replaced by a fixed blend of TEMP, DEWP and its own lag so
// that meteorology is genuinely predictive. station_shift deterministically
// perturbs phases and base levels to emulate cross-station domain shift.
struct SynthConfig {
  std::string station_id = "S0";
  std::size_t hours = 4000;
  std::uint64_t seed = 0;
  double station_shift = 0.0;
  double noise_std = 1.0;
};

// The deterministic part of the PM2.5 blend, exposed so tests can re-derive
// the generator output independently:
//   pm25[t] = intercept + temp_coeff * TEMP[t] + dewp_coeff * DEWP[t]
//           + lag_coeff * pm25[t-1]
//           + diurnal_amplitude * sin(2*pi*(t + diurnal_phase + shift*shift_phase)/24)
//           + AR(1) noise
struct Pm25Blend {
  double intercept = 6.0;
  double temp_coeff = -0.45;
  double dewp_coeff = 0.35;
  double lag_coeff = 0.82;
  double diurnal_amplitude = 9.0;
  double diurnal_phase = 0.0;
  double shift_phase = 2.0;
};

Pm25Blend pm25_blend_coefficients();

// min_hours is the smallest usable series for the caller's experiment,
// typically lookback + horizon + 1.
StationSeries generate_synthetic(const SynthConfig& config, std::size_t min_hours);

void write_station_csv(const StationSeries& series, const std::string& path);

// ---------------------------------------------------------------------------
// Samples and splits
// ---------------------------------------------------------------------------

// One (lookback window, horizon target) pair in raw, unnormalized units.
struct ForecastSample {
  std::string station_id;
  std::vector<double> window;  // [T x kNumVariables], row-major
  std::vector<double> target;  // [horizon] raw PM2.5
  TimePoint origin_time = 0;   // instant of the last lookback step
  std::size_t origin_index = 0;
};

std::vector<ForecastSample> make_samples(const StationSeries& series, std::size_t lookback,
                                         std::size_t horizon);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open
  std::size_t size() const { return end - begin; }
};

struct SplitPlan {
  IndexRange train;
  IndexRange val;
  IndexRange test;
  double few_shot_fraction = 0.10;

  // Chronological plan: train, then validation carved from the tail of the
  // training interval, then test at the end.
  static SplitPlan chronological(std::size_t total_hours, double test_fraction = 0.25,
                                 double val_fraction_of_train = 0.10,
                                 double few_shot_fraction = 0.10);
  static SplitPlan from_hours(std::size_t train_hours, std::size_t test_hours,
                              double val_fraction_of_train = 0.10,
                              double few_shot_fraction = 0.10);
};

enum class Protocol { long_term, few_shot, zero_shot_source };

const char* protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);

struct SampleSplit {
  std::vector<ForecastSample> train;
  std::vector<ForecastSample> val;
  std::vector<ForecastSample> test;
};

// A sample belongs to an interval only if its whole span (window plus
// target) fits inside; boundary-straddling samples are dropped, so splits
// can never leak.
SampleSplit split(const std::vector<ForecastSample>& samples, const SplitPlan& plan,
                  Protocol protocol, std::size_t lookback, std::size_t horizon);

}  // namespace g4ap

#include "g4ap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "g4ap/errors.hpp"
#include "g4ap/rng.hpp"

namespace g4ap {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHoursPerYear = 8760.0;
constexpr double kHoursPerDay = 24.0;

// Days from civil date (Howard Hinnant's algorithm), so timestamp handling
// needs no timezone database.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

bool is_missing_token(const std::string& s) {
  if (s.empty()) return true;
  std::string lower;
  lower.reserve(s.size());
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "na" || lower == "nan" || lower == "null" || lower == "n/a";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

TimePoint parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 6 || (sep != 'T' && sep != ' '))
    throw DataError("unparseable timestamp: '" + text + "' (expected ISO-8601)");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 ||
      s > 60)
    throw DataError("timestamp out of range: '" + text + "'");
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(TimePoint t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                static_cast<int>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

LoadResult load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);
  const std::vector<std::string> header = split_csv_line(line);

  auto mapped_name = [&schema](const std::string& canonical) {
    auto it = schema.find(canonical);
    return it == schema.end() ? canonical : it->second;
  };
  auto column_of = [&header, &path](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError("CSV file " + path + " is missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ts_col = column_of(mapped_name("timestamp"));
  std::array<std::size_t, kNumVariables> var_cols{};
  for (std::size_t v = 0; v < kNumVariables; ++v)
    var_cols[v] = column_of(mapped_name(kVariableNames[v]));

  struct RawRow {
    TimePoint t;
    std::array<double, kNumVariables> vals;
    std::array<bool, kNumVariables> missing;
  };
  std::vector<RawRow> rows;
  LoadReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    RawRow row{};
    if (ts_col >= fields.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": short row");
    row.t = parse_timestamp(fields[ts_col]);
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      if (var_cols[v] >= fields.size() || is_missing_token(fields[var_cols[v]])) {
        row.missing[v] = true;
        continue;
      }
      try {
        row.vals[v] = std::stod(fields[var_cols[v]]);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad numeric value '" +
                        fields[var_cols[v]] + "' in column " + kVariableNames[v]);
      }
      if (!std::isfinite(row.vals[v])) row.missing[v] = true;
    }
    rows.push_back(row);
    ++report.rows_read;
  }
  if (rows.empty()) throw DataError("CSV file has no data rows: " + path);

  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].t <= rows[i - 1].t)
      throw DataError(path + ": timestamps not strictly increasing at row " + std::to_string(i));
    if ((rows[i].t - rows[i - 1].t) % kHourSeconds != 0)
      throw DataError(path + ": timestamp step is not a whole number of hours at row " +
                      std::to_string(i));
  }

  // Drop leading rows until every variable has a value to forward-fill from.
  std::array<bool, kNumVariables> seen{};
  std::size_t first = 0;
  for (; first < rows.size(); ++first) {
    for (std::size_t v = 0; v < kNumVariables; ++v) seen[v] = seen[v] || !rows[first].missing[v];
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) break;
  }
  std::size_t start_row = 0;
  while (start_row < rows.size() &&
         std::any_of(rows[start_row].missing.begin(), rows[start_row].missing.end(),
                     [](bool b) { return b; })) {
    bool resolvable = true;
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      bool prior = false;
      for (std::size_t r = 0; r < start_row; ++r) prior = prior || !rows[r].missing[v];
      if (rows[start_row].missing[v] && !prior) resolvable = false;
    }
    if (resolvable) break;
    ++start_row;
  }
  report.leading_rows_dropped = start_row;
  if (start_row >= rows.size())
    throw DataError(path + ": no row with enough history to resolve all variables");

  StationSeries series;
  series.station_id = path;
  if (auto slash = path.find_last_of("/\\"); slash != std::string::npos)
    series.station_id = path.substr(slash + 1);
  if (auto dot = series.station_id.find_last_of('.'); dot != std::string::npos)
    series.station_id = series.station_id.substr(0, dot);
  series.start_time = rows[start_row].t;

  std::array<double, kNumVariables> last{};
  std::array<std::size_t, kNumVariables> missing_count{};
  TimePoint expected = rows[start_row].t;
  for (std::size_t i = start_row; i < rows.size(); ++i) {
    // Synthesize forward-filled rows for whole missing hours.
    while (expected < rows[i].t) {
      for (std::size_t v = 0; v < kNumVariables; ++v) {
        series.values.push_back(last[v]);
        series.mask.push_back(1);
        ++missing_count[v];
        ++report.cells_imputed;
      }
      ++report.gap_hours_inserted;
      expected += kHourSeconds;
    }
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      if (rows[i].missing[v]) {
        series.values.push_back(last[v]);
        series.mask.push_back(1);
        ++missing_count[v];
        ++report.cells_imputed;
      } else {
        last[v] = rows[i].vals[v];
        series.values.push_back(last[v]);
        series.mask.push_back(0);
      }
    }
    expected += kHourSeconds;
  }

  const double total_hours = static_cast<double>(series.hours());
  for (std::size_t v = 0; v < kNumVariables; ++v) {
    report.missing_fraction[v] = static_cast<double>(missing_count[v]) / total_hours;
    if (report.missing_fraction[v] > 0.20) {
      std::ostringstream os;
      os << "variable " << kVariableNames[v] << " has "
         << static_cast<int>(report.missing_fraction[v] * 100.0 + 0.5) << "% missing values";
      report.warnings.push_back(os.str());
    }
  }
  return LoadResult{std::move(series), std::move(report)};
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

struct ChannelSpec {
  double base;
  double annual_amp;
  double diurnal_amp;
  double ar_rho;
  double noise_scale;   // multiplied by config.noise_std
  double shift_level;   // base offset per unit station_shift
  double shift_phase;   // phase offset (hours) per unit station_shift
};

// Index order matches kVariableNames. The PM2.5 row only provides the
// AR/noise parameters; its deterministic part comes from the blend below.
constexpr std::array<ChannelSpec, kNumVariables> kChannels = {{
    {0.0, 0.0, 0.0, 0.80, 3.0, 4.0, 2.0},       // PM2.5 (blend target)
    {60.0, 14.0, 6.0, 0.85, 4.0, 6.0, 3.0},     // PM10
    {12.0, 5.0, 1.5, 0.80, 1.2, 1.5, 2.5},      // SO2
    {38.0, 8.0, 5.0, 0.80, 2.5, 3.0, 1.5},      // NO2
    {900.0, 250.0, 90.0, 0.88, 40.0, 80.0, 4.0},// CO
    {55.0, 20.0, 12.0, 0.82, 4.0, -5.0, 5.0},   // O3
    {12.0, 11.0, 4.0, 0.90, 0.5, 0.8, 1.0},     // TEMP
    {1013.0, 9.0, 1.2, 0.92, 0.4, 1.2, 6.0},    // PRES
    {6.0, 9.0, 3.0, 0.90, 0.6, 0.7, 2.0},       // DEWP
    {0.0, 0.4, 0.25, 0.70, 0.35, 0.1, 3.0},     // RAIN (clamped at 0)
}};

constexpr std::array<double, kNumVariables> kAnnualPhase = {0.0,  300.0, 700.0,  1100.0, 1500.0,
                                                            4000.0, 4380.0, 2200.0, 4100.0, 2600.0};
constexpr std::array<double, kNumVariables> kDiurnalPhase = {0.0, 2.0, 5.0, 8.0, 11.0,
                                                             14.0, 9.0, 3.0, 7.0, 19.0};

}  // namespace

Pm25Blend pm25_blend_coefficients() { return Pm25Blend{}; }

StationSeries generate_synthetic(const SynthConfig& config, std::size_t min_hours) {
  if (config.hours < min_hours)
    throw ContractError("generate_synthetic: " + std::to_string(config.hours) +
                        " hours is too small; need at least " + std::to_string(min_hours) +
                        " (lookback + horizon + 1)");
  if (config.noise_std < 0.0)
    throw ContractError("generate_synthetic: noise_std must be >= 0");

  // The noise stream depends on the seed and the station shift, never on the
  // station id, so equal (seed, shift) configs produce identical series.
  Rng rng(fnv1a_u64(static_cast<std::uint64_t>(std::llround(config.station_shift * 1024.0)),
                    fnv1a_u64(config.seed, 0x9e3779b97f4a7c15ull)));

  const std::size_t hours = config.hours;
  StationSeries series;
  series.station_id = config.station_id;
  series.start_time = parse_timestamp("2013-03-01T00:00:00");
  series.values.assign(hours * kNumVariables, 0.0);
  series.mask.assign(hours * kNumVariables, 0);

  std::array<double, kNumVariables> ar{};
  const Pm25Blend blend = pm25_blend_coefficients();
  double pm25_prev = 0.0;
  {
    // Start the lag at the blend's stationary mean for the initial hour.
    const double temp0 = kChannels[6].base + config.station_shift * kChannels[6].shift_level;
    const double dewp0 = kChannels[8].base + config.station_shift * kChannels[8].shift_level;
    pm25_prev = (blend.intercept + blend.temp_coeff * temp0 + blend.dewp_coeff * dewp0) /
                (1.0 - blend.lag_coeff);
  }

  for (std::size_t h = 0; h < hours; ++h) {
    const double t = static_cast<double>(h);
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      const ChannelSpec& ch = kChannels[v];
      const double phase_shift = config.station_shift * ch.shift_phase;
      const double annual =
          ch.annual_amp * std::sin(2.0 * kPi * (t + kAnnualPhase[v] + phase_shift * 40.0) /
                                   kHoursPerYear);
      const double diurnal =
          ch.diurnal_amp * std::sin(2.0 * kPi * (t + kDiurnalPhase[v] + phase_shift) /
                                    kHoursPerDay);
      const double eps = config.noise_std * ch.noise_scale * rng.normal();
      ar[v] = ch.ar_rho * ar[v] + eps;
      if (v == kPm25Channel) continue;  // assembled after TEMP/DEWP below
      double value = ch.base + config.station_shift * ch.shift_level + annual + diurnal + ar[v];
      if (v == 9) value = std::max(0.0, value);  // RAIN cannot be negative
      series.values[h * kNumVariables + v] = value;
    }
    // PM2.5: blend of this hour's meteorology, its own lag, a diurnal cycle,
    // and the AR noise drawn above.
    {
      const double temp = series.at(h, 6);
      const double dewp = series.at(h, 8);
      const double diurnal =
          blend.diurnal_amplitude *
          std::sin(2.0 * kPi *
                   (t + blend.diurnal_phase + config.station_shift * blend.shift_phase) /
                   kHoursPerDay);
      const double value = blend.intercept + blend.temp_coeff * temp + blend.dewp_coeff * dewp +
                           blend.lag_coeff * pm25_prev + diurnal + ar[kPm25Channel];
      series.values[h * kNumVariables + kPm25Channel] = value;
      pm25_prev = value;
    }
  }
  return series;
}

void write_station_csv(const StationSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw DataError("cannot open CSV file for writing: " + path);
  out << "timestamp";
  for (const char* name : kVariableNames) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t h = 0; h < series.hours(); ++h) {
    out << format_timestamp(series.time_at(h));
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      std::snprintf(buf, sizeof(buf), "%.17g", series.at(h, v));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing CSV file: " + path);
}

// ---------------------------------------------------------------------------
// Samples and splits
// ---------------------------------------------------------------------------

std::vector<ForecastSample> make_samples(const StationSeries& series, std::size_t lookback,
                                         std::size_t horizon) {
  if (lookback == 0 || horizon == 0)
    throw ContractError("make_samples: lookback and horizon must be positive");
  std::vector<ForecastSample> samples;
  const std::size_t hours = series.hours();
  if (hours < lookback + horizon) return samples;

  // Prefix sums over the mask make the clean-span test O(1) per origin.
  std::vector<std::size_t> dirty_prefix(hours + 1, 0);
  for (std::size_t h = 0; h < hours; ++h) {
    std::size_t dirty = 0;
    for (std::size_t v = 0; v < kNumVariables; ++v) dirty += series.missing(h, v) ? 1 : 0;
    dirty_prefix[h + 1] = dirty_prefix[h] + dirty;
  }

  for (std::size_t origin = lookback - 1; origin + horizon < hours; ++origin) {
    const std::size_t span_begin = origin + 1 - lookback;
    const std::size_t span_end = origin + horizon + 1;  // exclusive
    if (dirty_prefix[span_end] - dirty_prefix[span_begin] > 0) continue;
    ForecastSample s;
    s.station_id = series.station_id;
    s.origin_index = origin;
    s.origin_time = series.time_at(origin);
    s.window.resize(lookback * kNumVariables);
    std::copy(series.values.begin() + static_cast<std::ptrdiff_t>(span_begin * kNumVariables),
              series.values.begin() + static_cast<std::ptrdiff_t>((origin + 1) * kNumVariables),
              s.window.begin());
    s.target.resize(horizon);
    for (std::size_t k = 0; k < horizon; ++k)
      s.target[k] = series.at(origin + 1 + k, kPm25Channel);
    samples.push_back(std::move(s));
  }
  return samples;
}

SplitPlan SplitPlan::chronological(std::size_t total_hours, double test_fraction,
                                   double val_fraction_of_train, double few_shot_fraction) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ContractError("SplitPlan: test_fraction must be in (0, 1)");
  const auto test_hours = static_cast<std::size_t>(std::llround(
      static_cast<double>(total_hours) * test_fraction));
  return from_hours(total_hours - test_hours, test_hours, val_fraction_of_train,
                    few_shot_fraction);
}

SplitPlan SplitPlan::from_hours(std::size_t train_hours, std::size_t test_hours,
                                double val_fraction_of_train, double few_shot_fraction) {
  if (val_fraction_of_train < 0.0 || val_fraction_of_train >= 1.0)
    throw ContractError("SplitPlan: val_fraction_of_train must be in [0, 1)");
  if (few_shot_fraction <= 0.0 || few_shot_fraction > 1.0)
    throw ContractError("SplitPlan: few_shot_fraction must be in (0, 1]");
  const auto val_hours = static_cast<std::size_t>(std::llround(
      static_cast<double>(train_hours) * val_fraction_of_train));
  SplitPlan plan;
  plan.train = {0, train_hours - val_hours};
  plan.val = {train_hours - val_hours, train_hours};
  plan.test = {train_hours, train_hours + test_hours};
  plan.few_shot_fraction = few_shot_fraction;
  return plan;
}

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::long_term: return "long_term";
    case Protocol::few_shot: return "few_shot";
    case Protocol::zero_shot_source: return "zero_shot_source";
  }
  return "unknown";
}

Protocol protocol_from_name(const std::string& name) {
  if (name == "long_term") return Protocol::long_term;
  if (name == "few_shot") return Protocol::few_shot;
  if (name == "zero_shot_source" || name == "zero_shot") return Protocol::zero_shot_source;
  throw ContractError("unknown protocol '" + name + "'");
}

SampleSplit split(const std::vector<ForecastSample>& samples, const SplitPlan& plan,
                  Protocol protocol, std::size_t lookback, std::size_t horizon) {
  auto overlaps = [](const IndexRange& a, const IndexRange& b) {
    return a.begin < b.end && b.begin < a.end && a.size() > 0 && b.size() > 0;
  };
  if (overlaps(plan.train, plan.val) || overlaps(plan.val, plan.test) ||
      overlaps(plan.train, plan.test))
    throw ContractError("split: plan intervals overlap");
  if (!(plan.train.end <= plan.val.begin && plan.val.end <= plan.test.begin))
    throw ContractError("split: plan intervals must be ordered train < val < test");
  if (plan.few_shot_fraction <= 0.0 || plan.few_shot_fraction > 1.0)
    throw ContractError("split: few_shot_fraction must be in (0, 1]");

  auto inside = [lookback, horizon](const ForecastSample& s, const IndexRange& r) {
    const std::size_t span_begin = s.origin_index + 1 - lookback;
    const std::size_t span_end = s.origin_index + horizon + 1;
    return span_begin >= r.begin && span_end <= r.end;
  };

  SampleSplit out;
  for (const ForecastSample& s : samples) {
    if (inside(s, plan.train)) {
      out.train.push_back(s);
    } else if (inside(s, plan.val)) {
      out.val.push_back(s);
    } else if (inside(s, plan.test)) {
      out.test.push_back(s);
    }
  }

  if (protocol == Protocol::few_shot && plan.few_shot_fraction < 1.0) {
    // Keep the most recent fraction of the training samples.
    const auto keep = static_cast<std::size_t>(std::llround(
        static_cast<double>(out.train.size()) * plan.few_shot_fraction));
    if (keep < out.train.size())
      out.train.erase(out.train.begin(),
                      out.train.begin() + static_cast<std::ptrdiff_t>(out.train.size() - keep));
  }
  if (protocol == Protocol::zero_shot_source) out.test.clear();
  return out;
}

}  // namespace g4ap

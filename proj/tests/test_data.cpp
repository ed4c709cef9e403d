#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "g4ap/data.hpp"
#include "g4ap/errors.hpp"
#include "g4ap/rng.hpp"

using namespace g4ap;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "g4ap_data_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// A tiny hand-rolled CSV for ingestion tests.
void write_rows(const fs::path& path, const std::vector<std::string>& rows,
                const std::string& header =
                    "timestamp,PM2.5,PM10,SO2,NO2,CO,O3,TEMP,PRES,DEWP,RAIN") {
  std::ofstream out(path);
  out << header << "\n";
  for (const auto& r : rows) out << r << "\n";
}

std::string plain_row(TimePoint t, double v) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%g,%g,%g,%g,%g,%g,%g,%g,%g,%g",
                format_timestamp(t).c_str(), v, v + 1, v + 2, v + 3, v + 4, v + 5, v + 6, v + 7,
                v + 8, v + 9);
  return buf;
}

}  // namespace

TEST_SUITE("data.timestamps") {
  TEST_CASE("round trip and hourly arithmetic") {
    const TimePoint t = parse_timestamp("2013-03-01T00:00:00");
    CHECK(format_timestamp(t) == "2013-03-01T00:00:00");
    CHECK(format_timestamp(t + 25 * kHourSeconds) == "2013-03-02T01:00:00");
    CHECK(parse_timestamp("2013-03-01 13:30:00") - t == 13 * 3600 + 1800);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), DataError);
    CHECK_THROWS_AS(parse_timestamp("2013-13-01T00:00:00"), DataError);
  }
}

TEST_SUITE("data.load_csv") {
  TEST_CASE("well-formed file loads with an all-false mask") {
    const fs::path p = temp_dir() / "clean.csv";
    std::vector<std::string> rows;
    const TimePoint t0 = parse_timestamp("2014-01-01T00:00:00");
    for (int i = 0; i < 100; ++i) rows.push_back(plain_row(t0 + i * kHourSeconds, i));
    write_rows(p, rows);
    const LoadResult r = load_csv(p.string());
    CHECK(r.series.hours() == 100);
    CHECK(r.series.station_id == "clean");
    CHECK(r.report.cells_imputed == 0);
    for (std::size_t h = 0; h < 100; ++h)
      for (std::size_t v = 0; v < kNumVariables; ++v) CHECK_FALSE(r.series.missing(h, v));
    CHECK(r.series.at(42, 0) == 42.0);
    CHECK(r.series.at(42, 1) == 43.0);
  }

  TEST_CASE("one absent cell is forward-filled and masked") {
    const fs::path p = temp_dir() / "one_gap.csv";
    const TimePoint t0 = parse_timestamp("2014-01-01T00:00:00");
    std::vector<std::string> rows;
    for (int i = 0; i < 5; ++i) rows.push_back(plain_row(t0 + i * kHourSeconds, i));
    // Blank out PM10 (3rd field, index 2) in row 3.
    auto fields = rows[3];
    std::string replaced;
    int comma = 0;
    for (char c : fields) {
      if (c == ',') ++comma;
      if (comma == 2 && c != ',') continue;  // drop the PM10 value
      replaced.push_back(c);
    }
    rows[3] = replaced;
    write_rows(p, rows);
    const LoadResult r = load_csv(p.string());
    CHECK(r.series.hours() == 5);
    CHECK(r.series.missing(3, 1));
    CHECK(r.series.at(3, 1) == r.series.at(2, 1));  // forward fill from the hour before
    CHECK(r.report.cells_imputed == 1);
  }

  TEST_CASE("a 3-hour timestamp gap synthesizes masked rows") {
    const TimePoint t0 = parse_timestamp("2014-01-01T00:00:00");
    // Reference series without the gap, for the diff.
    std::vector<std::string> rows;
    for (int i = 0; i < 10; ++i) rows.push_back(plain_row(t0 + i * kHourSeconds, 10.0 * i));
    const fs::path full_p = temp_dir() / "full.csv";
    write_rows(full_p, rows);
    const StationSeries full = load_csv(full_p.string()).series;

    std::vector<std::string> gappy = rows;
    gappy.erase(gappy.begin() + 4, gappy.begin() + 7);  // drop hours 4,5,6
    const fs::path gap_p = temp_dir() / "gappy.csv";
    write_rows(gap_p, gappy);
    const LoadResult r = load_csv(gap_p.string());

    CHECK(r.series.hours() == 10);
    CHECK(r.report.gap_hours_inserted == 3);
    for (std::size_t h = 0; h < 10; ++h) {
      for (std::size_t v = 0; v < kNumVariables; ++v) {
        const bool in_gap = h >= 4 && h <= 6;
        CHECK(r.series.missing(h, v) == in_gap);
        const double expect = in_gap ? full.at(3, v) : full.at(h, v);
        CHECK(r.series.at(h, v) == expect);
      }
    }
  }

  TEST_CASE("missing column is a schema error naming it") {
    const fs::path p = temp_dir() / "noso2.csv";
    write_rows(p, {plain_row(parse_timestamp("2014-01-01T00:00:00"), 1)},
               "timestamp,PM2.5,PM10,NO2,CO,O3,TEMP,PRES,DEWP,RAIN");
    CHECK_THROWS_WITH_AS(load_csv(p.string()), doctest::Contains("SO2"), DataError);
  }

  TEST_CASE("schema remapping finds renamed columns") {
    const fs::path p = temp_dir() / "renamed.csv";
    write_rows(p, {plain_row(parse_timestamp("2014-01-01T00:00:00"), 1),
                   plain_row(parse_timestamp("2014-01-01T01:00:00"), 2)},
               "time,pm25,PM10,SO2,NO2,CO,O3,TEMP,PRES,DEWP,RAIN");
    CsvSchema schema{{"timestamp", "time"}, {"PM2.5", "pm25"}};
    const LoadResult r = load_csv(p.string(), schema);
    CHECK(r.series.hours() == 2);
    CHECK(r.series.at(1, 0) == 2.0);
  }

  TEST_CASE(">20% missing in a variable warns but does not fail") {
    const fs::path p = temp_dir() / "lossy.csv";
    const TimePoint t0 = parse_timestamp("2014-01-01T00:00:00");
    std::vector<std::string> rows;
    for (int i = 0; i < 10; ++i) {
      std::string row = plain_row(t0 + i * kHourSeconds, i);
      if (i >= 1 && i <= 3) {
        // Blank the trailing RAIN field.
        row = row.substr(0, row.find_last_of(',') + 1);
      }
      rows.push_back(row);
    }
    write_rows(p, rows);
    const LoadResult r = load_csv(p.string());
    CHECK(r.report.warnings.size() == 1);
    CHECK(r.report.warnings[0].find("RAIN") != std::string::npos);
  }
}

TEST_SUITE("data.synthetic") {
  TEST_CASE("equal seeds give bitwise-identical series") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.hours = 200;
    const StationSeries a = generate_synthetic(cfg, 61);
    const StationSeries b = generate_synthetic(cfg, 61);
    CHECK(a.values == b.values);
    cfg.seed = 8;
    CHECK(generate_synthetic(cfg, 61).values != a.values);
  }

  TEST_CASE("station_shift=0 twins are identical regardless of id") {
    SynthConfig a{"S0", 150, 42, 0.0, 1.0};
    SynthConfig b{"S1", 150, 42, 0.0, 1.0};
    CHECK(generate_synthetic(a, 61).values == generate_synthetic(b, 61).values);
    SynthConfig c{"S1", 150, 42, 1.0, 1.0};
    CHECK(generate_synthetic(c, 61).values != generate_synthetic(a, 61).values);
  }

  TEST_CASE("noise_std=0 reproduces the published blend recurrence exactly") {
    SynthConfig cfg;
    cfg.hours = 120;
    cfg.seed = 3;
    cfg.noise_std = 0.0;
    cfg.station_shift = 0.5;
    const StationSeries s = generate_synthetic(cfg, 61);
    const Pm25Blend blend = pm25_blend_coefficients();
    constexpr double kPi = 3.14159265358979323846;
    for (std::size_t h = 1; h < s.hours(); ++h) {
      const double diurnal =
          blend.diurnal_amplitude *
          std::sin(2.0 * kPi *
                   (static_cast<double>(h) + blend.diurnal_phase +
                    cfg.station_shift * blend.shift_phase) /
                   24.0);
      const double expect = blend.intercept + blend.temp_coeff * s.at(h, 6) +
                            blend.dewp_coeff * s.at(h, 8) +
                            blend.lag_coeff * s.at(h - 1, kPm25Channel) + diurnal;
      CHECK(s.at(h, kPm25Channel) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("too few hours is a contract error") {
    SynthConfig cfg;
    cfg.hours = 10;
    CHECK_THROWS_AS(generate_synthetic(cfg, 61), ContractError);
  }

  TEST_CASE("csv round trip is lossless") {
    SynthConfig cfg;
    cfg.station_id = "S7";
    cfg.hours = 80;
    cfg.seed = 19;
    const StationSeries s = generate_synthetic(cfg, 61);
    const fs::path p = temp_dir() / "S7.csv";
    write_station_csv(s, p.string());
    const LoadResult r = load_csv(p.string());
    CHECK(r.series.station_id == "S7");
    CHECK(r.series.start_time == s.start_time);
    CHECK(r.series.values == s.values);
  }
}

TEST_SUITE("data.samples") {
  StationSeries tiny_series(std::size_t hours) {
    SynthConfig cfg;
    cfg.hours = hours;
    cfg.seed = 5;
    return generate_synthetic(cfg, hours);
  }

  TEST_CASE("series of exactly T+H hours yields one sample") {
    const StationSeries s = tiny_series(60);
    const auto samples = make_samples(s, 36, 24);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].origin_index == 35);
    CHECK(samples[0].window.size() == 36 * kNumVariables);
    CHECK(samples[0].target.size() == 24);
    CHECK(samples[0].target[0] == s.at(36, kPm25Channel));
    CHECK(samples[0].target[23] == s.at(59, kPm25Channel));
  }

  TEST_CASE("100 hours, T=36, H=24 yields 41 samples") {
    const auto samples = make_samples(tiny_series(100), 36, 24);
    CHECK(samples.size() == 41);  // 100 - 36 - 24 + 1
  }

  TEST_CASE("windows copy the raw series rows") {
    const StationSeries s = tiny_series(70);
    const auto samples = make_samples(s, 36, 24);
    const ForecastSample& last = samples.back();
    const std::size_t start = last.origin_index + 1 - 36;
    for (std::size_t t = 0; t < 36; ++t)
      for (std::size_t v = 0; v < kNumVariables; ++v)
        CHECK(last.window[t * kNumVariables + v] == s.at(start + t, v));
  }

  TEST_CASE("samples touching a masked cell are excluded (brute-force oracle)") {
    StationSeries s = tiny_series(100);
    s.mask[40 * kNumVariables + 3] = 1;  // one dirty cell at hour 40
    const auto samples = make_samples(s, 36, 24);

    std::size_t expected = 0;
    std::vector<std::size_t> surviving;
    for (std::size_t origin = 35; origin + 24 < 100; ++origin) {
      bool clean = true;
      for (std::size_t h = origin + 1 - 36; h <= origin + 24; ++h)
        if (h == 40) clean = false;
      if (clean) {
        ++expected;
        surviving.push_back(origin);
      }
    }
    CHECK(samples.size() == expected);
    for (std::size_t i = 0; i < samples.size(); ++i)
      CHECK(samples[i].origin_index == surviving[i]);
  }

  TEST_CASE("every emitted sample is mask-clean by re-intersection") {
    StationSeries s = tiny_series(300);
    Rng rng(13);
    for (int i = 0; i < 25; ++i) s.mask[rng.below(s.mask.size())] = 1;
    const auto samples = make_samples(s, 36, 24);
    for (const ForecastSample& sample : samples) {
      for (std::size_t h = sample.origin_index + 1 - 36; h <= sample.origin_index + 24; ++h)
        for (std::size_t v = 0; v < kNumVariables; ++v) CHECK_FALSE(s.missing(h, v));
    }
  }
}

TEST_SUITE("data.split") {
  TEST_CASE("paper-scale plan arithmetic: 26300 train hours, 8760 test hours") {
    const SplitPlan plan = SplitPlan::from_hours(26300, 8760);
    CHECK(plan.test.size() == 8760);
    CHECK(plan.train.size() + plan.val.size() == 26300);
    CHECK(plan.val.size() == 2630);  // last 10% of the training interval
    CHECK(plan.test.end == 35060);
  }

  TEST_CASE("few_shot_fraction=1.0 degenerates to the long-term split") {
    const StationSeries s = generate_synthetic({"S0", 400, 2, 0.0, 1.0}, 61);
    const auto samples = make_samples(s, 36, 24);
    SplitPlan plan = SplitPlan::chronological(400);
    plan.few_shot_fraction = 1.0;
    const SampleSplit lt = split(samples, plan, Protocol::long_term, 36, 24);
    const SampleSplit fs = split(samples, plan, Protocol::few_shot, 36, 24);
    CHECK(lt.train.size() == fs.train.size());
    CHECK(lt.val.size() == fs.val.size());
    CHECK(lt.test.size() == fs.test.size());
  }

  TEST_CASE("few-shot keeps the chronologically last tenth") {
    // 1000 train samples by construction: train interval of 1059 hours.
    const std::size_t train_hours = 1000 + 36 + 24 - 1;
    const StationSeries s = generate_synthetic({"S0", train_hours + 400, 2, 0.0, 1.0}, 61);
    const auto samples = make_samples(s, 36, 24);
    SplitPlan plan;
    plan.train = {0, train_hours};
    plan.val = {train_hours, train_hours + 200};
    plan.test = {train_hours + 200, train_hours + 400};
    plan.few_shot_fraction = 0.1;
    const SampleSplit lt = split(samples, plan, Protocol::long_term, 36, 24);
    REQUIRE(lt.train.size() == 1000);
    const SampleSplit fs = split(samples, plan, Protocol::few_shot, 36, 24);
    REQUIRE(fs.train.size() == 100);
    // The kept samples are exactly the last 100 of the long-term train list.
    for (std::size_t i = 0; i < 100; ++i)
      CHECK(fs.train[i].origin_index == lt.train[900 + i].origin_index);
  }

  TEST_CASE("zero_shot_source returns an empty test list") {
    const StationSeries s = generate_synthetic({"S0", 500, 2, 0.0, 1.0}, 61);
    const auto samples = make_samples(s, 36, 24);
    const SampleSplit zs =
        split(samples, SplitPlan::chronological(500), Protocol::zero_shot_source, 36, 24);
    CHECK(zs.test.empty());
    CHECK_FALSE(zs.train.empty());
  }

  TEST_CASE("no sample leaks across split boundaries") {
    const StationSeries s = generate_synthetic({"S0", 800, 11, 0.0, 1.0}, 61);
    const auto samples = make_samples(s, 36, 24);
    const SampleSplit sp = split(samples, SplitPlan::chronological(800), Protocol::long_term,
                                 36, 24);
    REQUIRE_FALSE(sp.train.empty());
    REQUIRE_FALSE(sp.val.empty());
    REQUIRE_FALSE(sp.test.empty());
    CHECK(sp.train.back().origin_time < sp.val.front().origin_time);
    CHECK(sp.val.back().origin_time < sp.test.front().origin_time);
  }

  TEST_CASE("overlapping plan intervals are rejected") {
    const StationSeries s = generate_synthetic({"S0", 300, 2, 0.0, 1.0}, 61);
    const auto samples = make_samples(s, 36, 24);
    SplitPlan plan;
    plan.train = {0, 150};
    plan.val = {100, 200};
    plan.test = {200, 300};
    CHECK_THROWS_AS(split(samples, plan, Protocol::long_term, 36, 24), ContractError);
  }
}

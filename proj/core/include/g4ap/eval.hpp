#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "g4ap/data.hpp"
#include "g4ap/model.hpp"
#include "g4ap/train.hpp"

namespace g4ap {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;  // predictions aggregated (n * horizon entries / horizon)
};

// Means over all n * horizon entries.
Metrics mse_mae(std::span<const double> pred, std::span<const double> target);

// One evaluation's result. per_horizon rows are metrics over the first h
// forecast steps (h <= the model horizon); `average` is the arithmetic mean
// of the rows. Normalized scale is primary; raw PM2.5 units are optional.
struct MetricsReport {
  std::string station;
  std::string protocol;
  std::string fingerprint;
  std::size_t sample_count = 0;
  std::map<std::size_t, Metrics> per_horizon;
  Metrics average;
  bool has_raw = false;
  std::map<std::size_t, Metrics> per_horizon_raw;
  Metrics average_raw;
};

struct EvalOptions {
  std::vector<std::size_t> horizons;  // empty -> just the model horizon
  bool raw_metrics = false;
};

MetricsReport evaluate_model(ModelBundle& bundle, const std::vector<ForecastSample>& samples,
                             const EvalOptions& options = {});

// Repeat-last-PM2.5 reference forecast on the same normalized scale; the
// competence floor any trained model must clear.
MetricsReport persistence_baseline(const std::vector<ForecastSample>& samples,
                                   std::size_t lookback, std::size_t horizon,
                                   const EvalOptions& options = {});

// Inference-only cross-station evaluation. Verifies against the bundle's
// audit that no evaluated sample's (station, origin) was ever used for
// training or validation; overlap is a hard error.
MetricsReport zero_shot_eval(ModelBundle& bundle, const std::vector<ForecastSample>& target_test,
                             const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Tables and sweeps
// ---------------------------------------------------------------------------

struct RenderedTable {
  std::string csv;
  std::string text;
};

// Rows per horizon plus an Avg row, per station; mirrors how the result
// tables aggregate (per-horizon means, then station average).
RenderedTable horizon_table(const std::map<std::string, MetricsReport>& by_station);

struct AblationCell {
  std::size_t rank = 0;
  MetricsReport metrics;
  std::size_t adapter_params = 0;
  double adapter_fraction = 0.0;  // adapter params / non-adapter params (rank-linear)
  std::size_t trainable_params = 0;
  double trainable_fraction = 0.0;
  std::vector<double> epoch_grad_norms;  // beta_r stability report
  double best_val_loss = 0.0;
};

struct AblationGrid {
  std::vector<std::size_t> ranks_requested;
  std::vector<AblationCell> cells;  // ordered by rank; skipped ranks absent
};

// For each rank: fresh build with the shared seed, full protocol run, test
// metrics and parameter accounting. Ranks beyond the widest adapter
// dimension are skipped with a warning.
AblationGrid rank_sweep(const ModelConfig& base_config, const std::vector<std::size_t>& ranks,
                        const SampleSplit& data, const TrainOptions& train_options,
                        const EvalOptions& eval_options = {});

// 64-bit FNV-1a over the canonical run description, hex-encoded.
std::string config_fingerprint(const ModelConfig& config, const SplitPlan& plan,
                               std::uint64_t seed, Protocol protocol);

}  // namespace g4ap

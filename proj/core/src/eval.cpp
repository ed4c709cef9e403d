#include "g4ap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "g4ap/errors.hpp"
#include "g4ap/log.hpp"
#include "g4ap/preprocess.hpp"
#include "g4ap/serialize.hpp"

namespace g4ap {

Metrics mse_mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw DimensionError("mse_mae: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
  if (pred.empty()) throw ContractError("mse_mae: empty input");
  Metrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  m.count = pred.size();
  return m;
}

namespace {

// Builds a report from per-sample prediction/target matrices [n x horizon].
MetricsReport report_from_matrices(const std::vector<double>& pred,
                                   const std::vector<double>& target,
                                   const std::vector<double>& pred_raw,
                                   const std::vector<double>& target_raw, std::size_t n,
                                   std::size_t horizon, std::vector<std::size_t> horizons,
                                   bool raw) {
  if (horizons.empty()) horizons.push_back(horizon);
  std::sort(horizons.begin(), horizons.end());
  MetricsReport report;
  report.sample_count = n;
  report.has_raw = raw;

  auto truncated = [&](const std::vector<double>& matrix, std::size_t h) {
    std::vector<double> out;
    out.reserve(n * h);
    for (std::size_t i = 0; i < n; ++i)
      out.insert(out.end(), matrix.begin() + static_cast<std::ptrdiff_t>(i * horizon),
                 matrix.begin() + static_cast<std::ptrdiff_t>(i * horizon + h));
    return out;
  };

  for (std::size_t h : horizons) {
    if (h == 0 || h > horizon)
      throw ContractError("evaluation horizon " + std::to_string(h) +
                          " exceeds the model horizon " + std::to_string(horizon));
    const auto p = truncated(pred, h);
    const auto t = truncated(target, h);
    report.per_horizon[h] = mse_mae(p, t);
    if (raw) {
      const auto pr = truncated(pred_raw, h);
      const auto tr = truncated(target_raw, h);
      report.per_horizon_raw[h] = mse_mae(pr, tr);
    }
  }
  auto averaged = [](const std::map<std::size_t, Metrics>& rows) {
    Metrics avg;
    for (const auto& [h, m] : rows) {
      avg.mse += m.mse;
      avg.mae += m.mae;
      avg.count += m.count;
    }
    const double k = static_cast<double>(rows.size());
    avg.mse /= k;
    avg.mae /= k;
    return avg;
  };
  report.average = averaged(report.per_horizon);
  if (raw) report.average_raw = averaged(report.per_horizon_raw);
  return report;
}

}  // namespace

MetricsReport evaluate_model(ModelBundle& bundle, const std::vector<ForecastSample>& samples,
                             const EvalOptions& options) {
  if (samples.empty()) throw ContractError("evaluate_model: empty test set");
  const std::size_t horizon = bundle.config().horizon;
  const std::size_t n = samples.size();
  std::vector<double> pred(n * horizon), target(n * horizon);
  std::vector<double> pred_raw, target_raw;
  if (options.raw_metrics) {
    pred_raw.resize(n * horizon);
    target_raw.resize(n * horizon);
  }
  for (std::size_t i = 0; i < n; ++i) {
    BatchOutput out = bundle.forward_batch({&samples[i]}, false);
    const auto p = out.predictions.data();
    const auto t = out.targets.data();
    std::copy(p.begin(), p.end(), pred.begin() + static_cast<std::ptrdiff_t>(i * horizon));
    std::copy(t.begin(), t.end(), target.begin() + static_cast<std::ptrdiff_t>(i * horizon));
    if (options.raw_metrics) {
      const std::vector<double> praw =
          denormalize_pm25(std::vector<double>(p.begin(), p.end()), out.stats.front());
      std::copy(praw.begin(), praw.end(),
                pred_raw.begin() + static_cast<std::ptrdiff_t>(i * horizon));
      std::copy(samples[i].target.begin(), samples[i].target.end(),
                target_raw.begin() + static_cast<std::ptrdiff_t>(i * horizon));
    }
  }
  MetricsReport report = report_from_matrices(pred, target, pred_raw, target_raw, n, horizon,
                                              options.horizons, options.raw_metrics);
  report.station = samples.front().station_id;
  return report;
}

MetricsReport persistence_baseline(const std::vector<ForecastSample>& samples,
                                   std::size_t lookback, std::size_t horizon,
                                   const EvalOptions& options) {
  if (samples.empty()) throw ContractError("persistence_baseline: empty sample list");
  const std::size_t n = samples.size();
  std::vector<double> pred(n * horizon), target(n * horizon);
  std::vector<double> pred_raw, target_raw;
  if (options.raw_metrics) {
    pred_raw.resize(n * horizon);
    target_raw.resize(n * horizon);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const ForecastSample& s = samples[i];
    const NormalizedWindow norm = normalize_window(s.window, lookback, kNumVariables);
    const double last_norm = norm.at(lookback - 1, kPm25Channel);
    const double last_raw = s.window[(lookback - 1) * kNumVariables + kPm25Channel];
    const std::vector<double> t_norm = normalize_pm25(s.target, norm);
    for (std::size_t k = 0; k < horizon; ++k) {
      pred[i * horizon + k] = last_norm;
      target[i * horizon + k] = t_norm[k];
      if (options.raw_metrics) {
        pred_raw[i * horizon + k] = last_raw;
        target_raw[i * horizon + k] = s.target[k];
      }
    }
  }
  MetricsReport report = report_from_matrices(pred, target, pred_raw, target_raw, n, horizon,
                                              options.horizons, options.raw_metrics);
  report.station = samples.front().station_id;
  report.protocol = "persistence";
  return report;
}

MetricsReport zero_shot_eval(ModelBundle& bundle, const std::vector<ForecastSample>& target_test,
                             const EvalOptions& options) {
  if (target_test.empty()) throw ContractError("zero_shot_eval: empty target test set");
  for (const ForecastSample& s : target_test) {
    for (const AuditInterval& used : bundle.audit()) {
      if (used.station == s.station_id && s.origin_time >= used.lo && s.origin_time <= used.hi)
        throw ContractError(
            "provenance audit failure: sample (" + s.station_id + ", " +
            format_timestamp(s.origin_time) + ") overlaps the training/validation record [" +
            format_timestamp(used.lo) + ", " + format_timestamp(used.hi) + "]");
    }
  }
  return evaluate_model(bundle, target_test, options);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace {

std::string fmt_pair(const Metrics& m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f/%.3f", m.mse, m.mae);
  return buf;
}

}  // namespace

RenderedTable horizon_table(const std::map<std::string, MetricsReport>& by_station) {
  if (by_station.empty()) throw ContractError("horizon_table: no reports");
  std::ostringstream csv;
  std::ostringstream text;
  csv << "station,horizon,mse,mae\n";
  text << "station   horizon   MSE/MAE\n";
  char buf[128];
  Metrics all_avg;
  for (const auto& [station, report] : by_station) {
    for (const auto& [h, m] : report.per_horizon) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g\n", station.c_str(), h, m.mse, m.mae);
      csv << buf;
      std::snprintf(buf, sizeof(buf), "%-9s %7zu   %s\n", station.c_str(), h,
                    fmt_pair(m).c_str());
      text << buf;
    }
    std::snprintf(buf, sizeof(buf), "%s,Avg,%.17g,%.17g\n", station.c_str(), report.average.mse,
                  report.average.mae);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "%-9s     Avg   %s\n", station.c_str(),
                  fmt_pair(report.average).c_str());
    text << buf;
    all_avg.mse += report.average.mse;
    all_avg.mae += report.average.mae;
  }
  const double k = static_cast<double>(by_station.size());
  all_avg.mse /= k;
  all_avg.mae /= k;
  std::snprintf(buf, sizeof(buf), "All,Avg,%.17g,%.17g\n", all_avg.mse, all_avg.mae);
  csv << buf;
  std::snprintf(buf, sizeof(buf), "%-9s     Avg   %s\n", "All", fmt_pair(all_avg).c_str());
  text << buf;
  return RenderedTable{csv.str(), text.str()};
}

// ---------------------------------------------------------------------------
// Rank sweep
// ---------------------------------------------------------------------------

AblationGrid rank_sweep(const ModelConfig& base_config, const std::vector<std::size_t>& ranks,
                        const SampleSplit& data, const TrainOptions& train_options,
                        const EvalOptions& eval_options) {
  if (ranks.empty()) throw ContractError("rank_sweep: no ranks given");
  AblationGrid grid;
  grid.ranks_requested = ranks;
  std::vector<std::size_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());

  // Widest adapter dimension: both adapters project into the hidden width.
  const std::size_t max_rank = std::max(base_config.hidden, base_config.horizon);
  for (std::size_t r : sorted) {
    if (r == 0 || r > max_rank) {
      log_warn("rank sweep: skipping rank " + std::to_string(r) +
               " (exceeds adapter dimensions, max " + std::to_string(max_rank) + ")");
      continue;
    }
    ModelConfig config = base_config;
    config.rank = r;
    ModelBundle bundle = ModelBundle::build(config);
    TrainResult trained = train_protocol(bundle, data, train_options);

    AblationCell cell;
    cell.rank = r;
    cell.metrics = evaluate_model(bundle, data.test, eval_options);
    cell.metrics.protocol = protocol_name(train_options.protocol);
    cell.adapter_params = bundle.adapter_param_count();
    cell.adapter_fraction = static_cast<double>(cell.adapter_params) /
                            static_cast<double>(bundle.base_param_count());
    cell.trainable_params = bundle.trainable_param_count();
    cell.trainable_fraction = bundle.trainable_fraction();
    cell.best_val_loss = trained.best_val_loss;
    for (const EpochStats& e : trained.history) cell.epoch_grad_norms.push_back(e.mean_grad_norm);
    grid.cells.push_back(std::move(cell));
  }
  return grid;
}

std::string config_fingerprint(const ModelConfig& config, const SplitPlan& plan,
                               std::uint64_t seed, Protocol protocol) {
  nlohmann::json j{{"model", model_config_to_json(config)},
                   {"split",
                    {{"train", {plan.train.begin, plan.train.end}},
                     {"val", {plan.val.begin, plan.val.end}},
                     {"test", {plan.test.begin, plan.test.end}},
                     {"few_shot_fraction", plan.few_shot_fraction}}},
                   {"seed", seed},
                   {"protocol", protocol_name(protocol)}};
  const std::uint64_t h = fnv1a(j.dump());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace g4ap

#include "g4ap/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "g4ap/errors.hpp"
#include "g4ap/log.hpp"

namespace g4ap {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse_loss: prediction " + pred.shape_str() + " vs target " +
                         target.shape_str());
  const Tensor diff = sub(pred, target);
  const std::size_t batch = pred.shape().size() == 2 ? pred.shape()[0] : 1;
  const std::size_t horizon = pred.shape().size() == 2 ? pred.shape()[1] : pred.shape()[0];
  return scale(sum_all(mul(diff, diff)), 1.0 / (static_cast<double>(batch) *
                                                static_cast<double>(horizon)));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<NamedParam>& params, AdamParams hp)
    : params_(&params), hp_(hp) {
  slots_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    slots_[i].m.assign(params[i].tensor.numel(), 0.0);
    slots_[i].v.assign(params[i].tensor.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(hp_.beta1, t);
  const double bc2 = 1.0 - std::pow(hp_.beta2, t);

  double sq_norm = 0.0;
  for (NamedParam& p : *params_) {
    if (!p.tensor.has_grad()) continue;
    if (!p.trainable) {
      for (double g : p.tensor.grad()) {
        if (g != 0.0)
          throw ContractError("gradient on frozen parameter '" + p.name +
                              "': the trainable partition is broken");
      }
      continue;
    }
    for (double g : p.tensor.grad()) sq_norm += g * g;
  }
  last_grad_norm_ = std::sqrt(sq_norm);

  double clip_factor = 1.0;
  if (hp_.grad_clip > 0.0 && last_grad_norm_ > hp_.grad_clip)
    clip_factor = hp_.grad_clip / last_grad_norm_;

  for (std::size_t i = 0; i < params_->size(); ++i) {
    NamedParam& p = (*params_)[i];
    if (!p.trainable || !p.tensor.has_grad()) continue;
    Slot& slot = slots_[i];
    auto grad = p.tensor.grad();
    auto values = p.tensor.mutable_data();
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double g = grad[k] * clip_factor;
      slot.m[k] = hp_.beta1 * slot.m[k] + (1.0 - hp_.beta1) * g;
      slot.v[k] = hp_.beta2 * slot.v[k] + (1.0 - hp_.beta2) * g * g;
      const double m_hat = slot.m[k] / bc1;
      const double v_hat = slot.v[k] / bc2;
      values[k] -= hp_.lr * m_hat / (std::sqrt(v_hat) + hp_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (NamedParam& p : *params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

bool EarlyStopping::observe(double val_loss) {
  ++epoch_;
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    bad_streak_ = 0;
    last_improved_ = true;
    return false;
  }
  last_improved_ = false;
  ++bad_streak_;
  return bad_streak_ >= patience_;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

void record_audit(ModelBundle& bundle, const std::vector<ForecastSample>& samples) {
  if (samples.empty()) return;
  AuditInterval interval;
  interval.station = samples.front().station_id;
  interval.lo = samples.front().origin_time;
  interval.hi = samples.front().origin_time;
  interval.count = 0;
  for (const ForecastSample& s : samples) {
    if (s.station_id != interval.station) {
      bundle.audit().push_back(interval);
      interval = AuditInterval{s.station_id, s.origin_time, s.origin_time, 0};
    }
    interval.lo = std::min(interval.lo, s.origin_time);
    interval.hi = std::max(interval.hi, s.origin_time);
    ++interval.count;
  }
  bundle.audit().push_back(interval);
}

}  // namespace

double evaluate_loss(ModelBundle& bundle, const std::vector<ForecastSample>& samples) {
  if (samples.empty()) throw ContractError("evaluate_loss: empty sample list");
  const double horizon = static_cast<double>(bundle.config().horizon);
  double total = 0.0;
  for (const ForecastSample& s : samples) {
    BatchOutput out = bundle.forward_batch({&s}, false);
    const auto pred = out.predictions.data();
    const auto target = out.targets.data();
    double acc = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double d = pred[k] - target[k];
      acc += d * d;
    }
    total += acc / horizon;
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train_protocol(ModelBundle& bundle, const SampleSplit& data,
                           const TrainOptions& options) {
  if (data.train.empty()) throw ContractError("train_protocol: empty train set");
  if (options.batch_size == 0) throw ContractError("train_protocol: batch_size must be >= 1");

  record_audit(bundle, data.train);
  record_audit(bundle, data.val);

  Rng run_rng(options.seed);
  Rng dropout_rng = run_rng.fork("dropout");

  AdamParams adam_hp;
  adam_hp.lr = options.lr;
  adam_hp.grad_clip = options.grad_clip;
  AdamOptimizer adam(bundle.params(), adam_hp);

  EarlyStopping stopper(options.patience);
  TrainResult result;
  auto best_snapshot = bundle.snapshot_trainable();
  const std::size_t num_batches = data.train.size() / options.batch_size;
  if (num_batches == 0)
    log_warn("train set (" + std::to_string(data.train.size()) +
             " samples) is smaller than one batch; no optimizer steps will run");

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  bool step_cap_hit = false;
  for (std::size_t epoch = 1; epoch <= options.epochs && !step_cap_hit; ++epoch) {
    Rng epoch_rng = run_rng.fork("shuffle", epoch);
    epoch_rng.shuffle(order);

    double loss_sum = 0.0;
    double grad_norm_sum = 0.0;
    std::size_t steps_this_epoch = 0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      if (options.max_total_steps > 0 && result.steps_run >= options.max_total_steps) {
        step_cap_hit = true;
        break;
      }
      std::vector<const ForecastSample*> batch;
      batch.reserve(options.batch_size);
      for (std::size_t i = 0; i < options.batch_size; ++i)
        batch.push_back(&data.train[order[b * options.batch_size + i]]);

      ComputeTape tape;
      double loss_value = 0.0;
      {
        TapeScope scope(tape);
        BatchOutput out = bundle.forward_batch(batch, true, &dropout_rng);
        Tensor loss = mse_loss(out.predictions, out.targets);
        loss_value = loss.value();
        if (std::isnan(loss_value))
          throw NumericError("NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
        tape.backward(loss);
      }
      adam.step();
      adam.zero_grad();
      tape.clear();

      loss_sum += loss_value;
      grad_norm_sum += adam.last_grad_norm();
      ++steps_this_epoch;
      ++result.steps_run;
    }

    EpochStats stats;
    stats.train_loss = steps_this_epoch > 0 ? loss_sum / static_cast<double>(steps_this_epoch)
                                            : 0.0;
    stats.mean_grad_norm =
        steps_this_epoch > 0 ? grad_norm_sum / static_cast<double>(steps_this_epoch) : 0.0;
    stats.val_loss = data.val.empty() ? stats.train_loss : evaluate_loss(bundle, data.val);
    result.history.push_back(stats);
    log_info("epoch " + std::to_string(epoch) + ": train " + std::to_string(stats.train_loss) +
             ", val " + std::to_string(stats.val_loss));

    const bool stop = stopper.observe(stats.val_loss);
    if (stopper.last_improved()) best_snapshot = bundle.snapshot_trainable();
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }

  bundle.restore_trainable(best_snapshot);
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  return result;
}

}  // namespace g4ap

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "g4ap/data.hpp"
#include "g4ap/model.hpp"
#include "g4ap/tensor.hpp"

namespace g4ap {

// Direct multi-horizon objective: mean over the batch of
// (1/horizon) * sum_k (y_k - yhat_k)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global max-norm; 0 disables
};

// Standard Adam with bias correction over a named parameter list. Frozen
// parameters are checked every step: a gradient on one is a partition bug
// and raises a contract error.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam>& params, AdamParams hp);

  void step();
  void zero_grad();
  std::size_t step_count() const { return step_count_; }
  double last_grad_norm() const { return last_grad_norm_; }
  const AdamParams& hyperparams() const { return hp_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<NamedParam>* params_;
  AdamParams hp_;
  std::vector<Slot> slots_;  // parallel to params_
  std::size_t step_count_ = 0;
  double last_grad_norm_ = 0.0;
};

// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool observe(double val_loss);
  bool last_improved() const { return last_improved_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_loss_; }
  std::size_t epochs_seen() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_streak_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool last_improved_ = false;
};

struct TrainOptions {
  Protocol protocol = Protocol::long_term;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;
  std::size_t max_total_steps = 0;  // 0 = unlimited; debugging/step-capped runs
  std::string source_station;
  std::string target_station;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double mean_grad_norm = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t steps_run = 0;
  bool stopped_early = false;
};

// Inference-mode mean objective over a sample list.
double evaluate_loss(ModelBundle& bundle, const std::vector<ForecastSample>& samples);

// Minibatch training with per-epoch seeded shuffling, epoch-end validation,
// early stopping, and best-validation weight restoration. Mutates the bundle
// (weights and provenance audit).
TrainResult train_protocol(ModelBundle& bundle, const SampleSplit& data,
                           const TrainOptions& options);

}  // namespace g4ap

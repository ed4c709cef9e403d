#include "g4ap/pretrain.hpp"

#include <cmath>
#include <numeric>

#include "g4ap/errors.hpp"
#include "g4ap/log.hpp"
#include "g4ap/preprocess.hpp"
#include "g4ap/train.hpp"

namespace g4ap {

// Grants pretraining access to the raw transformer stack and the input-side
// modules it borrows while the backbone is unfrozen.
struct BackboneAccess {
  static Tensor forward(ModelBundle& m, Tensor h, bool train_mode, Rng* rng) {
    return m.backbone_forward(h, train_mode, rng);
  }
  static Tensor proj_w(ModelBundle& m) { return m.proj_w_; }
  static Tensor proj_b(ModelBundle& m) { return m.proj_b_; }
  static Tensor pos_base(ModelBundle& m) { return m.pos_base_; }
};

PretrainResult pretrain_backbone(const PretrainConfig& config, const ModelConfig& model_config,
                                 const std::string& out_checkpoint) {
  const std::size_t min_hours = model_config.lookback + model_config.horizon + 1;
  if (config.corpus_hours < min_hours)
    throw ContractError("pretrain_backbone: corpus_hours must be at least " +
                        std::to_string(min_hours) + " (lookback + horizon + 1)");

  ModelConfig build_config = model_config;
  build_config.backbone_checkpoint.clear();  // always start from the seeded init
  build_config.causal_mask = true;           // next-patch regression needs causality
  ModelBundle bundle = ModelBundle::build(build_config);

  // The backbone trains during this phase only.
  for (NamedParam& p : bundle.params()) {
    if (p.name.rfind("backbone.", 0) == 0) {
      p.trainable = true;
      p.tensor.set_requires_grad(true);
    }
  }

  const std::size_t lookback = model_config.lookback;
  const std::size_t flat = model_config.patch_len * model_config.num_vars;
  const std::size_t n_tokens = build_config.num_tokens();

  SynthConfig corpus;
  corpus.station_id = "pretrain";
  corpus.hours = config.corpus_hours;
  corpus.seed = config.seed;
  corpus.noise_std = config.noise_std;
  const StationSeries series = generate_synthetic(corpus, min_hours);

  // Non-overlapping windows keep the corpus decorrelated.
  std::vector<std::vector<double>> windows;
  for (std::size_t start = 0; start + lookback <= series.hours(); start += lookback) {
    std::vector<double> w(lookback * kNumVariables);
    std::copy(series.values.begin() + static_cast<std::ptrdiff_t>(start * kNumVariables),
              series.values.begin() +
                  static_cast<std::ptrdiff_t>((start + lookback) * kNumVariables),
              w.begin());
    windows.push_back(std::move(w));
  }

  Rng rng(config.seed);
  Rng dropout_rng = rng.fork("pretrain.dropout");
  Rng readout_rng = rng.fork("pretrain.readout");

  // Throwaway readout; the projection and positional base are borrowed from
  // the bundle and re-initialized downstream anyway.
  Tensor readout_w =
      Tensor::gaussian({model_config.hidden, flat}, 0.02, readout_rng, model_config.precision);
  readout_w.set_requires_grad(true);
  Tensor readout_b = Tensor::zeros({flat}, model_config.precision);
  readout_b.set_requires_grad(true);
  std::vector<NamedParam> train_params = bundle.params();
  train_params.push_back(NamedParam{"pretrain.readout.W", readout_w, true});
  train_params.push_back(NamedParam{"pretrain.readout.b", readout_b, true});

  AdamParams hp;
  hp.lr = config.lr;
  AdamOptimizer adam(train_params, hp);

  PretrainResult result;
  result.windows = windows.size();
  if (n_tokens < 2)
    log_warn("pretrain: a single token per window leaves no next-patch target; "
             "backbone is saved at initialization");

  Tensor proj_w = BackboneAccess::proj_w(bundle);
  Tensor proj_b = BackboneAccess::proj_b(bundle);
  Tensor pos_base = BackboneAccess::pos_base(bundle);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs && n_tokens >= 2; ++epoch) {
    Rng epoch_rng = rng.fork("pretrain.shuffle", epoch);
    epoch_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b * config.batch_size < windows.size(); ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(windows.size(), begin + config.batch_size);
      ComputeTape tape;
      double loss_value = 0.0;
      {
        TapeScope scope(tape);
        std::vector<Tensor> losses;
        for (std::size_t i = begin; i < end; ++i) {
          const auto& w = windows[order[i]];
          const NormalizedWindow norm = normalize_window(w, lookback, kNumVariables);
          const PatchSequence patches =
              patchify(norm, model_config.patch_len, model_config.stride);
          Tensor raw = Tensor::from_values({n_tokens, flat}, patches.tokens_raw,
                                           model_config.precision);
          Tensor tokens = matmul(raw, proj_w);
          if (proj_b.defined()) tokens = add(tokens, proj_b);
          Tensor hl = BackboneAccess::forward(bundle, add(tokens, pos_base), true, &dropout_rng);
          Tensor pred = add(matmul(slice_rows(hl, 0, n_tokens - 1), readout_w), readout_b);
          Tensor target = slice_rows(raw, 1, n_tokens - 1);
          losses.push_back(mse_loss(pred, target));
        }
        Tensor batch_loss = scale(sum_all(stack_rows(losses)),
                                  1.0 / static_cast<double>(losses.size()));
        loss_value = batch_loss.value();
        if (std::isnan(loss_value))
          throw NumericError("pretrain: NaN loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
        tape.backward(batch_loss);
      }
      adam.step();
      adam.zero_grad();
      loss_sum += loss_value;
      ++steps;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(1, steps)));
    log_info("pretrain epoch " + std::to_string(epoch) + ": loss " +
             std::to_string(result.epoch_losses.back()));
  }

  save_backbone_checkpoint(bundle, out_checkpoint, config.seed);
  return result;
}

void check_pretrain_provenance(const ModelBundle& bundle, std::uint64_t data_seed) {
  if (bundle.pretrain_corpus_seed() && *bundle.pretrain_corpus_seed() == data_seed)
    throw ContractError("pretraining corpus seed " + std::to_string(data_seed) +
                        " collides with the downstream data seed; use disjoint seeds");
}

}  // namespace g4ap

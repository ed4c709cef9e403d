#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "g4ap/data.hpp"
#include "g4ap/lora.hpp"
#include "g4ap/preprocess.hpp"
#include "g4ap/tensor.hpp"

namespace g4ap {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'G', '4', 'A', 'P'};

struct ModelConfig {
  std::size_t hidden = 64;     // D; paper-scale reference: 768
  std::size_t layers = 2;      // L; paper-scale reference: 6
  std::size_t heads = 4;
  std::size_t ffn = 128;       // feed-forward width; paper-scale reference: 768
  double dropout = 0.2;
  std::size_t lookback = 36;   // T
  std::size_t patch_len = 24;  // P
  std::size_t stride = 4;      // s; 4 -> 4 tokens, 12 -> 2 tokens
  std::size_t num_vars = 10;   // d
  std::size_t horizon = 24;    // forecast steps per forward pass
  std::size_t rank = 32;
  double alpha = 32.0;
  double init_std = 0.02;
  bool causal_mask = true;
  std::uint64_t seed = 0;
  GeluKind gelu_kind = GeluKind::exact_erf;
  bool train_pos_base = true;
  bool proj_bias = true;
  DType precision = DType::f64;
  std::string backbone_checkpoint;  // load-and-freeze when non-empty

  std::size_t num_tokens() const;  // floor((T - P) / s) + 1
  std::size_t head_dim() const { return hidden / heads; }
  void validate() const;

  static ModelConfig desk_scale() { return ModelConfig{}; }
  static ModelConfig paper_scale();

  bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool trainable = false;
};

// Used-sample record kept for the zero-shot provenance audit. Origins of
// chronological splits are contiguous, so intervals are exact.
struct AuditInterval {
  std::string station;
  TimePoint lo = 0;
  TimePoint hi = 0;  // inclusive
  std::size_t count = 0;
};

struct TransformerBlock {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_w, qkv_b;  // [D x 3D], [3D]
  Tensor att_w, att_b;  // [D x D], [D]
  Tensor ln2_gamma, ln2_beta;
  Tensor fc_w, fc_b;    // [D x ffn], [ffn]
  Tensor out_w, out_b;  // [ffn x D], [D]
};

struct ForwardOutput {
  Tensor prediction;  // [horizon], normalized scale
  NormalizedWindow stats;
};

struct BatchOutput {
  Tensor predictions;  // [B x horizon], normalized scale
  Tensor targets;      // [B x horizon], normalized with each window's stats
  std::vector<NormalizedWindow> stats;
};

// Assembled pipeline with an explicit frozen/trainable partition: trainable
// projection + positional base, adapters on the positional table and the
// head's output map, and a frozen transformer stack between them.
class ModelBundle {
 public:
  static ModelBundle build(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Single-window pass; the full pipeline of normalize -> patchify ->
  // project -> positions -> backbone -> pool -> head.
  ForwardOutput forward(const std::vector<double>& window, bool train_mode,
                        Rng* dropout_rng = nullptr, bool use_adapters = true);

  // Raw-unit forecast: forward() followed by PM2.5 de-normalization with the
  // window's own statistics.
  std::vector<double> predict_raw(const std::vector<double>& window);

  // One tape-friendly pass over a minibatch; adapter-effective weights are
  // materialized once and shared by all windows in the batch.
  BatchOutput forward_batch(const std::vector<const ForecastSample*>& batch, bool train_mode,
                            Rng* dropout_rng = nullptr, bool use_adapters = true);

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<std::string> trainable_names() const;
  std::vector<std::string> frozen_names() const;

  std::size_t total_param_count() const;
  std::size_t trainable_param_count() const;
  std::size_t adapter_param_count() const;
  // Everything that is not an adapter factor; the fixed denominator for the
  // rank-ablation's parameter-fraction axis.
  std::size_t base_param_count() const;
  double trainable_fraction() const;

  LoraAdapter& pos_adapter() { return pos_adapter_; }
  LoraAdapter& head_adapter() { return head_adapter_; }

  std::vector<AuditInterval>& audit() { return audit_; }
  const std::vector<AuditInterval>& audit() const { return audit_; }
  std::optional<std::uint64_t> pretrain_corpus_seed() const { return pretrain_corpus_seed_; }
  void set_pretrain_corpus_seed(std::uint64_t seed) { pretrain_corpus_seed_ = seed; }

  // Value snapshots of the trainable partition (early stopping).
  std::map<std::string, std::vector<double>> snapshot_trainable() const;
  void restore_trainable(const std::map<std::string, std::vector<double>>& snapshot);

  void zero_all_grads();

 private:
  ModelBundle() = default;

  Tensor backbone_forward(Tensor h, bool train_mode, Rng* dropout_rng);
  friend struct BackboneAccess;
  friend ModelBundle load_checkpoint(const std::string& path);

  ModelConfig config_;
  Tensor proj_w_, proj_b_;
  Tensor pos_base_;
  LoraAdapter pos_adapter_;
  std::vector<TransformerBlock> blocks_;
  Tensor lnf_gamma_, lnf_beta_;
  Tensor head_fc_w_, head_fc_b_;
  Tensor head_out_w_, head_out_b_;
  LoraAdapter head_adapter_;
  Tensor causal_mask_;  // [N x N] additive mask, not a parameter

  std::vector<NamedParam> params_;
  std::vector<AuditInterval> audit_;
  std::optional<std::uint64_t> pretrain_corpus_seed_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: "G4AP" magic, version, config block, tensor records.
// ---------------------------------------------------------------------------

void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Backbone-only container used by local pretraining; consumed by
// ModelBundle::build through config.backbone_checkpoint.
void save_backbone_checkpoint(const ModelBundle& bundle, const std::string& path,
                              std::uint64_t corpus_seed);

// Overwrites bundle's backbone.* tensors from a backbone-only checkpoint
// after validating that the architectures agree.
void load_backbone_into(ModelBundle& bundle, const std::string& path);

}  // namespace g4ap

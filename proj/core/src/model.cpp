#include "g4ap/model.hpp"

#include <algorithm>
#include <cmath>

#include "g4ap/errors.hpp"
#include "g4ap/log.hpp"

namespace g4ap {

namespace {

constexpr double kMaskValue = -1e30;

// Re-throw shape errors with the pipeline stage prepended.
template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const DimensionError& e) {
    throw DimensionError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

std::size_t ModelConfig::num_tokens() const {
  return patch_count(lookback, patch_len, stride);
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.hidden = 768;
  c.layers = 6;
  c.heads = 4;
  c.ffn = 768;
  return c;
}

void ModelConfig::validate() const {
  if (hidden == 0 || layers == 0 || heads == 0 || ffn == 0)
    throw ContractError("ModelConfig: dimensions must be positive");
  if (hidden % heads != 0)
    throw ContractError("ModelConfig: hidden width " + std::to_string(hidden) +
                        " is not divisible by " + std::to_string(heads) + " heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ContractError("ModelConfig: dropout must be in [0, 1)");
  if (lookback < 2 || num_vars == 0 || horizon == 0)
    throw ContractError("ModelConfig: lookback/num_vars/horizon must be positive");
  if (rank == 0) throw ContractError("ModelConfig: rank must be >= 1");
  if (alpha <= 0.0 || init_std <= 0.0)
    throw ContractError("ModelConfig: alpha and init_std must be > 0");
  patch_count(lookback, patch_len, stride);  // throws on bad P/s
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

namespace {

Tensor gaussian_param(std::vector<std::size_t> shape, double stddev, Rng& rng, DType dtype,
                      bool trainable) {
  Tensor t = Tensor::gaussian(std::move(shape), stddev, rng, dtype);
  t.set_requires_grad(trainable);
  return t;
}

Tensor const_param(std::vector<std::size_t> shape, double value, DType dtype, bool trainable) {
  Tensor t = Tensor::full(std::move(shape), value, dtype);
  t.set_requires_grad(trainable);
  return t;
}

}  // namespace

ModelBundle ModelBundle::build(const ModelConfig& config) {
  config.validate();
  ModelBundle m;
  m.config_ = config;

  const std::size_t d_model = config.hidden;
  const std::size_t flat = config.patch_len * config.num_vars;
  const std::size_t n_tokens = config.num_tokens();
  const DType dt = config.precision;
  constexpr double kWeightStd = 0.02;

  Rng master(config.seed);
  Rng weights_rng = master.fork("weights");
  Rng pos_rng = master.fork("lora.pos");
  Rng head_rng = master.fork("lora.head");

  auto reg = [&m](const std::string& name, Tensor t) {
    m.params_.push_back(NamedParam{name, t, t.requires_grad()});
    return t;
  };

  m.proj_w_ = reg("proj.W", gaussian_param({flat, d_model}, kWeightStd, weights_rng, dt, true));
  if (config.proj_bias)
    m.proj_b_ = reg("proj.b", const_param({d_model}, 0.0, dt, true));

  m.pos_base_ = reg("pos.base", gaussian_param({n_tokens, d_model}, kWeightStd, weights_rng, dt,
                                               config.train_pos_base));
  m.pos_adapter_ = LoraAdapter("pos.base", n_tokens, d_model, config.rank, config.alpha,
                               config.init_std, pos_rng, dt);
  reg("pos.lora.X", m.pos_adapter_.x());
  reg("pos.lora.Y", m.pos_adapter_.y());

  m.blocks_.resize(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    TransformerBlock& b = m.blocks_[l];
    const std::string p = "backbone.block" + std::to_string(l) + ".";
    b.ln1_gamma = reg(p + "ln1.gamma", const_param({d_model}, 1.0, dt, false));
    b.ln1_beta = reg(p + "ln1.beta", const_param({d_model}, 0.0, dt, false));
    b.qkv_w = reg(p + "attn.qkv.W",
                  gaussian_param({d_model, 3 * d_model}, kWeightStd, weights_rng, dt, false));
    b.qkv_b = reg(p + "attn.qkv.b", const_param({3 * d_model}, 0.0, dt, false));
    b.att_w = reg(p + "attn.out.W",
                  gaussian_param({d_model, d_model}, kWeightStd, weights_rng, dt, false));
    b.att_b = reg(p + "attn.out.b", const_param({d_model}, 0.0, dt, false));
    b.ln2_gamma = reg(p + "ln2.gamma", const_param({d_model}, 1.0, dt, false));
    b.ln2_beta = reg(p + "ln2.beta", const_param({d_model}, 0.0, dt, false));
    b.fc_w = reg(p + "mlp.fc.W",
                 gaussian_param({d_model, config.ffn}, kWeightStd, weights_rng, dt, false));
    b.fc_b = reg(p + "mlp.fc.b", const_param({config.ffn}, 0.0, dt, false));
    b.out_w = reg(p + "mlp.out.W",
                  gaussian_param({config.ffn, d_model}, kWeightStd, weights_rng, dt, false));
    b.out_b = reg(p + "mlp.out.b", const_param({d_model}, 0.0, dt, false));
  }
  m.lnf_gamma_ = reg("backbone.ln_f.gamma", const_param({d_model}, 1.0, dt, false));
  m.lnf_beta_ = reg("backbone.ln_f.beta", const_param({d_model}, 0.0, dt, false));

  m.head_fc_w_ = reg("head.fc.W",
                     gaussian_param({d_model, d_model}, kWeightStd, weights_rng, dt, true));
  m.head_fc_b_ = reg("head.fc.b", const_param({d_model}, 0.0, dt, true));
  m.head_out_w_ = reg("head.out.W",
                      gaussian_param({d_model, config.horizon}, kWeightStd, weights_rng, dt, true));
  m.head_out_b_ = reg("head.out.b", const_param({config.horizon}, 0.0, dt, true));
  m.head_adapter_ = LoraAdapter("head.out.W", d_model, config.horizon, config.rank, config.alpha,
                                config.init_std, head_rng, dt);
  reg("head.out.lora.X", m.head_adapter_.x());
  reg("head.out.lora.Y", m.head_adapter_.y());

  if (config.causal_mask) {
    std::vector<double> mask(n_tokens * n_tokens, 0.0);
    for (std::size_t i = 0; i < n_tokens; ++i)
      for (std::size_t j = i + 1; j < n_tokens; ++j) mask[i * n_tokens + j] = kMaskValue;
    m.causal_mask_ = Tensor::from_values({n_tokens, n_tokens}, std::move(mask), dt);
  }

  if (!config.backbone_checkpoint.empty()) load_backbone_into(m, config.backbone_checkpoint);
  return m;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

Tensor ModelBundle::backbone_forward(Tensor h, bool train_mode, Rng* dropout_rng) {
  const std::size_t d_model = config_.hidden;
  const std::size_t n_heads = config_.heads;
  const std::size_t d_head = config_.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  const bool drop = train_mode && config_.dropout > 0.0;
  if (drop && dropout_rng == nullptr)
    throw ContractError("backbone_forward: train-mode dropout requires an rng");

  for (TransformerBlock& blk : blocks_) {
    Tensor normed = layer_norm(h, blk.ln1_gamma, blk.ln1_beta, kLayerNormEps);
    Tensor qkv = add(matmul(normed, blk.qkv_w), blk.qkv_b);
    std::vector<Tensor> head_ctx;
    head_ctx.reserve(n_heads);
    for (std::size_t hd = 0; hd < n_heads; ++hd) {
      Tensor q = slice_cols(qkv, hd * d_head, d_head);
      Tensor k = slice_cols(qkv, d_model + hd * d_head, d_head);
      Tensor v = slice_cols(qkv, 2 * d_model + hd * d_head, d_head);
      Tensor scores = scale(matmul(q, transpose(k)), att_scale);
      if (config_.causal_mask) scores = add(scores, causal_mask_);
      Tensor attn = softmax_rows(scores);
      if (drop) attn = dropout(attn, config_.dropout, *dropout_rng);
      head_ctx.push_back(matmul(attn, v));
    }
    Tensor ctx = n_heads == 1 ? head_ctx.front() : concat_cols(head_ctx);
    h = add(h, add(matmul(ctx, blk.att_w), blk.att_b));

    Tensor normed2 = layer_norm(h, blk.ln2_gamma, blk.ln2_beta, kLayerNormEps);
    Tensor mlp = add(matmul(gelu(add(matmul(normed2, blk.fc_w), blk.fc_b), config_.gelu_kind),
                            blk.out_w),
                     blk.out_b);
    if (drop) mlp = dropout(mlp, config_.dropout, *dropout_rng);
    h = add(h, mlp);
  }
  return layer_norm(h, lnf_gamma_, lnf_beta_, kLayerNormEps);
}

BatchOutput ModelBundle::forward_batch(const std::vector<const ForecastSample*>& batch,
                                       bool train_mode, Rng* dropout_rng, bool use_adapters) {
  if (batch.empty()) throw ContractError("forward_batch: empty batch");
  const std::size_t horizon = config_.horizon;

  // Adapter-effective weights are shared across the whole batch.
  Tensor e_pos = use_adapters ? pos_adapter_.effective_weight(pos_base_) : pos_base_;
  Tensor w_out = use_adapters ? head_adapter_.effective_weight(head_out_w_) : head_out_w_;

  std::vector<Tensor> preds;
  std::vector<Tensor> targets;
  std::vector<NormalizedWindow> all_stats;
  preds.reserve(batch.size());
  targets.reserve(batch.size());

  for (const ForecastSample* sample : batch) {
    NormalizedWindow norm = stage("normalize", [&] {
      return normalize_window(sample->window, config_.lookback, config_.num_vars);
    });
    PatchSequence patches = stage("patchify", [&] {
      return patchify(norm, config_.patch_len, config_.stride);
    });
    Tensor tokens = stage("project", [&] { return project(patches, proj_w_, proj_b_); });
    Tensor h0 = stage("position", [&] { return add(tokens, e_pos); });
    Tensor hl = stage("backbone", [&] { return backbone_forward(h0, train_mode, dropout_rng); });
    Tensor pooled = stage("pool", [&] { return reshape(reduce_mean(hl, 0), {1, config_.hidden}); });
    Tensor pred = stage("head", [&] {
      Tensor hidden = gelu(add(matmul(pooled, head_fc_w_), head_fc_b_), config_.gelu_kind);
      return reshape(add(matmul(hidden, w_out), head_out_b_), {horizon});
    });
    preds.push_back(pred);
    if (!sample->target.empty()) {
      if (sample->target.size() != horizon)
        throw DimensionError("forward_batch: sample target has " +
                             std::to_string(sample->target.size()) + " steps, model horizon is " +
                             std::to_string(horizon));
      targets.push_back(Tensor::from_values({horizon}, normalize_pm25(sample->target, norm),
                                            config_.precision));
    }
    all_stats.push_back(std::move(norm));
  }

  BatchOutput out;
  out.predictions = preds.size() == 1 ? reshape(preds.front(), {1, horizon}) : stack_rows(preds);
  if (targets.size() == batch.size())
    out.targets = targets.size() == 1 ? reshape(targets.front(), {1, horizon})
                                      : stack_rows(targets);
  out.stats = std::move(all_stats);
  return out;
}

ForwardOutput ModelBundle::forward(const std::vector<double>& window, bool train_mode,
                                   Rng* dropout_rng, bool use_adapters) {
  ForecastSample sample;
  sample.window = window;
  BatchOutput batch = forward_batch({&sample}, train_mode, dropout_rng, use_adapters);
  ForwardOutput out;
  out.prediction = reshape(batch.predictions, {config_.horizon});
  out.stats = std::move(batch.stats.front());
  return out;
}

std::vector<double> ModelBundle::predict_raw(const std::vector<double>& window) {
  ForwardOutput fwd = forward(window, false);
  const auto pred_span = fwd.prediction.data();
  return denormalize_pm25(std::vector<double>(pred_span.begin(), pred_span.end()), fwd.stats);
}

// ---------------------------------------------------------------------------
// Partition bookkeeping
// ---------------------------------------------------------------------------

std::vector<std::string> ModelBundle::trainable_names() const {
  std::vector<std::string> names;
  for (const NamedParam& p : params_)
    if (p.trainable) names.push_back(p.name);
  return names;
}

std::vector<std::string> ModelBundle::frozen_names() const {
  std::vector<std::string> names;
  for (const NamedParam& p : params_)
    if (!p.trainable) names.push_back(p.name);
  return names;
}

std::size_t ModelBundle::total_param_count() const {
  std::size_t n = 0;
  for (const NamedParam& p : params_) n += p.tensor.numel();
  return n;
}

std::size_t ModelBundle::trainable_param_count() const {
  std::size_t n = 0;
  for (const NamedParam& p : params_)
    if (p.trainable) n += p.tensor.numel();
  return n;
}

std::size_t ModelBundle::adapter_param_count() const {
  return pos_adapter_.trainable_param_count() + head_adapter_.trainable_param_count();
}

std::size_t ModelBundle::base_param_count() const {
  return total_param_count() - adapter_param_count();
}

double ModelBundle::trainable_fraction() const {
  return static_cast<double>(trainable_param_count()) /
         static_cast<double>(total_param_count());
}

std::map<std::string, std::vector<double>> ModelBundle::snapshot_trainable() const {
  std::map<std::string, std::vector<double>> snap;
  for (const NamedParam& p : params_) {
    if (!p.trainable) continue;
    const auto d = p.tensor.data();
    snap.emplace(p.name, std::vector<double>(d.begin(), d.end()));
  }
  return snap;
}

void ModelBundle::restore_trainable(const std::map<std::string, std::vector<double>>& snapshot) {
  for (NamedParam& p : params_) {
    if (!p.trainable) continue;
    auto it = snapshot.find(p.name);
    if (it == snapshot.end() || it->second.size() != p.tensor.numel())
      throw ContractError("restore_trainable: snapshot does not match parameter " + p.name);
    std::copy(it->second.begin(), it->second.end(), p.tensor.mutable_data().begin());
  }
}

void ModelBundle::zero_all_grads() {
  for (NamedParam& p : params_) p.tensor.zero_grad();
}

}  // namespace g4ap

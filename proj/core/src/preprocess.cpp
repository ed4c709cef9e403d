#include "g4ap/preprocess.hpp"

#include <cmath>

#include "g4ap/errors.hpp"

namespace g4ap {

NormalizedWindow normalize_window(const std::vector<double>& window, std::size_t lookback,
                                  std::size_t num_vars, double eps, std::size_t pm25_channel) {
  if (lookback < 2) throw ContractError("normalize_window: lookback must be >= 2");
  if (eps <= 0.0) throw ContractError("normalize_window: eps must be > 0");
  if (window.size() != lookback * num_vars)
    throw DimensionError("normalize_window: window has " + std::to_string(window.size()) +
                         " values, expected " + std::to_string(lookback * num_vars));
  for (double v : window) {
    if (!std::isfinite(v)) throw NumericError("normalize_window: non-finite input value");
  }

  NormalizedWindow out;
  out.lookback = lookback;
  out.num_vars = num_vars;
  out.pm25_channel = pm25_channel;
  out.mu.assign(num_vars, 0.0);
  out.sigma.assign(num_vars, 0.0);
  out.values.resize(window.size());

  const double n = static_cast<double>(lookback);
  for (std::size_t v = 0; v < num_vars; ++v) {
    double mean = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) mean += window[t * num_vars + v];
    mean /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < lookback; ++t) {
      const double d = window[t * num_vars + v] - mean;
      var += d * d;
    }
    var /= n;  // population variance
    out.mu[v] = mean;
    out.sigma[v] = std::sqrt(var) + eps;
    for (std::size_t t = 0; t < lookback; ++t)
      out.values[t * num_vars + v] = (window[t * num_vars + v] - mean) / out.sigma[v];
  }
  return out;
}

std::vector<double> denormalize_pm25(const std::vector<double>& pred,
                                     const NormalizedWindow& stats) {
  std::vector<double> out(pred.size());
  const double mu = stats.mu.at(stats.pm25_channel);
  const double sigma = stats.sigma.at(stats.pm25_channel);
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] * sigma + mu;
  return out;
}

std::vector<double> normalize_pm25(const std::vector<double>& raw, const NormalizedWindow& stats) {
  std::vector<double> out(raw.size());
  const double mu = stats.mu.at(stats.pm25_channel);
  const double sigma = stats.sigma.at(stats.pm25_channel);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mu) / sigma;
  return out;
}

std::size_t patch_count(std::size_t lookback, std::size_t patch_len, std::size_t stride) {
  if (patch_len == 0 || patch_len > lookback)
    throw ContractError("patch_count: patch length " + std::to_string(patch_len) +
                        " must be in [1, " + std::to_string(lookback) + "]");
  if (stride == 0) throw ContractError("patch_count: stride must be >= 1");
  return (lookback - patch_len) / stride + 1;
}

PatchSequence patchify(const NormalizedWindow& window, std::size_t patch_len,
                       std::size_t stride) {
  const std::size_t n = patch_count(window.lookback, patch_len, stride);
  const std::size_t d = window.num_vars;
  PatchSequence seq;
  seq.num_patches = n;
  seq.patch_len = patch_len;
  seq.stride = stride;
  seq.num_vars = d;
  seq.tokens_raw.resize(n * patch_len * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row0 = i * stride;
    double* dst = seq.tokens_raw.data() + i * patch_len * d;
    for (std::size_t t = 0; t < patch_len; ++t)
      for (std::size_t v = 0; v < d; ++v) *dst++ = window.at(row0 + t, v);
  }
  return seq;
}

Tensor project(const PatchSequence& patches, const Tensor& weight, const Tensor& bias) {
  const std::size_t flat = patches.patch_len * patches.num_vars;
  Tensor tokens = Tensor::from_values({patches.num_patches, flat}, patches.tokens_raw,
                                      weight.dtype());
  Tensor projected = matmul(tokens, weight);
  if (bias.defined()) projected = add(projected, bias);
  return projected;
}

Tensor project(const PatchSequence& patches, const Tensor& weight) {
  return project(patches, weight, Tensor());
}

}  // namespace g4ap

#pragma once

#include <cstddef>
#include <vector>

#include "g4ap/tensor.hpp"

namespace g4ap {

// Per-window Z-score statistics. sigma holds the actual divisor used
// (population std + eps), so de-normalization is exact.
struct NormalizedWindow {
  std::vector<double> values;  // [T x d], row-major
  std::vector<double> mu;      // [d]
  std::vector<double> sigma;   // [d], strictly positive
  std::size_t lookback = 0;
  std::size_t num_vars = 0;
  std::size_t pm25_channel = 0;

  double at(std::size_t t, std::size_t v) const { return values[t * num_vars + v]; }
};

inline constexpr double kNormalizeEps = 1e-5;

// Column-wise (x - mu) / (sigma + eps) over the window's time axis.
NormalizedWindow normalize_window(const std::vector<double>& window, std::size_t lookback,
                                  std::size_t num_vars, double eps = kNormalizeEps,
                                  std::size_t pm25_channel = 0);

std::vector<double> denormalize_pm25(const std::vector<double>& pred,
                                     const NormalizedWindow& stats);
std::vector<double> normalize_pm25(const std::vector<double>& raw, const NormalizedWindow& stats);

// Sliding-window patches, flattened time-major then variable.
struct PatchSequence {
  std::vector<double> tokens_raw;  // [N x (P*d)], row-major
  std::size_t num_patches = 0;
  std::size_t patch_len = 0;
  std::size_t stride = 0;
  std::size_t num_vars = 0;
};

// N = floor((T - P) / s) + 1.
std::size_t patch_count(std::size_t lookback, std::size_t patch_len, std::size_t stride);

PatchSequence patchify(const NormalizedWindow& window, std::size_t patch_len, std::size_t stride);

// tokens_raw -> tokens_raw * W + b (bias optional). W is [(P*d) x D].
Tensor project(const PatchSequence& patches, const Tensor& weight, const Tensor& bias);
Tensor project(const PatchSequence& patches, const Tensor& weight);

}  // namespace g4ap

#pragma once

#include <cstddef>
#include <string>

#include "g4ap/tensor.hpp"

namespace g4ap {

// Rank-dependent scale: alpha / sqrt(r). This is what keeps update
// magnitudes comparable across ranks.
double lora_beta(std::size_t rank, double alpha);

// Low-rank delta attached to a frozen base matrix W0 [a x b]:
//   W = W0 + beta_r * Y * X,  Y [a x r] (zero at init), X [r x b] (Gaussian).
// With Y = 0 the delta vanishes, so a freshly wrapped module behaves exactly
// like its base.
class LoraAdapter {
 public:
  LoraAdapter() = default;
  LoraAdapter(std::string base_ref, std::size_t out_dim, std::size_t in_dim, std::size_t rank,
              double alpha, double init_std, Rng& rng, DType dtype = DType::f64);

  const std::string& base_ref() const { return base_ref_; }
  std::size_t rank() const { return rank_; }
  double alpha() const { return alpha_; }
  double init_std() const { return init_std_; }
  double beta() const { return lora_beta(rank_, alpha_); }

  Tensor& x() { return x_; }
  Tensor& y() { return y_; }
  const Tensor& x() const { return x_; }
  const Tensor& y() const { return y_; }

  // beta_r * Y * X as a tracked expression (gradient reaches X and Y only).
  Tensor delta() const;

  // W0 + delta(). W0 stays frozen; its gradient is never populated.
  Tensor effective_weight(const Tensor& base) const;

  // r * (a + b)
  std::size_t trainable_param_count() const;

 private:
  std::string base_ref_;
  std::size_t out_dim_ = 0;  // a
  std::size_t in_dim_ = 0;   // b
  std::size_t rank_ = 0;
  double alpha_ = 0.0;
  double init_std_ = 0.0;
  Tensor x_;  // [r x b]
  Tensor y_;  // [a x r]
};

}  // namespace g4ap

#include "g4ap/lora.hpp"

#include <cmath>

#include "g4ap/errors.hpp"
#include "g4ap/log.hpp"

namespace g4ap {

double lora_beta(std::size_t rank, double alpha) {
  if (rank == 0) throw ContractError("lora_beta: rank must be >= 1");
  return alpha / std::sqrt(static_cast<double>(rank));
}

LoraAdapter::LoraAdapter(std::string base_ref, std::size_t out_dim, std::size_t in_dim,
                         std::size_t rank, double alpha, double init_std, Rng& rng, DType dtype)
    : base_ref_(std::move(base_ref)),
      out_dim_(out_dim),
      in_dim_(in_dim),
      rank_(rank),
      alpha_(alpha),
      init_std_(init_std) {
  if (rank == 0) throw ContractError("LoraAdapter '" + base_ref_ + "': rank must be >= 1");
  if (out_dim == 0 || in_dim == 0)
    throw ContractError("LoraAdapter '" + base_ref_ + "': dimensions must be positive");
  if (alpha <= 0.0) throw ContractError("LoraAdapter '" + base_ref_ + "': alpha must be > 0");
  if (init_std <= 0.0)
    throw ContractError("LoraAdapter '" + base_ref_ + "': init_std must be > 0");
  const std::size_t min_dim = std::min(out_dim, in_dim);
  // The low-rank regime wants r well below min(a, b). Positional bases are
  // short (few tokens), so this is a warning rather than a hard error.
  if (rank > min_dim) {
    log_warn("adapter '" + base_ref_ + "': rank " + std::to_string(rank) +
             " exceeds min dim " + std::to_string(min_dim) +
             "; delta rank is capped at " + std::to_string(min_dim));
  } else if (rank > min_dim / 2) {
    log_warn("adapter '" + base_ref_ + "': rank " + std::to_string(rank) + " is above half of " +
             std::to_string(min_dim) + "; the adaptation is no longer low-rank");
  }
  x_ = Tensor::gaussian({rank, in_dim}, init_std, rng, dtype);
  x_.set_requires_grad(true);
  y_ = Tensor::zeros({out_dim, rank}, dtype);
  y_.set_requires_grad(true);
}

Tensor LoraAdapter::delta() const { return scale(matmul(y_, x_), beta()); }

Tensor LoraAdapter::effective_weight(const Tensor& base) const {
  if (base.shape() != std::vector<std::size_t>{out_dim_, in_dim_})
    throw DimensionError("LoraAdapter '" + base_ref_ + "': base is " + base.shape_str() +
                         ", adapter expects [" + std::to_string(out_dim_) + "x" +
                         std::to_string(in_dim_) + "]");
  return add(base, delta());
}

std::size_t LoraAdapter::trainable_param_count() const {
  return rank_ * (out_dim_ + in_dim_);
}

}  // namespace g4ap

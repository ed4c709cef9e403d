#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "g4ap/rng.hpp"

namespace g4ap {

// Element precision. Values are held in doubles either way; f32 tensors are
// quantized through float after every kernel, so their contents are always
// exactly representable in 32 bits (and round-trip 32-bit serialization).
enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

enum class GeluKind : std::uint8_t { exact_erf = 0, tanh_approx = 1 };

class ComputeTape;

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  bool tracked = false;  // participates in the active tape's graph
  DType dtype = DType::f64;

  std::size_t numel() const { return values.size(); }
};

}  // namespace detail

// Value-semantic handle to a shared tensor node. Copies alias the same
// storage; training code relies on this to mutate parameters in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, DType dtype = DType::f64);
  static Tensor full(std::vector<std::size_t> shape, double value, DType dtype = DType::f64);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            DType dtype = DType::f64);
  static Tensor scalar(double value, DType dtype = DType::f64);
  static Tensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng,
                         DType dtype = DType::f64);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t numel() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only
  DType dtype() const;

  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double value() const;  // scalar tensors only

  std::span<const double> data() const;
  std::span<double> mutable_data();

  bool has_grad() const;
  std::span<const double> grad() const;
  double grad_at(std::size_t i) const;
  double grad_at(std::size_t i, std::size_t j) const;
  void zero_grad();

  Tensor& set_requires_grad(bool flag);
  bool requires_grad() const;
  bool tracked() const;

  // Deep copy of values (no grad, not tracked).
  Tensor clone() const;

  std::string shape_str() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  friend class ComputeTape;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor wrap_node(std::shared_ptr<detail::TensorNode>);
};

// ---------------------------------------------------------------------------
// Compute tape: reverse-mode autodiff
// ---------------------------------------------------------------------------

// Ordered record of executed operations. Tape entries are appended in
// execution order (a topological order by construction), and backward()
// visits each exactly once in reverse.
class ComputeTape {
 public:
  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> output;
    std::function<void()> backward;
  };

  void record(const char* op, std::vector<std::shared_ptr<detail::TensorNode>> inputs,
              std::shared_ptr<detail::TensorNode> output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
  // `loss` must be a scalar produced while this tape was active (or a
  // requires_grad scalar leaf).
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear();

 private:
  std::vector<Entry> entries_;
};

// RAII activation of a tape: operations executed in scope are recorded.
// Tapes do not nest; constructing a second scope is a contract error.
class TapeScope {
 public:
  explicit TapeScope(ComputeTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

ComputeTape* active_tape();

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise ops accept b of identical shape, a row vector broadcast over a
// matrix's rows, or (via the double overloads) a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
Tensor scale(const Tensor& a, double s);

Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps);
Tensor gelu(const Tensor& a, GeluKind kind = GeluKind::exact_erf);

Tensor reduce_mean(const Tensor& a, std::size_t axis);
Tensor reduce_sum(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);

// Inverted-dropout mask with keep probability 1-rate, entries 0 or 1/(1-rate).
Tensor make_dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng,
                         DType dtype = DType::f64);
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// Scalar gelu helpers (shared with tests).
double gelu_scalar(double x, GeluKind kind);
double gelu_grad_scalar(double x, GeluKind kind);

}  // namespace g4ap

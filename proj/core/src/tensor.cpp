#include "g4ap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "g4ap/errors.hpp"

namespace g4ap {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

thread_local ComputeTape* g_active_tape = nullptr;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_to_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void check_positive_extents(const std::vector<std::size_t>& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_str(shape));
  }
}

NodePtr make_node(std::vector<std::size_t> shape, DType dtype) {
  check_positive_extents(shape);
  auto node = std::make_shared<TensorNode>();
  node->dtype = dtype;
  node->values.resize(shape_numel(shape));
  node->shape = std::move(shape);
  return node;
}

// f32 tensors always hold values exactly representable in 32 bits.
void quantize(TensorNode& node) {
  if (node.dtype != DType::f32) return;
  for (double& v : node.values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_grad(TensorNode& node) {
  if (node.dtype != DType::f32) return;
  for (double& v : node.grad) v = static_cast<double>(static_cast<float>(v));
}

bool wants_grad(const TensorNode& n) { return n.requires_grad || n.tracked; }

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

// Output grad of `n`, or nullptr if backward never reached it (treated as 0).
const std::vector<double>* out_grad(const TensorNode& n) {
  return n.grad.empty() ? nullptr : &n.grad;
}

DType common_dtype(const TensorNode& a, const TensorNode& b) {
  if (a.dtype != b.dtype)
    throw ContractError("mixed tensor precisions in one operation");
  return a.dtype;
}

// Records the op if a tape is active and any input is grad-relevant.
void maybe_record(const char* op, std::vector<NodePtr> inputs, const NodePtr& output,
                  std::function<void()> backward) {
  if (g_active_tape == nullptr) return;
  bool relevant = false;
  for (const auto& in : inputs) relevant = relevant || wants_grad(*in);
  if (!relevant) return;
  output->tracked = true;
  g_active_tape->record(op, std::move(inputs), output, std::move(backward));
}

// --- raw kernels ------------------------------------------------------------

// c[m x n] += or = a[m x k] * b[k x n]
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void require_2d(const TensorNode& n, const char* who) {
  if (n.shape.size() != 2)
    throw DimensionError(std::string(who) + ": expected a 2-D tensor, got " +
                         shape_to_str(n.shape));
}

}  // namespace

Tensor wrap_node(NodePtr node) { return Tensor(std::move(node)); }

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, DType dtype) {
  return Tensor(make_node(std::move(shape), dtype));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, DType dtype) {
  auto node = make_node(std::move(shape), dtype);
  std::fill(node->values.begin(), node->values.end(), value);
  quantize(*node);
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           DType dtype) {
  auto node = make_node(std::move(shape), dtype);
  if (values.size() != node->values.size())
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_to_str(node->shape));
  node->values = std::move(values);
  quantize(*node);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, DType dtype) {
  return from_values({1}, {value}, dtype);
}

Tensor Tensor::gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng, DType dtype) {
  auto node = make_node(std::move(shape), dtype);
  for (double& v : node->values) v = stddev * rng.normal();
  quantize(*node);
  return Tensor(std::move(node));
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->numel(); }

std::size_t Tensor::rows() const {
  require_2d(*node_, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_2d(*node_, "cols");
  return node_->shape[1];
}

DType Tensor::dtype() const { return node_->dtype; }

double Tensor::at(std::size_t i) const { return node_->values.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  require_2d(*node_, "at(i,j)");
  return node_->values.at(i * node_->shape[1] + j);
}

double Tensor::value() const {
  if (numel() != 1) throw ContractError("value(): tensor is not scalar, shape " + shape_str());
  return node_->values[0];
}

std::span<const double> Tensor::data() const { return node_->values; }
std::span<double> Tensor::mutable_data() { return node_->values; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) throw ContractError("grad(): no gradient present");
  return node_->grad;
}

double Tensor::grad_at(std::size_t i) const { return grad()[i]; }

double Tensor::grad_at(std::size_t i, std::size_t j) const {
  require_2d(*node_, "grad_at(i,j)");
  return grad()[i * node_->shape[1] + j];
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::tracked() const { return node_->requires_grad || node_->tracked; }

Tensor Tensor::clone() const {
  auto node = make_node(node_->shape, node_->dtype);
  node->values = node_->values;
  return Tensor(std::move(node));
}

std::string Tensor::shape_str() const { return shape_to_str(node_->shape); }

// ---------------------------------------------------------------------------
// ComputeTape
// ---------------------------------------------------------------------------

void ComputeTape::record(const char* op, std::vector<NodePtr> inputs, NodePtr output,
                         std::function<void()> backward) {
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

void ComputeTape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + loss.shape_str());
  auto loss_node = loss.node();
  if (!wants_grad(*loss_node))
    throw ContractError("backward: loss is not connected to the tape");
  ensure_grad(*loss_node);
  loss_node->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (out_grad(*it->output) == nullptr) continue;  // not in the loss cone
    it->backward();
  }
}

void ComputeTape::clear() { entries_.clear(); }

TapeScope::TapeScope(ComputeTape& tape) {
  if (g_active_tape != nullptr)
    throw ContractError("TapeScope: a tape is already active; tapes do not nest");
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = nullptr; }

ComputeTape* active_tape() { return g_active_tape; }

// ---------------------------------------------------------------------------
// matmul / transpose
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  require_2d(*an, "matmul");
  require_2d(*bn, "matmul");
  const std::size_t m = an->shape[0], k = an->shape[1];
  const std::size_t k2 = bn->shape[0], n = bn->shape[1];
  if (k != k2)
    throw DimensionError("matmul: inner extents disagree: " + shape_to_str(an->shape) + " x " +
                         shape_to_str(bn->shape));
  auto out = make_node({m, n}, common_dtype(*an, *bn));
  mm_nn(an->values.data(), bn->values.data(), out->values.data(), m, k, n, false);
  quantize(*out);

  maybe_record("matmul", {an, bn}, out, [an, bn, out, m, k, n] {
    const auto* g = out_grad(*out);
    if (wants_grad(*an)) {
      ensure_grad(*an);
      mm_nt(g->data(), bn->values.data(), an->grad.data(), m, n, k);
      quantize_grad(*an);
    }
    if (wants_grad(*bn)) {
      ensure_grad(*bn);
      mm_tn(an->values.data(), g->data(), bn->grad.data(), m, k, n);
      quantize_grad(*bn);
    }
  });
  return wrap_node(out);
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  require_2d(*an, "transpose");
  const std::size_t m = an->shape[0], n = an->shape[1];
  auto out = make_node({n, m}, an->dtype);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->values[j * m + i] = an->values[i * n + j];

  maybe_record("transpose", {an}, out, [an, out, m, n] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += (*g)[j * m + i];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

enum class Broadcast { none, row_vector };

Broadcast broadcast_kind(const TensorNode& a, const TensorNode& b, const char* who) {
  if (a.shape == b.shape) return Broadcast::none;
  if (a.shape.size() == 2 && b.shape.size() == 1 && b.shape[0] == a.shape[1])
    return Broadcast::row_vector;
  throw DimensionError(std::string(who) + ": shapes are not broadcastable: " +
                       shape_to_str(a.shape) + " vs " + shape_to_str(b.shape));
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a,
                 BwdB bwd_b) {
  auto an = a.node();
  auto bn = b.node();
  const Broadcast bc = broadcast_kind(*an, *bn, name);
  auto out = make_node(an->shape, common_dtype(*an, *bn));
  const std::size_t total = out->numel();
  const std::size_t ncols = bc == Broadcast::row_vector ? an->shape[1] : 0;
  for (std::size_t i = 0; i < total; ++i) {
    const double bv = bc == Broadcast::none ? bn->values[i] : bn->values[i % ncols];
    out->values[i] = fwd(an->values[i], bv);
  }
  quantize(*out);

  maybe_record(name, {an, bn}, out, [an, bn, out, bc, ncols, total, bwd_a, bwd_b] {
    const auto* g = out_grad(*out);
    if (wants_grad(*an)) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < total; ++i) {
        const double bv = bc == Broadcast::none ? bn->values[i] : bn->values[i % ncols];
        an->grad[i] += bwd_a((*g)[i], an->values[i], bv);
      }
      quantize_grad(*an);
    }
    if (wants_grad(*bn)) {
      ensure_grad(*bn);
      for (std::size_t i = 0; i < total; ++i) {
        const std::size_t bi = bc == Broadcast::none ? i : i % ncols;
        bn->grad[bi] += bwd_b((*g)[i], an->values[i], bn->values[bi]);
      }
      quantize_grad(*bn);
    }
  });
  return wrap_node(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

namespace {

Tensor shift_by(const Tensor& a, double c) {
  auto an = a.node();
  auto out = make_node(an->shape, an->dtype);
  const std::size_t total = out->numel();
  for (std::size_t i = 0; i < total; ++i) out->values[i] = an->values[i] + c;
  quantize(*out);
  maybe_record("shift", {an}, out, [an, out, total] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < total; ++i) an->grad[i] += (*g)[i];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

}  // namespace

Tensor add(const Tensor& a, double b) { return shift_by(a, b); }
Tensor sub(const Tensor& a, double b) { return shift_by(a, -b); }
Tensor mul(const Tensor& a, double b) { return scale(a, b); }

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  auto out = make_node(an->shape, an->dtype);
  const std::size_t total = out->numel();
  for (std::size_t i = 0; i < total; ++i) out->values[i] = an->values[i] * s;
  quantize(*out);

  maybe_record("scale", {an}, out, [an, out, s, total] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < total; ++i) an->grad[i] += (*g)[i] * s;
    quantize_grad(*an);
  });
  return wrap_node(out);
}

// ---------------------------------------------------------------------------
// softmax / layer_norm / gelu
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  auto an = a.node();
  require_2d(*an, "softmax_rows");
  for (double v : an->values) {
    if (std::isnan(v)) throw NumericError("softmax_rows: NaN in input");
  }
  const std::size_t m = an->shape[0], n = an->shape[1];
  auto out = make_node({m, n}, an->dtype);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = an->values.data() + i * n;
    double* y = out->values.data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  quantize(*out);

  maybe_record("softmax_rows", {an}, out, [an, out, m, n] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = out->values.data() + i * n;
      const double* gy = g->data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += y[j] * (gy[j] - dot);
    }
    quantize_grad(*an);
  });
  return wrap_node(out);
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  auto an = a.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be > 0");
  if (an->shape.empty()) throw DimensionError("layer_norm: input must have at least one axis");
  const std::size_t d = an->shape.back();
  if (gn->shape != std::vector<std::size_t>{d} || bn->shape != std::vector<std::size_t>{d})
    throw DimensionError("layer_norm: gamma/beta " + shape_to_str(gn->shape) + "/" +
                         shape_to_str(bn->shape) + " do not match last axis of " +
                         shape_to_str(an->shape));
  const std::size_t rows = an->numel() / d;
  auto out = make_node(an->shape, an->dtype);
  // Normalized rows are kept for the backward pass.
  auto norm = std::make_shared<std::vector<double>>(an->numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = an->values.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double nv = (x[j] - mean) * rs;
      (*norm)[r * d + j] = nv;
      out->values[r * d + j] = nv * gn->values[j] + bn->values[j];
    }
  }
  quantize(*out);

  maybe_record("layer_norm", {an, gn, bn}, out, [an, gn, bn, out, norm, rstd, rows, d] {
    const auto* g = out_grad(*out);
    if (wants_grad(*gn)) ensure_grad(*gn);
    if (wants_grad(*bn)) ensure_grad(*bn);
    if (wants_grad(*an)) ensure_grad(*an);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = g->data() + r * d;
      const double* nv = norm->data() + r * d;
      if (wants_grad(*gn) || wants_grad(*bn)) {
        for (std::size_t j = 0; j < d; ++j) {
          if (wants_grad(*gn)) gn->grad[j] += gy[j] * nv[j];
          if (wants_grad(*bn)) bn->grad[j] += gy[j];
        }
      }
      if (wants_grad(*an)) {
        double mean_dy = 0.0, mean_dyn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = gy[j] * gn->values[j];
          mean_dy += dy;
          mean_dyn += dy * nv[j];
        }
        mean_dy /= static_cast<double>(d);
        mean_dyn /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = gy[j] * gn->values[j];
          an->grad[r * d + j] += (*rstd)[r] * (dy - mean_dy - nv[j] * mean_dyn);
        }
      }
    }
    quantize_grad(*an);
    quantize_grad(*gn);
    quantize_grad(*bn);
  });
  return wrap_node(out);
}

double gelu_scalar(double x, GeluKind kind) {
  if (kind == GeluKind::exact_erf) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  }
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x, GeluKind kind) {
  if (kind == GeluKind::exact_erf) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    return cdf + x * phi;
  }
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

Tensor gelu(const Tensor& a, GeluKind kind) {
  auto an = a.node();
  auto out = make_node(an->shape, an->dtype);
  const std::size_t total = out->numel();
  for (std::size_t i = 0; i < total; ++i) out->values[i] = gelu_scalar(an->values[i], kind);
  quantize(*out);

  maybe_record("gelu", {an}, out, [an, out, kind, total] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < total; ++i)
      an->grad[i] += (*g)[i] * gelu_grad_scalar(an->values[i], kind);
    quantize_grad(*an);
  });
  return wrap_node(out);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace {

Tensor reduce_impl(const Tensor& a, std::size_t axis, bool mean) {
  auto an = a.node();
  if (an->shape.size() == 1) {
    if (axis != 0)
      throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                           shape_to_str(an->shape));
    const std::size_t n = an->shape[0];
    const double denom = mean ? static_cast<double>(n) : 1.0;
    auto out = make_node({1}, an->dtype);
    double acc = 0.0;
    for (double v : an->values) acc += v;
    out->values[0] = acc / denom;
    quantize(*out);
    maybe_record(mean ? "reduce_mean" : "reduce_sum", {an}, out, [an, out, denom, n] {
      const auto* g = out_grad(*out);
      if (!wants_grad(*an)) return;
      ensure_grad(*an);
      const double gv = (*g)[0] / denom;
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += gv;
      quantize_grad(*an);
    });
    return wrap_node(out);
  }
  require_2d(*an, "reduce");
  if (axis > 1)
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_str(an->shape));
  const std::size_t m = an->shape[0], n = an->shape[1];
  const std::size_t out_len = axis == 0 ? n : m;
  const std::size_t extent = axis == 0 ? m : n;
  const double denom = mean ? static_cast<double>(extent) : 1.0;
  auto out = make_node({out_len}, an->dtype);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out->values[axis == 0 ? j : i] += an->values[i * n + j];
  for (double& v : out->values) v /= denom;
  quantize(*out);

  maybe_record(mean ? "reduce_mean" : "reduce_sum", {an}, out, [an, out, axis, m, n, denom] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        an->grad[i * n + j] += (*g)[axis == 0 ? j : i] / denom;
    quantize_grad(*an);
  });
  return wrap_node(out);
}

}  // namespace

Tensor reduce_mean(const Tensor& a, std::size_t axis) { return reduce_impl(a, axis, true); }
Tensor reduce_sum(const Tensor& a, std::size_t axis) { return reduce_impl(a, axis, false); }

Tensor sum_all(const Tensor& a) {
  auto an = a.node();
  auto out = make_node({1}, an->dtype);
  double acc = 0.0;
  for (double v : an->values) acc += v;
  out->values[0] = acc;
  quantize(*out);
  const std::size_t total = an->numel();
  maybe_record("sum_all", {an}, out, [an, out, total] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < total; ++i) an->grad[i] += (*g)[0];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
  auto an = a.node();
  check_positive_extents(shape);
  if (shape_numel(shape) != an->numel())
    throw DimensionError("reshape: cannot view " + shape_to_str(an->shape) + " as " +
                         shape_to_str(shape));
  auto out = make_node(std::move(shape), an->dtype);
  out->values = an->values;
  const std::size_t total = an->numel();
  maybe_record("reshape", {an}, out, [an, out, total] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < total; ++i) an->grad[i] += (*g)[i];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  auto an = a.node();
  require_2d(*an, "slice_rows");
  const std::size_t m = an->shape[0], n = an->shape[1];
  if (count == 0 || start + count > m)
    throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceeds " + shape_to_str(an->shape));
  auto out = make_node({count, n}, an->dtype);
  std::copy(an->values.begin() + static_cast<std::ptrdiff_t>(start * n),
            an->values.begin() + static_cast<std::ptrdiff_t>((start + count) * n),
            out->values.begin());

  maybe_record("slice_rows", {an}, out, [an, out, start, count, n] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < count * n; ++i) an->grad[start * n + i] += (*g)[i];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  auto an = a.node();
  require_2d(*an, "slice_cols");
  const std::size_t m = an->shape[0], n = an->shape[1];
  if (count == 0 || start + count > n)
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceeds " + shape_to_str(an->shape));
  auto out = make_node({m, count}, an->dtype);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j)
      out->values[i * count + j] = an->values[i * n + start + j];

  maybe_record("slice_cols", {an}, out, [an, out, start, count, m, n] {
    const auto* g = out_grad(*out);
    if (!wants_grad(*an)) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j)
        an->grad[i * n + start + j] += (*g)[i * count + j];
    quantize_grad(*an);
  });
  return wrap_node(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  const std::size_t m = parts.front().node()->shape.at(0);
  std::size_t total_cols = 0;
  DType dtype = parts.front().dtype();
  for (const Tensor& t : parts) {
    auto tn = t.node();
    require_2d(*tn, "concat_cols");
    if (tn->shape[0] != m)
      throw DimensionError("concat_cols: row count mismatch: " + shape_to_str(tn->shape));
    if (tn->dtype != dtype) throw ContractError("concat_cols: mixed precisions");
    total_cols += tn->shape[1];
    nodes.push_back(std::move(tn));
  }
  auto out = make_node({m, total_cols}, dtype);
  std::size_t offset = 0;
  for (const auto& tn : nodes) {
    const std::size_t c = tn->shape[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out->values[i * total_cols + offset + j] = tn->values[i * c + j];
    offset += c;
  }

  maybe_record("concat_cols", nodes, out, [nodes, out, m, total_cols] {
    const auto* g = out_grad(*out);
    std::size_t offset = 0;
    for (const auto& tn : nodes) {
      const std::size_t c = tn->shape[1];
      if (wants_grad(*tn)) {
        ensure_grad(*tn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j)
            tn->grad[i * c + j] += (*g)[i * total_cols + offset + j];
        quantize_grad(*tn);
      }
      offset += c;
    }
  });
  return wrap_node(out);
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no inputs");
  std::vector<NodePtr> nodes;
  nodes.reserve(rows.size());
  const std::size_t n = rows.front().numel();
  DType dtype = rows.front().dtype();
  for (const Tensor& t : rows) {
    auto tn = t.node();
    if (tn->numel() != n)
      throw DimensionError("stack_rows: element count mismatch: " + shape_to_str(tn->shape));
    if (tn->dtype != dtype) throw ContractError("stack_rows: mixed precisions");
    nodes.push_back(std::move(tn));
  }
  auto out = make_node({rows.size(), n}, dtype);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    std::copy(nodes[i]->values.begin(), nodes[i]->values.end(), out->values.begin() + i * n);

  maybe_record("stack_rows", nodes, out, [nodes, out, n] {
    const auto* g = out_grad(*out);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& tn = *nodes[i];
      if (!wants_grad(tn)) continue;
      ensure_grad(tn);
      for (std::size_t j = 0; j < n; ++j) tn.grad[j] += (*g)[i * n + j];
      quantize_grad(tn);
    }
  });
  return wrap_node(out);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

Tensor make_dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng,
                         DType dtype) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  auto node = make_node(shape, dtype);
  const double keep = 1.0 - rate;
  for (double& v : node->values) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  quantize(*node);
  return wrap_node(node);
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate == 0.0) return a;
  Tensor mask = make_dropout_mask(a.shape(), rate, rng, a.dtype());
  return mul(a, mask);
}

}  // namespace g4ap

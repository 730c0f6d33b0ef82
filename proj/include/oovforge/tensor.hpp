#pragma once

// Dense float64 tensors with tape-ordered reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Every op that
// consumes a tensor requiring gradients appends a node to the computation
// graph; nodes carry a monotonically increasing sequence number, so the
// graph reachable from a loss is an append-ordered list and backward walks it
// in strict reverse order. Backward rules are themselves written with tensor
// ops, which makes gradients differentiable again when requested
// (create_graph), as needed by second-order meta-learning.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oovforge {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

struct TensorImpl : std::enable_shared_from_this<TensorImpl> {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

// Receives the incoming gradient and the op's own output; returns one
// gradient per input (an empty Tensor means "no contribution").
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out, const Tensor& out)>;

struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  TensorImpl* output = nullptr;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  // Leaf that participates in differentiation.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Writable view for leaves only; tensors produced by ops are immutable.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Gradient buffer filled by backward(); absent until the first backward.
  const std::optional<std::vector<double>>& grad() const;
  void zero_grad();

  // Same storage contents, no graph history, no gradient tracking.
  Tensor detach() const;
  // Deep copy into a fresh leaf, keeping requires_grad.
  Tensor clone() const;

  std::vector<double> to_vector() const;

  // Identity of the underlying storage.
  const void* id() const noexcept { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend struct TensorAccess;
};

// Gradient recording is on by default; this guard suspends it for a scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- autodiff ---------------------------------------------------------------

// Accumulates d(loss)/d(leaf) into every reachable leaf's grad buffer.
// loss must hold exactly one element.
void backward(const Tensor& loss);

// Functional gradient: d(loss)/d(wrt[i]) without touching grad buffers.
// Inputs that do not influence loss receive zeros. With create_graph the
// returned tensors are themselves differentiable.
std::vector<Tensor> gradients(const Tensor& loss, std::span<const Tensor> wrt,
                              bool create_graph = false);

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor pow_scalar(const Tensor& x, double exponent);
Tensor relu(const Tensor& x);
// Values clamped to [-1, 1]; gradient passes straight through.
Tensor clamp_unit(const Tensor& x);
// max(x, floor) elementwise; gradient flows where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

// ---- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor slice(const Tensor& x, std::size_t offset, std::size_t length);
Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t length);
Tensor concat(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor row(const Tensor& x, std::size_t index);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Adjoint of gather_rows: out[rows[i]] += x[i], out has num_rows rows.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t num_rows);
Tensor tile_rows(const Tensor& v, std::size_t rows);
Tensor tile_cols(const Tensor& v, std::size_t cols);

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor row_sum(const Tensor& x);
Tensor col_sum(const Tensor& x);
Tensor col_mean(const Tensor& x);
Tensor dot(const Tensor& u, const Tensor& v);

// ---- bias-style broadcasting over one axis ------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul_rows(const Tensor& x, const Tensor& factors);
Tensor mul_cols(const Tensor& x, const Tensor& factors);

// ---- linear algebra and network ops ---------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// axis counts from 0; negative values count from the end.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Valid cross-correlation of seq [L x c_in] with filters [w x c_in x c_out],
// then max over time. Sequences shorter than w are zero-padded on the right.
Tensor conv1d_maxpool(const Tensor& seq, const Tensor& filters);
// Column-wise max over rows; ties resolve to the lowest row.
Tensor col_max(const Tensor& x);

inline constexpr double kCosineEps = 1e-8;
Tensor cosine(const Tensor& u, const Tensor& v);

}  // namespace oovforge

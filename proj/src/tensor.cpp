#include "oovforge/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "oovforge/errors.hpp"

namespace oovforge {

using detail::Node;
using detail::TensorImpl;

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

struct TensorAccess {
  static TensorImpl& impl(const Tensor& t) {
    if (!t.impl_) throw UsageError("use of an undefined tensor");
    return *t.impl_;
  }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
  static const std::shared_ptr<TensorImpl>& ptr(const Tensor& t) { return t.impl_; }
};

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

const std::vector<double>& values(const Tensor& t) { return TensorAccess::impl(t).data; }

void check_finite(const std::vector<double>& data, const char* op) {
  // v * 0 is NaN exactly when v is infinite or NaN; summing keeps the loop vectorizable.
  double probe = 0.0;
  for (double v : data) probe += v * 0.0;
  if (!std::isfinite(probe)) throw NumericError(std::string("non-finite value produced by ") + op);
}

// Builds an op result, attaching a graph node when any input is tracked.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<Tensor> inputs, detail::BackwardFn backward) {
  check_finite(data, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    auto node = std::make_shared<Node>();
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->output = impl.get();
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return TensorAccess::wrap(std::move(impl));
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Internal linear ops used as adjoints of public ones.
Tensor broadcast_scalar(const Tensor& g, const Shape& shape);
Tensor pad_slice(const Tensor& g, std::size_t offset, std::size_t total);
Tensor pad_cols(const Tensor& g, std::size_t offset, std::size_t total_cols);
Tensor scatter_positions(const Tensor& g, std::vector<std::size_t> rows, std::size_t num_rows);
Tensor gather_positions(const Tensor& x, std::vector<std::size_t> rows);
Tensor unfold(const Tensor& seq, std::size_t width);
Tensor fold(const Tensor& g, std::size_t length, std::size_t channels, std::size_t width);

Tensor broadcast_scalar(const Tensor& g, const Shape& shape) {
  if (g.size() != 1) throw DimensionError("broadcast_scalar: expected one element");
  std::vector<double> out(shape_size(shape), g.data()[0]);
  return make_result(shape, std::move(out), "broadcast_scalar", {g},
                     [](const Tensor& grad, const Tensor&) { return std::vector<Tensor>{sum(grad)}; });
}

Tensor pad_slice(const Tensor& g, std::size_t offset, std::size_t total) {
  std::vector<double> out(total, 0.0);
  const auto& src = values(g);
  std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
  const std::size_t len = src.size();
  return make_result({total}, std::move(out), "pad_slice", {g},
                     [offset, len](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{slice(grad, offset, len)};
                     });
}

Tensor pad_cols(const Tensor& g, std::size_t offset, std::size_t total_cols) {
  const std::size_t m = g.dim(0), n = g.dim(1);
  std::vector<double> out(m * total_cols, 0.0);
  const auto& src = values(g);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * total_cols + offset + j] = src[i * n + j];
  }
  return make_result({m, total_cols}, std::move(out), "pad_cols", {g},
                     [offset, n](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{slice_cols(grad, offset, n)};
                     });
}

Tensor scatter_positions(const Tensor& g, std::vector<std::size_t> rows, std::size_t num_rows) {
  const std::size_t c = g.size();
  std::vector<double> out(num_rows * c, 0.0);
  const auto& src = values(g);
  for (std::size_t j = 0; j < c; ++j) out[rows[j] * c + j] = src[j];
  return make_result({num_rows, c}, std::move(out), "scatter_positions", {g},
                     [rows](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{gather_positions(grad, rows)};
                     });
}

Tensor gather_positions(const Tensor& x, std::vector<std::size_t> rows) {
  const std::size_t t = x.dim(0), c = x.dim(1);
  std::vector<double> out(c);
  const auto& src = values(x);
  for (std::size_t j = 0; j < c; ++j) out[j] = src[rows[j] * c + j];
  return make_result({c}, std::move(out), "gather_positions", {x},
                     [rows, t](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{scatter_positions(grad, rows, t)};
                     });
}

// Rows of the result are flattened windows: window t holds seq rows
// t..t+width-1, channel-minor. Rows past the sequence end read as zeros.
Tensor unfold(const Tensor& seq, std::size_t width) {
  const std::size_t len = seq.dim(0), ch = seq.dim(1);
  const std::size_t padded = std::max(len, width);
  const std::size_t windows = padded - width + 1;
  std::vector<double> out(windows * width * ch, 0.0);
  const auto& src = values(seq);
  for (std::size_t t = 0; t < windows; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t r = t + k;
      if (r >= len) break;
      for (std::size_t c = 0; c < ch; ++c) out[(t * width + k) * ch + c] = src[r * ch + c];
    }
  }
  return make_result({windows, width * ch}, std::move(out), "unfold", {seq},
                     [len, ch, width](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{fold(grad, len, ch, width)};
                     });
}

Tensor fold(const Tensor& g, std::size_t length, std::size_t channels, std::size_t width) {
  const std::size_t windows = g.dim(0);
  std::vector<double> out(length * channels, 0.0);
  const auto& src = values(g);
  for (std::size_t t = 0; t < windows; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t r = t + k;
      if (r >= length) break;
      for (std::size_t c = 0; c < channels; ++c) out[r * channels + c] += src[(t * width + k) * channels + c];
    }
  }
  return make_result({length, channels}, std::move(out), "fold", {g},
                     [width](const Tensor& grad, const Tensor&) {
                       return std::vector<Tensor>{unfold(grad, width)};
                     });
}

Tensor mask_tensor(const Tensor& x, double floor) {
  const auto& src = values(x);
  std::vector<double> m(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) m[i] = src[i] > floor ? 1.0 : 0.0;
  return Tensor::from_data(x.shape(), std::move(m));
}

}  // namespace

// ---- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_size(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("from_data: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  check_finite(data, "from_data");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return TensorAccess::impl(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return TensorAccess::impl(*this).data.size(); }

std::span<const double> Tensor::data() const { return TensorAccess::impl(*this).data; }

std::span<double> Tensor::mutable_data() {
  auto& impl = TensorAccess::impl(*this);
  if (impl.node) throw UsageError("mutable_data on a tensor produced by an op");
  return impl.data;
}

double Tensor::item() const {
  const auto& d = TensorAccess::impl(*this).data;
  if (d.size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
  return d[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank(*this, 2, "at");
  return data()[r * shape()[1] + c];
}

bool Tensor::requires_grad() const { return TensorAccess::impl(*this).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  auto& impl = TensorAccess::impl(*this);
  if (impl.node) throw UsageError("set_requires_grad on a non-leaf tensor");
  impl.requires_grad = flag;
}

bool Tensor::is_leaf() const { return !TensorAccess::impl(*this).node; }

const std::optional<std::vector<double>>& Tensor::grad() const { return TensorAccess::impl(*this).grad; }

void Tensor::zero_grad() { TensorAccess::impl(*this).grad.reset(); }

Tensor Tensor::detach() const { return from_data(shape(), TensorAccess::impl(*this).data); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = requires_grad();
  return t;
}

std::vector<double> Tensor::to_vector() const { return TensorAccess::impl(*this).data; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- autodiff -------------------------------------------------------------------

namespace {

struct GradSlot {
  Tensor value;
  bool owned = false;  // storage private to the engine, safe to add into
};

void accumulate(std::unordered_map<const TensorImpl*, GradSlot>& slots, const TensorImpl* key,
                const Tensor& g, bool create_graph) {
  auto it = slots.find(key);
  if (it == slots.end()) {
    slots.emplace(key, GradSlot{g, false});
    return;
  }
  GradSlot& slot = it->second;
  if (create_graph) {
    slot.value = add(slot.value, g);
    return;
  }
  if (!slot.owned) {
    slot.value = slot.value.detach();
    slot.owned = true;
  }
  auto dst = slot.value.mutable_data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::vector<Node*> reachable_nodes(const Tensor& root) {
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack;
  if (auto* n = TensorAccess::impl(root).node.get()) stack.push_back(n);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (!in.defined()) continue;
      if (auto* child = TensorAccess::impl(in).node.get(); child && !seen.count(child)) stack.push_back(child);
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });
  return nodes;
}

// Runs the reverse sweep; returns the gradient slots that survive (leaves and
// anything listed in keep).
std::unordered_map<const TensorImpl*, GradSlot> reverse_sweep(
    const Tensor& loss, const std::unordered_set<const TensorImpl*>& keep, bool create_graph) {
  if (loss.size() != 1) throw UsageError("backward on non-scalar tensor of shape " + shape_string(loss.shape()));
  std::unordered_map<const TensorImpl*, GradSlot> slots;
  slots.emplace(&TensorAccess::impl(loss), GradSlot{Tensor::full(loss.shape(), 1.0), true});

  std::optional<NoGradGuard> no_grad;
  if (!create_graph) no_grad.emplace();

  for (Node* node : reachable_nodes(loss)) {
    auto it = slots.find(node->output);
    if (it == slots.end()) continue;
    Tensor g = it->second.value;
    if (!keep.count(node->output)) slots.erase(it);
    Tensor out = TensorAccess::wrap(node->output->shared_from_this());
    std::vector<Tensor> grads = node->backward(g, out);
    for (std::size_t i = 0; i < node->inputs.size() && i < grads.size(); ++i) {
      const Tensor& in = node->inputs[i];
      if (!in.defined() || !in.requires_grad() || !grads[i].defined()) continue;
      accumulate(slots, &TensorAccess::impl(in), grads[i], create_graph);
    }
  }
  return slots;
}

}  // namespace

void backward(const Tensor& loss) {
  auto slots = reverse_sweep(loss, {}, false);
  for (auto& [impl, slot] : slots) {
    if (impl->node || !impl->requires_grad) continue;
    auto* leaf = const_cast<TensorImpl*>(impl);
    const auto src = slot.value.data();
    if (!leaf->grad) {
      leaf->grad.emplace(src.begin(), src.end());
    } else {
      for (std::size_t i = 0; i < src.size(); ++i) (*leaf->grad)[i] += src[i];
    }
  }
}

std::vector<Tensor> gradients(const Tensor& loss, std::span<const Tensor> wrt, bool create_graph) {
  std::unordered_set<const TensorImpl*> keep;
  for (const auto& w : wrt) keep.insert(&TensorAccess::impl(w));
  auto slots = reverse_sweep(loss, keep, create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = slots.find(&TensorAccess::impl(w));
    if (it == slots.end()) {
      out.push_back(Tensor::zeros(w.shape()));
    } else if (!create_graph && !it->second.owned) {
      out.push_back(it->second.value.detach());
    } else {
      out.push_back(it->second.value);
    }
  }
  return out;
}

// ---- elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto &x = values(a), &y = values(b);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), "add", {a, b},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto &x = values(a), &y = values(b);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g, scale(g, -1.0)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto &x = values(a), &y = values(b);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [a, b](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{mul(g, b), mul(g, a)};
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] * factor;
  return make_result(x.shape(), std::move(out), "scale", {x}, [factor](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{scale(g, factor)};
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] + value;
  return make_result(x.shape(), std::move(out), "add_scalar", {x},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g}; });
}

Tensor pow_scalar(const Tensor& x, double exponent) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::pow(src[i], exponent);
  return make_result(x.shape(), std::move(out), "pow_scalar", {x}, [x, exponent](const Tensor& g, const Tensor&) {
    if (exponent == 1.0) return std::vector<Tensor>{g};
    return std::vector<Tensor>{scale(mul(g, pow_scalar(x, exponent - 1.0)), exponent)};
  });
}

Tensor relu(const Tensor& x) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > 0.0 ? src[i] : 0.0;
  return make_result(x.shape(), std::move(out), "relu", {x}, [x](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{mul(g, mask_tensor(x, 0.0))};
  });
}

Tensor clamp_unit(const Tensor& x) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::clamp(src[i], -1.0, 1.0);
  return make_result(x.shape(), std::move(out), "clamp_unit", {x},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g}; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  const auto& src = values(x);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::max(src[i], floor);
  return make_result(x.shape(), std::move(out), "clamp_min", {x}, [x, floor](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{mul(g, mask_tensor(x, floor))};
  });
}

// ---- shape ------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Shape original = x.shape();
  return make_result(std::move(shape), values(x), "reshape", {x}, [original](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{reshape(g, original)};
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  }
  return make_result({n, m}, std::move(out), "transpose", {x},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  require_rank(x, 1, "slice");
  const std::size_t total = x.dim(0);
  if (offset + length > total) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") exceeds " + shape_string(x.shape()));
  }
  const auto& src = values(x);
  std::vector<double> out(src.begin() + static_cast<std::ptrdiff_t>(offset),
                          src.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return make_result({length}, std::move(out), "slice", {x}, [offset, total](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{pad_slice(g, offset, total)};
  });
}

Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t length) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (offset + length > n) throw DimensionError("slice_cols: column range exceeds " + shape_string(x.shape()));
  const auto& src = values(x);
  std::vector<double> out(m * length);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < length; ++j) out[i * length + j] = src[i * n + offset + j];
  }
  return make_result({m, length}, std::move(out), "slice_cols", {x}, [offset, n](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{pad_cols(g, offset, n)};
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  std::vector<double> out;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    const auto& src = values(p);
    out.insert(out.end(), src.begin(), src.end());
    lengths.push_back(src.size());
  }
  const std::size_t total = out.size();
  return make_result({total}, std::move(out), "concat", {parts.begin(), parts.end()},
                     [lengths](const Tensor& g, const Tensor&) {
                       std::vector<Tensor> grads;
                       std::size_t offset = 0;
                       for (std::size_t len : lengths) {
                         grads.push_back(slice(g, offset, len));
                         offset += len;
                       }
                       return grads;
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t m = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row count mismatch " + shape_string(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = values(parts[k]);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = src[i * widths[k] + j];
    }
    offset += widths[k];
  }
  return make_result({m, total}, std::move(out), "concat_cols", {parts.begin(), parts.end()},
                     [widths](const Tensor& g, const Tensor&) {
                       std::vector<Tensor> grads;
                       std::size_t off = 0;
                       for (std::size_t w : widths) {
                         grads.push_back(slice_cols(g, off, w));
                         off += w;
                       }
                       return grads;
                     });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t n = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.size() != n) throw DimensionError("stack_rows: length mismatch " + shape_string(r.shape()));
    const auto& src = values(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  const std::size_t k = rows.size();
  return make_result({k, n}, std::move(out), "stack_rows", {rows.begin(), rows.end()},
                     [k](const Tensor& g, const Tensor&) {
                       std::vector<Tensor> grads;
                       for (std::size_t i = 0; i < k; ++i) grads.push_back(row(g, i));
                       return grads;
                     });
}

Tensor row(const Tensor& x, std::size_t index) {
  require_rank(x, 2, "row");
  const std::size_t idx[] = {index};
  return reshape(gather_rows(x, idx), {x.dim(1)});
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), n}, std::move(out), "gather_rows", {x}, [idx, m](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{scatter_rows(g, idx, m)};
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t num_rows) {
  require_rank(x, 2, "scatter_rows");
  if (x.dim(0) != rows.size()) throw DimensionError("scatter_rows: index count mismatch");
  const std::size_t n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(num_rows * n, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= num_rows) throw DimensionError("scatter_rows: row out of range");
    for (std::size_t j = 0; j < n; ++j) out[rows[i] * n + j] += src[i * n + j];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({num_rows, n}, std::move(out), "scatter_rows", {x}, [idx](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{gather_rows(g, idx)};
  });
}

Tensor tile_rows(const Tensor& v, std::size_t rows) {
  require_rank(v, 1, "tile_rows");
  const auto& src = values(v);
  std::vector<double> out;
  out.reserve(rows * src.size());
  for (std::size_t i = 0; i < rows; ++i) out.insert(out.end(), src.begin(), src.end());
  return make_result({rows, src.size()}, std::move(out), "tile_rows", {v},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{col_sum(g)}; });
}

Tensor tile_cols(const Tensor& v, std::size_t cols) {
  require_rank(v, 1, "tile_cols");
  const auto& src = values(v);
  std::vector<double> out(src.size() * cols);
  for (std::size_t i = 0; i < src.size(); ++i) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * cols), cols, src[i]);
  return make_result({src.size(), cols}, std::move(out), "tile_cols", {v},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{row_sum(g)}; });
}

// ---- reductions -----------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto& src = values(x);
  double total = 0.0;
  for (double v : src) total += v;
  Shape shape = x.shape();
  return make_result({}, {total}, "sum", {x}, [shape](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{broadcast_scalar(g, shape)};
  });
}

Tensor row_sum(const Tensor& x) {
  require_rank(x, 2, "row_sum");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += src[i * n + j];
  }
  return make_result({m}, std::move(out), "row_sum", {x},
                     [n](const Tensor& g, const Tensor&) { return std::vector<Tensor>{tile_cols(g, n)}; });
}

Tensor col_sum(const Tensor& x) {
  require_rank(x, 2, "col_sum");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += src[i * n + j];
  }
  return make_result({n}, std::move(out), "col_sum", {x},
                     [m](const Tensor& g, const Tensor&) { return std::vector<Tensor>{tile_rows(g, m)}; });
}

Tensor col_mean(const Tensor& x) {
  require_rank(x, 2, "col_mean");
  return scale(col_sum(x), 1.0 / static_cast<double>(x.dim(0)));
}

Tensor dot(const Tensor& u, const Tensor& v) {
  require_same_shape(u, v, "dot");
  return sum(mul(u, v));
}

// ---- broadcasting over one axis ----------------------------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() == 1) return add(x, bias);
  require_rank(x, 2, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  const auto &src = values(x), &b = values(bias);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = src[i * n + j] + b[j];
  }
  return make_result({m, n}, std::move(out), "add_bias", {x, bias},
                     [](const Tensor& g, const Tensor&) { return std::vector<Tensor>{g, col_sum(g)}; });
}

Tensor mul_rows(const Tensor& x, const Tensor& factors) {
  require_rank(x, 2, "mul_rows");
  require_rank(factors, 1, "mul_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (factors.dim(0) != m) {
    throw DimensionError("mul_rows: factors " + shape_string(factors.shape()) + " vs input " + shape_string(x.shape()));
  }
  const auto &src = values(x), &f = values(factors);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = src[i * n + j] * f[i];
  }
  return make_result({m, n}, std::move(out), "mul_rows", {x, factors}, [x, factors](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{mul_rows(g, factors), row_sum(mul(g, x))};
  });
}

Tensor mul_cols(const Tensor& x, const Tensor& factors) {
  require_rank(x, 2, "mul_cols");
  require_rank(factors, 1, "mul_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (factors.dim(0) != n) {
    throw DimensionError("mul_cols: factors " + shape_string(factors.shape()) + " vs input " + shape_string(x.shape()));
  }
  const auto &src = values(x), &f = values(factors);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = src[i * n + j] * f[j];
  }
  return make_result({m, n}, std::move(out), "mul_cols", {x, factors}, [x, factors](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{mul_cols(g, factors), col_sum(mul(g, x))};
  });
}

// ---- linear algebra and network ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto &x = values(a), &y = values(b);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<double> out(m * n);
  Eigen::Map<RowMajor>(out.data(), m, n).noalias() =
      Eigen::Map<const RowMajor>(x.data(), m, k) * Eigen::Map<const RowMajor>(y.data(), k, n);
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [a, b](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
}

namespace {

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& src = values(x);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* in = src.data() + i * n;
    double* o = out.data() + i * n;
    const double peak = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result({m, n}, std::move(out), "softmax", {x}, [](const Tensor& g, const Tensor& y) {
    Tensor gy = mul(g, y);
    return std::vector<Tensor>{sub(gy, mul_rows(y, row_sum(gy)))};
  });
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  if (rank < 1 || rank > 2) throw DimensionError("softmax: expected rank 1 or 2, got " + shape_string(x.shape()));
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  if (rank == 1) return reshape(softmax_rows(reshape(x, {1, x.dim(0)})), {x.dim(0)});
  if (ax == 1) return softmax_rows(x);
  return transpose(softmax_rows(transpose(x)));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw UsageError("layer_norm: eps must be positive");
  if (x.rank() == 1) return reshape(layer_norm(reshape(x, {1, x.dim(0)}), gain, bias, eps), {x.dim(0)});
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor mean = scale(row_sum(x), inv_n);
  Tensor centered = sub(x, tile_cols(mean, n));
  Tensor var = scale(row_sum(mul(centered, centered)), inv_n);
  Tensor inv_std = pow_scalar(add_scalar(var, eps), -0.5);
  Tensor normed = mul_rows(centered, inv_std);
  return add_bias(mul_cols(normed, gain), bias);
}

Tensor col_max(const Tensor& x) {
  require_rank(x, 2, "col_max");
  const std::size_t t = x.dim(0), c = x.dim(1);
  if (t == 0) throw InputError("col_max: empty input");
  const auto& src = values(x);
  std::vector<double> out(c);
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = src[j];
    for (std::size_t i = 1; i < t; ++i) {
      if (src[i * c + j] > best) {
        best = src[i * c + j];
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return make_result({c}, std::move(out), "col_max", {x}, [arg, t](const Tensor& g, const Tensor&) {
    return std::vector<Tensor>{scatter_positions(g, arg, t)};
  });
}

Tensor conv1d_maxpool(const Tensor& seq, const Tensor& filters) {
  require_rank(seq, 2, "conv1d_maxpool");
  require_rank(filters, 3, "conv1d_maxpool");
  if (seq.dim(0) == 0) throw InputError("conv1d_maxpool: empty sequence");
  const std::size_t width = filters.dim(0), c_in = filters.dim(1), c_out = filters.dim(2);
  if (seq.dim(1) != c_in) {
    throw DimensionError("conv1d_maxpool: sequence " + shape_string(seq.shape()) + " vs filters " +
                         shape_string(filters.shape()));
  }
  Tensor windows = unfold(seq, width);
  Tensor responses = matmul(windows, reshape(filters, {width * c_in, c_out}));
  return col_max(responses);
}

Tensor cosine(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "cosine");
  require_same_shape(u, v, "cosine");
  Tensor uu = dot(u, u);
  Tensor vv = dot(v, v);
  if (uu.item() == 0.0) throw NumericError("cosine: first argument (u) has zero norm");
  if (vv.item() == 0.0) throw NumericError("cosine: second argument (v) has zero norm");
  Tensor denom = clamp_min(pow_scalar(mul(uu, vv), 0.5), kCosineEps);
  return clamp_unit(mul(dot(u, v), pow_scalar(denom, -1.0)));
}

}  // namespace oovforge

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mtt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class Tape;

/// Dense row-major float64 tensor. Copies share the underlying buffer and ops
/// never mutate their inputs, so value semantics are cheap. A tensor joins a
/// computation graph once a Tape watches it or an op derives it from watched
/// inputs; without a tape, the same ops run as plain inference.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const;
  bool defined() const { return data_ != nullptr; }

  const std::vector<double>& data() const { return *data_; }
  /// In-place access for initialization and optimizer updates. Must not be
  /// called on tensors recorded on a live tape.
  std::vector<double>& mutable_data() { return *data_; }

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t i, std::size_t j) const {
    return (*data_)[i * shape_[1] + j];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }
  /// Value of a one-element tensor.
  double item() const;

  int node() const { return node_; }
  Tape* tape() const { return tape_; }
  /// Disconnects the tensor from its tape. Callers that keep tensors beyond
  /// a tape's lifetime (e.g. model parameters across training steps) must
  /// detach them before the tape goes away.
  void detach() {
    node_ = -1;
    tape_ = nullptr;
  }

 private:
  friend class Tape;
  friend Tensor record_op(Tape* tape, Shape shape, std::vector<double> data,
                          std::vector<int> parents,
                          std::function<void(const std::vector<double>&, Tape&)> pull);

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  int node_ = -1;
  Tape* tape_ = nullptr;
};

/// Reverse-mode gradient tape. Ops append nodes in execution order, which is
/// by construction a topological order; backward() replays them in reverse.
/// A tape and the tensors recorded on it are confined to one thread.
class Tape {
 public:
  using PullFn = std::function<void(const std::vector<double>& out_grad, Tape&)>;

  /// Registers `t` as a differentiable leaf.
  void watch(Tensor& t);

  /// Reverse sweep from a one-element loss recorded on this tape. Gradients
  /// accumulate by summation across fan-out; nodes not reachable from the
  /// loss end up with zero gradients.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() w.r.t. a watched/recorded tensor,
  /// shaped like its value.
  Tensor grad(const Tensor& t) const;

  /// Drops all nodes and gradients. Tensors recorded before the reset keep
  /// stale node ids and must not be fed into further taped ops.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

  // Used by op implementations.
  int add_node(Shape shape, PullFn pull);
  /// Gradient buffer for a node, zero-initialized on first touch.
  std::vector<double>& grad_buffer(int node);

 private:
  struct Node {
    Shape shape;
    PullFn pull;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

/// Elementwise finiteness check; throws std::domain_error naming `where` on
/// NaN/Inf. Op boundaries call this when debug checks are on.
void check_finite(const Tensor& t, const char* where);

/// Toggles per-op finiteness assertions (default on). Returns prior value.
bool set_debug_checks(bool enabled);
bool debug_checks_enabled();

// ---- differentiable primitives ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Right-aligned broadcast (missing or size-1 axes expand); backward sums
/// over the expanded axes.
Tensor broadcast_to(const Tensor& a, Shape shape);
/// Normalizes the last axis to zero mean / unit variance, then applies
/// elementwise gain and bias (both shaped like the last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// 2-D convolution over an H x W x Cin input with kh x kw x Cin x Cout
/// weights and a Cout bias; zero padding `pad` on all sides.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

/// Central-difference gradient of a scalar-valued function, the independent
/// oracle used by the gradient-check suite.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps = 1e-5);

}  // namespace mtt

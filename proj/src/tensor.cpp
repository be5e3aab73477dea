#include "mtt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mtt {

namespace {

std::atomic<bool> g_debug_checks{true};

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

Tape* merge_tapes(const Tensor& a, const Tensor& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta && tb && ta != tb)
    throw std::invalid_argument("op inputs are recorded on different tapes");
  return ta ? ta : tb;
}

// outer * n * inner decomposition around `axis`.
void axis_split(const Shape& s, std::size_t axis, std::size_t& outer,
                std::size_t& n, std::size_t& inner) {
  if (axis >= s.size())
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(s));
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (std::size_t d : shape_)
    if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape " + shape_str(shape_));
  if (shape_size(shape_) != data.size())
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " needs " +
                                std::to_string(shape_size(shape_)) + " values, got " +
                                std::to_string(data.size()));
  data_ = std::make_shared<std::vector<double>>(std::move(data));
  check_finite(*this, "Tensor()");
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

double Tensor::item() const {
  if (size() != 1)
    throw std::invalid_argument("Tensor::item: tensor has " +
                                std::to_string(size()) + " elements");
  return (*data_)[0];
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw std::domain_error(std::string(where) + ": non-finite value (NaN/Inf)");
}

bool set_debug_checks(bool enabled) { return g_debug_checks.exchange(enabled); }
bool debug_checks_enabled() { return g_debug_checks.load(); }

// ---- tape ----

void Tape::watch(Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("Tape::watch: undefined tensor");
  if (t.tape_ == this && t.node_ >= 0) return;
  t.tape_ = this;
  t.node_ = add_node(t.shape_, nullptr);
}

int Tape::add_node(Shape shape, PullFn pull) {
  nodes_.push_back(Node{std::move(shape), std::move(pull)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(shape_size(nodes_[static_cast<std::size_t>(node)].shape), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a one-element tensor, got shape " +
                                shape_str(loss.shape()));
  if (loss.tape_ != this || loss.node_ < 0)
    throw std::invalid_argument("backward: loss was not recorded on this tape");
  grads_.assign(nodes_.size(), {});
  grad_buffer(loss.node_)[0] = 1.0;
  for (int i = loss.node_; i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;  // not reachable from the loss
    auto& pull = nodes_[static_cast<std::size_t>(i)].pull;
    if (pull) pull(g, *this);
  }
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.tape_ != this || t.node_ < 0)
    throw std::invalid_argument("Tape::grad: tensor is not on this tape");
  auto idx = static_cast<std::size_t>(t.node_);
  if (idx >= grads_.size() || grads_[idx].empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), grads_[idx]);
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
}

// Builds the output tensor of an op and records it when a tape is active.
Tensor record_op(Tape* tape, Shape shape, std::vector<double> data,
                 std::vector<int> parents,
                 std::function<void(const std::vector<double>&, Tape&)> pull) {
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = std::make_shared<std::vector<double>>(std::move(data));
  if (debug_checks_enabled()) check_finite(out, "op output");
  if (tape) {
    bool any = false;
    for (int p : parents)
      if (p >= 0) any = true;
    if (any) {
      out.tape_ = tape;
      out.node_ = tape->add_node(out.shape_, std::move(pull));
    }
  }
  return out;
}

// ---- primitives ----

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tape* tape = merge_tapes(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  int pa = a.node(), pb = b.node();
  return record_op(tape, a.shape(), std::move(out), {pa, pb},
                   [pa, pb](const std::vector<double>& g, Tape& t) {
                     if (pa >= 0) {
                       auto& ga = t.grad_buffer(pa);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (pb >= 0) {
                       auto& gb = t.grad_buffer(pb);
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                     }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tape* tape = merge_tapes(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  int pa = a.node(), pb = b.node();
  return record_op(tape, a.shape(), std::move(out), {pa, pb},
                   [pa, pb](const std::vector<double>& g, Tape& t) {
                     if (pa >= 0) {
                       auto& ga = t.grad_buffer(pa);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (pb >= 0) {
                       auto& gb = t.grad_buffer(pb);
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tape* tape = merge_tapes(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  int pa = a.node(), pb = b.node();
  return record_op(tape, a.shape(), std::move(out), {pa, pb},
                   [pa, pb, a, b](const std::vector<double>& g, Tape& t) {
                     if (pa >= 0) {
                       auto& ga = t.grad_buffer(pa);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
                     }
                     if (pb >= 0) {
                       auto& gb = t.grad_buffer(pb);
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
                     }
                   });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  int pa = a.node();
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, c](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                   });
}

Tensor add_const(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c;
  int pa = a.node();
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bd[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  Tape* tape = merge_tapes(a, b);
  int pa = a.node(), pb = b.node();
  return record_op(
      tape, {m, n}, std::move(out), {pa, pb},
      [pa, pb, a, b, m, k, n](const std::vector<double>& g, Tape& t) {
        const auto& ad = a.data();
        const auto& bd = b.data();
        if (pa >= 0) {  // dA = G * B^T
          auto& ga = t.grad_buffer(pa);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = &g[i * n];
              const double* brow = &bd[p * n];
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
        }
        if (pb >= 0) {  // dB = A^T * G
          auto& gb = t.grad_buffer(pb);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = ad[i * k + p];
              if (aip == 0.0) continue;
              const double* grow = &g[i * n];
              double* gbrow = &gb[p * n];
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  int pa = a.node();
  return record_op(a.tape(), {n, m}, std::move(out), {pa},
                   [pa, m, n](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                   });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  int pa = a.node();
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, a](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (a[i] > 0.0) ga[i] += g[i];
                   });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
  int pa = a.node();
  std::vector<double> saved = out;
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, saved = std::move(saved)](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * saved[i];
                   });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
  int pa = a.node();
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, a](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
                   });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a[i]);
  int pa = a.node();
  std::vector<double> saved = out;
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, saved = std::move(saved)](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i)
                       ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
                   });
}

Tensor softplus(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a[i];
    out[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  int pa = a.node();
  return record_op(a.tape(), a.shape(), std::move(out), {pa},
                   [pa, a](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i)
                       ga[i] += g[i] * stable_sigmoid(a[i]);
                   });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  std::size_t outer, n, inner;
  axis_split(a.shape(), axis, outer, n, inner);
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i)
        mx = std::max(mx, a[(o * n + i) * inner + in]);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(a[(o * n + i) * inner + in] - mx);
        out[(o * n + i) * inner + in] = e;
        z += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[(o * n + i) * inner + in] /= z;
    }
  int pa = a.node();
  std::vector<double> saved = out;
  return record_op(
      a.tape(), a.shape(), std::move(out), {pa},
      [pa, saved = std::move(saved), outer, n, inner](const std::vector<double>& g, Tape& t) {
        auto& ga = t.grad_buffer(pa);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              std::size_t idx = (o * n + i) * inner + in;
              dot += g[idx] * saved[idx];
            }
            for (std::size_t i = 0; i < n; ++i) {
              std::size_t idx = (o * n + i) * inner + in;
              ga[idx] += saved[idx] * (g[idx] - dot);
            }
          }
      });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  std::size_t outer, n, inner;
  axis_split(a.shape(), axis, outer, n, inner);
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i)
        mx = std::max(mx, a[(o * n + i) * inner + in]);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        z += std::exp(a[(o * n + i) * inner + in] - mx);
      double lz = mx + std::log(z);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t idx = (o * n + i) * inner + in;
        out[idx] = a[idx] - lz;
      }
    }
  int pa = a.node();
  std::vector<double> saved = out;
  return record_op(
      a.tape(), a.shape(), std::move(out), {pa},
      [pa, saved = std::move(saved), outer, n, inner](const std::vector<double>& g, Tape& t) {
        auto& ga = t.grad_buffer(pa);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            double gsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) gsum += g[(o * n + i) * inner + in];
            for (std::size_t i = 0; i < n; ++i) {
              std::size_t idx = (o * n + i) * inner + in;
              ga[idx] += g[idx] - std::exp(saved[idx]) * gsum;
            }
          }
      });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  int pa = a.node();
  std::size_t sz = a.size();
  return record_op(a.tape(), Shape{}, {acc}, {pa},
                   [pa, sz](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < sz; ++i) ga[i] += g[0];
                   });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  std::size_t outer, n, inner;
  axis_split(a.shape(), axis, outer, n, inner);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t in = 0; in < inner; ++in)
        out[o * inner + in] += a[(o * n + i) * inner + in];
  int pa = a.node();
  return record_op(a.tape(), std::move(out_shape), std::move(out), {pa},
                   [pa, outer, n, inner](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t in = 0; in < inner; ++in)
                           ga[(o * n + i) * inner + in] += g[o * inner + in];
                   });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.shape()[axis]));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    shape_error("reshape", a.shape(), shape);
  std::vector<double> out = a.data();
  int pa = a.node();
  return record_op(a.tape(), std::move(shape), std::move(out), {pa},
                   [pa](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end) {
  std::size_t outer, n, inner;
  axis_split(a.shape(), axis, outer, n, inner);
  if (start >= end || end > n)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(end) + ") invalid for axis size " +
                                std::to_string(n));
  const std::size_t m = end - start;
  Shape out_shape = a.shape();
  out_shape[axis] = m;
  std::vector<double> out(outer * m * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < m; ++i)
      std::memcpy(&out[(o * m + i) * inner], &a.data()[(o * n + start + i) * inner],
                  inner * sizeof(double));
  int pa = a.node();
  return record_op(a.tape(), std::move(out_shape), std::move(out), {pa},
                   [pa, outer, n, inner, m, start](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t in = 0; in < inner; ++in)
                           ga[(o * n + start + i) * inner + in] += g[(o * m + i) * inner + in];
                   });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != ref.size()) shape_error("concat", ref, p.shape());
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != axis && p.shape()[i] != ref[i]) shape_error("concat", ref, p.shape());
    total += p.shape()[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  std::size_t outer, n, inner;
  axis_split(out_shape, axis, outer, n, inner);
  std::vector<double> out(outer * n * inner);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::size_t pn = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(&out[(o * n + off) * inner], &p.data()[o * pn * inner],
                  pn * inner * sizeof(double));
    off += pn;
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* pt = p.tape();
    if (pt) {
      if (tape && tape != pt)
        throw std::invalid_argument("concat inputs are recorded on different tapes");
      tape = pt;
    }
  }
  std::vector<int> parents;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    parents.push_back(p.node());
    widths.push_back(p.shape()[axis]);
  }
  return record_op(tape, std::move(out_shape), std::move(out), parents,
                   [parents, widths, outer, n, inner](const std::vector<double>& g, Tape& t) {
                     std::size_t off = 0;
                     for (std::size_t pi = 0; pi < parents.size(); ++pi) {
                       std::size_t pn = widths[pi];
                       if (parents[pi] >= 0) {
                         auto& ga = t.grad_buffer(parents[pi]);
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < pn; ++i)
                             for (std::size_t in = 0; in < inner; ++in)
                               ga[(o * pn + i) * inner + in] += g[(o * n + off + i) * inner + in];
                       }
                       off += pn;
                     }
                   });
}

Tensor broadcast_to(const Tensor& a, Shape shape) {
  const std::size_t out_rank = shape.size();
  if (a.rank() > out_rank) shape_error("broadcast_to", a.shape(), shape);
  // Right-align the input shape, padding with leading 1s.
  Shape in(out_rank, 1);
  for (std::size_t i = 0; i < a.rank(); ++i)
    in[out_rank - a.rank() + i] = a.shape()[i];
  for (std::size_t i = 0; i < out_rank; ++i)
    if (in[i] != shape[i] && in[i] != 1) shape_error("broadcast_to", a.shape(), shape);

  std::vector<std::size_t> in_strides(out_rank, 0), out_strides(out_rank, 0);
  std::size_t st = 1;
  for (std::size_t i = out_rank; i-- > 0;) {
    in_strides[i] = (in[i] == 1) ? 0 : st;
    if (in[i] != 1) st *= in[i];
  }
  st = 1;
  for (std::size_t i = out_rank; i-- > 0;) {
    out_strides[i] = st;
    st *= shape[i];
  }
  const std::size_t out_size = shape_size(shape);
  std::vector<double> out(out_size);
  std::vector<std::size_t> src(out_size);
  for (std::size_t idx = 0; idx < out_size; ++idx) {
    std::size_t rem = idx, si = 0;
    for (std::size_t i = 0; i < out_rank; ++i) {
      std::size_t c = rem / out_strides[i];
      rem %= out_strides[i];
      si += c * in_strides[i];
    }
    src[idx] = si;
    out[idx] = a[si];
  }
  int pa = a.node();
  return record_op(a.tape(), std::move(shape), std::move(out), {pa},
                   [pa, src = std::move(src)](const std::vector<double>& g, Tape& t) {
                     auto& ga = t.grad_buffer(pa);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[src[i]] += g[i];
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    shape_error("layer_norm", x.shape(), gain.shape());
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> nhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x.data()[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double nh = (xr[j] - mu) * is;
      nhat[r * d + j] = nh;
      out[r * d + j] = nh * gain[j] + bias[j];
    }
  }
  Tape* tape = merge_tapes(x, gain);
  if (!tape) tape = bias.tape();
  if (bias.tape() && tape && bias.tape() != tape)
    throw std::invalid_argument("layer_norm inputs are recorded on different tapes");
  int px = x.node(), pg = gain.node(), pb = bias.node();
  return record_op(
      tape, x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, gain, nhat = std::move(nhat), inv_std = std::move(inv_std), rows,
       d](const std::vector<double>& g, Tape& t) {
        if (pb >= 0) {
          auto& gb = t.grad_buffer(pb);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (pg >= 0) {
          auto& gg = t.grad_buffer(pg);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * nhat[r * d + j];
        }
        if (px >= 0) {
          auto& gx = t.grad_buffer(px);
          std::vector<double> gp(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              gp[j] = g[r * d + j] * gain[j];
              m1 += gp[j];
              m2 += gp[j] * nhat[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              gx[r * d + j] += (gp[j] - m1 - nhat[r * d + j] * m2) * inv_std[r];
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1)
    throw std::invalid_argument("conv2d: expected HxWxC input, khxkwxCinxCout weights, Cout bias");
  const std::size_t H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  const std::size_t kh = w.shape()[0], kw = w.shape()[1];
  const std::size_t F = w.shape()[3];
  if (w.shape()[2] != C || b.shape()[0] != F) shape_error("conv2d", x.shape(), w.shape());
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t OH = (H + 2 * pad - kh) / stride + 1;
  const std::size_t OW = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(OH * OW * F);
  const auto& xd = x.data();
  const auto& wd = w.data();
  for (std::size_t oy = 0; oy < OH; ++oy)
    for (std::size_t ox = 0; ox < OW; ++ox)
      for (std::size_t f = 0; f < F; ++f) {
        double acc = b[f];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const double* xp = &xd[(static_cast<std::size_t>(iy) * W +
                                    static_cast<std::size_t>(ix)) * C];
            const double* wp = &wd[((ky * kw + kx) * C) * F + f];
            for (std::size_t c = 0; c < C; ++c) acc += xp[c] * wp[c * F];
          }
        }
        out[(oy * OW + ox) * F + f] = acc;
      }
  Tape* tape = merge_tapes(x, w);
  if (!tape) tape = b.tape();
  if (b.tape() && tape && b.tape() != tape)
    throw std::invalid_argument("conv2d inputs are recorded on different tapes");
  int px = x.node(), pw = w.node(), pb = b.node();
  return record_op(
      tape, {OH, OW, F}, std::move(out), {px, pw, pb},
      [px, pw, pb, x, w, stride, pad, H, W, C, kh, kw, F, OH,
       OW](const std::vector<double>& g, Tape& t) {
        const auto& xd = x.data();
        const auto& wd = w.data();
        std::vector<double>* gx = px >= 0 ? &t.grad_buffer(px) : nullptr;
        std::vector<double>* gw = pw >= 0 ? &t.grad_buffer(pw) : nullptr;
        std::vector<double>* gb = pb >= 0 ? &t.grad_buffer(pb) : nullptr;
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox)
            for (std::size_t f = 0; f < F; ++f) {
              const double go = g[(oy * OW + ox) * F + f];
              if (gb) (*gb)[f] += go;
              if (go == 0.0) continue;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t xoff = (static_cast<std::size_t>(iy) * W +
                                            static_cast<std::size_t>(ix)) * C;
                  const std::size_t woff = (ky * kw + kx) * C * F + f;
                  for (std::size_t c = 0; c < C; ++c) {
                    if (gw) (*gw)[woff + c * F] += xd[xoff + c] * go;
                    if (gx) (*gx)[xoff + c] += wd[woff + c * F] * go;
                  }
                }
              }
            }
      });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  std::vector<double> g(x.size());
  std::vector<double> probe = x.data();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(Tensor(x.shape(), probe));
    probe[i] = orig - eps;
    const double fm = f(Tensor(x.shape(), probe));
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return Tensor(x.shape(), std::move(g));
}

}  // namespace mtt

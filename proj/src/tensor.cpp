#include "translit/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "translit/errors.hpp"

namespace translit::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// C[m, n] (+)= op(A) * op(B) with op(A) of shape [m, k] and op(B) of shape [k, n].
void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool accumulate) {
  const auto em = static_cast<Eigen::Index>(m), en = static_cast<Eigen::Index>(n), ek = static_cast<Eigen::Index>(k);
  ConstMap A(a, trans_a ? ek : em, trans_a ? em : ek);
  ConstMap B(b, trans_b ? en : ek, trans_b ? ek : en);
  MutMap C(c, em, en);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) C.noalias() += A * B;
  else if (trans_a && !trans_b) C.noalias() += A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() += A * B.transpose();
  else C.noalias() += A.transpose() * B.transpose();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

// Number of repeats of `small` inside `big` when small's shape is a suffix of big's.
std::size_t suffix_repeats(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return 0;
  for (std::size_t i = 0; i < small.size(); ++i)
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return 0;
  return shape_size(big) / shape_size(small);
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

void accumulate(Tape& tape, Var v, const Tensor& g) {
  if (!tape.needs_grad(v)) return;
  auto dst = tape.grad_accumulator(v).data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw TapeError("operands recorded on different tapes");
  return a.tape();
}

enum class BinaryKind { add, sub, mul };

Var binary(Var a, Var b, BinaryKind kind) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const char* name = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
  bool a_big = true;
  std::size_t reps = 1;
  if (av.shape() != bv.shape()) {
    if (std::size_t r = suffix_repeats(av.shape(), bv.shape()); r > 0) {
      reps = r;
    } else if (std::size_t r2 = suffix_repeats(bv.shape(), av.shape()); r2 > 0) {
      reps = r2;
      a_big = false;
    } else {
      shape_error(name, av.shape(), bv.shape());
    }
  }
  const Tensor& big = a_big ? av : bv;
  const Tensor& small = a_big ? bv : av;
  const std::size_t n_small = small.size();
  Tensor out(big.shape());
  auto o = out.data();
  auto x = big.data();
  auto y = small.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < n_small; ++i) {
      std::size_t j = r * n_small + i;
      double lhs = a_big ? x[j] : y[i];
      double rhs = a_big ? y[i] : x[j];
      o[j] = kind == BinaryKind::add ? lhs + rhs : kind == BinaryKind::sub ? lhs - rhs : lhs * rhs;
    }
  }
  return tape.record(std::move(out), {a, b}, [a, b, kind, a_big, reps, n_small](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    auto gd = g.data();
    auto grad_for = [&](Var v, bool is_a) {
      if (!t.needs_grad(v)) return;
      bool is_big = (is_a == a_big);
      const Tensor& other = is_a ? bv : av;
      double sign = (kind == BinaryKind::sub && !is_a) ? -1.0 : 1.0;
      auto acc = t.grad_accumulator(v).data();
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < n_small; ++i) {
          std::size_t j = r * n_small + i;
          double local = 1.0;
          if (kind == BinaryKind::mul) {
            bool other_big = !is_big;
            local = other.data()[other_big ? j : i];
          }
          acc[is_big ? j : i] += sign * gd[j] * local;
        }
      }
    };
    grad_for(a, true);
    grad_for(b, false);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << ']';
  return ss.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("rank-0 tensors are not allowed; use shape [1]");
  for (auto d : shape_)
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_string(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("rank-0 tensors are not allowed; use shape [1]");
  for (auto d : shape_)
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_string(shape_));
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

std::size_t ParameterStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  std::size_t i = params_.size();
  index_.emplace(name, i);
  Tensor grad(init.shape());
  params_.push_back({std::move(name), std::move(init), std::move(grad)});
  return i;
}

Parameter& ParameterStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.storage().begin(), p.grad.storage().end(), 0.0);
}

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw TapeError("tape overflow");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = parameter_nodes_.find(&p); it != parameter_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.needs_grad = record_;
  n.param = &p;
  Var v = push(std::move(n));
  parameter_nodes_.emplace(&p, v.id_);
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backprop backprop) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backprop));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (p.tape_ != this) throw TapeError("operand recorded on a different tape");
      n.needs_grad = n.needs_grad || nodes_[p.id_].needs_grad;
    }
  }
  if (n.needs_grad) n.backprop = std::move(backprop);
  return push(std::move(n));
}

Tensor& Tape::grad_accumulator(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw TapeError("loss recorded on a different tape");
  if (backward_done_) throw TapeError("backward already ran on this tape");
  if (nodes_[loss.id_].value.shape() != Shape{1})
    throw NonScalarBackward("backward needs a [1] loss, got " + shape_string(nodes_[loss.id_].value.shape()));
  backward_done_ = true;
  if (!nodes_[loss.id_].needs_grad) return;
  grad_accumulator(loss)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backprop) n.backprop(*this, n.grad);
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

Var add(Var a, Var b) { return binary(a, b, BinaryKind::add); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::sub); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::mul); }

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v *= factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += factor * g[i];
  });
}

Var add_scalar(Var a, double value) {
  Tensor out = a.value();
  for (auto& v : out.storage()) v += value;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) { accumulate(t, a, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || av.shape().back() != bv.dim(0)) shape_error("matmul", av.shape(), bv.shape());
  const std::size_t k = bv.dim(0), n = bv.dim(1), m = av.size() / k;
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  gemm(av.data().data(), false, bv.data().data(), false, out.data().data(), m, n, k, false);
  return tape.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& g) {
    if (t.needs_grad(a))
      gemm(g.data().data(), false, t.value(b).data().data(), true, t.grad_accumulator(a).data().data(), m, k, n,
           true);
    if (t.needs_grad(b))
      gemm(t.value(a).data().data(), true, g.data().data(), false, t.grad_accumulator(b).data().data(), k, n, m,
           true);
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) shape_error("bmm", av.shape(), bv.shape());
  const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
  const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
  const std::size_t n = transpose_b ? bv.dim(1) : bv.dim(2);
  if (bk != k) shape_error("bmm", av.shape(), bv.shape());
  Tensor out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i)
    gemm(av.data().data() + i * m * k, false, bv.data().data() + i * k * n, transpose_b,
         out.data().data() + i * m * n, m, n, k, false);
  return tape.record(std::move(out), {a, b}, [a, b, batch, m, n, k, transpose_b](Tape& t, const Tensor& g) {
    const double* gd = g.data().data();
    if (t.needs_grad(a)) {
      double* ga = t.grad_accumulator(a).data().data();
      const double* bd = t.value(b).data().data();
      // dA = dC * op(B)^T
      for (std::size_t i = 0; i < batch; ++i)
        gemm(gd + i * m * n, false, bd + i * k * n, !transpose_b, ga + i * m * k, m, k, n, true);
    }
    if (t.needs_grad(b)) {
      double* gb = t.grad_accumulator(b).data().data();
      const double* ad = t.value(a).data().data();
      for (std::size_t i = 0; i < batch; ++i) {
        if (transpose_b)  // dB[n, k] = dC^T * A
          gemm(gd + i * m * n, true, ad + i * m * k, false, gb + i * k * n, n, k, m, true);
        else  // dB[k, n] = A^T * dC
          gemm(ad + i * m * k, true, gd + i * m * n, false, gb + i * k * n, k, n, m, true);
      }
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  });
}

Var permute(Var a, std::initializer_list<std::size_t> axes) {
  return permute(a, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Var permute(Var a, std::span<const std::size_t> axes) {
  const Tensor& av = a.value();
  const std::size_t r = av.rank();
  if (axes.size() != r) throw ShapeError("permute: axis count does not match rank of " + shape_string(av.shape()));
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw ShapeError("permute: invalid axis list");
    seen[axes[i]] = true;
    out_shape[i] = av.dim(axes[i]);
  }
  auto in_strides = strides_of(av.shape());
  // source offset for each output element
  std::vector<std::size_t> src_index(av.size());
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t flat = 0; flat < av.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += counter[i] * in_strides[axes[i]];
    src_index[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t i = 0; i < src_index.size(); ++i) out[i] = av[src_index[i]];
  return a.tape().record(std::move(out), {a}, [a, src_index = std::move(src_index)](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    for (std::size_t i = 0; i < src_index.size(); ++i) acc[src_index[i]] += g[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& tape = parts[0].tape();
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto src = p.value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    widths.push_back(w);
    offset += w;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [ps, widths, outer, out_row](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::size_t w = widths[k];
      if (t.needs_grad(ps[k])) {
        auto acc = t.grad_accumulator(ps[k]).data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < w; ++j) acc[o * w + j] += g[o * out_row + offset + j];
      }
      offset += w;
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis])
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t in_row = s[axis] * inner, out_row = length * inner, off = start * inner;
  Tensor out(out_shape);
  const auto src = a.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < out_row; ++j) out[o * out_row + j] = src[o * in_row + off + j];
  return a.tape().record(std::move(out), {a}, [a, outer, in_row, out_row, off](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < out_row; ++j) acc[o * in_row + off + j] += g[o * out_row + j];
  });
}

Var stack(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, axis);
}

namespace {

// Elementwise map; `deriv` gives df/dx at the input value.
template <class F, class D>
Var elementwise(Var a, F f, D deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape().record(std::move(out), {a}, [a, deriv](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(a);
    auto acc = t.grad_accumulator(a).data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * deriv(x[i]);
  });
}

}  // namespace

Var tanh(Var a) {
  return elementwise(a, [](double x) { return std::tanh(x); },
                     [](double x) {
                       double y = std::tanh(x);
                       return 1.0 - y * y;
                     });
}

Var sigmoid(Var a) {
  auto sig = [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
  return elementwise(a, sig, [sig](double x) {
    double y = sig(x);
    return y * (1.0 - y);
  });
}

Var relu(Var a) {
  return elementwise(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return elementwise(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t n = av.shape().back(), rows = av.size() / n;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * n;
    double* y = out.data().data() + r * n;
    double mx = *std::max_element(x, x + n);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  Tape& tape = a.tape();
  auto holder = std::make_shared<Tensor>();
  if (tape.recording()) *holder = out;
  return tape.record(std::move(out), {a}, [a, holder, n, rows](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    const Tensor& y = *holder;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
      for (std::size_t i = 0; i < n; ++i) acc[r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t n = av.shape().back(), rows = av.size() / n;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * n;
    double* y = out.data().data() + r * n;
    double mx = *std::max_element(x, x + n);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - mx);
    double lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  Tape& tape = a.tape();
  auto holder = std::make_shared<Tensor>();
  if (tape.recording()) *holder = out;
  return tape.record(std::move(out), {a}, [a, holder, n, rows](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    const Tensor& y = *holder;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0;
      for (std::size_t i = 0; i < n; ++i) gs += g[r * n + i];
      for (std::size_t i = 0; i < n; ++i) acc[r * n + i] += g[r * n + i] - std::exp(y[r * n + i]) * gs;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t d = xv.shape().back(), rows = xv.size() / d;
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d})
    shape_error("layer_norm", xv.shape(), gain.value().shape());
  const auto gv = gain.value().data();
  const auto bv = bias.value().data();
  Tensor out(xv.shape());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * d;
    double mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      double h = (xr[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  return tape.record(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, d, rows](Tape& t, const Tensor& g) {
    const auto gv = t.value(gain).data();
    if (t.needs_grad(gain)) {
      auto acc = t.grad_accumulator(gain).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) acc[i] += g[r * d + i] * (*xhat)[r * d + i];
    }
    if (t.needs_grad(bias)) {
      auto acc = t.grad_accumulator(bias).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < d; ++i) acc[i] += g[r * d + i];
    }
    if (t.needs_grad(x)) {
      auto acc = t.grad_accumulator(x).data();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0, m2 = 0;
        for (std::size_t i = 0; i < d; ++i) {
          double gh = g[r * d + i] * gv[i];
          m1 += gh;
          m2 += gh * (*xhat)[r * d + i];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        for (std::size_t i = 0; i < d; ++i) {
          double gh = g[r * d + i] * gv[i];
          acc[r * d + i] += (*inv_std)[r] * (gh - m1 - (*xhat)[r * d + i] * m2);
        }
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding table must be [V, d], got " + shape_string(tv.shape()));
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  if (ids.empty()) throw ShapeError("embedding lookup of zero ids");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw IndexError("embedding id " + std::to_string(id) + " outside table of " + std::to_string(vocab) + " rows");
  Tensor out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[r]) * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [table, idv = std::move(idv), d](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(table).data();
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t i = 0; i < d; ++i) acc[static_cast<std::size_t>(idv[r]) * d + i] += g[r * d + i];
  });
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> mask, double label_smoothing) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("cross_entropy expects [T, V] logits, got " + shape_string(lv.shape()));
  const std::size_t rows = lv.dim(0), vocab = lv.dim(1);
  if (targets.size() != rows || mask.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(mask.size()) + " mask entries for " + std::to_string(rows) + " rows");
  double weight = 0;
  for (double m : mask) weight += m;
  if (weight <= 0) throw EmptyLossError("every position is masked");
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab)
      throw IndexError("target id " + std::to_string(targets[r]) + " outside vocabulary of " + std::to_string(vocab));
    const double* x = lv.data().data() + r * vocab;
    double mx = *std::max_element(x, x + vocab);
    double z = 0;
    for (std::size_t i = 0; i < vocab; ++i) z += std::exp(x[i] - mx);
    double lse = mx + std::log(z);
    for (std::size_t i = 0; i < vocab; ++i) (*probs)[r * vocab + i] = std::exp(x[i] - lse);
    if (mask[r] == 0.0) continue;
    double nll = -(x[targets[r]] - lse);
    if (label_smoothing > 0) {
      double mean_nll = 0;
      for (std::size_t i = 0; i < vocab; ++i) mean_nll += -(x[i] - lse);
      mean_nll /= static_cast<double>(vocab);
      nll = (1.0 - label_smoothing) * nll + label_smoothing * mean_nll;
    }
    loss += mask[r] * nll;
  }
  loss /= weight;
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<double> mv(mask.begin(), mask.end());
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [logits, probs, tv = std::move(tv), mv = std::move(mv), weight, vocab, label_smoothing](Tape& t,
                                                                                               const Tensor& g) {
        auto acc = t.grad_accumulator(logits).data();
        const double go = g[0];
        const double uniform = label_smoothing / static_cast<double>(vocab);
        for (std::size_t r = 0; r < tv.size(); ++r) {
          if (mv[r] == 0.0) continue;
          const double w = go * mv[r] / weight;
          for (std::size_t i = 0; i < vocab; ++i) {
            double q = uniform + (static_cast<int>(i) == tv[r] ? 1.0 - label_smoothing : 0.0);
            acc[r * vocab + i] += w * ((*probs)[r * vocab + i] - q);
          }
        }
      });
}

Var sum(Var a) {
  double s = 0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    auto acc = t.grad_accumulator(a).data();
    for (auto& v : acc) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  Tensor m(a.shape());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  for (auto& v : m.storage()) v = u(rng) < rate ? 0.0 : keep;
  return mul(a, a.tape().constant(std::move(m)));
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), kGradientFloor);
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  Tape tape;
  Var xv = tape.variable(x);
  Var loss = f(tape, xv);
  tape.backward(loss);
  Tensor analytic = tape.grad(xv);
  auto eval = [&](const Tensor& point) {
    Tape t(false);
    return f(t, t.variable(point)).value().item();
  };
  double worst = 0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = eval(probe);
    probe[i] = orig - h;
    const double fm = eval(probe);
    probe[i] = orig;
    const double central = (fp - fm) / (2 * h);
    worst = std::max(worst, relative_error(analytic[i], central));
  }
  return worst;
}

double finite_difference_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params, double h) {
  for (Parameter* p : params) p->grad = Tensor(p->value.shape());
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape t(false);
    return f(t).value().item();
  };
  double worst = 0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = eval();
      p->value[i] = orig - h;
      const double fm = eval();
      p->value[i] = orig;
      const double central = (fp - fm) / (2 * h);
      const double analytic = p->grad[i];
      worst = std::max(worst, relative_error(analytic, central));
    }
  }
  return worst;
}

}  // namespace translit::ad

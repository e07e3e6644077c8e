#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace translit::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Scalars have shape [1]; rank 0 is not representable.
class Tensor {
 public:
  Tensor() : Tensor(Shape{1}) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  /// The single element of a size-1 tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named parameters of one model. Indices are stable once added.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records one forward pass. Nodes are appended in evaluation order, so
/// reverse recording order is a valid reverse topological order. A tape
/// supports exactly one backward pass.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient (inputs of gradient checks).
  Var variable(Tensor value);
  /// Leaf bound to a model parameter; backward adds into `p.grad`.
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  /// Gradient of the last backward pass w.r.t. `v` (zeros if unreached).
  Tensor grad(Var v) const;

  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by operations to extend the tape.
  bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }
  Var record(Tensor value, std::initializer_list<Var> parents, Backprop backprop);
  Var record(Tensor value, std::span<const Var> parents, Backprop backprop);
  Tensor& grad_accumulator(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    Backprop backprop;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> parameter_nodes_;
  bool record_;
  bool backward_done_ = false;
};

// Elementwise arithmetic. When shapes differ, the smaller operand's shape must
// equal the trailing dimensions of the larger one and is repeated over the
// leading dimensions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var neg(Var a);

/// a[..., k] x b[k, n] -> [..., n]; a may be a vector [k].
Var matmul(Var a, Var b);
/// Batched product: a[B, m, k] x b[B, k, n] (or b[B, n, k] when transpose_b).
Var bmm(Var a, Var b, bool transpose_b = false);

Var reshape(Var a, Shape shape);
Var permute(Var a, std::span<const std::size_t> axes);
Var permute(Var a, std::initializer_list<std::size_t> axes);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equal-shaped tensors along a new axis.
Var stack(std::span<const Var> parts, std::size_t axis);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);

/// Softmax over the last axis (max-subtracted).
Var softmax(Var a);
Var log_softmax(Var a);

/// Per-row normalization over the last axis: (x - mean) / sqrt(var + eps) * gain + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);

/// Row gather from table[V, d]; ids outside [0, V) throw IndexError.
Var embedding(Var table, std::span<const int> ids);

/// Mean over unmasked rows of -log softmax(logits)[t, target_t]. With label
/// smoothing eps the target distribution is (1 - eps) one-hot + eps / V.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> mask,
                  double label_smoothing = 0.0);

Var sum(Var a);
Var mean(Var a);

/// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

/// Central differences cannot resolve gradients below roughly 1e-10, so the
/// denominator is floored: |a - c| / max(|a| + |c|, kGradientFloor).
inline constexpr double kGradientFloor = 1e-6;
double relative_error(double analytic, double numeric);

/// Max relative_error between backprop and central differences
/// over every coordinate of `x`, for scalar-valued `f`.
double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-6);

/// Same check over every coordinate of the given parameters; `f` builds the
/// scalar loss on a fresh tape.
double finite_difference_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                               double h = 1e-6);

}  // namespace translit::ad

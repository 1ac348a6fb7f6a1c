// Copyright 2026 The PPSLU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppslu {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  // Shared so that per-tape parameter aliases read the live parameter values
  // without copying them.
  std::shared_ptr<std::vector<double>> storage;
  std::vector<double> grad;
  bool requires_grad = false;
  // Set once any gradient has been accumulated; lets backward skip dead nodes.
  bool grad_touched = false;
};

// Dense row-major float64 tensor. Copies are shallow handles; use clone() for
// an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->storage->size(); }
  // Leading dimensions collapsed; every op that works "over the last axis"
  // treats a tensor as rows() x cols().
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return *impl_->storage; }
  std::span<double> mutable_values() { return *impl_->storage; }
  double item() const;
  double operator[](std::size_t i) const { return (*impl_->storage)[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  // Independent copy of the values.
  Tensor clone(bool requires_grad = false) const;
  // Same storage, fresh gradient buffer.
  Tensor alias(bool requires_grad) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Records differentiable operations in execution order. A tape is owned by one
// thread; the thread-local active tape is set with TapeScope.
class Tape {
 public:
  using BackwardFn = std::function<void(const TensorImpl& out)>;

  struct Node {
    std::string_view op;
    std::shared_ptr<TensorImpl> output;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
  };

  struct Seed {
    Tensor tensor;
    std::vector<double> grad;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1 and walks the nodes in reverse recording order.
  void backward(const Tensor& loss);
  // Same walk, starting from arbitrary upstream gradients on several outputs.
  void backward(std::span<const Seed> seeds);
  void clear() { nodes_.clear(); }

  static Tape* active();

 private:
  void run_backward();

  std::vector<Node> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on this thread.
class NoGradScope : public TapeScope {
 public:
  NoGradScope() : TapeScope(nullptr) {}
};

namespace detail {
// Adds `values` into the gradient of `impl` if it participates in autodiff.
std::span<double> grad_sink(TensorImpl& impl);
}  // namespace detail

// Creates an op result and, when recording, registers `backward` for it. The
// callback receives the output (with its accumulated gradient) and must add
// into the gradients of the inputs through detail::grad_sink.
Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, Tape::BackwardFn backward);

// --- forward ops ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Same shape, or `b` broadcast along rows when b.numel() == a.cols().
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Rank-2 input: axis 0 averages rows into a (cols) vector, axis 1 averages
// columns into a (rows) vector. Rank-1 input reduces to a scalar.
Tensor mean_over_axis(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
Tensor dropout(const Tensor& a, double rate, bool train, std::uint64_t seed);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// out[r] = a[r, index[r]]
Tensor pick(const Tensor& a, std::span<const std::size_t> index);
Tensor l2_normalize(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor cosine(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// --- gradient checking ------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Central differences per coordinate of `x`. An entry whose absolute error is
// at most `abs_floor` counts as exact.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step = 1e-5,
                           double tol = 1e-4, double abs_floor = 1e-8);

}  // namespace ppslu

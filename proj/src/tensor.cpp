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

#include "ppslu/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ppslu/error.hpp"

namespace ppslu {
namespace {

thread_local Tape* t_active_tape = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) shape = {1};
  for (std::size_t d : shape) {
    if (d == 0) fail(errc::kShape, "tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    fail(errc::kShape, "tensor shape " + shape_string(shape) + " holds " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->storage = std::make_shared<std::vector<double>>(std::move(values));
  impl_->requires_grad = requires_grad;
  if (requires_grad) impl_->grad.assign(impl_->storage->size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t Tensor::cols() const { return impl_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) {
    fail(errc::kNotScalar, "item() on tensor of shape " + shape_string(shape()));
  }
  return (*impl_->storage)[0];
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.size() != numel()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.assign(numel(), 0.0);
  impl_->grad_touched = false;
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(impl_->shape, *impl_->storage, requires_grad);
}

Tensor Tensor::alias(bool requires_grad) const {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = impl_->shape;
  t.impl_->storage = impl_->storage;
  t.impl_->requires_grad = requires_grad;
  if (requires_grad) t.impl_->grad.assign(numel(), 0.0);
  return t;
}

namespace detail {

std::span<double> grad_sink(TensorImpl& impl) {
  if (impl.grad.size() != impl.storage->size()) impl.grad.assign(impl.storage->size(), 0.0);
  impl.grad_touched = true;
  return impl.grad;
}

}  // namespace detail

Tape* Tape::active() { return t_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(t_active_tape) { t_active_tape = tape; }

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, Tape::BackwardFn backward) {
  Tape* tape = Tape::active();
  bool needs_grad = false;
  if (tape != nullptr) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  Tensor out(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    Tape::Node node;
    node.op = op;
    node.output = out.shared_impl();
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.shared_impl());
    node.backward = std::move(backward);
    tape->record(std::move(node));
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    fail(errc::kNotScalar, "backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Seed seed{loss, {1.0}};
  backward(std::span<const Seed>(&seed, 1));
}

void Tape::backward(std::span<const Seed> seeds) {
  for (const auto& seed : seeds) {
    if (!seed.tensor.requires_grad()) {
      fail(errc::kInvalidArgument, "backward() seed does not participate in the tape");
    }
    if (seed.grad.size() != seed.tensor.numel()) {
      fail(errc::kShape, "backward() seed gradient has " + std::to_string(seed.grad.size()) +
                             " values for tensor " + shape_string(seed.tensor.shape()));
    }
    auto g = detail::grad_sink(*seed.tensor.impl());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed.grad[i];
  }
  run_backward();
}

void Tape::run_backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output->grad_touched) continue;
    it->backward(*it->output);
  }
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step, double tol,
                           double abs_floor) {
  if (!(step > 0.0)) fail(errc::kInvalidArgument, "grad_check step must be positive");

  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(&tape);
    Tensor leaf = x.clone(true);
    Tensor y = f(leaf);
    if (y.numel() != 1) {
      fail(errc::kNotScalar, "grad_check function must return a scalar, got " +
                                 shape_string(y.shape()));
    }
    if (!y.requires_grad()) {
      analytic.assign(x.numel(), 0.0);
    } else {
      tape.backward(y);
      analytic.assign(leaf.grad().begin(), leaf.grad().end());
    }
  }

  NoGradScope no_grad;
  GradCheckReport report;
  const std::span<const double> base = x.values();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = x.clone();
    Tensor minus = x.clone();
    plus.mutable_values()[i] = base[i] + step;
    minus.mutable_values()[i] = base[i] - step;
    const double fp = f(plus).item();
    const double fm = f(minus).item();
    const double numeric = (fp - fm) / (2.0 * step);
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i])) {
      fail(errc::kNonFinite, "grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double abs_err = std::abs(analytic[i] - numeric);
    double rel_err = 0.0;
    if (abs_err > abs_floor) {
      rel_err = abs_err / std::max(std::abs(analytic[i]), std::abs(numeric));
    }
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    if (rel_err > report.max_rel_err) {
      report.max_rel_err = rel_err;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace ppslu

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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ppslu/error.hpp"
#include "ppslu/kernels.hpp"
#include "ppslu/tensor.hpp"

namespace ppslu {
namespace {

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  fail(errc::kShape, std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

std::span<double> sink(const Tensor& t) { return detail::grad_sink(*t.impl()); }

enum class BinaryKind { kAdd, kSub };

Tensor add_or_sub(std::string_view op, const Tensor& a, const Tensor& b, BinaryKind kind) {
  const double sign = kind == BinaryKind::kAdd ? 1.0 : -1.0;
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(a.numel());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
    return make_op_result(op, a.shape(), std::move(out), {a, b},
                          [a, b, sign](const TensorImpl& o) {
                            if (a.requires_grad()) {
                              auto ga = sink(a);
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
                            }
                            if (b.requires_grad()) {
                              auto gb = sink(b);
                              for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * o.grad[i];
                            }
                          });
  }
  const bool row_vector = b.numel() == a.cols() && b.rows() == 1 && b.cols() == a.cols();
  if (!row_vector) shape_error(op, a, b);
  const std::size_t rows = a.rows(), cols = a.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] + sign * bv[c];
  }
  return make_op_result(op, a.shape(), std::move(out), {a, b},
                        [a, b, sign, rows, cols](const TensorImpl& o) {
                          if (a.requires_grad()) {
                            auto ga = sink(a);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = sink(b);
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                gb[c] += sign * o.grad[r * cols + c];
                              }
                            }
                          }
                        });
}

double vec_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() != 2 || a.cols() != b.dim(0)) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm({.m = m, .n = n, .k = k, .a = a.values().data(), .b = b.values().data(),
                 .c = out.data()});
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  return make_op_result("matmul", std::move(shape), std::move(out), {a, b},
                        [a, b, m, n, k](const TensorImpl& o) {
                          if (a.requires_grad()) {
                            kernels::gemm({.m = m, .n = k, .k = n, .a = o.grad.data(),
                                           .b = b.values().data(), .c = sink(a).data(),
                                           .trans_b = true, .accumulate = true});
                          }
                          if (b.requires_grad()) {
                            kernels::gemm({.m = k, .n = n, .k = m, .a = a.values().data(),
                                           .b = o.grad.data(), .c = sink(b).data(),
                                           .trans_a = true, .accumulate = true});
                          }
                        });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::gemm({.m = m, .n = n, .k = k, .a = a.values().data(), .b = b.values().data(),
                 .c = out.data(), .trans_b = true});
  return make_op_result("matmul_nt", {m, n}, std::move(out), {a, b},
                        [a, b, m, n, k](const TensorImpl& o) {
                          if (a.requires_grad()) {
                            kernels::gemm({.m = m, .n = k, .k = n, .a = o.grad.data(),
                                           .b = b.values().data(), .c = sink(a).data(),
                                           .accumulate = true});
                          }
                          if (b.requires_grad()) {
                            kernels::gemm({.m = n, .n = k, .k = m, .a = o.grad.data(),
                                           .b = a.values().data(), .c = sink(b).data(),
                                           .trans_a = true, .accumulate = true});
                          }
                        });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) fail(errc::kShape, "transpose: expected rank 2, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return make_op_result("transpose", {c, r}, std::move(out), {a}, [a, r, c](const TensorImpl& o) {
    auto ga = sink(a);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[j * r + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return add_or_sub("add", a, b, BinaryKind::kAdd); }

Tensor sub(const Tensor& a, const Tensor& b) { return add_or_sub("sub", a, b, BinaryKind::kSub); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_result("mul", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    const auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      auto ga = sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return make_op_result("scale", a.shape(), std::move(out), {a}, [a, factor](const TensorImpl& o) {
    auto ga = sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + offset;
  return make_op_result("add_scalar", a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    auto ga = sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return make_op_result("relu", a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    const auto av = a.values();
    auto ga = sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (av[i] > 0.0) ga[i] += o.grad[i];
    }
  });
}

Tensor softmax(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return make_op_result("softmax", a.shape(), std::move(out), {a},
                        [a, rows, cols](const TensorImpl& o) {
                          const auto& y = *o.storage;
                          auto ga = sink(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t base = r * cols;
                            double dotp = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) dotp += o.grad[base + c] * y[base + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                              ga[base + c] += y[base + c] * (o.grad[base + c] - dotp);
                            }
                          }
                        });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  return make_op_result("log_softmax", a.shape(), std::move(out), {a},
                        [a, rows, cols](const TensorImpl& o) {
                          const auto& y = *o.storage;
                          auto ga = sink(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t base = r * cols;
                            double gsum = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) gsum += o.grad[base + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                              ga[base + c] += o.grad[base + c] - std::exp(y[base + c]) * gsum;
                            }
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.numel() != cols) shape_error("layer_norm", x, gamma);
  if (beta.numel() != cols) shape_error("layer_norm", x, beta);
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mean) * inv;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = gv[c] * h + bv[c];
    }
  }
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, rows, cols](const TensorImpl& o) {
        const auto gv = gamma.values();
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::span<double> gg = gamma.requires_grad() ? sink(gamma) : std::span<double>();
          std::span<double> gb = beta.requires_grad() ? sink(beta) : std::span<double>();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              const double g = o.grad[r * cols + c];
              if (!gg.empty()) gg[c] += g * (*xhat)[r * cols + c];
              if (!gb.empty()) gb[c] += g;
            }
          }
        }
        if (!x.requires_grad()) return;
        auto gx = sink(x);
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double gh = o.grad[r * cols + c] * gv[c];
            sum_g += gh;
            sum_gh += gh * (*xhat)[r * cols + c];
          }
          const double inv = (*inv_std)[r];
          for (std::size_t c = 0; c < cols; ++c) {
            const double gh = o.grad[r * cols + c] * gv[c];
            gx[r * cols + c] += inv / n * (n * gh - sum_g - (*xhat)[r * cols + c] * sum_gh);
          }
        }
      });
}

Tensor mean_over_axis(const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0) fail(errc::kBounds, "mean_over_axis: axis " + std::to_string(axis) + " on rank 1");
    const double n = static_cast<double>(a.numel());
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_op_result("mean", {1}, {s / n}, {a}, [a, n](const TensorImpl& o) {
      auto ga = sink(a);
      for (double& g : ga) g += o.grad[0] / n;
    });
  }
  if (a.rank() != 2 || axis > 1) {
    fail(errc::kBounds, "mean_over_axis: axis " + std::to_string(axis) + " invalid for shape " +
                            shape_string(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto av = a.values();
  if (axis == 0) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[c] += av[r * cols + c];
    }
    for (double& v : out) v /= static_cast<double>(rows);
    return make_op_result("mean", {cols}, std::move(out), {a}, [a, rows, cols](const TensorImpl& o) {
      auto ga = sink(a);
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += o.grad[c] * inv;
      }
    });
  }
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += av[r * cols + c];
    out[r] /= static_cast<double>(cols);
  }
  return make_op_result("mean", {rows}, std::move(out), {a}, [a, rows, cols](const TensorImpl& o) {
    auto ga = sink(a);
    const double inv = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += o.grad[r] * inv;
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op_result("sum", {1}, {s}, {a}, [a](const TensorImpl& o) {
    auto ga = sink(a);
    for (double& g : ga) g += o.grad[0];
  });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) fail(errc::kShape, "concat: no inputs");
  const Tensor& first = parts.front();
  const std::size_t rows = first.rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank() || p.rows() != rows) shape_error("concat", first, p);
    for (std::size_t d = 0; d + 1 < p.rank(); ++d) {
      if (p.dim(d) != first.dim(d)) shape_error("concat", first, p);
    }
    total += p.cols();
  }
  std::vector<double> out(rows * total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto pv = p.values();
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * w, w, out.data() + r * total + off);
    }
    off += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op_result("concat", with_last(first.shape(), total), std::move(out), inputs,
                        [inputs, offsets, rows, total](const TensorImpl& o) {
                          for (std::size_t i = 0; i < inputs.size(); ++i) {
                            const Tensor& p = inputs[i];
                            if (!p.requires_grad()) continue;
                            auto gp = sink(p);
                            const std::size_t w = p.cols();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < w; ++c) {
                                gp[r * w + c] += o.grad[r * total + offsets[i] + c];
                              }
                            }
                          }
                        });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t cols = a.cols(), rows = a.rows();
  if (begin >= end || end > cols) {
    fail(errc::kBounds, "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") outside last axis of " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  const auto av = a.values();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * cols + begin, w, out.data() + r * w);
  }
  return make_op_result("slice", with_last(a.shape(), w), std::move(out), {a},
                        [a, rows, cols, begin, w](const TensorImpl& o) {
                          auto ga = sink(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < w; ++c) {
                              ga[r * cols + begin + c] += o.grad[r * w + c];
                            }
                          }
                        });
}

Tensor dropout(const Tensor& a, double rate, bool train, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(errc::kInvalidArgument, "dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return a;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.numel());
  for (double& m : *mask) m = keep(rng) ? factor : 0.0;
  const auto av = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * (*mask)[i];
  return make_op_result("dropout", a.shape(), std::move(out), {a}, [a, mask](const TensorImpl& o) {
    auto ga = sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * (*mask)[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) fail(errc::kShape, "gather_rows: table must be rank 2");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  if (ids.empty()) fail(errc::kShape, "gather_rows: empty id list");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * cols);
  const auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      fail(errc::kBounds, "gather_rows: id " + std::to_string(idx[i]) + " >= " + std::to_string(rows));
    }
    std::copy_n(tv.data() + idx[i] * cols, cols, out.data() + i * cols);
  }
  return make_op_result("gather_rows", {idx.size(), cols}, std::move(out), {table},
                        [table, idx, cols](const TensorImpl& o) {
                          auto gt = sink(table);
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            for (std::size_t c = 0; c < cols; ++c) {
                              gt[idx[i] * cols + c] += o.grad[i * cols + c];
                            }
                          }
                        });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (index.size() != rows) {
    fail(errc::kShape, "pick: " + std::to_string(index.size()) + " indices for " +
                           std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(rows);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) {
      fail(errc::kBounds, "pick: index " + std::to_string(idx[r]) + " >= " + std::to_string(cols));
    }
    out[r] = av[r * cols + idx[r]];
  }
  return make_op_result("pick", {rows}, std::move(out), {a}, [a, idx, cols](const TensorImpl& o) {
    auto ga = sink(a);
    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * cols + idx[r]] += o.grad[r];
  });
}

Tensor l2_normalize(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto av = a.values();
  std::vector<double> out(a.numel());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double n = vec_norm(av.subspan(r * cols, cols));
    if (n == 0.0) fail(errc::kInvalidArgument, "l2_normalize: zero vector in row " + std::to_string(r));
    (*norms)[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] / n;
  }
  return make_op_result("l2_normalize", a.shape(), std::move(out), {a},
                        [a, norms, rows, cols](const TensorImpl& o) {
                          const auto& y = *o.storage;
                          auto ga = sink(a);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t base = r * cols;
                            double gy = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) gy += o.grad[base + c] * y[base + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                              ga[base + c] += (o.grad[base + c] - y[base + c] * gy) / (*norms)[r];
                            }
                          }
                        });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) shape_error("dot", a, b);
  const auto av = a.values(), bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return make_op_result("dot", {1}, {s}, {a, b}, [a, b](const TensorImpl& o) {
    const auto av = a.values(), bv = b.values();
    if (a.requires_grad()) {
      auto ga = sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[0] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[0] * av[i];
    }
  });
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) shape_error("cosine", a, b);
  const auto av = a.values(), bv = b.values();
  const double na = vec_norm(av), nb = vec_norm(bv);
  if (na == 0.0 || nb == 0.0) {
    fail(errc::kInvalidArgument, "cosine: angle with a zero vector is undefined");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const double cval = std::clamp(s / (na * nb), -1.0, 1.0);
  return make_op_result("cosine", {1}, {cval}, {a, b}, [a, b, na, nb, cval](const TensorImpl& o) {
    const auto av = a.values(), bv = b.values();
    const double g = o.grad[0];
    if (a.requires_grad()) {
      auto ga = sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] += g * (bv[i] / (na * nb) - cval * av[i] / (na * na));
      }
    }
    if (b.requires_grad()) {
      auto gb = sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) {
        gb[i] += g * (av[i] / (na * nb) - cval * bv[i] / (nb * nb));
      }
    }
  });
}

}  // namespace ppslu

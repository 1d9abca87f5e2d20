// Copyright 2026 The ecdiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ecdiff/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace ecdiff::num {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

enum class Broadcast { kSame, kScalar, kSuffix };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (numel(b) == 1) return Broadcast::kScalar;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return Broadcast::kSuffix;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                   shape_str(a));
}

// Index into b for flat index i of a.
inline std::size_t bidx(Broadcast kind, std::size_t i, std::size_t inner) {
  switch (kind) {
    case Broadcast::kSame:
      return i;
    case Broadcast::kScalar:
      return 0;
    case Broadcast::kSuffix:
      return i % inner;
  }
  return 0;
}

detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }

std::size_t last_dim(const Shape& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": needs rank >= 1");
  return s.back();
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return Var::make(std::move(y), {a}, [deriv](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Broadcast kind = classify(a.shape(), b.shape(), "add");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  std::size_t inner = z.size();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[bidx(kind, i, inner)];
  return Var::make(std::move(y), {a, b}, [kind, inner](detail::Node& self) {
    detail::Node& pa = parent(self, 0);
    detail::Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[bidx(kind, i, inner)] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Broadcast kind = classify(a.shape(), b.shape(), "sub");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  std::size_t inner = z.size();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[bidx(kind, i, inner)];
  return Var::make(std::move(y), {a, b}, [kind, inner](detail::Node& self) {
    detail::Node& pa = parent(self, 0);
    detail::Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[bidx(kind, i, inner)] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Broadcast kind = classify(a.shape(), b.shape(), "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  std::size_t inner = z.size();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[bidx(kind, i, inner)];
  return Var::make(std::move(y), {a, b}, [kind, inner](detail::Node& self) {
    detail::Node& pa = parent(self, 0);
    detail::Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * pb.value[bidx(kind, i, inner)];
      }
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g[bidx(kind, i, inner)] += self.grad[i] * pa.value[i];
      }
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || bs.size() != 2 || as.back() != bs[0]) {
    throw ShapeError("matmul: " + shape_str(as) + " x " + shape_str(bs));
  }
  std::size_t k = bs[0];
  std::size_t n = bs[1];
  std::size_t rows = a.size() / k;
  Shape out_shape = as;
  out_shape.back() = n;
  Tensor y(out_shape);
  Map(y.ptr(), rows, n).noalias() = MapC(a.value().ptr(), rows, k) * MapC(b.value().ptr(), k, n);
  return Var::make(std::move(y), {a, b}, [rows, k, n](detail::Node& self) {
    detail::Node& pa = parent(self, 0);
    detail::Node& pb = parent(self, 1);
    MapC dy(self.grad.data(), rows, n);
    if (pa.requires_grad) {
      Map(pa.grad_buffer().data(), rows, k).noalias() +=
          dy * MapC(pb.value.ptr(), k, n).transpose();
    }
    if (pb.requires_grad) {
      Map(pb.grad_buffer().data(), k, n).noalias() +=
          MapC(pa.value.ptr(), rows, k).transpose() * dy;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.empty() || ws.size() != 2 || xs.back() != ws[0] || bias.shape() != Shape{ws[1]}) {
    throw ShapeError("linear: " + shape_str(xs) + " x " + shape_str(ws) + " + " +
                     shape_str(bias.shape()));
  }
  std::size_t k = ws[0];
  std::size_t n = ws[1];
  std::size_t rows = x.size() / k;
  Shape out_shape = xs;
  out_shape.back() = n;
  Tensor y(out_shape);
  Map ym(y.ptr(), rows, n);
  ym.noalias() = MapC(x.value().ptr(), rows, k) * MapC(w.value().ptr(), k, n);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().ptr(), n);
  return Var::make(std::move(y), {x, w, bias}, [rows, k, n](detail::Node& self) {
    detail::Node& px = parent(self, 0);
    detail::Node& pw = parent(self, 1);
    detail::Node& pb = parent(self, 2);
    MapC dy(self.grad.data(), rows, n);
    if (px.requires_grad) {
      Map(px.grad_buffer().data(), rows, k).noalias() +=
          dy * MapC(pw.value.ptr(), k, n).transpose();
    }
    if (pw.requires_grad) {
      Map(pw.grad_buffer().data(), k, n).noalias() +=
          MapC(px.value.ptr(), rows, k).transpose() * dy;
    }
    if (pb.requires_grad) {
      double* gb = pb.grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = self.grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) gb[j] += row[j];
      }
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> chunk;
  std::size_t total_axis = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first) +
                       " on axis " + std::to_string(axis));
    }
    chunk.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  Tensor y(out_shape);
  std::size_t row = total_axis * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().ptr();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk[p], chunk[p], y.ptr() + o * row + offset);
    }
    offset += chunk[p];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return Var::make(std::move(y), std::move(parents), [chunk, outer, row](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < chunk.size(); ++p) {
      detail::Node& pn = parent(self, p);
      if (pn.requires_grad) {
        auto& g = pn.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * row + offset;
          double* dst = g.data() + o * chunk[p];
          for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += src[i];
        }
      }
      offset += chunk[p];
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::size_t row = s[axis] * inner;
  std::size_t len = (end - begin) * inner;
  std::size_t off = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor y(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().ptr() + o * row + off, len, y.ptr() + o * len);
  }
  return Var::make(std::move(y), {a}, [outer, row, len, off](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < len; ++i) g[o * row + off + i] += self.grad[o * len + i];
    }
  });
}

Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: rank-2 only, got " + shape_str(s));
  std::size_t r = s[0], c = s[1];
  Tensor y({c, r});
  Map(y.ptr(), c, r) = MapC(a.value().ptr(), r, c).transpose();
  return Var::make(std::move(y), {a}, [r, c](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    Map(p.grad_buffer().data(), r, c) += MapC(self.grad.data(), c, r).transpose();
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return Var::make(std::move(y), {a}, [](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("gather_rows: rank-2 only, got " + shape_str(s));
  std::size_t d = s[1];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor y({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= s[0]) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(a.value().ptr() + idx[r] * d, d, y.ptr() + r * d);
  }
  return Var::make(std::move(y), {a}, [idx = std::move(idx), d](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
    }
  });
}

namespace {

Var grouped(const Var& x, const Var& scale, const Var* shift, std::span<const std::size_t> groups) {
  const Shape& xs = x.shape();
  if (xs.size() != 2 || scale.shape().size() != 2 || scale.shape()[1] != xs[1] ||
      groups.size() != xs[0] || (shift && shift->shape() != scale.shape())) {
    throw ShapeError("grouped modulation: x " + shape_str(xs) + ", scale " +
                     shape_str(scale.shape()) + ", " + std::to_string(groups.size()) +
                     " group ids");
  }
  const std::size_t n = xs[0], d = xs[1], g_rows = scale.shape()[0];
  std::vector<std::size_t> idx(groups.begin(), groups.end());
  for (std::size_t gi : idx) {
    if (gi >= g_rows) throw ShapeError("grouped modulation: group id out of range");
  }
  const double* xv = x.value().ptr();
  const double* sv = scale.value().ptr();
  const double* bv = shift ? shift->value().ptr() : nullptr;
  Tensor y({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* sr = sv + idx[i] * d;
    double* yr = y.ptr() + i * d;
    const double* xr = xv + i * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = sr[j] * xr[j];
    if (bv) {
      const double* br = bv + idx[i] * d;
      for (std::size_t j = 0; j < d; ++j) yr[j] += br[j];
    }
  }
  std::vector<Var> parents{x, scale};
  if (shift) parents.push_back(*shift);
  return Var::make(std::move(y), std::move(parents),
                   [idx = std::move(idx), n, d](detail::Node& self) {
                     detail::Node& px = parent(self, 0);
                     detail::Node& ps = parent(self, 1);
                     const double* gy = self.grad.data();
                     if (px.requires_grad) {
                       auto& g = px.grad_buffer();
                       const double* sv = ps.value.ptr();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double* sr = sv + idx[i] * d;
                         for (std::size_t j = 0; j < d; ++j) g[i * d + j] += gy[i * d + j] * sr[j];
                       }
                     }
                     if (ps.requires_grad) {
                       auto& g = ps.grad_buffer();
                       const double* xv = px.value.ptr();
                       for (std::size_t i = 0; i < n; ++i) {
                         double* gr = g.data() + idx[i] * d;
                         for (std::size_t j = 0; j < d; ++j) gr[j] += gy[i * d + j] * xv[i * d + j];
                       }
                     }
                     if (self.parents.size() > 2 && parent(self, 2).requires_grad) {
                       auto& g = parent(self, 2).grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                         double* gr = g.data() + idx[i] * d;
                         for (std::size_t j = 0; j < d; ++j) gr[j] += gy[i * d + j];
                       }
                     }
                   });
}

}  // namespace

Var grouped_scale(const Var& x, const Var& scale, std::span<const std::size_t> groups) {
  return grouped(x, scale, nullptr, groups);
}

Var grouped_affine(const Var& x, const Var& scale, const Var& shift,
                   std::span<const std::size_t> groups) {
  return grouped(x, scale, &shift, groups);
}

Var softmax(const Var& a) {
  std::size_t d = last_dim(a.shape(), "softmax");
  std::size_t rows = a.size() / d;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * d;
    double* yr = y.ptr() + r * d;
    double m = *std::max_element(xr, xr + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (yr[j] = std::exp(xr[j] - m));
    for (std::size_t j = 0; j < d; ++j) yr[j] /= z;
  }
  return Var::make(std::move(y), {a}, [rows, d](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.ptr() + r * d;
      const double* dy = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += dy[j] * yr[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += yr[j] * (dy[j] - dot);
    }
  });
}

Var layer_norm(const Var& a, double eps) {
  std::size_t d = last_dim(a.shape(), "layer_norm");
  std::size_t rows = a.size() / d;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] = (xr[j] - mu) * inv_std[r];
  }
  return Var::make(std::move(y), {a}, [rows, d, inv_std = std::move(inv_std)](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.ptr() + r * d;
      const double* dy = self.grad.data() + r * d;
      double mdy = 0.0, mdyy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        mdy += dy[j];
        mdyy += dy[j] * yr[j];
      }
      mdy *= inv_d;
      mdyy *= inv_d;
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += inv_std[r] * (dy[j] - mdy - yr[j] * mdyy);
      }
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return Var::make(Tensor::scalar(s), {a}, [](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    for (double& g : p.grad_buffer()) g += self.grad[0];
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double y) {
        // Phi(x) = y / x reuses the forward erf.
        double cdf = std::abs(x) > 1e-150 ? y / x : 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sqrt(const Var& a) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw NumericError("sqrt: negative input");
  }
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var l1_loss(const Var& prediction, const Var& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + shape_str(prediction.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  std::size_t n = prediction.size();
  if (n == 0) throw ShapeError("l1_loss: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(prediction.value()[i] - target.value()[i]);
  double inv_n = 1.0 / static_cast<double>(n);
  return Var::make(Tensor::scalar(s * inv_n), {prediction, target}, [inv_n](detail::Node& self) {
    detail::Node& pp = parent(self, 0);
    detail::Node& pt = parent(self, 1);
    double g0 = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < pp.value.size(); ++i) {
      double d = pp.value[i] - pt.value[i];
      double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (pp.requires_grad) pp.grad_buffer()[i] += g0 * sgn;
      if (pt.requires_grad) pt.grad_buffer()[i] -= g0 * sgn;
    }
  });
}

}  // namespace ecdiff::num

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

#include <Eigen/Core>
#include <cmath>

#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::num {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;
using BlockC = Eigen::Map<const RowMat, 0, Strided>;
using Block = Eigen::Map<RowMat, 0, Strided>;
using SquareC = Eigen::Map<const RowMat>;

}  // namespace

Var self_attention(const Var& q, const Var& k, const Var& v, std::size_t groups, std::size_t heads,
                   AttentionProbs* capture) {
  const Shape& qs = q.shape();
  if (qs.size() != 2 || k.shape() != qs || v.shape() != qs) {
    throw ShapeError("self_attention: q/k/v must share a rank-2 shape, got " + shape_str(qs) +
                     ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  std::size_t rows = qs[0];
  std::size_t dim = qs[1];
  if (groups == 0 || rows % groups != 0 || heads == 0 || dim % heads != 0) {
    throw ShapeError("self_attention: " + shape_str(qs) + " not divisible into " +
                     std::to_string(groups) + " groups x " + std::to_string(heads) + " heads");
  }
  std::size_t seq = rows / groups;
  std::size_t dh = dim / heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> probs(groups * heads * seq * seq);
  Tensor out({rows, dim});
  const Strided stride(static_cast<Eigen::Index>(dim));
  RowMat scores(seq, seq);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      std::size_t base = g * seq * dim + h * dh;
      BlockC qm(q.value().ptr() + base, seq, dh, stride);
      BlockC km(k.value().ptr() + base, seq, dh, stride);
      BlockC vm(v.value().ptr() + base, seq, dh, stride);
      scores.noalias() = (qm * km.transpose()) * inv_scale;
      double* p = probs.data() + (g * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        double m = scores.row(i).maxCoeff();
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          z += (p[i * seq + j] = std::exp(scores(i, j) - m));
        }
        for (std::size_t j = 0; j < seq; ++j) p[i * seq + j] /= z;
      }
      Block(out.ptr() + base, seq, dh, stride).noalias() = SquareC(p, seq, seq) * vm;
    }
  }
  if (capture) {
    capture->probs = Tensor({groups, heads, seq, seq}, probs);
  }

  return Var::make(
      std::move(out), {q, k, v},
      [groups, heads, seq, dim, dh, inv_scale, probs = std::move(probs)](detail::Node& self) {
        detail::Node& pq = *self.parents[0];
        detail::Node& pk = *self.parents[1];
        detail::Node& pv = *self.parents[2];
        const Strided stride(static_cast<Eigen::Index>(dim));
        double* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
        double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
        double* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
        RowMat dp(seq, seq);
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t h = 0; h < heads; ++h) {
            std::size_t base = g * seq * dim + h * dh;
            SquareC p(probs.data() + (g * heads + h) * seq * seq, seq, seq);
            BlockC dout(self.grad.data() + base, seq, dh, stride);
            BlockC qm(pq.value.ptr() + base, seq, dh, stride);
            BlockC km(pk.value.ptr() + base, seq, dh, stride);
            BlockC vm(pv.value.ptr() + base, seq, dh, stride);
            if (gv) Block(gv + base, seq, dh, stride).noalias() += p.transpose() * dout;
            if (!gq && !gk) continue;
            dp.noalias() = dout * vm.transpose();
            // softmax backward, then the 1/sqrt(dh) factor
            for (std::size_t i = 0; i < seq; ++i) {
              // A plain loop: Eigen's vectorized dot peels by address, so its
              // rounding would depend on where `probs` was allocated.
              double dot = 0.0;
              for (std::size_t j = 0; j < seq; ++j) dot += p(i, j) * dp(i, j);
              for (std::size_t j = 0; j < seq; ++j) {
                dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv_scale;
              }
            }
            if (gq) Block(gq + base, seq, dh, stride).noalias() += dp * km;
            if (gk) Block(gk + base, seq, dh, stride).noalias() += dp.transpose() * qm;
          }
        }
      });
}

}  // namespace ecdiff::num

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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecdiff/numerics/autodiff.hpp"

namespace ecdiff::num {

// Binary elementwise ops. `b` may match `a` exactly, be a scalar, or have a
// shape equal to a trailing suffix of `a`'s shape (broadcast over leading
// axes, e.g. a bias row added to every token).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

/// a: [..., K] (leading axes flattened to rows), b: [K, N] -> [..., N].
Var matmul(const Var& a, const Var& b);
/// matmul(x, w) + bias, bias of shape [N].
Var linear(const Var& x, const Var& w, const Var& bias);

Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var transpose(const Var& a);  // rank-2 only
Var reshape(const Var& a, Shape shape);
/// Rows of a rank-2 tensor by index; repeated indices accumulate gradient.
Var gather_rows(const Var& a, std::span<const std::size_t> rows);

/// Row-wise modulation by group: y[i] = scale[groups[i]] * x[i] (+ shift[groups[i]]).
/// x is [N, D]; scale and shift are [G, D].
Var grouped_scale(const Var& x, const Var& scale, std::span<const std::size_t> groups);
Var grouped_affine(const Var& x, const Var& scale, const Var& shift,
                   std::span<const std::size_t> groups);

Var softmax(const Var& a);  // over the last axis
/// Zero-mean, unit-variance over the last axis (population variance), no
/// affine terms.
Var layer_norm(const Var& a, double eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);

Var abs(const Var& a);  // d|x|/dx at 0 is 0
Var relu(const Var& a);
Var gelu(const Var& a);  // exact erf form
Var silu(const Var& a);
Var exp(const Var& a);
Var sqrt(const Var& a);

/// mean(|a - b|), the l1 objective.
Var l1_loss(const Var& prediction, const Var& target);

/// Attention probabilities captured from one self_attention call, shaped
/// [groups, heads, seq, seq] with rows indexed by query.
struct AttentionProbs {
  Tensor probs;
};

/// Multi-head scaled dot-product self-attention, no mask.
///
/// q, k, v are [groups * seq, dim] token matrices; tokens attend only within
/// their own group of `seq` consecutive rows. Heads split the last axis into
/// `heads` contiguous slices.
Var self_attention(const Var& q, const Var& k, const Var& v, std::size_t groups, std::size_t heads,
                   AttentionProbs* capture = nullptr);

}  // namespace ecdiff::num

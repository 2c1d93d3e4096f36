// Copyright (c) 2026 natprosody authors
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

#ifndef NATP_AUTOGRAD_HPP_
#define NATP_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "natp/tensor.hpp"

namespace natp::ag {

// Reverse-mode tape node. Values are materialized eagerly; gradients are
// allocated on demand during Backward.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::string name;  // set for parameters only

  float* g() { return grad.data.data(); }
  const float* v() const { return value.data.data(); }
  void EnsureGrad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
};

using Var = std::shared_ptr<Node>;

Var Constant(Tensor v);
Var Leaf(Tensor v, std::string name);  // trainable parameter

// Propagates d(root)/d(node) into every reachable node with requires_grad.
// root must be a scalar (numel == 1).
void Backward(const Var& root);

// Scoped switch that turns the tape off (ops become pure value computations).
bool GradEnabled();
struct NoGradGuard {
  explicit NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

// ---- elementwise and shape ops ---------------------------------------------
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& x, float c);
Var AddBias(const Var& x, const Var& bias);      // rows [R,C] + [C]
Var MulConst(const Var& x, const Tensor& mask);  // elementwise, same numel
Var Sigmoid(const Var& x);
Var Tanh(const Var& x);
Var Relu(const Var& x);
Var Softplus(const Var& x);
Var Exp(const Var& x);
Var Detach(const Var& x);
Var ConcatCols(const std::vector<Var>& xs);
Var SliceCols(const Var& x, int64_t begin, int64_t len);
Var GatherRows(const Var& x, const std::vector<int64_t>& rows);
Var StackTime(const std::vector<Var>& steps);  // T x [B,N] -> [B,T,N]

// ---- matrix ops -------------------------------------------------------------
Var MatMul(const Var& a, const Var& b);  // [R,K]x[K,C]; leading dims of a collapse
Var EmbedRows(const Var& table, const std::vector<int64_t>& ids);
Var Attend(const Var& alpha, const Var& mem);  // [B,J] x [B,J,N] -> [B,N]
Var ScatterRow(const Var& base, int64_t b, int64_t w, const Var& row);  // [B,W,N]
Var LayerNormRows(const Var& x, const Var& gamma, const Var& beta);

// ---- normalization / attention-specific ops ---------------------------------
Var NormalizeRowsMasked(const Var& x, const Tensor& mask);
Var RowSoftmaxMasked(const Var& logits, const Tensor& mask);
// Unnormalized gaussian attention row: exp(-(j-mu)^2 / (2 sigma^2)) * mask.
Var GaussianRow(const Var& mu, const Var& sigma, int64_t j_count, const Tensor& mask);
// Sinusoidal code of frac(mu), [B] -> [B,dim].
Var SinPosCode(const Var& mu, int dim);
// Soft upsampling rows: softmax over valid j of -(t_i-c_j)^2/(2 r_j^2),
// for every valid frame of every batch item. Gradients flow to ranges only.
Var UpsampleSoftRows(const Var& ranges, const Tensor& centers, const Tensor& frame_mask,
                     const Tensor& j_mask);  // -> [B,T,J]

// ---- losses (scalar outputs) --------------------------------------------------
Var MaskedL1(const Var& pred, const Tensor& target, const Tensor& mask);
Var MaskedMse(const Var& pred, const Tensor& target, const Tensor& mask);
// Mean over valid rows of KL(p_row || q_row); p is a constant reference,
// both row-normalized over valid j; epsilon floor inside the logs.
Var MaskedKlConstP(const Tensor& p, const Var& q, const Tensor& row_mask,
                   const Tensor& j_mask);
// Mean over valid rows of -sum_c target * log softmax(logits).
Var CeWithLogitsRows(const Var& logits, const Tensor& target, const Tensor& row_mask);
// Mean over valid rows of the squared EMD between prob rows and target rows.
Var Emd2Rows(const Var& probs, const Tensor& target, const Tensor& row_mask);
Var SumScalars(const std::vector<Var>& xs, const std::vector<float>& weights = {});

// Sum of all entries (used by tests).
Var SumAll(const Var& x);

}  // namespace natp::ag

#endif  // NATP_AUTOGRAD_HPP_

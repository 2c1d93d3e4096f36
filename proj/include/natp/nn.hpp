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

#ifndef NATP_NN_HPP_
#define NATP_NN_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "natp/autograd.hpp"
#include "natp/rng.hpp"
#include "natp/tensor.hpp"

namespace natp::nn {

// Named trainable parameters of one network; the unit of checkpointing.
class ParamRegistry {
 public:
  ag::Var Create(const std::string& name, std::vector<int64_t> shape);
  const std::vector<ag::Var>& params() const { return params_; }
  ag::Var Find(const std::string& name) const;

  std::map<std::string, Tensor> Snapshot() const;
  void Restore(const std::map<std::string, Tensor>& tensors);
  uint64_t ContentHash() const;
  void ZeroGrad();

 private:
  std::vector<ag::Var> params_;
  std::map<std::string, ag::Var> by_name_;
};

void XavierInit(Tensor& t, Rng& rng);
void NormalInit(Tensor& t, Rng& rng, float stddev);
void ConstInit(Tensor& t, float v);

struct Linear {
  ag::Var w, b;  // [in, out], [out]
  static Linear Create(ParamRegistry& reg, const std::string& name, int64_t in,
                       int64_t out, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

struct LstmCell {
  ag::Var w_ih, w_hh, b;  // [in,4H], [H,4H], [4H]; gate order i,f,g,o
  int64_t hidden = 0;
  static LstmCell Create(ParamRegistry& reg, const std::string& name, int64_t in,
                         int64_t hidden, Rng& rng);
  // One step from a precomputed input projection (x @ w_ih).
  std::pair<ag::Var, ag::Var> StepPre(const ag::Var& gates_x, const ag::Var& h,
                                      const ag::Var& c) const;
  std::pair<ag::Var, ag::Var> Step(const ag::Var& x, const ag::Var& h,
                                   const ag::Var& c) const;
};

struct GruCell {
  ag::Var w_ih, w_hh, b_ih, b_hh;  // [in,3H], [H,3H]; gate order r,z,n
  int64_t hidden = 0;
  static GruCell Create(ParamRegistry& reg, const std::string& name, int64_t in,
                        int64_t hidden, Rng& rng);
  ag::Var StepPre(const ag::Var& gates_x, const ag::Var& h) const;
};

// Sequence runners over [B,T,D] with per-item valid lengths. Reversed runs
// walk each item's own valid frames back to front; outputs land at their
// original time positions. Padded positions must be masked downstream.
ag::Var RunLstm(const LstmCell& cell, const ag::Var& xs,
                const std::vector<int64_t>& lengths, bool reverse);
ag::Var RunGru(const GruCell& cell, const ag::Var& xs,
               const std::vector<int64_t>& lengths, bool reverse);
ag::Var RunBiLstm(const LstmCell& fwd, const LstmCell& bwd, const ag::Var& xs,
                  const std::vector<int64_t>& lengths);
ag::Var RunBiGru(const GruCell& fwd, const GruCell& bwd, const ag::Var& xs,
                 const std::vector<int64_t>& lengths);

// Gathers the hidden state at each item's last valid frame, [B,T,H] -> [B,H].
ag::Var LastValidStates(const ag::Var& seq, const std::vector<int64_t>& lengths);

ag::Var Reshape(const ag::Var& x, std::vector<int64_t> shape);

// Same-padded 1-D convolution over [B,T,Cin] -> [B,T,Cout].
struct Conv1d {
  ag::Var w, b;  // [K*Cin, Cout], [Cout]
  int64_t k = 0, cin = 0, cout = 0;
  static Conv1d Create(ParamRegistry& reg, const std::string& name, int64_t cin,
                       int64_t cout, int64_t k, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

// 3x3 stride-2 convolution over [B,T,F,Cin] -> [B,ceil(T/2),ceil(F/2),Cout].
struct Conv2dS2 {
  ag::Var w, b;  // [9*Cin, Cout], [Cout]
  int64_t cin = 0, cout = 0;
  static Conv2dS2 Create(ParamRegistry& reg, const std::string& name, int64_t cin,
                         int64_t cout, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

struct LayerNorm {
  ag::Var gamma, beta;
  static LayerNorm Create(ParamRegistry& reg, const std::string& name, int64_t dim);
  ag::Var operator()(const ag::Var& x) const;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ag::Var> params, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f);
  // Clips the global gradient norm, then applies one update. Returns the
  // pre-clip gradient norm.
  float Step(float lr, float max_grad_norm);
  void ZeroGrad();

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  float beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace natp::nn

#endif  // NATP_NN_HPP_

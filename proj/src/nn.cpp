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

#include "natp/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace natp::nn {

using ag::Var;

ag::Var ParamRegistry::Create(const std::string& name, std::vector<int64_t> shape) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = ag::Leaf(Tensor(std::move(shape)), name);
  params_.push_back(v);
  by_name_[name] = v;
  return v;
}

ag::Var ParamRegistry::Find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::map<std::string, Tensor> ParamRegistry::Snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : by_name_) out.emplace(name, v->value);
  return out;
}

void ParamRegistry::Restore(const std::map<std::string, Tensor>& tensors) {
  for (const auto& [name, v] : by_name_) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint is missing parameter: " + name);
    if (it->second.shape != v->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": " +
                               it->second.ShapeStr() + " vs " + v->value.ShapeStr());
    v->value = it->second;
  }
}

uint64_t ParamRegistry::ContentHash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, v] : by_name_) {
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(v->value.data.data());
    for (size_t i = 0; i < v->value.data.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void ParamRegistry::ZeroGrad() {
  for (auto& p : params_)
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
}

void XavierInit(Tensor& t, Rng& rng) {
  const int64_t fan_out = t.cols();
  const int64_t fan_in = t.numel() / std::max<int64_t>(fan_out, 1);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (float& v : t.data) v = static_cast<float>(rng.Uniform(-a, a));
}

void NormalInit(Tensor& t, Rng& rng, float stddev) {
  for (float& v : t.data) v = static_cast<float>(rng.Normal(0.0, stddev));
}

void ConstInit(Tensor& t, float v) { std::fill(t.data.begin(), t.data.end(), v); }

Linear Linear::Create(ParamRegistry& reg, const std::string& name, int64_t in,
                      int64_t out, Rng& rng) {
  Linear l;
  l.w = reg.Create(name + ".w", {in, out});
  l.b = reg.Create(name + ".b", {out});
  XavierInit(l.w->value, rng);
  return l;
}

ag::Var Linear::operator()(const ag::Var& x) const {
  return ag::AddBias(ag::MatMul(x, w), b);
}

LstmCell LstmCell::Create(ParamRegistry& reg, const std::string& name, int64_t in,
                          int64_t hidden, Rng& rng) {
  LstmCell c;
  c.hidden = hidden;
  c.w_ih = reg.Create(name + ".w_ih", {in, 4 * hidden});
  c.w_hh = reg.Create(name + ".w_hh", {hidden, 4 * hidden});
  c.b = reg.Create(name + ".b", {4 * hidden});
  XavierInit(c.w_ih->value, rng);
  XavierInit(c.w_hh->value, rng);
  // forget-gate bias at 1
  for (int64_t i = hidden; i < 2 * hidden; ++i) c.b->value.data[i] = 1.0f;
  return c;
}

std::pair<Var, Var> LstmCell::StepPre(const Var& gates_x, const Var& h,
                                      const Var& c) const {
  Var gates = ag::AddBias(ag::Add(gates_x, ag::MatMul(h, w_hh)), b);
  Var i = ag::Sigmoid(ag::SliceCols(gates, 0, hidden));
  Var f = ag::Sigmoid(ag::SliceCols(gates, hidden, hidden));
  Var g = ag::Tanh(ag::SliceCols(gates, 2 * hidden, hidden));
  Var o = ag::Sigmoid(ag::SliceCols(gates, 3 * hidden, hidden));
  Var c_next = ag::Add(ag::Mul(f, c), ag::Mul(i, g));
  Var h_next = ag::Mul(o, ag::Tanh(c_next));
  return {h_next, c_next};
}

std::pair<Var, Var> LstmCell::Step(const Var& x, const Var& h, const Var& c) const {
  return StepPre(ag::MatMul(x, w_ih), h, c);
}

GruCell GruCell::Create(ParamRegistry& reg, const std::string& name, int64_t in,
                        int64_t hidden, Rng& rng) {
  GruCell c;
  c.hidden = hidden;
  c.w_ih = reg.Create(name + ".w_ih", {in, 3 * hidden});
  c.w_hh = reg.Create(name + ".w_hh", {hidden, 3 * hidden});
  c.b_ih = reg.Create(name + ".b_ih", {3 * hidden});
  c.b_hh = reg.Create(name + ".b_hh", {3 * hidden});
  XavierInit(c.w_ih->value, rng);
  XavierInit(c.w_hh->value, rng);
  return c;
}

ag::Var GruCell::StepPre(const Var& gates_x, const Var& h) const {
  Var gx = ag::AddBias(gates_x, b_ih);
  Var gh = ag::AddBias(ag::MatMul(h, w_hh), b_hh);
  Var r = ag::Sigmoid(ag::Add(ag::SliceCols(gx, 0, hidden), ag::SliceCols(gh, 0, hidden)));
  Var z = ag::Sigmoid(
      ag::Add(ag::SliceCols(gx, hidden, hidden), ag::SliceCols(gh, hidden, hidden)));
  Var n = ag::Tanh(ag::Add(ag::SliceCols(gx, 2 * hidden, hidden),
                           ag::Mul(r, ag::SliceCols(gh, 2 * hidden, hidden))));
  // h' = n + z * (h - n)
  return ag::Add(n, ag::Mul(z, ag::Sub(h, n)));
}

namespace {

// Per-item time reversal map; an involution, so it un-reverses too.
std::vector<int64_t> ReverseRows(const std::vector<int64_t>& lengths, int64_t t_count) {
  const int64_t b_count = static_cast<int64_t>(lengths.size());
  std::vector<int64_t> rows(static_cast<size_t>(b_count * t_count));
  for (int64_t b = 0; b < b_count; ++b)
    for (int64_t t = 0; t < t_count; ++t) {
      const int64_t src = t < lengths[static_cast<size_t>(b)]
                              ? lengths[static_cast<size_t>(b)] - 1 - t
                              : t;
      rows[static_cast<size_t>(b * t_count + t)] = b * t_count + src;
    }
  return rows;
}

std::vector<int64_t> StepRows(int64_t b_count, int64_t t_count, int64_t t) {
  std::vector<int64_t> rows(static_cast<size_t>(b_count));
  for (int64_t b = 0; b < b_count; ++b) rows[static_cast<size_t>(b)] = b * t_count + t;
  return rows;
}

}  // namespace

ag::Var Reshape(const ag::Var& x, std::vector<int64_t> shape) {
  if (Tensor::Numel(shape) != x->value.numel())
    throw std::invalid_argument("Reshape: numel mismatch");
  Tensor out(shape, x->value.data);
  auto n = std::make_shared<ag::Node>();
  n->value = std::move(out);
  if (ag::GradEnabled() && x->requires_grad) {
    n->requires_grad = true;
    n->parents = {x};
    n->backward = [x = x.get()](ag::Node& nd) {
      x->EnsureGrad();
      for (size_t i = 0; i < nd.grad.data.size(); ++i) x->grad.data[i] += nd.grad.data[i];
    };
  }
  return n;
}

ag::Var RunLstm(const LstmCell& cell, const ag::Var& xs,
                const std::vector<int64_t>& lengths, bool reverse) {
  const int64_t b_count = xs->value.dim(0), t_count = xs->value.dim(1);
  Var x_in = xs;
  if (reverse) {
    x_in = Reshape(ag::GatherRows(xs, ReverseRows(lengths, t_count)),
                   {b_count, t_count, xs->value.dim(2)});
  }
  Var gates_all = ag::MatMul(x_in, cell.w_ih);  // [B,T,4H]
  Var h = ag::Constant(Tensor({b_count, cell.hidden}));
  Var c = ag::Constant(Tensor({b_count, cell.hidden}));
  std::vector<Var> steps;
  steps.reserve(static_cast<size_t>(t_count));
  for (int64_t t = 0; t < t_count; ++t) {
    Var gx = ag::GatherRows(gates_all, StepRows(b_count, t_count, t));
    std::tie(h, c) = cell.StepPre(gx, h, c);
    steps.push_back(h);
  }
  Var out = ag::StackTime(steps);
  if (reverse)
    out = Reshape(ag::GatherRows(out, ReverseRows(lengths, t_count)),
                  {b_count, t_count, cell.hidden});
  return out;
}

ag::Var RunGru(const GruCell& cell, const ag::Var& xs,
               const std::vector<int64_t>& lengths, bool reverse) {
  const int64_t b_count = xs->value.dim(0), t_count = xs->value.dim(1);
  Var x_in = xs;
  if (reverse) {
    x_in = Reshape(ag::GatherRows(xs, ReverseRows(lengths, t_count)),
                   {b_count, t_count, xs->value.dim(2)});
  }
  Var gates_all = ag::MatMul(x_in, cell.w_ih);  // [B,T,3H]
  Var h = ag::Constant(Tensor({b_count, cell.hidden}));
  std::vector<Var> steps;
  steps.reserve(static_cast<size_t>(t_count));
  for (int64_t t = 0; t < t_count; ++t) {
    Var gx = ag::GatherRows(gates_all, StepRows(b_count, t_count, t));
    h = cell.StepPre(gx, h);
    steps.push_back(h);
  }
  Var out = ag::StackTime(steps);
  if (reverse)
    out = Reshape(ag::GatherRows(out, ReverseRows(lengths, t_count)),
                  {b_count, t_count, cell.hidden});
  return out;
}

ag::Var RunBiLstm(const LstmCell& fwd, const LstmCell& bwd, const ag::Var& xs,
                  const std::vector<int64_t>& lengths) {
  const int64_t b_count = xs->value.dim(0), t_count = xs->value.dim(1);
  Var f = RunLstm(fwd, xs, lengths, false);
  Var b = RunLstm(bwd, xs, lengths, true);
  Var cat = ag::ConcatCols({Reshape(f, {b_count * t_count, fwd.hidden}),
                            Reshape(b, {b_count * t_count, bwd.hidden})});
  return Reshape(cat, {b_count, t_count, fwd.hidden + bwd.hidden});
}

ag::Var RunBiGru(const GruCell& fwd, const GruCell& bwd, const ag::Var& xs,
                 const std::vector<int64_t>& lengths) {
  const int64_t b_count = xs->value.dim(0), t_count = xs->value.dim(1);
  Var f = RunGru(fwd, xs, lengths, false);
  Var b = RunGru(bwd, xs, lengths, true);
  Var cat = ag::ConcatCols({Reshape(f, {b_count * t_count, fwd.hidden}),
                            Reshape(b, {b_count * t_count, bwd.hidden})});
  return Reshape(cat, {b_count, t_count, fwd.hidden + bwd.hidden});
}

ag::Var LastValidStates(const ag::Var& seq, const std::vector<int64_t>& lengths) {
  const int64_t t_count = seq->value.dim(1);
  std::vector<int64_t> rows(lengths.size());
  for (size_t b = 0; b < lengths.size(); ++b)
    rows[b] = static_cast<int64_t>(b) * t_count + std::max<int64_t>(lengths[b] - 1, 0);
  return ag::GatherRows(seq, rows);
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

Conv1d Conv1d::Create(ParamRegistry& reg, const std::string& name, int64_t cin,
                      int64_t cout, int64_t k, Rng& rng) {
  Conv1d c;
  c.k = k;
  c.cin = cin;
  c.cout = cout;
  c.w = reg.Create(name + ".w", {k * cin, cout});
  c.b = reg.Create(name + ".b", {cout});
  XavierInit(c.w->value, rng);
  return c;
}

ag::Var Conv1d::operator()(const ag::Var& x) const {
  if (x->value.rank() != 3 || x->value.dim(2) != cin)
    throw std::invalid_argument("Conv1d: expected [B,T," + std::to_string(cin) + "]");
  const int64_t b_count = x->value.dim(0), t_count = x->value.dim(1);
  const int64_t half = k / 2;
  // im2col: [B*T, K*Cin] with zero rows outside each item's tensor.
  Tensor cols({b_count * t_count, k * cin});
  for (int64_t b = 0; b < b_count; ++b)
    for (int64_t t = 0; t < t_count; ++t)
      for (int64_t dk = 0; dk < k; ++dk) {
        const int64_t src = t + dk - half;
        if (src < 0 || src >= t_count) continue;
        std::copy_n(&x->value.data[(b * t_count + src) * cin], cin,
                    &cols.data[(b * t_count + t) * (k * cin) + dk * cin]);
      }
  Var cols_var;
  if (ag::GradEnabled() && x->requires_grad) {
    auto n = std::make_shared<ag::Node>();
    n->value = std::move(cols);
    n->requires_grad = true;
    n->parents = {x};
    n->backward = [x = x.get(), b_count, t_count, k = this->k, cin = this->cin,
                   half](ag::Node& nd) {
      x->EnsureGrad();
      for (int64_t b = 0; b < b_count; ++b)
        for (int64_t t = 0; t < t_count; ++t)
          for (int64_t dk = 0; dk < k; ++dk) {
            const int64_t src = t + dk - half;
            if (src < 0 || src >= t_count) continue;
            const float* g = &nd.grad.data[(b * t_count + t) * (k * cin) + dk * cin];
            float* dst = &x->grad.data[(b * t_count + src) * cin];
            for (int64_t c = 0; c < cin; ++c) dst[c] += g[c];
          }
    };
    cols_var = n;
  } else {
    cols_var = ag::Constant(std::move(cols));
  }
  Var out = ag::AddBias(ag::MatMul(cols_var, w), b);
  return Reshape(out, {b_count, t_count, cout});
}

Conv2dS2 Conv2dS2::Create(ParamRegistry& reg, const std::string& name, int64_t cin,
                          int64_t cout, Rng& rng) {
  Conv2dS2 c;
  c.cin = cin;
  c.cout = cout;
  c.w = reg.Create(name + ".w", {9 * cin, cout});
  c.b = reg.Create(name + ".b", {cout});
  XavierInit(c.w->value, rng);
  return c;
}

ag::Var Conv2dS2::operator()(const ag::Var& x) const {
  if (x->value.rank() != 4 || x->value.dim(3) != cin)
    throw std::invalid_argument("Conv2dS2: expected [B,T,F,Cin]");
  const int64_t b_count = x->value.dim(0), t_count = x->value.dim(1),
                f_count = x->value.dim(2);
  const int64_t t2 = (t_count + 1) / 2, f2 = (f_count + 1) / 2;
  Tensor cols({b_count * t2 * f2, 9 * cin});
  auto src_index = [&](int64_t b, int64_t t, int64_t f) {
    return ((b * t_count + t) * f_count + f) * cin;
  };
  for (int64_t b = 0; b < b_count; ++b)
    for (int64_t ot = 0; ot < t2; ++ot)
      for (int64_t of = 0; of < f2; ++of) {
        float* dst = &cols.data[((b * t2 + ot) * f2 + of) * (9 * cin)];
        for (int64_t di = 0; di < 3; ++di)
          for (int64_t dj = 0; dj < 3; ++dj) {
            const int64_t st = 2 * ot + di - 1, sf = 2 * of + dj - 1;
            if (st < 0 || st >= t_count || sf < 0 || sf >= f_count) continue;
            std::copy_n(&x->value.data[src_index(b, st, sf)], cin,
                        dst + (di * 3 + dj) * cin);
          }
      }
  Var cols_var;
  if (ag::GradEnabled() && x->requires_grad) {
    auto n = std::make_shared<ag::Node>();
    n->value = std::move(cols);
    n->requires_grad = true;
    n->parents = {x};
    n->backward = [x = x.get(), b_count, t_count, f_count, t2, f2,
                   cin = this->cin](ag::Node& nd) {
      x->EnsureGrad();
      for (int64_t b = 0; b < b_count; ++b)
        for (int64_t ot = 0; ot < t2; ++ot)
          for (int64_t of = 0; of < f2; ++of) {
            const float* g = &nd.grad.data[((b * t2 + ot) * f2 + of) * (9 * cin)];
            for (int64_t di = 0; di < 3; ++di)
              for (int64_t dj = 0; dj < 3; ++dj) {
                const int64_t st = 2 * ot + di - 1, sf = 2 * of + dj - 1;
                if (st < 0 || st >= t_count || sf < 0 || sf >= f_count) continue;
                float* dst = &x->grad.data[((b * t_count + st) * f_count + sf) * cin];
                for (int64_t c = 0; c < cin; ++c) dst[c] += g[(di * 3 + dj) * cin + c];
              }
          }
    };
    cols_var = n;
  } else {
    cols_var = ag::Constant(std::move(cols));
  }
  Var out = ag::AddBias(ag::MatMul(cols_var, w), b);
  return Reshape(out, {b_count, t2, f2, cout});
}

LayerNorm LayerNorm::Create(ParamRegistry& reg, const std::string& name, int64_t dim) {
  LayerNorm ln;
  ln.gamma = reg.Create(name + ".gamma", {dim});
  ln.beta = reg.Create(name + ".beta", {dim});
  ConstInit(ln.gamma->value, 1.0f);
  return ln;
}

ag::Var LayerNorm::operator()(const ag::Var& x) const {
  return ag::LayerNormRows(x, gamma, beta);
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<ag::Var> params, float beta1, float beta2,
                             float eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

float AdamOptimizer::Step(float lr, float max_grad_norm) {
  double norm_sq = 0.0;
  for (const auto& p : params_)
    for (float g : p->grad.data) norm_sq += static_cast<double>(g) * g;
  const float norm = static_cast<float>(std::sqrt(norm_sq));
  float scale = 1.0f;
  if (max_grad_norm > 0.0f && norm > max_grad_norm) scale = max_grad_norm / norm;

  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p->grad.data.empty()) continue;
    for (size_t j = 0; j < p->value.data.size(); ++j) {
      const float g = p->grad.data[j] * scale;
      m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0f - beta1_) * g;
      v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0f - beta2_) * g * g;
      const float mhat = m_[i].data[j] / bc1;
      const float vhat = v_[i].data[j] / bc2;
      p->value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  return norm;
}

void AdamOptimizer::ZeroGrad() {
  for (auto& p : params_)
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
}

}  // namespace natp::nn

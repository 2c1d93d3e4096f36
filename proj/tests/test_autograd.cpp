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

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "natp/autograd.hpp"
#include "natp/nn.hpp"
#include "natp/rng.hpp"

using namespace natp;
using ag::Var;

namespace {

Tensor RandTensor(std::vector<int64_t> shape, Rng& rng, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.Normal(0.0, scale));
  return t;
}

Tensor Ones(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  std::fill(t.data.begin(), t.data.end(), 1.0f);
  return t;
}

// Compares reverse-mode gradients of a scalar-valued graph against central
// finite differences on every coordinate of every leaf.
void GradCheck(const std::vector<Var>& leaves,
               const std::function<Var()>& build, float tol = 2e-2f) {
  Var loss = build();
  ag::Backward(loss);
  for (const auto& leaf : leaves) {
    REQUIRE(!leaf->grad.data.empty());
    for (size_t i = 0; i < leaf->value.data.size(); ++i) {
      const float keep = leaf->value.data[i];
      const float h = 1e-2f;
      leaf->value.data[i] = keep + h;
      const float hi = build()->value.data[0];
      leaf->value.data[i] = keep - h;
      const float lo = build()->value.data[0];
      leaf->value.data[i] = keep;
      const float fd = (hi - lo) / (2.0f * h);
      const float got = leaf->grad.data[i];
      const float scale = std::max({std::fabs(fd), std::fabs(got), 0.05f});
      CHECK(std::fabs(fd - got) <= tol * scale);
    }
  }
}

}  // namespace

TEST_CASE("linear + tanh + cross entropy gradients") {
  Rng rng(1);
  Var w1 = ag::Leaf(RandTensor({4, 6}, rng, 0.5f), "w1");
  Var b1 = ag::Leaf(RandTensor({6}, rng, 0.1f), "b1");
  Var w2 = ag::Leaf(RandTensor({6, 3}, rng, 0.5f), "w2");
  Tensor x = RandTensor({5, 4}, rng);
  Tensor target({5, 3});
  for (int r = 0; r < 5; ++r) target.data[static_cast<size_t>(r * 3 + r % 3)] = 1.0f;
  Tensor rows = Ones({5});
  auto build = [&]() {
    Var h = ag::Tanh(ag::AddBias(ag::MatMul(ag::Constant(x), w1), b1));
    Var logits = ag::MatMul(h, w2);
    return ag::CeWithLogitsRows(logits, target, rows);
  };
  GradCheck({w1, b1, w2}, build);
}

TEST_CASE("gaussian attention pipeline gradients") {
  Rng rng(2);
  const int64_t b_count = 3, j_count = 6, width = 4;
  Var mu_raw = ag::Leaf(RandTensor({b_count}, rng, 0.5f), "mu");
  Var sg_raw = ag::Leaf(RandTensor({b_count}, rng, 0.5f), "sg");
  Var mem = ag::Leaf(RandTensor({b_count, j_count, width}, rng, 0.7f), "mem");
  Tensor mask = Ones({b_count, j_count});
  mask.data[static_cast<size_t>(1 * j_count + 5)] = 0.0f;  // one padded slot
  Tensor target = RandTensor({b_count, width}, rng);
  auto build = [&]() {
    Var mu = ag::Add(ag::Sigmoid(mu_raw), ag::Sigmoid(mu_raw));
    Var sigma = ag::Softplus(sg_raw);
    Var alpha = ag::GaussianRow(mu, sigma, j_count, mask);
    Var norm = ag::NormalizeRowsMasked(alpha, mask);
    Var ctx = ag::Attend(norm, mem);
    return ag::MaskedMse(ctx, target, Ones({b_count, width}));
  };
  GradCheck({mu_raw, sg_raw, mem}, build);
}

TEST_CASE("soft upsampling + KL gradients flow to ranges") {
  Rng rng(3);
  const int64_t b_count = 2, j_count = 4, t_count = 7;
  Var ranges_raw = ag::Leaf(RandTensor({b_count, j_count}, rng, 0.4f), "r");
  Tensor centers({b_count, j_count});
  for (int64_t b = 0; b < b_count; ++b)
    for (int64_t j = 0; j < j_count; ++j)
      centers.data[static_cast<size_t>(b * j_count + j)] =
          0.9f * static_cast<float>(j) + 0.5f;
  Tensor fmask = Ones({b_count, t_count});
  fmask.data[static_cast<size_t>(1 * t_count + 6)] = 0.0f;
  Tensor jmask = Ones({b_count, j_count});
  Tensor p({b_count, t_count, j_count});
  Rng rng2(17);
  for (int64_t r = 0; r < b_count * t_count; ++r) {
    float sum = 0.0f;
    for (int64_t j = 0; j < j_count; ++j) {
      p.data[static_cast<size_t>(r * j_count + j)] =
          static_cast<float>(rng2.Uniform(0.05, 1.0));
      sum += p.data[static_cast<size_t>(r * j_count + j)];
    }
    for (int64_t j = 0; j < j_count; ++j)
      p.data[static_cast<size_t>(r * j_count + j)] /= sum;
  }
  Tensor row_mask = Ones({b_count * t_count});
  row_mask.data[static_cast<size_t>(1 * t_count + 6)] = 0.0f;
  auto build = [&]() {
    Var ranges = ag::Softplus(ranges_raw);
    Var up = ag::UpsampleSoftRows(ranges, centers, fmask, jmask);
    return ag::MaskedKlConstP(p, up, row_mask, jmask);
  };
  GradCheck({ranges_raw}, build);
}

TEST_CASE("bilstm and gru sequence gradients with ragged lengths") {
  Rng rng(4);
  const int64_t b_count = 2, t_count = 5, in_dim = 3;
  nn::ParamRegistry reg;
  auto fwd = nn::LstmCell::Create(reg, "f", in_dim, 4, rng);
  auto bwd = nn::LstmCell::Create(reg, "b", in_dim, 4, rng);
  auto gf = nn::GruCell::Create(reg, "gf", 8, 3, rng);
  std::vector<int64_t> lengths = {5, 3};
  Tensor x = RandTensor({b_count, t_count, in_dim}, rng);
  // padded frames zeroed the way model input masking does
  for (int64_t t = 3; t < 5; ++t)
    for (int64_t c = 0; c < in_dim; ++c)
      x.data[static_cast<size_t>((1 * t_count + t) * in_dim + c)] = 0.0f;
  Tensor target = RandTensor({b_count, t_count, 3}, rng);
  Tensor mask({b_count, t_count, 3});
  for (int64_t b = 0; b < b_count; ++b)
    for (int64_t t = 0; t < lengths[static_cast<size_t>(b)]; ++t)
      for (int64_t c = 0; c < 3; ++c)
        mask.data[static_cast<size_t>((b * t_count + t) * 3 + c)] = 1.0f;

  auto build = [&]() {
    Var h = nn::RunBiLstm(fwd, bwd, ag::Constant(x), lengths);
    Var g = nn::RunGru(gf, h, lengths, true);
    return ag::MaskedL1(g, target, mask);
  };
  GradCheck({fwd.w_ih, fwd.w_hh, fwd.b, bwd.w_ih, gf.w_ih, gf.w_hh, gf.b_ih, gf.b_hh},
            build, 3e-2f);
}

TEST_CASE("conv1d, conv2d and layer norm gradients") {
  Rng rng(5);
  nn::ParamRegistry reg;
  auto c1 = nn::Conv1d::Create(reg, "c1", 3, 4, 5, rng);
  auto ln = nn::LayerNorm::Create(reg, "ln", 4);
  auto c2 = nn::Conv2dS2::Create(reg, "c2", 1, 2, rng);
  Tensor x = RandTensor({2, 6, 3}, rng);
  Tensor img = RandTensor({2, 5, 4, 1}, rng);
  Tensor t1 = RandTensor({2, 6, 4}, rng);
  Tensor t2 = RandTensor({2, 3, 2, 2}, rng);
  auto build = [&]() {
    Var a = ag::MaskedMse(ln(c1(ag::Constant(x))), t1, Ones({2, 6, 4}));
    Var b = ag::MaskedMse(c2(ag::Constant(img)), t2, Ones({2, 3, 2, 2}));
    return ag::SumScalars({a, b});
  };
  GradCheck({c1.w, c1.b, ln.gamma, ln.beta, c2.w, c2.b}, build);
}

TEST_CASE("softmax rows, emd2 and positional code gradients") {
  Rng rng(6);
  Var logits = ag::Leaf(RandTensor({3, 5}, rng), "lg");
  Var mu = ag::Leaf(RandTensor({4}, rng, 0.4f), "mu");
  Tensor target({3, 5});
  for (int r = 0; r < 3; ++r) target.data[static_cast<size_t>(r * 5 + (r + 1))] = 1.0f;
  Tensor rows = Ones({3});
  Tensor ptarget = RandTensor({4, 32}, rng, 0.3f);
  auto build = [&]() {
    Var probs = ag::RowSoftmaxMasked(logits, Ones({3, 5}));
    Var a = ag::Emd2Rows(probs, target, rows);
    Var code = ag::SinPosCode(ag::Sigmoid(mu), 32);  // keep off integer kinks
    Var b = ag::MaskedMse(code, ptarget, Ones({4, 32}));
    return ag::SumScalars({a, b}, {1.0f, 0.5f});
  };
  GradCheck({logits, mu}, build);
}

TEST_CASE("scatter row and attend mix gradients") {
  Rng rng(7);
  const int64_t b_count = 2, w_count = 3, width = 4;
  Var base = ag::Constant(Tensor({b_count, w_count, width}));
  Var row0 = ag::Leaf(RandTensor({1, width}, rng), "r0");
  Var row1 = ag::Leaf(RandTensor({1, width}, rng), "r1");
  Var s = ag::Leaf(RandTensor({b_count, w_count}, rng, 0.5f), "s");
  Tensor target = RandTensor({b_count, width}, rng);
  auto build = [&]() {
    Var v1 = ag::ScatterRow(base, 0, 1, row0);
    Var v2 = ag::ScatterRow(v1, 1, 2, row1);
    Var mix = ag::Attend(s, v2);
    return ag::MaskedL1(mix, target, Ones({b_count, width}));
  };
  GradCheck({row0, row1, s}, build);
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(8);
  Var w = ag::Leaf(RandTensor({3, 3}, rng), "w");
  Tensor x = RandTensor({2, 3}, rng);
  Var h = ag::MatMul(ag::Constant(x), w);
  Var blocked = ag::Detach(h);
  CHECK(!blocked->requires_grad);
  Var loss = ag::MaskedMse(ag::Mul(blocked, blocked), Tensor({2, 3}), Ones({2, 3}));
  CHECK(!loss->requires_grad);

  // the undetached path still reaches w
  Var loss2 = ag::MaskedMse(h, Tensor({2, 3}), Ones({2, 3}));
  ag::Backward(loss2);
  float total = 0.0f;
  for (float g : w->grad.data) total += std::fabs(g);
  CHECK(total > 0.0f);
}

TEST_CASE("no-grad guard builds value-only graphs") {
  Rng rng(9);
  Var w = ag::Leaf(RandTensor({2, 2}, rng), "w");
  ag::NoGradGuard guard;
  Var h = ag::MatMul(ag::Constant(RandTensor({2, 2}, rng)), w);
  CHECK(!h->requires_grad);
  CHECK(h->parents.empty());
}

TEST_CASE("adam optimizer drives a quadratic to its minimum") {
  Rng rng(10);
  Var w = ag::Leaf(RandTensor({4}, rng, 2.0f), "w");
  Tensor target({4});
  for (int i = 0; i < 4; ++i) target.data[static_cast<size_t>(i)] = static_cast<float>(i);
  nn::AdamOptimizer opt({w});
  for (int step = 0; step < 400; ++step) {
    opt.ZeroGrad();
    Var loss = ag::MaskedMse(w, target, Ones({4}));
    ag::Backward(loss);
    opt.Step(0.05f, 0.0f);
  }
  for (int i = 0; i < 4; ++i)
    CHECK(w->value.data[static_cast<size_t>(i)] ==
          doctest::Approx(static_cast<double>(i)).epsilon(1e-2));
}

TEST_CASE("masked losses ignore perturbations in padded regions") {
  Rng rng(11);
  Tensor x = RandTensor({2, 4, 3}, rng);
  Tensor mask({2, 4, 3});
  for (int64_t i = 0; i < 12; ++i) mask.data[static_cast<size_t>(i)] = 1.0f;  // item 0 only
  Tensor target = RandTensor({2, 4, 3}, rng);
  const float before = ag::MaskedL1(ag::Constant(x), target, mask)->value.data[0];
  Tensor x2 = x;
  for (int64_t i = 12; i < 24; ++i) x2.data[static_cast<size_t>(i)] += 37.0f;
  const float after = ag::MaskedL1(ag::Constant(x2), target, mask)->value.data[0];
  CHECK(std::fabs(before - after) < 1e-7f);
}

TEST_CASE("parameter registry snapshot and restore round trip") {
  Rng rng(12);
  nn::ParamRegistry reg;
  auto lin = nn::Linear::Create(reg, "lin", 3, 2, rng);
  auto snap = reg.Snapshot();
  const uint64_t h0 = reg.ContentHash();
  lin.w->value.data[0] += 1.0f;
  CHECK(reg.ContentHash() != h0);
  reg.Restore(snap);
  CHECK(reg.ContentHash() == h0);

  nn::ParamRegistry other;
  nn::Linear::Create(other, "other", 3, 2, rng);
  CHECK_THROWS(other.Restore(snap));
}

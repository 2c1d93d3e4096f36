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

#include "natp/align.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "natp/rng.hpp"
#include "test_util.hpp"

using namespace natp;
using namespace natp::align;

namespace {

AttentionParams RandomParams(Rng& rng, int hidden) {
  AttentionParams p = AttentionParams::Zeros(hidden, 16);
  for (double& v : p.w) v = rng.Normal(0.0, 0.5);
  for (double& v : p.b) v = rng.Normal(0.0, 0.5);
  for (double& v : p.v) v = rng.Normal(0.0, 0.5);
  return p;
}

std::vector<AttentionState> TraceFromMus(const std::vector<double>& mus) {
  std::vector<AttentionState> t;
  for (double m : mus) t.push_back({m, 1.0, 0.0});
  return t;
}

}  // namespace

TEST_CASE("sigmoid and softplus anchors") {
  CHECK(Sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(Softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("attention step with zero inputs hits the analytic anchors") {
  AttentionParams p = AttentionParams::Zeros(4);
  std::vector<double> hidden(4, 0.0);
  AttentionState prev{1.5, 1.0, 0.5};
  auto r = AttentionStep(hidden, prev, p, 8);
  CHECK(r.next.delta == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.next.sigma == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.next.mu == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gaussian weights at mu=2 sigma=1 match hand values") {
  AttentionParams p = AttentionParams::Zeros(2);
  // Arrange sigma == 1 and mu == 2 exactly: ReLU(W h + b) = [1, 0, ...] with
  // W row0 = [1, 0], then V maps it to (log(e-1), 0) so softplus gives 1 and
  // sigmoid gives 0.5 on top of prev.mu = 1.5.
  AttentionState prev{1.5, 1.0, 0.5};
  std::vector<double> hidden = {1.0, 0.0};
  p.w[0] = 1.0;
  p.v[0] = std::log(std::exp(1.0) - 1.0);
  auto r = AttentionStep(hidden, prev, p, 5);
  CHECK(r.next.sigma == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.next.mu == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.alpha[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(r.alpha[1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(r.alpha[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.alpha[3] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(r.alpha[4] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(r.alpha[1] == doctest::Approx(r.alpha[3]).epsilon(1e-12));
  double norm_sum = 0.0;
  for (double v : r.alpha_norm) norm_sum += v;
  CHECK(norm_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("attention step rejects non-finite hidden state naming the step") {
  AttentionParams p = AttentionParams::Zeros(2);
  std::vector<double> hidden = {0.0, std::nan("")};
  AttentionState prev;
  try {
    AttentionStep(hidden, prev, p, 4, 17);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("attention chains are monotone with increments in (0,1)") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionParams p = RandomParams(rng, 6);
    AttentionState s;
    double prev_mu = 0.0;
    const int steps = rng.UniformInt(5, 60);
    for (int i = 0; i < steps; ++i) {
      std::vector<double> h(6);
      for (double& x : h) x = rng.Normal(0.0, 2.0);
      auto r = AttentionStep(h, s, p, 20, i);
      CHECK(r.next.mu > prev_mu);
      CHECK(r.next.delta > 0.0);
      CHECK(r.next.delta < 1.0);
      CHECK(r.next.sigma > 0.0);
      prev_mu = r.next.mu;
      s = r.next;
    }
  }
}

TEST_CASE("attention step gradients match finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int hidden_dim = 5;
    const int64_t j_count = 7;
    AttentionParams p = RandomParams(rng, hidden_dim);
    std::vector<double> h(hidden_dim);
    for (double& x : h) x = rng.Normal(0.0, 1.0);
    AttentionState prev{rng.Uniform(0.0, 3.0), 1.0, 0.5};

    // random linear functional over all outputs
    std::vector<double> r_alpha(static_cast<size_t>(j_count));
    for (double& x : r_alpha) x = rng.Normal(0.0, 1.0);
    const double r_mu = rng.Normal(0.0, 1.0);
    const double r_sigma = rng.Normal(0.0, 1.0);
    const double r_delta = rng.Normal(0.0, 1.0);

    auto phi = [&](const std::vector<double>& hidden_in, const AttentionParams& params,
                   double prev_mu) {
      AttentionState pr = prev;
      pr.mu = prev_mu;
      auto res = AttentionStep(hidden_in, pr, params, j_count);
      double acc = r_mu * res.next.mu + r_sigma * res.next.sigma + r_delta * res.next.delta;
      for (int64_t j = 0; j < j_count; ++j)
        acc += r_alpha[static_cast<size_t>(j)] * res.alpha[static_cast<size_t>(j)];
      return acc;
    };

    auto g = AttentionStepVjp(h, prev, p, j_count, r_alpha, r_mu, r_sigma, r_delta);

    for (int i = 0; i < hidden_dim; ++i) {
      auto f = [&](const std::vector<double>& x) { return phi(x, p, prev.mu); };
      const double fd = test::CentralDiff(f, h, static_cast<size_t>(i));
      CHECK(test::CloseRel(g.d_hidden[static_cast<size_t>(i)], fd, 1e-3));
    }
    {
      auto f = [&](const std::vector<double>& x) { return phi(h, p, x[0]); };
      CHECK(test::CloseRel(g.d_prev_mu, test::CentralDiff(f, {prev.mu}, 0), 1e-3));
    }
    for (int probe = 0; probe < 5; ++probe) {
      const size_t wi = rng.NextU64() % p.w.size();
      auto fw = [&](const std::vector<double>& x) {
        AttentionParams q = p;
        q.w[wi] = x[0];
        return phi(h, q, prev.mu);
      };
      CHECK(test::CloseRel(g.d_w[wi], test::CentralDiff(fw, {p.w[wi]}, 0), 1e-3));
      const size_t vi = rng.NextU64() % p.v.size();
      auto fv = [&](const std::vector<double>& x) {
        AttentionParams q = p;
        q.v[vi] = x[0];
        return phi(h, q, prev.mu);
      };
      CHECK(test::CloseRel(g.d_v[vi], test::CentralDiff(fv, {p.v[vi]}, 0), 1e-3));
      const size_t bi = rng.NextU64() % p.b.size();
      auto fb = [&](const std::vector<double>& x) {
        AttentionParams q = p;
        q.b[bi] = x[0];
        return phi(h, q, prev.mu);
      };
      CHECK(test::CloseRel(g.d_b[bi], test::CentralDiff(fb, {p.b[bi]}, 0), 1e-3));
    }
  }
}

TEST_CASE("duration extraction follows the rounding rule") {
  CHECK(ExtractDurations(TraceFromMus({0.1, 0.3, 0.45}), 1) == std::vector<int64_t>{3});
  CHECK(ExtractDurations(TraceFromMus({0.2, 0.7, 1.1, 1.6, 2.4}), 3) ==
        std::vector<int64_t>{1, 2, 2});
  CHECK_THROWS_AS(ExtractDurations({}, 3), std::invalid_argument);
}

TEST_CASE("unfloored duration counts partition the trace") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int64_t j_count = rng.UniformInt(1, 12);
    std::vector<double> mus;
    double mu = 0.0;
    const int steps = rng.UniformInt(1, 80);
    for (int i = 0; i < steps; ++i) {
      mu += rng.Uniform(0.01, 0.99);
      mus.push_back(mu);
    }
    auto counts = ExtractDurationCounts(TraceFromMus(mus), j_count);
    int64_t total = 0;
    for (int64_t c : counts) total += c;
    CHECK(total == steps);
  }
}

TEST_CASE("gaussian upsample single column is all ones") {
  auto w = GaussianUpsample({4}, {0.7}, 4);
  for (double v : w) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("gaussian upsample matches the hand-evaluated 2x2 case") {
  auto w = GaussianUpsample({2, 2}, {0.5, 0.5}, 4);
  // row at t=0.5: unnormalized [exp(-0.5), exp(-12.5)]
  const double a = std::exp(-0.5), b = std::exp(-12.5);
  CHECK(w[0] == doctest::Approx(a / (a + b)).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(0.999994).epsilon(1e-6));
  for (int i = 0; i < 4; ++i)
    CHECK(w[2 * i] + w[2 * i + 1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gaussian upsample validates inputs") {
  CHECK_THROWS_AS(GaussianUpsample({2, 2}, {0.5, 0.5}, 5), std::invalid_argument);
  CHECK_THROWS_AS(GaussianUpsample({2, 2}, {0.5, -0.1}, 4), std::invalid_argument);
}

TEST_CASE("centroid of simple rows") {
  CHECK(Centroid({0, 0, 0, 1, 0}) == doctest::Approx(3.0));
  CHECK(Centroid({0.2, 0.2, 0.2, 0.2, 0.2}) == doctest::Approx(2.0));
  CHECK(Centroid({0.25, 0.75}) == doctest::Approx(0.75));
}

TEST_CASE("round trip through upsample and the rounding rule is exact") {
  // Ranges are in units of each position's own duration with one shared
  // factor per vector, the parameterization of the 2x2 example above
  // (ranges 0.5 for durations 2). The factor stays at or below 0.25: a
  // 1-frame position between two 12-frame positions flips near ratio 0.29,
  // see the boundary case below.
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t j_count = rng.UniformInt(1, 40);
    std::vector<int64_t> d(static_cast<size_t>(j_count));
    int64_t total = 0;
    for (auto& x : d) {
      x = rng.UniformInt(1, 12);
      total += x;
    }
    const double beta = rng.Uniform(0.02, 0.25);
    std::vector<double> ranges(static_cast<size_t>(j_count));
    for (size_t k = 0; k < ranges.size(); ++k)
      ranges[k] = beta * static_cast<double>(d[k]);
    auto w = GaussianUpsample(d, ranges, total);
    std::vector<AttentionState> trace(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) {
      std::vector<double> row(w.begin() + i * j_count, w.begin() + (i + 1) * j_count);
      trace[static_cast<size_t>(i)].mu = Centroid(row);
    }
    CHECK(ExtractDurationCounts(trace, j_count) == d);
  }
}

TEST_CASE("round trip boundary: a narrow position between wide ones flips near 0.29") {
  // At ratio 0.298 the second neighbor across the 1-frame position pulls the
  // edge-frame centroid past the rounding boundary; this pins the known edge
  // of the exact-recovery region.
  std::vector<int64_t> d = {12, 1, 12};
  std::vector<double> ranges = {0.298 * 12, 0.298, 0.298 * 12};
  auto w = GaussianUpsample(d, ranges, 25);
  std::vector<double> row(w.begin() + 11 * 3, w.begin() + 12 * 3);
  CHECK(Centroid(row) > 0.5);  // frame 11 de-camps from position 0

  std::vector<double> safe = {0.25 * 12, 0.25, 0.25 * 12};
  auto ws = GaussianUpsample(d, safe, 25);
  std::vector<AttentionState> trace(25);
  for (int64_t i = 0; i < 25; ++i) {
    std::vector<double> r(ws.begin() + i * 3, ws.begin() + (i + 1) * 3);
    trace[static_cast<size_t>(i)].mu = Centroid(r);
  }
  CHECK(ExtractDurationCounts(trace, 3) == d);
}

TEST_CASE("duration loss hand values and gradient") {
  CHECK(DurationLoss({std::log(3.0), std::log(7.0)}, {3, 7}) == doctest::Approx(0.0));
  CHECK(DurationLoss({0.0, 0.0}, {1, 1}) == doctest::Approx(0.0));
  CHECK(DurationLoss({0.0}, {2}) ==
        doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = static_cast<size_t>(rng.UniformInt(1, 8));
    std::vector<double> pred(n);
    std::vector<int64_t> tgt(n);
    for (size_t i = 0; i < n; ++i) {
      pred[i] = rng.Normal(1.0, 1.0);
      tgt[i] = rng.UniformInt(1, 12);
    }
    auto g = DurationLossGrad(pred, tgt);
    for (size_t i = 0; i < n; ++i) {
      auto f = [&](const std::vector<double>& x) { return DurationLoss(x, tgt); };
      CHECK(test::CloseRel(g[i], test::CentralDiff(f, pred, i), 1e-3));
    }
  }
}

TEST_CASE("alignment KL identities and hand value") {
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> q = {0.9, 0.1};
  CHECK(AlignmentKl(p, p, 1, 2) == doctest::Approx(0.0));
  const double hand = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(AlignmentKl(p, q, 1, 2) == doctest::Approx(hand).epsilon(1e-6));
  CHECK(AlignmentKl(p, q, 1, 2) == doctest::Approx(0.5108).epsilon(1e-4));
  CHECK_THROWS_AS(AlignmentKl(p, {0.9, 0.1, 0.0}, 1, 3), std::invalid_argument);
}

TEST_CASE("alignment KL is nonnegative and gradients match finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t t_count = rng.UniformInt(1, 4);
    const int64_t j_count = rng.UniformInt(2, 6);
    std::vector<double> a(static_cast<size_t>(t_count * j_count));
    std::vector<double> u(a.size());
    for (auto& x : a) x = rng.Uniform(0.01, 1.0);
    for (auto& x : u) x = rng.Uniform(0.01, 1.0);
    CHECK(AlignmentKl(a, u, t_count, j_count) >= 0.0);
    auto g = AlignmentKlGrad(a, u, t_count, j_count);
    for (size_t i = 0; i < a.size(); ++i) {
      auto fa = [&](const std::vector<double>& x) {
        return AlignmentKl(x, u, t_count, j_count);
      };
      CHECK(test::CloseRel(g.d_attn[i], test::CentralDiff(fa, a, i), 1e-3));
      auto fu = [&](const std::vector<double>& x) {
        return AlignmentKl(a, x, t_count, j_count);
      };
      CHECK(test::CloseRel(g.d_up[i], test::CentralDiff(fu, u, i), 1e-3));
    }
  }
}

TEST_CASE("positional encoding basics") {
  auto code = PositionalEncoding(3.0);
  for (int i = 0; i < 16; ++i) {
    CHECK(code[static_cast<size_t>(2 * i)] == doctest::Approx(0.0));
    CHECK(code[static_cast<size_t>(2 * i + 1)] == doctest::Approx(1.0));
  }
  CHECK(PositionalEncoding(1.25) == PositionalEncoding(2.25));
  for (double v : PositionalEncoding(0.73)) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
}

TEST_CASE("positional encoding gradient matches finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    // keep clear of integer boundaries where frac() kinks
    const double mu = rng.UniformInt(0, 5) + rng.Uniform(0.05, 0.95);
    auto g = PositionalEncodingGradMu(mu);
    for (int i = 0; i < 32; ++i) {
      auto f = [&](const std::vector<double>& x) {
        return PositionalEncoding(x[0])[static_cast<size_t>(i)];
      };
      const double fd = test::CentralDiff(f, {mu}, 0);
      // highest-frequency cos components have gradients ~1e-8, below the
      // finite-difference noise floor; compare those against a small floor
      CHECK(test::CloseRel(g[static_cast<size_t>(i)], fd, 1e-4, 1e-6));
    }
  }
}

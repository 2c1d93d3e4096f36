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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace natp::align {

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Softplus(double x) {
  // log1p(exp(x)) with the overflow-safe split.
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

AttentionParams AttentionParams::Zeros(int hidden_dim, int attn_dim) {
  AttentionParams p;
  p.hidden_dim = hidden_dim;
  p.attn_dim = attn_dim;
  p.w.assign(static_cast<size_t>(attn_dim) * hidden_dim, 0.0);
  p.b.assign(static_cast<size_t>(attn_dim), 0.0);
  p.v.assign(static_cast<size_t>(2 * attn_dim), 0.0);
  return p;
}

namespace {

// Shared forward pieces of the attention transform.
struct TransformOut {
  std::vector<double> pre;  // W h + b
  std::vector<double> u;    // ReLU(pre)
  double sigma_hat = 0.0;
  double delta_hat = 0.0;
};

TransformOut AttentionTransform(const std::vector<double>& hidden,
                                const AttentionParams& p) {
  const int h = p.hidden_dim, a = p.attn_dim;
  TransformOut out;
  out.pre.assign(static_cast<size_t>(a), 0.0);
  out.u.assign(static_cast<size_t>(a), 0.0);
  for (int i = 0; i < a; ++i) {
    double s = p.b[static_cast<size_t>(i)];
    const double* wrow = &p.w[static_cast<size_t>(i) * h];
    for (int k = 0; k < h; ++k) s += wrow[k] * hidden[static_cast<size_t>(k)];
    out.pre[static_cast<size_t>(i)] = s;
    out.u[static_cast<size_t>(i)] = s > 0.0 ? s : 0.0;
  }
  for (int i = 0; i < a; ++i) {
    out.sigma_hat += p.v[static_cast<size_t>(i)] * out.u[static_cast<size_t>(i)];
    out.delta_hat += p.v[static_cast<size_t>(a + i)] * out.u[static_cast<size_t>(i)];
  }
  return out;
}

}  // namespace

AttentionStepResult AttentionStep(const std::vector<double>& hidden,
                                  const AttentionState& prev,
                                  const AttentionParams& params, int64_t j_count,
                                  int64_t step) {
  if (static_cast<int>(hidden.size()) != params.hidden_dim)
    throw std::invalid_argument("attention_step: hidden size mismatch");
  for (double x : hidden)
    if (!std::isfinite(x))
      throw std::domain_error("attention_step: non-finite hidden state at decoder step " +
                              std::to_string(step));

  const TransformOut t = AttentionTransform(hidden, params);
  AttentionStepResult r;
  r.next.delta = Sigmoid(t.delta_hat);
  r.next.sigma = Softplus(t.sigma_hat);
  r.next.mu = prev.mu + r.next.delta;

  r.alpha.resize(static_cast<size_t>(j_count));
  double sum = 0.0;
  const double inv2s2 = 1.0 / (2.0 * r.next.sigma * r.next.sigma);
  for (int64_t j = 0; j < j_count; ++j) {
    const double d = static_cast<double>(j) - r.next.mu;
    const double w = std::exp(-d * d * inv2s2);
    r.alpha[static_cast<size_t>(j)] = w;
    sum += w;
  }
  r.alpha_norm = r.alpha;
  if (sum > 0.0)
    for (double& w : r.alpha_norm) w /= sum;
  return r;
}

AttentionStepGrads AttentionStepVjp(const std::vector<double>& hidden,
                                    const AttentionState& prev,
                                    const AttentionParams& params, int64_t j_count,
                                    const std::vector<double>& d_alpha,
                                    double d_mu, double d_sigma, double d_delta) {
  const int h = params.hidden_dim, a = params.attn_dim;
  const TransformOut t = AttentionTransform(hidden, params);
  const double delta = Sigmoid(t.delta_hat);
  const double sigma = Softplus(t.sigma_hat);
  const double mu = prev.mu + delta;

  // Pull alpha gradients back onto mu and sigma.
  double g_mu = d_mu;
  double g_sigma = d_sigma;
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (int64_t j = 0; j < j_count; ++j) {
    const double up = d_alpha.empty() ? 0.0 : d_alpha[static_cast<size_t>(j)];
    if (up == 0.0) continue;
    const double d = static_cast<double>(j) - mu;
    const double w = std::exp(-d * d * 0.5 * inv_s2);
    g_mu += up * w * d * inv_s2;
    g_sigma += up * w * d * d * inv_s2 / sigma;
  }
  const double g_delta = d_delta + g_mu;  // mu = prev.mu + delta

  // Through the nonlinearities onto the intermediate pair.
  const double g_delta_hat = g_delta * delta * (1.0 - delta);
  const double g_sigma_hat = g_sigma * Sigmoid(t.sigma_hat);  // d softplus = sigmoid

  AttentionStepGrads g;
  g.d_prev_mu = g_mu;
  g.d_hidden.assign(static_cast<size_t>(h), 0.0);
  g.d_w.assign(static_cast<size_t>(a) * h, 0.0);
  g.d_b.assign(static_cast<size_t>(a), 0.0);
  g.d_v.assign(static_cast<size_t>(2 * a), 0.0);
  for (int i = 0; i < a; ++i) {
    const double ui = t.u[static_cast<size_t>(i)];
    g.d_v[static_cast<size_t>(i)] = g_sigma_hat * ui;
    g.d_v[static_cast<size_t>(a + i)] = g_delta_hat * ui;
    const double g_u = g_sigma_hat * params.v[static_cast<size_t>(i)] +
                       g_delta_hat * params.v[static_cast<size_t>(a + i)];
    const double g_pre = t.pre[static_cast<size_t>(i)] > 0.0 ? g_u : 0.0;
    if (g_pre == 0.0) continue;
    g.d_b[static_cast<size_t>(i)] = g_pre;
    const double* wrow = &params.w[static_cast<size_t>(i) * h];
    double* dwrow = &g.d_w[static_cast<size_t>(i) * h];
    for (int k = 0; k < h; ++k) {
      dwrow[k] = g_pre * hidden[static_cast<size_t>(k)];
      g.d_hidden[static_cast<size_t>(k)] += g_pre * wrow[k];
    }
  }
  return g;
}

std::vector<int64_t> ExtractDurationCounts(const std::vector<AttentionState>& trace,
                                           int64_t j_count) {
  if (trace.empty())
    throw std::invalid_argument("extract_durations: empty attention trace");
  std::vector<int64_t> counts(static_cast<size_t>(j_count), 0);
  for (const AttentionState& s : trace) {
    int64_t k = static_cast<int64_t>(std::floor(s.mu + 0.5));  // round half up
    k = std::clamp<int64_t>(k, 0, j_count - 1);
    ++counts[static_cast<size_t>(k)];
  }
  return counts;
}

std::vector<int64_t> ExtractDurations(const std::vector<AttentionState>& trace,
                                      int64_t j_count) {
  std::vector<int64_t> d = ExtractDurationCounts(trace, j_count);
  for (int64_t& x : d) x = std::max<int64_t>(x, 1);
  return d;
}

std::vector<double> UpsampleCenters(const std::vector<int64_t>& durations) {
  std::vector<double> centers(durations.size());
  int64_t cum = 0;
  for (size_t k = 0; k < durations.size(); ++k) {
    centers[k] = static_cast<double>(cum) + 0.5 * static_cast<double>(durations[k]);
    cum += durations[k];
  }
  return centers;
}

std::vector<double> GaussianUpsample(const std::vector<int64_t>& durations,
                                     const std::vector<double>& ranges,
                                     int64_t total_frames) {
  const int64_t j_count = static_cast<int64_t>(durations.size());
  if (ranges.size() != durations.size())
    throw std::invalid_argument("gaussian_upsample: ranges length mismatch");
  int64_t total = 0;
  for (int64_t d : durations) total += d;
  if (total != total_frames)
    throw std::invalid_argument("gaussian_upsample: total frames " +
                                std::to_string(total_frames) +
                                " does not match duration sum " + std::to_string(total));
  for (double r : ranges)
    if (!(r > 0.0)) throw std::invalid_argument("gaussian_upsample: ranges must be positive");

  const std::vector<double> centers = UpsampleCenters(durations);
  std::vector<double> w(static_cast<size_t>(total_frames * j_count), 0.0);
  for (int64_t i = 0; i < total_frames; ++i) {
    const double t = static_cast<double>(i) + 0.5;
    double* row = &w[static_cast<size_t>(i * j_count)];
    // Log-space row with max-shift: normalization is exact and tiny ranges
    // cannot underflow the whole row.
    double best = -1e300;
    for (int64_t k = 0; k < j_count; ++k) {
      const double d = t - centers[static_cast<size_t>(k)];
      const double r = ranges[static_cast<size_t>(k)];
      row[k] = -d * d / (2.0 * r * r);
      best = std::max(best, row[k]);
    }
    double sum = 0.0;
    for (int64_t k = 0; k < j_count; ++k) {
      row[k] = std::exp(row[k] - best);
      sum += row[k];
    }
    for (int64_t k = 0; k < j_count; ++k) row[k] /= sum;
  }
  return w;
}

double Centroid(const std::vector<double>& row) {
  double c = 0.0;
  for (size_t k = 0; k < row.size(); ++k) c += static_cast<double>(k) * row[k];
  return c;
}

double DurationLoss(const std::vector<double>& pred_log_d,
                    const std::vector<int64_t>& target_d) {
  if (pred_log_d.size() != target_d.size())
    throw std::invalid_argument("duration_loss: length mismatch");
  double acc = 0.0;
  for (size_t k = 0; k < target_d.size(); ++k) {
    const double t = std::log(static_cast<double>(std::max<int64_t>(target_d[k], 1)));
    const double e = pred_log_d[k] - t;
    acc += e * e;
  }
  return acc / static_cast<double>(target_d.size());
}

std::vector<double> DurationLossGrad(const std::vector<double>& pred_log_d,
                                     const std::vector<int64_t>& target_d) {
  std::vector<double> g(pred_log_d.size());
  const double scale = 2.0 / static_cast<double>(target_d.size());
  for (size_t k = 0; k < target_d.size(); ++k) {
    const double t = std::log(static_cast<double>(std::max<int64_t>(target_d[k], 1)));
    g[k] = scale * (pred_log_d[k] - t);
  }
  return g;
}

namespace {

void NormalizedRow(const double* row, int64_t j_count, const char* who,
                   std::vector<double>* out) {
  double sum = 0.0;
  for (int64_t j = 0; j < j_count; ++j) {
    if (row[j] < 0.0)
      throw std::invalid_argument(std::string(who) + ": negative weight");
    sum += row[j];
  }
  if (!(sum > 0.0))
    throw std::invalid_argument(std::string(who) + ": row is not normalizable");
  out->resize(static_cast<size_t>(j_count));
  for (int64_t j = 0; j < j_count; ++j) (*out)[static_cast<size_t>(j)] = row[j] / sum;
}

}  // namespace

double AlignmentKl(const std::vector<double>& attn, const std::vector<double>& up,
                   int64_t t_count, int64_t j_count) {
  if (attn.size() != up.size() ||
      attn.size() != static_cast<size_t>(t_count * j_count))
    throw std::invalid_argument("alignment_kl: shape mismatch");
  const double z = 1.0 + static_cast<double>(j_count) * kLogEps;
  std::vector<double> p, q;
  double acc = 0.0;
  for (int64_t i = 0; i < t_count; ++i) {
    NormalizedRow(&attn[static_cast<size_t>(i * j_count)], j_count, "alignment_kl", &p);
    NormalizedRow(&up[static_cast<size_t>(i * j_count)], j_count, "alignment_kl", &q);
    double row = 0.0;
    for (int64_t j = 0; j < j_count; ++j) {
      const double pe = p[static_cast<size_t>(j)] + kLogEps;
      const double qe = q[static_cast<size_t>(j)] + kLogEps;
      // Weighting by pe/z keeps the row a true KL between the smoothed
      // distributions, hence exactly nonnegative and zero iff p == q.
      row += pe / z * (std::log(pe) - std::log(qe));
    }
    acc += row;
  }
  return acc / static_cast<double>(t_count);
}

AlignmentKlGrads AlignmentKlGrad(const std::vector<double>& attn,
                                 const std::vector<double>& up, int64_t t_count,
                                 int64_t j_count) {
  AlignmentKlGrads g;
  g.d_attn.assign(attn.size(), 0.0);
  g.d_up.assign(up.size(), 0.0);
  const double z = 1.0 + static_cast<double>(j_count) * kLogEps;
  const double inv_t = 1.0 / static_cast<double>(t_count);
  std::vector<double> p, q;
  for (int64_t i = 0; i < t_count; ++i) {
    const double* arow = &attn[static_cast<size_t>(i * j_count)];
    const double* urow = &up[static_cast<size_t>(i * j_count)];
    NormalizedRow(arow, j_count, "alignment_kl", &p);
    NormalizedRow(urow, j_count, "alignment_kl", &q);
    double sa = 0.0, su = 0.0;
    for (int64_t j = 0; j < j_count; ++j) {
      sa += arow[j];
      su += urow[j];
    }
    // dL/dp_j and dL/dq_j, then pull through the row normalization.
    std::vector<double> dp(static_cast<size_t>(j_count)), dq(static_cast<size_t>(j_count));
    double dot_p = 0.0, dot_q = 0.0;
    for (int64_t j = 0; j < j_count; ++j) {
      const double pe = p[static_cast<size_t>(j)] + kLogEps;
      const double qe = q[static_cast<size_t>(j)] + kLogEps;
      dp[static_cast<size_t>(j)] = (std::log(pe) - std::log(qe) + 1.0) / z;
      dq[static_cast<size_t>(j)] = -pe / (z * qe);
      dot_p += dp[static_cast<size_t>(j)] * p[static_cast<size_t>(j)];
      dot_q += dq[static_cast<size_t>(j)] * q[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < j_count; ++j) {
      g.d_attn[static_cast<size_t>(i * j_count + j)] =
          inv_t * (dp[static_cast<size_t>(j)] - dot_p) / sa;
      g.d_up[static_cast<size_t>(i * j_count + j)] =
          inv_t * (dq[static_cast<size_t>(j)] - dot_q) / su;
    }
  }
  return g;
}

std::vector<double> PositionalEncoding(double mu, int dim) {
  const double f = mu - std::floor(mu);
  std::vector<double> code(static_cast<size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    code[static_cast<size_t>(2 * i)] = std::sin(f * freq);
    code[static_cast<size_t>(2 * i + 1)] = std::cos(f * freq);
  }
  return code;
}

std::vector<double> PositionalEncodingGradMu(double mu, int dim) {
  const double f = mu - std::floor(mu);
  std::vector<double> g(static_cast<size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    g[static_cast<size_t>(2 * i)] = freq * std::cos(f * freq);
    g[static_cast<size_t>(2 * i + 1)] = -freq * std::sin(f * freq);
  }
  return g;
}

}  // namespace natp::align

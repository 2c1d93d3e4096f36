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

#ifndef NATP_ALIGN_HPP_
#define NATP_ALIGN_HPP_

#include <cstdint>
#include <vector>

namespace natp::align {

// Alignment state of the gaussian attention after one decoder step.
// mu is a continuous encoder position, strictly increasing across steps;
// the per-step increment delta stays in (0,1), so the attention can neither
// move backwards nor skip an encoder output.
struct AttentionState {
  double mu = 0.0;
  double sigma = 1.0;
  double delta = 0.0;
};

// Parameters of the attention transform (sigma_hat, delta_hat) = V ReLU(W h + b).
// W is [attn_dim x hidden_dim] row-major, b is [attn_dim], V is [2 x attn_dim]
// with row 0 producing sigma_hat and row 1 producing delta_hat.
struct AttentionParams {
  int hidden_dim = 0;
  int attn_dim = 128;
  std::vector<double> w;
  std::vector<double> b;
  std::vector<double> v;

  static AttentionParams Zeros(int hidden_dim, int attn_dim = 128);
};

struct AttentionStepResult {
  std::vector<double> alpha;       // unnormalized gaussian weights over J
  std::vector<double> alpha_norm;  // row-normalized copy used for context
  AttentionState next;
};

// One attention step: advances mu by Sigmoid(delta_hat), sets sigma to
// Softplus(sigma_hat) and evaluates exp(-(j-mu)^2 / (2 sigma^2)) for
// j = 0..J-1. Throws std::domain_error on non-finite hidden state,
// naming `step` in the message.
AttentionStepResult AttentionStep(const std::vector<double>& hidden,
                                  const AttentionState& prev,
                                  const AttentionParams& params, int64_t j_count,
                                  int64_t step = -1);

// Vector-Jacobian product for AttentionStep: given upstream gradients on the
// outputs, accumulates gradients on hidden, prev.mu and the parameters.
struct AttentionStepGrads {
  std::vector<double> d_hidden;
  double d_prev_mu = 0.0;
  std::vector<double> d_w, d_b, d_v;
};
AttentionStepGrads AttentionStepVjp(const std::vector<double>& hidden,
                                    const AttentionState& prev,
                                    const AttentionParams& params, int64_t j_count,
                                    const std::vector<double>& d_alpha,
                                    double d_mu, double d_sigma, double d_delta);

// Duration of each encoder position: the number of decoder steps whose
// rounded mu lands on that position (round half up, clamped to [0, J-1]).
// Entries are floored at 1 afterwards; sum over the unfloored counts equals
// the trace length. Throws std::invalid_argument on an empty trace.
std::vector<int64_t> ExtractDurationCounts(const std::vector<AttentionState>& trace,
                                           int64_t j_count);
std::vector<int64_t> ExtractDurations(const std::vector<AttentionState>& trace,
                                      int64_t j_count);

// Gaussian upsampling: row t_i = i + 0.5 against centers at the cumulative
// duration midpoints, widths given by `ranges`, every row normalized to sum 1.
// Requires total_frames == sum(durations) and ranges > 0. Rows are computed
// with a max-shift so narrow ranges cannot underflow to an all-zero row.
std::vector<double> GaussianUpsample(const std::vector<int64_t>& durations,
                                     const std::vector<double>& ranges,
                                     int64_t total_frames);

// Center positions used by GaussianUpsample, c_k = sum_{m<k} d_m + d_k / 2.
std::vector<double> UpsampleCenters(const std::vector<int64_t>& durations);

// Expectation of the encoder index under a normalized weight row.
double Centroid(const std::vector<double>& row);

// Mean squared error between predicted log-durations and log of the
// (floored) target durations.
double DurationLoss(const std::vector<double>& pred_log_d,
                    const std::vector<int64_t>& target_d);
std::vector<double> DurationLossGrad(const std::vector<double>& pred_log_d,
                                     const std::vector<int64_t>& target_d);

// Mean over decoder steps of KL(normalize(attn_row) || normalize(up_row)),
// with an epsilon floor of 1e-8 inside the logs. The attention row is the
// reference distribution. Both matrices are [t x j] row-major; rows must be
// normalizable (nonnegative, positive sum).
double AlignmentKl(const std::vector<double>& attn, const std::vector<double>& up,
                   int64_t t_count, int64_t j_count);
struct AlignmentKlGrads {
  std::vector<double> d_attn;
  std::vector<double> d_up;
};
AlignmentKlGrads AlignmentKlGrad(const std::vector<double>& attn,
                                 const std::vector<double>& up, int64_t t_count,
                                 int64_t j_count);

// Sinusoidal code of the fractional progression of mu: the argument is
// frac(mu) in [0,1), expanded over dim/2 sin-cos pairs with geometrically
// decaying frequencies.
std::vector<double> PositionalEncoding(double mu, int dim = 32);
std::vector<double> PositionalEncodingGradMu(double mu, int dim = 32);

constexpr double kLogEps = 1e-8;

double Sigmoid(double x);
double Softplus(double x);

}  // namespace natp::align

#endif  // NATP_ALIGN_HPP_

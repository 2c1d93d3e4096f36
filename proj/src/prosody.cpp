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

#include "natp/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace natp::prosody {

const char* PauseSymbol(PauseCategory c) {
  return kPauseSymbols[static_cast<size_t>(static_cast<int>(c))];
}

PauseCategory PauseFromSymbol(const std::string& s) {
  for (size_t i = 0; i < kPauseSymbols.size(); ++i)
    if (s == kPauseSymbols[i]) return static_cast<PauseCategory>(static_cast<int>(i));
  throw std::invalid_argument("unknown pause symbol: " + s);
}

PitchContour FillUnvoiced(const PitchContour& contour) {
  const size_t n = contour.values.size();
  if (contour.voiced_mask.size() != n)
    throw std::invalid_argument("pitch contour mask length mismatch");
  ptrdiff_t first = -1, last = -1;
  for (size_t i = 0; i < n; ++i) {
    if (contour.voiced_mask[i]) {
      if (first < 0) first = static_cast<ptrdiff_t>(i);
      last = static_cast<ptrdiff_t>(i);
    }
  }
  if (first < 0)
    throw std::invalid_argument("interpolate_pitch: contour has no voiced frame");

  PitchContour out = contour;
  for (ptrdiff_t i = 0; i < first; ++i) out.values[static_cast<size_t>(i)] = contour.values[static_cast<size_t>(first)];
  for (size_t i = static_cast<size_t>(last) + 1; i < n; ++i) out.values[i] = contour.values[static_cast<size_t>(last)];

  size_t i = static_cast<size_t>(first);
  while (i <= static_cast<size_t>(last)) {
    if (contour.voiced_mask[i]) {
      ++i;
      continue;
    }
    // Interior unvoiced run [i, j): bridge linearly between the neighbors.
    size_t j = i;
    while (!contour.voiced_mask[j]) ++j;
    const double left = contour.values[i - 1];
    const double right = contour.values[j];
    const double span = static_cast<double>(j - (i - 1));
    for (size_t g = i; g < j; ++g)
      out.values[g] = left + (right - left) * static_cast<double>(g - (i - 1)) / span;
    i = j;
  }
  return out;
}

std::vector<double> MovingAverage(const std::vector<double>& x, int window) {
  const int n = static_cast<int>(x.size());
  const int half = window / 2;
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) acc += x[static_cast<size_t>(k)];
    out[static_cast<size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

PitchContour InterpolatePitch(const PitchContour& contour, int smooth_window) {
  PitchContour filled = FillUnvoiced(contour);
  filled.values = MovingAverage(filled.values, smooth_window);
  return filled;
}

PitchContour NormalizeContour(const PitchContour& contour) {
  const size_t n = contour.values.size();
  if (n == 0) throw std::invalid_argument("normalize_contour: empty contour");
  double mean = 0.0;
  for (double v : contour.values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : contour.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  PitchContour out = contour;
  if (var <= 1e-300) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  const double inv_std = 1.0 / std::sqrt(var);
  for (double& v : out.values) v = (v - mean) * inv_std;
  return out;
}

namespace {

// Reflection (mirror) index into [0, n).
int64_t Reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

PitchScaleogram CwtDecompose(const PitchContour& normalized, int n_scales,
                             double base_scale) {
  const int64_t n = static_cast<int64_t>(normalized.values.size());
  PitchScaleogram sg;
  sg.n_frames = n;
  sg.scales.resize(static_cast<size_t>(n_scales));
  sg.coeffs.assign(static_cast<size_t>(n_scales) * static_cast<size_t>(n), 0.0);

  // Littlewood-Paley constant for the half-octave grid of the unit-L2
  // Mexican hat, folded into the coefficients so that summing over scales
  // approximately inverts the transform.
  const double psi_norm = 2.0 / (std::sqrt(3.0) * std::pow(kPi, 0.25));
  const double lp_gain = std::sqrt(8.0 / 3.0) * std::pow(kPi, 0.25) * 2.0 / std::log(2.0);
  const double c_synth = 1.0 / lp_gain;

  for (int m = 0; m < n_scales; ++m) {
    const double scale = base_scale * std::pow(2.0, 0.5 * m);  // peak period
    sg.scales[static_cast<size_t>(m)] = scale;
    // Width of the gaussian envelope whose peak frequency response sits at
    // period == scale.
    const double a = scale * std::sqrt(2.0) / (2.0 * kPi);
    const int64_t support = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(5.0 * a)));
    std::vector<double> kernel(static_cast<size_t>(2 * support + 1));
    for (int64_t k = -support; k <= support; ++k) {
      const double u = static_cast<double>(k) / a;
      kernel[static_cast<size_t>(k + support)] =
          psi_norm * (1.0 - u * u) * std::exp(-0.5 * u * u);
    }
    const double weight = c_synth / a;  // a^{-1/2} kernel norm, a^{-1/2} synthesis
    double* row = &sg.coeffs[static_cast<size_t>(m) * static_cast<size_t>(n)];
    for (int64_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (int64_t k = -support; k <= support; ++k)
        acc += normalized.values[static_cast<size_t>(Reflect(t + k, n))] *
               kernel[static_cast<size_t>(k + support)];
      row[t] = weight * acc;
    }
  }
  return sg;
}

std::vector<double> CwtReconstruct(const PitchScaleogram& scaleogram) {
  std::vector<double> out(static_cast<size_t>(scaleogram.n_frames), 0.0);
  for (int64_t m = 0; m < scaleogram.n_scales(); ++m) {
    const double* row =
        &scaleogram.coeffs[static_cast<size_t>(m) * static_cast<size_t>(scaleogram.n_frames)];
    for (int64_t t = 0; t < scaleogram.n_frames; ++t) out[static_cast<size_t>(t)] += row[t];
  }
  return out;
}

PauseCategory CategorizePause(double pause_sec, double speaking_rate,
                              const std::array<double, 4>& thresholds) {
  if (pause_sec < 0.0)
    throw std::invalid_argument("categorize_pause: negative pause duration");
  if (!(speaking_rate > 0.0))
    throw std::invalid_argument("categorize_pause: speaking rate must be positive");
  const double p = pause_sec * speaking_rate;
  int c = 0;
  while (c < 4 && p >= thresholds[static_cast<size_t>(c)]) ++c;
  return static_cast<PauseCategory>(c);
}

namespace {

void CheckSimplex(const std::vector<double>& v, const char* who) {
  double sum = 0.0;
  for (double x : v) {
    if (x < -1e-5) throw std::invalid_argument(std::string(who) + ": negative probability");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-5)
    throw std::invalid_argument(std::string(who) + ": probabilities do not sum to 1");
}

}  // namespace

double Emd2Loss(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("emd2_loss: length mismatch");
  CheckSimplex(pred, "emd2_loss");
  CheckSimplex(target, "emd2_loss");
  double cp = 0.0, ct = 0.0, acc = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    cp += pred[k];
    ct += target[k];
    acc += (cp - ct) * (cp - ct);
  }
  return acc;
}

std::vector<double> Emd2LossGradPred(const std::vector<double>& pred,
                                     const std::vector<double>& target) {
  const size_t n = pred.size();
  std::vector<double> diff(n);
  double cp = 0.0, ct = 0.0;
  for (size_t k = 0; k < n; ++k) {
    cp += pred[k];
    ct += target[k];
    diff[k] = cp - ct;
  }
  // d/dpred_j = sum_{k >= j} 2 (CDFp_k - CDFt_k); suffix-sum in one pass.
  std::vector<double> g(n);
  double suffix = 0.0;
  for (size_t k = n; k-- > 0;) {
    suffix += 2.0 * diff[k];
    g[k] = suffix;
  }
  return g;
}

}  // namespace natp::prosody

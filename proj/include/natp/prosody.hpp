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

#ifndef NATP_PROSODY_HPP_
#define NATP_PROSODY_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace natp::prosody {

// Frame-rate pitch track. values are Hz before normalization and z-units
// after; voiced_mask marks frames where the value is meaningful.
struct PitchContour {
  std::vector<double> values;
  std::vector<bool> voiced_mask;
};

// Multi-scale wavelet decomposition of a normalized contour, [scales x frames].
struct PitchScaleogram {
  std::vector<double> coeffs;   // row-major [n_scales x n_frames]
  std::vector<double> scales;   // peak-period labels, in frames
  int64_t n_frames = 0;

  int64_t n_scales() const { return static_cast<int64_t>(scales.size()); }
};

// Ordinal 5-way pause bucket, "no pause" through "extra-long".
enum class PauseCategory : int { kNone = 0, kShort = 1, kMedium = 2, kLong = 3, kExtraLong = 4 };

inline constexpr std::array<const char*, 5> kPauseSymbols = {"-", ".", ",", ";", "#"};
const char* PauseSymbol(PauseCategory c);
PauseCategory PauseFromSymbol(const std::string& s);

// Fills unvoiced gaps by linear interpolation between the flanking voiced
// values; leading/trailing unvoiced runs take the nearest voiced value.
// Voiced frames are untouched. Throws std::invalid_argument when no frame
// is voiced.
PitchContour FillUnvoiced(const PitchContour& contour);

// Moving average with a shrinking window at the edges, so constants pass
// through unchanged.
std::vector<double> MovingAverage(const std::vector<double>& x, int window);

// FillUnvoiced followed by the 5-frame smoother.
PitchContour InterpolatePitch(const PitchContour& contour, int smooth_window = 5);

// Sentence-level z-score with population statistics; a constant contour maps
// to all zeros.
PitchContour NormalizeContour(const PitchContour& contour);

// Mexican-hat CWT over half-octave scales starting at base_scale frames.
// Scale labels are the peak response period: a sinusoid of period P has
// maximal energy at the scale nearest P. Coefficients carry the synthesis
// weights already, so summing rows approximately reconstructs the input.
PitchScaleogram CwtDecompose(const PitchContour& normalized, int n_scales = 10,
                             double base_scale = 2.0);

// Scale-summed approximate inverse of CwtDecompose.
std::vector<double> CwtReconstruct(const PitchScaleogram& scaleogram);

// Buckets pause_sec * speaking_rate by the configured thresholds.
// Throws std::invalid_argument on negative pause or nonpositive rate.
inline constexpr std::array<double, 4> kPauseThresholds = {0.5, 2.0, 5.0, 10.0};
PauseCategory CategorizePause(double pause_sec, double speaking_rate,
                              const std::array<double, 4>& thresholds = kPauseThresholds);

// Squared Earth Mover's Distance between two distributions over the ordered
// pause categories: sum over k of (CDF_pred[k] - CDF_target[k])^2.
// Throws std::invalid_argument if either input is off the simplex by > 1e-5.
double Emd2Loss(const std::vector<double>& pred, const std::vector<double>& target);
std::vector<double> Emd2LossGradPred(const std::vector<double>& pred,
                                     const std::vector<double>& target);

}  // namespace natp::prosody

#endif  // NATP_PROSODY_HPP_

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

#ifndef NATP_TESTS_TEST_UTIL_HPP_
#define NATP_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <functional>
#include <vector>

namespace natp::test {

// Central finite difference of a scalar function at x[i].
inline double CentralDiff(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, size_t i, double h = 1e-4) {
  x[i] += h;
  const double hi = f(x);
  x[i] -= 2.0 * h;
  const double lo = f(x);
  return (hi - lo) / (2.0 * h);
}

// Relative agreement with an absolute floor for near-zero gradients.
inline bool CloseRel(double a, double b, double rel, double floor = 1e-7) {
  const double scale = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) <= rel * scale;
}

inline double Pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb + 1e-300);
}

}  // namespace natp::test

#endif  // NATP_TESTS_TEST_UTIL_HPP_

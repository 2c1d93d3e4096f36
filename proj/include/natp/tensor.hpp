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

#ifndef NATP_TENSOR_HPP_
#define NATP_TENSOR_HPP_

#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace natp {

// Dense row-major float tensor. The training engine works in float32; the
// pure alignment/prosody math lives in double-precision std::vectors.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(Numel(shape)), 0.0f);
  }
  Tensor(std::vector<int64_t> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != Numel(shape))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  static int64_t Numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  // Leading dims collapsed: a [B,T,C] tensor viewed as (B*T) x C.
  int64_t rows() const {
    if (shape.empty()) return 1;
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
  }
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }

  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  std::string ShapeStr() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace natp

#endif  // NATP_TENSOR_HPP_

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

#ifndef NATP_SERDE_HPP_
#define NATP_SERDE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "natp/tensor.hpp"

namespace natp::serde {

// --- raw little-endian float32 grids with a JSON shape sidecar -------------
//
// <path> holds the raw bytes, <path>.json holds {"dtype","shape","order"}.
void WriteF32(const std::string& path, const std::vector<int64_t>& shape,
              const float* data);
void WriteF32(const std::string& path, const Tensor& t);
Tensor ReadF32(const std::string& path);

// Double-precision convenience wrappers (stored as float32 on disk).
void WriteF32FromDouble(const std::string& path, const std::vector<int64_t>& shape,
                        const std::vector<double>& data);
std::vector<double> ReadF32ToDouble(const std::string& path,
                                    std::vector<int64_t>* shape_out);

// --- raster heatmaps (binary PPM, viridis-like ramp) ------------------------
void WriteHeatmapPpm(const std::string& path, const std::vector<double>& values,
                     int64_t rows, int64_t cols, int cell_px = 1);

// --- checkpoint archive ------------------------------------------------------
//
// Single file: 8-byte magic, u64 manifest length, JSON manifest, then raw
// little-endian float32 tensor payloads at offsets recorded in the manifest.
struct Archive {
  std::string manifest_json;                 // config, step, stats, ...
  std::map<std::string, Tensor> tensors;     // keyed by path-like names
};
void WriteArchive(const std::string& path, const Archive& a);
Archive ReadArchive(const std::string& path);

// --- small utilities ---------------------------------------------------------
uint32_t Crc32File(const std::string& path);
uint64_t Fnv1a64(const std::string& s);
std::string HexU64(uint64_t v);
bool FilesIdentical(const std::string& a, const std::string& b);
void WriteTextFile(const std::string& path, const std::string& text);
std::string ReadTextFile(const std::string& path);

}  // namespace natp::serde

#endif  // NATP_SERDE_HPP_

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

#include "natp/serde.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace natp::serde {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw tensor files are little-endian; big-endian hosts need swaps");

namespace {

void WriteBytes(const std::string& path, const void* data, size_t n) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw std::runtime_error("short write: " + path);
}

std::vector<char> ReadBytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const auto n = is.tellg();
  std::vector<char> buf(static_cast<size_t>(n));
  is.seekg(0);
  is.read(buf.data(), n);
  if (!is) throw std::runtime_error("short read: " + path);
  return buf;
}

json SidecarFor(const std::vector<int64_t>& shape) {
  json j;
  j["dtype"] = "float32";
  j["order"] = "little";
  j["shape"] = shape;
  return j;
}

}  // namespace

void WriteF32(const std::string& path, const std::vector<int64_t>& shape,
              const float* data) {
  const size_t n = static_cast<size_t>(Tensor::Numel(shape));
  WriteBytes(path, data, n * sizeof(float));
  WriteTextFile(path + ".json", SidecarFor(shape).dump(2) + "\n");
}

void WriteF32(const std::string& path, const Tensor& t) {
  WriteF32(path, t.shape, t.data.data());
}

Tensor ReadF32(const std::string& path) {
  const json side = json::parse(ReadTextFile(path + ".json"));
  if (side.at("dtype").get<std::string>() != "float32")
    throw std::runtime_error("unsupported dtype in sidecar: " + path);
  std::vector<int64_t> shape = side.at("shape").get<std::vector<int64_t>>();
  const auto bytes = ReadBytes(path);
  if (bytes.size() != static_cast<size_t>(Tensor::Numel(shape)) * sizeof(float))
    throw std::runtime_error("tensor size mismatch vs sidecar: " + path);
  Tensor t(shape);
  std::memcpy(t.data.data(), bytes.data(), bytes.size());
  return t;
}

void WriteF32FromDouble(const std::string& path, const std::vector<int64_t>& shape,
                        const std::vector<double>& data) {
  std::vector<float> f(data.size());
  for (size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
  WriteF32(path, shape, f.data());
}

std::vector<double> ReadF32ToDouble(const std::string& path,
                                    std::vector<int64_t>* shape_out) {
  Tensor t = ReadF32(path);
  if (shape_out) *shape_out = t.shape;
  return std::vector<double>(t.data.begin(), t.data.end());
}

namespace {

// Compact viridis approximation, t in [0,1].
void ViridisRgb(double t, unsigned char rgb[3]) {
  static const double stops[7][3] = {
      {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
      {0.207, 0.372, 0.553}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383},
      {0.993, 0.906, 0.144}};
  t = std::clamp(t, 0.0, 1.0) * 6.0;
  const int i = std::min(5, static_cast<int>(t));
  const double f = t - i;
  for (int c = 0; c < 3; ++c) {
    const double v = stops[i][c] * (1.0 - f) + stops[i + 1][c] * f;
    rgb[c] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
}

}  // namespace

void WriteHeatmapPpm(const std::string& path, const std::vector<double>& values,
                     int64_t rows, int64_t cols, int cell_px) {
  if (rows * cols != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("heatmap shape mismatch");
  double lo = values.empty() ? 0.0 : values[0], hi = lo;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = (hi > lo) ? (hi - lo) : 1.0;
  const int64_t w = cols * cell_px, h = rows * cell_px;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(w * h * 3));
  for (int64_t y = 0; y < h; ++y) {
    const int64_t r = y / cell_px;
    for (int64_t x = 0; x < w; ++x) {
      const int64_t c = x / cell_px;
      unsigned char rgb[3];
      ViridisRgb((values[static_cast<size_t>(r * cols + c)] - lo) / span, rgb);
      out.append(reinterpret_cast<char*>(rgb), 3);
    }
  }
  WriteBytes(path, out.data(), out.size());
}

// Archive layout: "NATPCKP1" | u64 manifest_len | manifest json | payloads.
// The manifest's "tensors" array records name/shape/offset for each payload.
void WriteArchive(const std::string& path, const Archive& a) {
  json manifest = a.manifest_json.empty() ? json::object() : json::parse(a.manifest_json);
  json tens = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : a.tensors) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["offset"] = offset;
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
    tens.push_back(e);
  }
  manifest["tensors"] = tens;
  const std::string mstr = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write("NATPCKP1", 8);
  const uint64_t mlen = mstr.size();
  os.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, t] : a.tensors)
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write: " + path);
}

Archive ReadArchive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "NATPCKP1", 8) != 0)
    throw std::runtime_error("not a checkpoint archive: " + path);
  uint64_t mlen = 0;
  is.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw std::runtime_error("truncated manifest: " + path);

  Archive a;
  json manifest = json::parse(mstr);
  const std::streampos payload_base = is.tellg();
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    Tensor t(e.at("shape").get<std::vector<int64_t>>());
    is.seekg(payload_base + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated tensor " + name + " in " + path);
    a.tensors.emplace(name, std::move(t));
  }
  manifest.erase("tensors");
  a.manifest_json = manifest.dump();
  return a;
}

uint32_t Crc32File(const std::string& path) {
  const auto bytes = ReadBytes(path);
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
}

uint64_t Fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string HexU64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

bool FilesIdentical(const std::string& a, const std::string& b) {
  return ReadBytes(a) == ReadBytes(b);
}

void WriteTextFile(const std::string& path, const std::string& text) {
  WriteBytes(path, text.data(), text.size());
}

std::string ReadTextFile(const std::string& path) {
  const auto bytes = ReadBytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace natp::serde

// Copyright 2026 The apicomplete Authors
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

// Checkpoint layout:
//
//   "APCKPT01"                 8-byte magic
//   uint64 header_length       little-endian
//   header_length bytes        JSON: format version, dtype, model config,
//                              tensor names and shapes
//   tensor blobs               raw little-endian values in declaration order
//
// Saving goes through a temporary file and a rename, so an interrupted save
// leaves the previous checkpoint intact.

#pragma once

#include "apicomplete/common.hpp"
#include "apicomplete/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>

namespace apicomplete {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'A', 'P', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

class CheckpointMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

template <typename S>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<S, float>) {
    return "float32";
  } else {
    static_assert(std::is_same_v<S, double>, "float or double only");
    return "float64";
  }
}

struct CheckpointHeader {
  int version = 0;
  std::string dtype;
  ModelConfig config;
  nlohmann::json raw;
};

namespace detail {

inline CheckpointHeader read_header(std::istream& in, const std::string& path) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("not a checkpoint file: " + path);
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 26)) {
    throw FormatError("truncated checkpoint header: " + path);
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header: " + path);
  CheckpointHeader h;
  try {
    h.raw = nlohmann::json::parse(text);
    h.version = h.raw.at("version").get<int>();
    h.dtype = h.raw.at("dtype").get<std::string>();
    h.raw.at("config").get_to(h.config);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (h.version != kCheckpointVersion) {
    throw CheckpointMismatch(detail::concat("checkpoint version ", h.version, " is not supported (expected ",
                                            kCheckpointVersion, ")"));
  }
  return h;
}

}  // namespace detail

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return detail::read_header(in, path);
}

template <typename S>
void save_checkpoint(const Params<S>& params, const std::string& path, const nlohmann::json& extra = {}) {
  nlohmann::json header = {{"version", kCheckpointVersion}, {"dtype", dtype_name<S>()}, {"config", params.config}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& v : params.views()) tensors.push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
  header["tensors"] = tensors;
  if (!extra.is_null()) header["extra"] = extra;
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const auto& v : params.views()) {
      out.write(reinterpret_cast<const char*>(v.data), static_cast<std::streamsize>(sizeof(S) * v.size()));
    }
    out.flush();
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Throws CheckpointMismatch when the stored dtype or config differs from
// what the caller expects, FormatError on truncation. Never returns a
// partially filled Params.
template <typename S>
Params<S> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  const CheckpointHeader h = detail::read_header(in, path);
  if (h.dtype != dtype_name<S>()) {
    throw CheckpointMismatch("checkpoint dtype " + h.dtype + " does not match requested " + dtype_name<S>());
  }
  if (expected && !(*expected == h.config)) {
    throw CheckpointMismatch(detail::concat("checkpoint config mismatch: stored ", nlohmann::json(h.config).dump(),
                                            ", expected ", nlohmann::json(*expected).dump()));
  }
  Params<S> p = Params<S>::zeros(h.config);
  auto views = p.views();
  const auto& listed = h.raw.value("tensors", nlohmann::json::array());
  if (listed.size() != views.size()) throw CheckpointMismatch("checkpoint tensor list does not match the config");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& t = listed[i];
    if (t.value("name", "") != views[i].name || t.value("rows", -1L) != views[i].rows ||
        t.value("cols", -1L) != views[i].cols) {
      throw CheckpointMismatch("checkpoint tensor " + std::to_string(i) + " does not match the config");
    }
  }
  for (auto& v : views) {
    const auto bytes = static_cast<std::streamsize>(sizeof(S) * v.size());
    if (!in.read(reinterpret_cast<char*>(v.data), bytes)) throw FormatError("truncated checkpoint: " + path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint: " + path);
  return p;
}

}  // namespace apicomplete

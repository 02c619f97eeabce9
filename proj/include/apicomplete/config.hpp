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

#pragma once

#include "apicomplete/advaug.hpp"
#include "apicomplete/common.hpp"
#include "apicomplete/corpus.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/rng.hpp"
#include "apicomplete/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace apicomplete {

struct DecoderConfig {
  int beam_width = 10;
  int max_len = 16;
  bool prefix_consistency = false;
  int prefix_mode = -1;  // -1 random prompt, otherwise number of prefix words kept
  int top = 5;
};

inline void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = {{"beam_width", c.beam_width},
       {"max_len", c.max_len},
       {"prefix_consistency", c.prefix_consistency},
       {"prefix_mode", c.prefix_mode},
       {"top", c.top}};
}

inline void from_json(const nlohmann::json& j, DecoderConfig& c) {
  c.beam_width = j.value("beam_width", c.beam_width);
  c.max_len = j.value("max_len", c.max_len);
  c.prefix_consistency = j.value("prefix_consistency", c.prefix_consistency);
  c.prefix_mode = j.value("prefix_mode", c.prefix_mode);
  c.top = j.value("top", c.top);
}

struct SweepConfig {
  std::vector<std::string> methods = {"none", "fgsm", "fgm", "pgd", "atcom"};
  std::vector<int> k_values;  // extra atcom rows, one per K; empty uses train.adv.k
  std::vector<int> prefix_modes = {0, 1, 2};
};

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = {{"methods", c.methods}, {"k_values", c.k_values}, {"prefix_modes", c.prefix_modes}};
}

inline void from_json(const nlohmann::json& j, SweepConfig& c) {
  c.methods = j.value("methods", c.methods);
  c.k_values = j.value("k_values", c.k_values);
  c.prefix_modes = j.value("prefix_modes", c.prefix_modes);
}

// Everything a command needs. Component seeds are derived from `seed`.
struct RunConfig {
  std::string corpus;
  std::string output_dir = "run";
  std::string api_library;  // optional
  std::uint64_t seed = 42;
  std::size_t vocab_size = 8000;
  int prompts_per_api = 3;
  SplitSpec split;
  ModelConfig model;
  TrainConfig train;
  DecoderConfig decoder;
  SweepConfig sweep;

  // Fans the top-level seed out to the components.
  void resolve_seeds() {
    split.seed = derive_seed(seed, "split");
    model.seed = derive_seed(seed, "model");
    train.seed = derive_seed(seed, "train");
  }

  std::uint64_t prompt_seed() const { return derive_seed(seed, "prompts"); }
  std::uint64_t eval_seed() const { return derive_seed(seed, "eval"); }

  std::filesystem::path out(const std::string& name) const { return std::filesystem::path(output_dir) / name; }

  void validate() const {
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
    if (prompts_per_api < 0) throw ConfigError("prompts_per_api must be >= 0");
    split.validate();
    model.validate();
    train.validate();
    if (decoder.beam_width < 1) throw ConfigError("beam_width must be >= 1");
    if (decoder.top < 1) throw ConfigError("top must be >= 1");
    if (decoder.top > decoder.beam_width) {
      throw ConfigError(detail::concat("top=", decoder.top, " exceeds beam_width=", decoder.beam_width,
                                       "; raise --beam-width"));
    }
    for (const auto& m : sweep.methods) parse_adv_method(m);
    for (int k : sweep.k_values) {
      if (k < 1) throw ConfigError("sweep k_values must be >= 1");
    }
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"corpus", c.corpus},
       {"output_dir", c.output_dir},
       {"api_library", c.api_library},
       {"seed", c.seed},
       {"vocab_size", c.vocab_size},
       {"prompts_per_api", c.prompts_per_api},
       {"split", {{"train", c.split.train}, {"valid", c.split.valid}, {"test", c.split.test}, {"seed", c.split.seed}}},
       {"model", c.model},
       {"train", c.train},
       {"decoder", c.decoder},
       {"sweep", c.sweep}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.corpus = j.value("corpus", c.corpus);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.api_library = j.value("api_library", c.api_library);
  c.seed = j.value("seed", c.seed);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.prompts_per_api = j.value("prompts_per_api", c.prompts_per_api);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.split.train = s.value("train", c.split.train);
    c.split.valid = s.value("valid", c.split.valid);
    c.split.test = s.value("test", c.split.test);
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("decoder")) j.at("decoder").get_to(c.decoder);
  if (j.contains("sweep")) j.at("sweep").get_to(c.sweep);
}

// Command-line values that win over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> epsilon;
  std::optional<int> k_adv;
  std::optional<double> alpha;
  std::optional<int> beam_width;
  std::optional<std::string> api_library;
  std::optional<int> top;
  std::optional<std::string> output_dir;
  std::optional<std::string> corpus;
};

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.method) c.train.adv.method = parse_adv_method(*o.method);
  if (o.epsilon) c.train.adv.epsilon = *o.epsilon;
  if (o.k_adv) c.train.adv.k = *o.k_adv;
  if (o.alpha) c.train.adv.alpha = *o.alpha;
  if (o.beam_width) c.decoder.beam_width = *o.beam_width;
  if (o.api_library) c.api_library = *o.api_library;
  if (o.top) c.decoder.top = *o.top;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.corpus) c.corpus = *o.corpus;
}

// Rejects keys the default config does not have, so typos are not ignored.
inline void check_known_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown config key \"" + where + key + "\"");
    }
    if (known.at(key).is_object()) check_known_keys(value, known.at(key), where + key + ".");
  }
}

inline RunConfig load_run_config(const std::string& path, const Overrides& o = {}) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    try {
      const auto j = nlohmann::json::parse(in);
      if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
      check_known_keys(j, nlohmann::json(RunConfig{}), "");
      j.get_to(c);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad config file " + path + ": " + e.what());
    }
  }
  apply_overrides(c, o);
  c.resolve_seeds();
  c.validate();
  return c;
}

}  // namespace apicomplete

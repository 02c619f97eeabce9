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

// Query/API pairs, corpus splits and prompt construction.
//
// A prompted input has the form
//
//   <prefix words joined by '.'> "." <mask> <sep> <query>
//
// or just "<mask><sep><query>" when no prefix word is kept. The target is
// always the full API.

#pragma once

#include "apicomplete/common.hpp"
#include "apicomplete/rng.hpp"
#include "apicomplete/text.hpp"
#include "apicomplete/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace apicomplete {

struct QueryApiPair {
  std::string query;
  std::string api;
  std::vector<std::string> extra_relevant;
  std::size_t line = 0;  // 1-based source line, 0 when built in memory

  std::vector<std::string> words() const { return text::split(api, '.'); }

  // Ground truth plus any extra relevant APIs.
  std::vector<std::string> relevant() const {
    std::vector<std::string> all{api};
    all.insert(all.end(), extra_relevant.begin(), extra_relevant.end());
    return all;
  }

  bool operator==(const QueryApiPair& o) const {
    return query == o.query && api == o.api && extra_relevant == o.extra_relevant;
  }
};

struct LoadIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<QueryApiPair> pairs;
  std::vector<LoadIssue> errors;
  std::size_t duplicates = 0;
};

// Queries never carry the reserved literals; they would alias the prompt
// markers once tokenized.
inline std::string normalize_query(std::string_view q) {
  std::string s(q);
  for (auto marker : {token::kMaskText, token::kSepText}) {
    for (auto pos = s.find(marker); pos != std::string::npos; pos = s.find(marker)) {
      s.replace(pos, marker.size(), " ");
    }
  }
  return text::collapse_whitespace(s);
}

// Empty string when valid, otherwise the reason.
inline std::string api_problem(std::string_view api) {
  if (api.empty()) return "empty api";
  const auto words = text::split(api, '.');
  if (words.size() < 2) return "api needs at least two dot-separated words";
  for (const auto& w : words) {
    if (w.empty()) return "api has an empty word";
  }
  return {};
}

inline LoadResult parse_pairs(std::istream& in) {
  LoadResult result;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto fail = [&](std::string msg) { result.errors.push_back({line_no, std::move(msg)}); };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid json: ") + e.what());
      continue;
    }
    if (!rec.is_object()) {
      fail("record is not an object");
      continue;
    }
    if (!rec.contains("query") || !rec["query"].is_string()) {
      fail("missing string field 'query'");
      continue;
    }
    if (!rec.contains("api") || !rec["api"].is_string()) {
      fail("missing string field 'api'");
      continue;
    }
    QueryApiPair pair;
    pair.line = line_no;
    pair.query = normalize_query(rec["query"].get<std::string>());
    pair.api = text::to_lower(text::trim(rec["api"].get<std::string>()));
    if (pair.query.empty()) {
      fail("empty query");
      continue;
    }
    if (auto problem = api_problem(pair.api); !problem.empty()) {
      fail(problem);
      continue;
    }
    if (rec.contains("relevant")) {
      if (!rec["relevant"].is_array()) {
        fail("'relevant' must be an array of strings");
        continue;
      }
      bool ok = true;
      for (const auto& r : rec["relevant"]) {
        if (!r.is_string()) {
          ok = false;
          break;
        }
        auto extra = text::to_lower(text::trim(r.get<std::string>()));
        if (!api_problem(extra).empty()) {
          ok = false;
          break;
        }
        if (extra != pair.api &&
            std::find(pair.extra_relevant.begin(), pair.extra_relevant.end(), extra) ==
                pair.extra_relevant.end()) {
          pair.extra_relevant.push_back(std::move(extra));
        }
      }
      if (!ok) {
        fail("'relevant' entries must be valid api strings");
        continue;
      }
    }
    if (!seen.emplace(pair.query, pair.api).second) {
      ++result.duplicates;
      continue;
    }
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

inline LoadResult load_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus file " + path);
  return parse_pairs(in);
}

struct SplitSpec {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(train > 0 && valid > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + valid + test - 1.0) > 1e-9) {
      throw ConfigError(detail::concat("split ratios sum to ", train + valid + test, ", expected 1"));
    }
  }
};

struct CorpusSplit {
  // Indices into the input sequence, each list sorted ascending.
  std::vector<std::size_t> train, valid, test;

  template <typename T>
  static std::vector<T> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(items[i]);
    return out;
  }
};

// Valid and test sizes are floor(n * ratio); train takes the remainder.
inline CorpusSplit split_corpus(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 10) throw ConfigError(detail::concat("need at least 10 pairs to split, got ", n));
  const auto floor_size = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::size_t n_valid = floor_size(spec.valid);
  const std::size_t n_test = floor_size(spec.test);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(spec.seed, "split"));
  rng.shuffle(order);

  CorpusSplit split;
  split.valid.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_valid));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_valid),
                    order.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test), order.end());
  for (auto* part : {&split.train, &split.valid, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

struct PromptedExample {
  std::vector<std::string> prefix_words;
  int masked_count = 0;
  std::string prompt;
  std::string input_text;
  std::string target_text;
};

// "a.b" + mask -> "a.b.<mask>"; no prefix words -> bare "<mask>".
inline std::string prompt_from_prefix(std::string_view prefix) {
  std::string p = text::to_lower(text::trim(prefix));
  while (!p.empty() && p.back() == '.') p.pop_back();
  if (p.empty()) return std::string(token::kMaskText);
  return p + "." + std::string(token::kMaskText);
}

inline std::string make_input_text(std::string_view prompt, std::string_view query) {
  std::string out(prompt);
  out += token::kSepText;
  out += query;
  return out;
}

// Keeps the first n - n_rand words of the api and masks the rest.
inline PromptedExample mask_api(std::string_view api, int n_rand) {
  const auto words = text::split(api, '.');
  if (auto problem = api_problem(api); !problem.empty()) {
    throw std::invalid_argument(detail::concat("mask_api: ", problem, " in '", api, "'"));
  }
  const int n = static_cast<int>(words.size());
  if (n_rand < 1 || n_rand > n - 1) {
    throw std::invalid_argument(
        detail::concat("mask_api: n_rand=", n_rand, " outside [1, ", n - 1, "] for '", api, "'"));
  }
  PromptedExample ex;
  ex.prefix_words.assign(words.begin(), words.end() - n_rand);
  ex.masked_count = n_rand;
  ex.prompt = prompt_from_prefix(text::join(ex.prefix_words, "."));
  ex.target_text = std::string(api);
  return ex;
}

// Up to `count` prompts with distinct n_rand values drawn without
// replacement from [1, n-1].
inline std::vector<PromptedExample> make_prompted_examples(const QueryApiPair& pair, Rng& rng,
                                                           int count = 3) {
  if (count < 1) throw std::invalid_argument("make_prompted_examples: count must be >= 1");
  const int n = static_cast<int>(pair.words().size());
  std::vector<int> choices;
  for (int r = 1; r <= n - 1; ++r) choices.push_back(r);
  const int take = std::min<int>(count, static_cast<int>(choices.size()));
  for (int i = 0; i < take; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(choices.size() - static_cast<std::size_t>(i));
    std::swap(choices[static_cast<std::size_t>(i)], choices[j]);
  }
  std::vector<PromptedExample> out;
  for (int i = 0; i < take; ++i) {
    auto ex = mask_api(pair.api, choices[static_cast<std::size_t>(i)]);
    ex.input_text = make_input_text(ex.prompt, pair.query);
    out.push_back(std::move(ex));
  }
  return out;
}

// Prompt keeping exactly `prefix_words` leading words (clamped to n-1).
inline PromptedExample prompt_with_prefix_words(const QueryApiPair& pair, int prefix_words) {
  const int n = static_cast<int>(pair.words().size());
  const int keep = std::clamp(prefix_words, 0, n - 1);
  PromptedExample ex;
  if (keep == 0) {
    ex.masked_count = n;
    ex.prompt = std::string(token::kMaskText);
    ex.target_text = pair.api;
  } else {
    ex = mask_api(pair.api, n - keep);
  }
  ex.input_text = make_input_text(ex.prompt, pair.query);
  return ex;
}

struct ParsedInput {
  std::string prefix;
  std::string query;
};

// Inverse of make_input_text. Throws when the text is not a prompted input.
inline ParsedInput parse_input_text(std::string_view input) {
  const auto sep = input.find(token::kSepText);
  if (sep == std::string_view::npos) throw std::invalid_argument("input text has no separator");
  std::string_view prompt = input.substr(0, sep);
  if (prompt.size() < token::kMaskText.size() ||
      prompt.substr(prompt.size() - token::kMaskText.size()) != token::kMaskText) {
    throw std::invalid_argument("prompt does not end with the mask token");
  }
  prompt.remove_suffix(token::kMaskText.size());
  ParsedInput parsed;
  if (!prompt.empty()) {
    if (prompt.back() != '.') throw std::invalid_argument("prefix must end with '.' before the mask");
    prompt.remove_suffix(1);
    parsed.prefix = std::string(prompt);
  }
  parsed.query = std::string(input.substr(sep + token::kSepText.size()));
  return parsed;
}

struct LengthStats {
  double average = 0;
  int mode = 0;
  double median = 0;
  std::vector<std::pair<int, double>> coverage;  // (threshold, fraction with length < threshold)
};

struct CorpusStats {
  LengthStats query;
  LengthStats api;
};

inline LengthStats length_stats(std::vector<int> lengths, const std::vector<int>& thresholds) {
  LengthStats st;
  for (int t : thresholds) st.coverage.emplace_back(t, 0.0);
  if (lengths.empty()) return st;
  std::sort(lengths.begin(), lengths.end());
  double sum = 0;
  std::map<int, int> freq;
  for (int l : lengths) {
    sum += l;
    ++freq[l];
  }
  const auto n = lengths.size();
  st.average = sum / static_cast<double>(n);
  int best = -1;
  for (const auto& [len, f] : freq) {
    if (f > best) {  // smallest length wins ties
      best = f;
      st.mode = len;
    }
  }
  st.median = n % 2 ? lengths[n / 2] : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
  for (auto& [t, frac] : st.coverage) {
    const auto below = std::lower_bound(lengths.begin(), lengths.end(), t) - lengths.begin();
    frac = static_cast<double>(below) / static_cast<double>(n);
  }
  return st;
}

// Subword-token lengths; thresholds follow the usual query (16/32/48) and
// api (8/12/16) reporting cut-offs.
inline CorpusStats corpus_stats(std::span<const QueryApiPair> pairs, const Vocab& vocab) {
  std::vector<int> q, a;
  for (const auto& p : pairs) {
    q.push_back(static_cast<int>(vocab.encode_ids(p.query).size()));
    a.push_back(static_cast<int>(vocab.encode_ids(p.api).size()));
  }
  return {length_stats(std::move(q), {16, 32, 48}), length_stats(std::move(a), {8, 12, 16})};
}

inline nlohmann::json to_json(const LengthStats& s) {
  nlohmann::json cov = nlohmann::json::object();
  for (const auto& [t, f] : s.coverage) cov["<" + std::to_string(t)] = f;
  return {{"average", s.average}, {"mode", s.mode}, {"median", s.median}, {"coverage", cov}};
}

inline nlohmann::json to_json(const CorpusStats& s) {
  return {{"query", to_json(s.query)}, {"api", to_json(s.api)}};
}

}  // namespace apicomplete

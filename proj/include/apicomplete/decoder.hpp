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

#include "apicomplete/common.hpp"
#include "apicomplete/corpus.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/text.hpp"
#include "apicomplete/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace apicomplete {

struct Candidate {
  std::vector<int> ids;                 // generated tokens, including a final </s> when emitted
  std::string text;                     // filled in by complete()
  std::vector<double> token_log_probs;  // one per id
  double score = 0;                     // mean of token_log_probs
  bool finished = false;
  std::optional<bool> in_library;       // set by the library filter

  double log_prob_sum() const {
    double s = 0;
    for (double v : token_log_probs) s += v;
    return s;
  }
};

// Score descending, then fewer tokens, then smaller ids.
inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

inline std::vector<int> default_banned_ids() { return {token::kPad, token::kBegin, token::kMask, token::kSep}; }

struct BeamOptions {
  int width = 10;
  int max_len = 16;  // generated tokens, clamped to the model's max_output_length
  std::vector<int> banned = default_banned_ids();
  // Return the best `width` of the union of beams 1..width, so the rank-1
  // score never drops as the width grows.
  bool monotone = true;
};

namespace detail {

// One length-normalized beam pass. Finished hypotheses stay in the beam and
// compete with live ones; the pass ends when every kept hypothesis has
// finished. `pruned` reports whether any expansion was discarded.
template <typename S>
std::vector<Candidate> beam_pass(const Params<S>& params, const EncoderMemory<S>& mem, int width, int max_len,
                                 const std::vector<char>& allowed, bool* pruned) {
  struct Hyp {
    Candidate cand;
    double sum = 0;
    DecoderState<S> state;  // live hypotheses only
    RowVector<S> next;      // next-token log-probs, live only
  };
  struct Entry {
    Candidate cand;
    int parent;  // -1 for a carried finished hypothesis
    double sum;
  };
  const int vocab = params.config.vocab_size;
  *pruned = false;
  std::vector<Hyp> beam(1);
  beam[0].state = initial_decoder_state(params);
  beam[0].next = decode_step(params, mem, beam[0].state, token::kBegin);

  for (int step = 1; step <= max_len; ++step) {
    std::vector<Entry> pool;
    bool any_live = false;
    for (std::size_t h = 0; h < beam.size(); ++h) {
      const auto& hyp = beam[h];
      if (hyp.cand.finished) {
        pool.push_back({hyp.cand, -1, hyp.sum});
        continue;
      }
      any_live = true;
      for (int v = 0; v < vocab; ++v) {
        if (!allowed[static_cast<std::size_t>(v)]) continue;
        Entry e{hyp.cand, static_cast<int>(h), hyp.sum};
        const double lp = static_cast<double>(hyp.next(v));
        e.cand.ids.push_back(v);
        e.cand.token_log_probs.push_back(lp);
        e.sum += lp;
        e.cand.score = e.sum / static_cast<double>(e.cand.ids.size());
        e.cand.finished = v == token::kEnd || step == max_len;
        pool.push_back(std::move(e));
      }
    }
    if (!any_live) break;
    const auto keep = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(width));
    if (keep < pool.size()) *pruned = true;
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                      [](const Entry& a, const Entry& b) { return candidate_before(a.cand, b.cand); });
    std::vector<Hyp> next_beam;
    next_beam.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      Hyp h;
      h.cand = std::move(pool[i].cand);
      h.sum = pool[i].sum;
      if (!h.cand.finished) {
        h.state = beam[static_cast<std::size_t>(pool[i].parent)].state;
        h.next = decode_step(params, mem, h.state, h.cand.ids.back());
      }
      next_beam.push_back(std::move(h));
    }
    beam = std::move(next_beam);
  }
  std::vector<Candidate> out;
  out.reserve(beam.size());
  for (auto& h : beam) out.push_back(std::move(h.cand));
  return out;
}

}  // namespace detail

// Ranked candidates, best first, at most `width` of them.
template <typename S>
std::vector<Candidate> beam_search(const Params<S>& params, const TokenSeq& input, const BeamOptions& opt) {
  if (opt.width < 1) throw ConfigError("beam width must be >= 1");
  if (opt.max_len < 1) throw ConfigError("beam max_len must be >= 1");
  const int max_len = std::min(opt.max_len, params.config.max_output_length);
  const int vocab = params.config.vocab_size;
  std::vector<char> allowed(static_cast<std::size_t>(vocab), 1);
  for (int b : opt.banned) {
    if (b >= 0 && b < vocab) allowed[static_cast<std::size_t>(b)] = 0;
  }
  const auto mem = encode_source(params, input);
  bool pruned = false;
  std::vector<Candidate> out;
  if (!opt.monotone) {
    out = detail::beam_pass(params, mem, opt.width, max_len, allowed, &pruned);
  } else {
    // Identical id sequences come out of identical computations, so
    // deduplicating by ids is exact.
    std::map<std::vector<int>, Candidate> seen;
    for (int w = 1; w <= opt.width; ++w) {
      for (auto& c : detail::beam_pass(params, mem, w, max_len, allowed, &pruned)) {
        seen.try_emplace(c.ids, std::move(c));
      }
      if (!pruned) break;  // wider passes would return the same beam
    }
    for (auto& [ids, c] : seen) out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), candidate_before);
  if (out.size() > static_cast<std::size_t>(opt.width)) out.resize(static_cast<std::size_t>(opt.width));
  return out;
}

// Set of valid fully-qualified names, compared after normalization.
class ApiLibrary {
 public:
  ApiLibrary() = default;
  explicit ApiLibrary(const std::vector<std::string>& apis) {
    for (const auto& a : apis) add(a);
  }

  void add(std::string_view api) {
    auto n = text::normalize_api(api);
    if (!n.empty()) names_.insert(std::move(n));
  }

  bool contains(std::string_view api) const { return names_.count(text::normalize_api(api)) > 0; }
  bool empty() const { return names_.empty(); }
  std::size_t size() const { return names_.size(); }

  // One name per line; blank lines and lines starting with '#' are skipped.
  static ApiLibrary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read api library " + path);
    ApiLibrary lib;
    std::string line;
    while (std::getline(in, line)) {
      const auto t = text::trim(line);
      if (t.empty() || t[0] == '#') continue;
      lib.add(t);
    }
    return lib;
  }

 private:
  std::set<std::string> names_;
};

// Keeps library members in rank order until `need` are found, then tops up
// with the best-ranked non-members (flagged) to min(need, |candidates|).
// An empty library leaves the list unchanged and sets `warning`.
inline std::vector<Candidate> api_check_filter(const std::vector<Candidate>& candidates, const ApiLibrary& library,
                                               int need, std::string* warning = nullptr) {
  if (need < 1) throw ConfigError("api check needs need >= 1");
  if (library.empty()) {
    if (warning) *warning = "api library is empty; filter skipped";
    return candidates;
  }
  std::vector<Candidate> valid, invalid;
  for (const auto& c : candidates) {
    Candidate copy = c;
    copy.in_library = library.contains(c.text);
    (*copy.in_library ? valid : invalid).push_back(std::move(copy));
  }
  const auto target = std::min<std::size_t>(static_cast<std::size_t>(need), candidates.size());
  if (valid.size() > target) valid.resize(target);
  for (std::size_t i = 0; valid.size() < target; ++i) valid.push_back(invalid[i]);
  return valid;
}

struct CompletionOptions {
  BeamOptions beam;
  bool prefix_consistency = false;
  const ApiLibrary* library = nullptr;  // APICheck when set
  int need = 0;                         // APICheck target count, 0 = k
};

struct Completion {
  std::string text;
  double score = 0;
  std::optional<bool> in_library;
};

inline nlohmann::json to_json_value(const Completion& c) {
  nlohmann::json j = {{"api", c.text}, {"score", c.score}};
  j["in_library"] = c.in_library ? nlohmann::json(*c.in_library) : nlohmann::json(nullptr);
  return j;
}

// Builds the prompted input for (query, prefix); an empty prefix gives the
// bare mask prompt.
inline TokenSeq completion_input(const Vocab& vocab, const ModelConfig& config, std::string_view query,
                                 std::string_view prefix) {
  const auto input = make_input_text(prompt_from_prefix(prefix), normalize_query(query));
  return vocab.encode(input, config.max_input_length);
}

// Full ranked candidate list after the optional filters, before truncation.
template <typename S>
std::vector<Candidate> ranked_candidates(const Params<S>& params, const Vocab& vocab, std::string_view query,
                                         std::string_view prefix, int k, const CompletionOptions& opt) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > opt.beam.width) {
    throw ConfigError(detail::concat("k=", k, " exceeds the beam width ", opt.beam.width,
                                     "; raise the beam width to at least k"));
  }
  auto cands = beam_search(params, completion_input(vocab, params.config, query, prefix), opt.beam);
  for (auto& c : cands) c.text = text::normalize_api(vocab.decode(c.ids));
  if (opt.prefix_consistency) {
    auto p = text::normalize_api(prefix);
    while (!p.empty() && p.back() == '.') p.pop_back();
    if (!p.empty()) {
      const auto head = p + ".";
      std::erase_if(cands, [&](const Candidate& c) { return !text::starts_with(c.text, head); });
    }
  }
  if (opt.library) cands = api_check_filter(cands, *opt.library, opt.need > 0 ? opt.need : k);
  return cands;
}

template <typename S>
std::vector<Completion> complete(const Params<S>& params, const Vocab& vocab, std::string_view query,
                                 std::string_view prefix, int k, const CompletionOptions& opt = {}) {
  const auto cands = ranked_candidates(params, vocab, query, prefix, k, opt);
  std::vector<Completion> out;
  for (std::size_t i = 0; i < cands.size() && static_cast<int>(i) < k; ++i) {
    out.push_back({cands[i].text, cands[i].score, cands[i].in_library});
  }
  return out;
}

}  // namespace apicomplete

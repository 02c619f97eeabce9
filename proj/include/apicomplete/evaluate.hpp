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

#include "apicomplete/corpus.hpp"
#include "apicomplete/decoder.hpp"
#include "apicomplete/metrics.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/rng.hpp"

#include <json.hpp>

#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apicomplete {

inline constexpr int kReportedEmDepth = 5;

struct EvalRow {
  std::string query;
  std::string prefix;
  std::string ground_truth;
  std::vector<std::string> candidates;
  std::size_t rank = 0;  // first relevant rank, 0 for a miss
  std::string error;     // decoding failure, if any
};

struct EvalReport {
  std::vector<double> em;  // em[k-1] = EM@k in percent, k = 1..5
  double mrr = 0;
  double map = 0;
  std::vector<EvalRow> rows;
};

inline EvalReport make_report(std::vector<RankedResult> results, std::vector<EvalRow> rows) {
  EvalReport rep;
  for (int k = 1; k <= kReportedEmDepth; ++k) rep.em.push_back(em_at_k(results, k));
  rep.mrr = mrr(results);
  rep.map = mean_average_precision(results);
  rep.rows = std::move(rows);
  return rep;
}

inline nlohmann::json to_json_value(const EvalReport& r, bool with_rows = true) {
  nlohmann::json j;
  for (std::size_t k = 0; k < r.em.size(); ++k) j["em@" + std::to_string(k + 1)] = r.em[k];
  j["mrr"] = r.mrr;
  j["map"] = r.map;
  j["queries"] = r.rows.size();
  if (with_rows) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json o = {{"query", row.query},
                          {"prefix", row.prefix},
                          {"ground_truth", row.ground_truth},
                          {"candidates", row.candidates},
                          {"rank", row.rank}};
      if (!row.error.empty()) o["error"] = row.error;
      rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
  }
  return j;
}

// Aligned text table, one labelled row per report.
inline std::string format_table(const std::vector<std::pair<std::string, const EvalReport*>>& rows) {
  std::size_t label_width = 7;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  std::string out;
  char buf[64];
  auto pad = [&](const std::string& s) { return s + std::string(label_width - s.size(), ' '); };
  out += pad("setting");
  for (int k = 1; k <= kReportedEmDepth; ++k) {
    std::snprintf(buf, sizeof(buf), "  %7s", ("EM@" + std::to_string(k)).c_str());
    out += buf;
  }
  out += "      MRR      MAP\n";
  for (const auto& [label, rep] : rows) {
    out += pad(label);
    for (double v : rep->em) {
      std::snprintf(buf, sizeof(buf), "  %7.2f", v);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "  %7.4f  %7.4f\n", rep->mrr, rep->map);
    out += buf;
  }
  return out;
}

struct EvalOptions {
  CompletionOptions completion;  // library is ignored here; see `library`
  int prefix_mode = -1;          // -1: random training-style prompt; 0, 1, 2: fixed prefix words
  std::uint64_t seed = 42;
  const ApiLibrary* library = nullptr;  // also report APICheck-filtered results
};

struct EvalOutcome {
  EvalReport plain;
  std::optional<EvalReport> checked;  // with APICheck, when a library is given
};

inline std::string prefix_for(const QueryApiPair& pair, int prefix_mode, Rng& rng) {
  const PromptedExample ex = prefix_mode < 0 ? make_prompted_examples(pair, rng, 1).front()
                                             : prompt_with_prefix_words(pair, prefix_mode);
  return text::join(ex.prefix_words, ".");
}

// Decodes every test pair once. The filtered report reuses the same beam,
// keeping every candidate (need = beam width) so ranks can only improve.
template <typename S>
EvalOutcome evaluate(const Params<S>& params, const Vocab& vocab, std::span<const QueryApiPair> test,
                     const EvalOptions& opt) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Rng rng(derive_seed(opt.seed, "eval-prefix"));
  CompletionOptions copt = opt.completion;
  copt.library = nullptr;
  std::vector<RankedResult> plain, checked;
  std::vector<EvalRow> plain_rows, checked_rows;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& pair = test[i];
    EvalRow row{pair.query, prefix_for(pair, opt.prefix_mode, rng), pair.api, {}, 0, {}};
    std::vector<Candidate> cands;
    try {
      cands = ranked_candidates(params, vocab, pair.query, row.prefix, 1, copt);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    auto record = [&](const std::vector<Candidate>& cs, EvalRow r, std::vector<RankedResult>& results,
                      std::vector<EvalRow>& rows) {
      for (const auto& c : cs) r.candidates.push_back(c.text);
      results.push_back(make_ranked_result(std::to_string(i), r.candidates, pair.relevant()));
      r.candidates = results.back().candidates;
      r.rank = first_relevant_rank(results.back());
      rows.push_back(std::move(r));
    };
    record(cands, row, plain, plain_rows);
    if (opt.library) {
      const auto filtered =
          cands.empty() ? cands : api_check_filter(cands, *opt.library, std::max<int>(1, static_cast<int>(cands.size())));
      record(filtered, row, checked, checked_rows);
    }
  }
  EvalOutcome out{make_report(std::move(plain), std::move(plain_rows)), std::nullopt};
  if (opt.library) out.checked = make_report(std::move(checked), std::move(checked_rows));
  return out;
}

}  // namespace apicomplete

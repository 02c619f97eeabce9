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

#include "apicomplete/corpus.hpp"
#include "apicomplete/synthetic.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

namespace apicomplete {
namespace {

LoadResult parse(const std::string& s) {
  std::istringstream in(s);
  return parse_pairs(in);
}

TEST(Load, SingleRecord) {
  auto r = parse(R"({"query":"read file","api":"java.io.filereader.read"})" "\n");
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.pairs[0].words().size(), 4u);
  EXPECT_EQ(r.pairs[0].query, "read file");
  EXPECT_EQ(r.pairs[0].line, 1u);
}

TEST(Load, EmptyInput) {
  auto r = parse("");
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_TRUE(r.errors.empty());
}

TEST(Load, BadRecordsAreReportedWithLines) {
  auto r = parse(
      "{\"query\":\"a\",\"api\":\"\"}\n"
      "{\"query\":\"b\"}\n"
      "not json\n"
      "{\"query\":\"  \",\"api\":\"a.b\"}\n"
      "{\"query\":\"c\",\"api\":\"single\"}\n"
      "{\"query\":\"d\",\"api\":\"a..b\"}\n"
      "{\"query\":\"ok\",\"api\":\"  Java.Util.List  \",\"relevant\":[\"java.util.arraylist\"]}\n"
      "{\"query\":\"ok\",\"api\":\"java.util.list\"}\n");
  ASSERT_EQ(r.errors.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.errors[i].line, i + 1);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].api, "java.util.list");
  EXPECT_EQ(r.pairs[0].relevant(), (std::vector<std::string>{"java.util.list", "java.util.arraylist"}));
  EXPECT_EQ(r.duplicates, 1u);
}

TEST(Load, MissingFileThrows) { EXPECT_THROW(load_pairs("/nonexistent/corpus.jsonl"), std::runtime_error); }

TEST(Load, ReservedLiteralsStrippedFromQueries) {
  auto r = parse(R"({"query":"use <mask> and <sep> here","api":"a.b"})" "\n");
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].query.find("<mask>"), std::string::npos);
  EXPECT_EQ(r.pairs[0].query.find("<sep>"), std::string::npos);
}

TEST(Split, SizesFollowFloorRule) {
  SplitSpec spec;
  auto s = split_corpus(100, spec);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.valid.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  s = split_corpus(10, spec);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.valid.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  s = split_corpus(19, spec);
  EXPECT_EQ(s.train.size(), 17u);
  EXPECT_EQ(s.valid.size(), 1u);
}

TEST(Split, PartitionAndDeterminism) {
  for (std::size_t n : {10u, 37u, 211u}) {
    SplitSpec spec;
    spec.seed = n;
    const auto a = split_corpus(n, spec);
    const auto b = split_corpus(n, spec);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.test, b.test);
    std::multiset<std::size_t> all;
    for (const auto* part : {&a.train, &a.valid, &a.test}) all.insert(part->begin(), part->end());
    ASSERT_EQ(all.size(), n);
    std::size_t expect = 0;
    for (auto v : all) EXPECT_EQ(v, expect++);
  }
  SplitSpec other;
  other.seed = 43;
  EXPECT_NE(split_corpus(100, SplitSpec{}).test, split_corpus(100, other).test);
}

TEST(Split, Errors) {
  SplitSpec bad;
  bad.train = 0.7;
  EXPECT_THROW(split_corpus(100, bad), ConfigError);
  bad = {};
  bad.valid = 0;
  bad.train = 0.9;
  EXPECT_THROW(split_corpus(100, bad), ConfigError);
  EXPECT_THROW(split_corpus(9, SplitSpec{}), ConfigError);
}

TEST(Mask, HandCases) {
  auto ex = mask_api("java.lang.system.arraycopy", 1);
  EXPECT_EQ(ex.prompt, "java.lang.system.<mask>");
  ex = mask_api("java.awt.component.setbounds", 3);
  EXPECT_EQ(ex.prompt, "java.<mask>");
  EXPECT_EQ(ex.prefix_words, (std::vector<std::string>{"java"}));
  EXPECT_EQ(ex.masked_count, 3);
  EXPECT_THROW(mask_api("a.b", 2), std::invalid_argument);
  EXPECT_THROW(mask_api("a.b", 0), std::invalid_argument);
  EXPECT_THROW(mask_api("single", 1), std::invalid_argument);
}

TEST(Mask, ReconstructionOverRandomApis) {
  Rng rng(2024);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789_";
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(7));
    std::vector<std::string> words;
    for (int w = 0; w < n; ++w) {
      std::string word;
      const int len = 1 + static_cast<int>(rng.below(10));
      for (int c = 0; c < len; ++c) word += alphabet[rng.below(alphabet.size())];
      words.push_back(word);
    }
    std::string api = words[0];
    for (int w = 1; w < n; ++w) api += "." + words[static_cast<std::size_t>(w)];
    const int n_rand = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    const auto ex = mask_api(api, n_rand);
    ASSERT_GE(ex.prefix_words.size(), 1u);
    ASSERT_GE(ex.masked_count, 1);
    ASSERT_LE(ex.masked_count, n - 1);
    std::vector<std::string> rebuilt = ex.prefix_words;
    rebuilt.insert(rebuilt.end(), words.end() - n_rand, words.end());
    ASSERT_EQ(rebuilt, words);
    ASSERT_EQ(ex.target_text, api);

    QueryApiPair pair{"query " + std::to_string(trial), api, {}, 0};
    for (const auto& p : make_prompted_examples(pair, rng)) {
      ASSERT_GE(p.masked_count, 1);
      ASSERT_LE(p.masked_count, n - 1);
      const auto parsed = parse_input_text(p.input_text);
      ASSERT_EQ(parsed.prefix, text::join(p.prefix_words, "."));
      ASSERT_EQ(parsed.query, pair.query);
    }
  }
}

TEST(Prompted, CountsAndDistinctness) {
  Rng rng(1);
  QueryApiPair four{"q", "a.b.c.d", {}, 0};
  auto ex = make_prompted_examples(four, rng, 3);
  ASSERT_EQ(ex.size(), 3u);
  std::set<int> seen;
  for (const auto& e : ex) seen.insert(e.masked_count);
  EXPECT_EQ(seen, (std::set<int>{1, 2, 3}));

  QueryApiPair two{"q", "a.b", {}, 0};
  ex = make_prompted_examples(two, rng, 3);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].masked_count, 1);

  QueryApiPair long_api{"q", "a.b.c.d.e.f.g", {}, 0};
  for (int trial = 0; trial < 100; ++trial) {
    ex = make_prompted_examples(long_api, rng, 3);
    seen.clear();
    for (const auto& e : ex) seen.insert(e.masked_count);
    EXPECT_EQ(seen.size(), 3u);
  }
  EXPECT_THROW(make_prompted_examples(four, rng, 0), std::invalid_argument);
}

TEST(Prompted, Deterministic) {
  QueryApiPair p{"q", "a.b.c.d.e.f", {}, 0};
  Rng r1(77), r2(77);
  for (int i = 0; i < 20; ++i) {
    auto a = make_prompted_examples(p, r1);
    auto b = make_prompted_examples(p, r2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].masked_count, b[j].masked_count);
  }
}

TEST(Prompted, InputGrammar) {
  QueryApiPair p{"convert a timestamp", "java.util.calendar.gettime", {}, 0};
  auto ex = mask_api(p.api, 1);
  EXPECT_EQ(make_input_text(ex.prompt, p.query), "java.util.calendar.<mask><sep>convert a timestamp");
  auto zero = prompt_with_prefix_words(p, 0);
  EXPECT_EQ(zero.input_text, "<mask><sep>convert a timestamp");
  EXPECT_EQ(parse_input_text(zero.input_text).prefix, "");
  auto two = prompt_with_prefix_words(p, 2);
  EXPECT_EQ(two.input_text, "java.util.<mask><sep>convert a timestamp");
  EXPECT_EQ(prompt_with_prefix_words(p, 9).prefix_words.size(), 3u);
  EXPECT_EQ(prompt_from_prefix("Java.Util."), "java.util.<mask>");
  EXPECT_THROW(parse_input_text("java.util"), std::invalid_argument);
  EXPECT_THROW(parse_input_text("java<sep>q"), std::invalid_argument);
}

TEST(Stats, HandCases) {
  auto s = length_stats({7, 7}, {8});
  EXPECT_EQ(s.average, 7);
  EXPECT_EQ(s.mode, 7);
  EXPECT_EQ(s.median, 7);
  EXPECT_EQ(s.coverage[0].second, 1.0);
  s = length_stats({1, 2, 2, 3, 3, 10}, {2, 3, 11});
  EXPECT_DOUBLE_EQ(s.average, 21.0 / 6);
  EXPECT_EQ(s.mode, 2);
  EXPECT_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.coverage[0].second, 1.0 / 6);
  EXPECT_DOUBLE_EQ(s.coverage[1].second, 3.0 / 6);
  EXPECT_DOUBLE_EQ(s.coverage[2].second, 1.0);
}

TEST(Stats, CoverageMonotoneOnCorpus) {
  const auto pairs = synthetic::desk_corpus();
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    texts.push_back(p.query);
    texts.push_back(p.api);
  }
  const auto vocab = Vocab::train(texts, 600);
  const auto st = corpus_stats(pairs, vocab);
  for (const auto* ls : {&st.query, &st.api}) {
    double prev = 0;
    for (const auto& [t, f] : ls->coverage) {
      EXPECT_GE(f, prev);
      EXPECT_LE(f, 1.0);
      prev = f;
    }
    EXPECT_GT(ls->average, 0);
  }
  const auto j = to_json(st);
  EXPECT_TRUE(j.contains("query"));
  EXPECT_TRUE(j["api"].contains("coverage"));
}

TEST(Synthetic, CorporaAreWellFormed) {
  for (const auto& pairs : {synthetic::desk_corpus(), synthetic::overfit_corpus(), synthetic::ambiguous_corpus()}) {
    std::ostringstream os;
    synthetic::write_jsonl(os, pairs);
    const auto r = parse(os.str());
    EXPECT_TRUE(r.errors.empty());
    EXPECT_EQ(r.duplicates, 0u);
    EXPECT_EQ(r.pairs.size(), pairs.size());
  }
  EXPECT_EQ(synthetic::overfit_corpus().size(), 32u);
  const auto amb = synthetic::ambiguous_corpus();
  for (std::size_t i = 0; i < amb.size(); i += 2) {
    EXPECT_EQ(amb[i].query, amb[i + 1].query);
    EXPECT_NE(amb[i].words()[0], amb[i + 1].words()[0]);
  }
}

}  // namespace
}  // namespace apicomplete

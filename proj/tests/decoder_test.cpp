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

#include "apicomplete/decoder.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

namespace apicomplete {
namespace {

using test::enumerate_all;
using test::five_token_config;
using test::random_input;
using test::random_model;

TEST(Beam, ExhaustiveEquivalenceOnTinyInstances) {
  const std::vector<int> allowed = {1, 2, 3, 4};
  BeamOptions opt;
  opt.width = 125;
  opt.banned = {token::kPad};
  int instances = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    for (int max_len = 1; max_len <= 4; ++max_len) {
      const auto c = five_token_config(seed, 4);
      const auto p = random_model(c);
      Rng rng(seed * 100 + static_cast<std::uint64_t>(max_len));
      for (int trial = 0; trial < 3; ++trial) {
        const auto in = random_input(c, rng);
        opt.max_len = max_len;
        const auto beam = beam_search(p, in, opt);
        auto all = enumerate_all(p, in, allowed, max_len);
        ASSERT_EQ(beam.size(), all.size());
        std::map<std::vector<int>, double> expected;
        for (const auto& s : all) expected[s.ids] = s.score;
        for (const auto& cand : beam) {
          auto it = expected.find(cand.ids);
          ASSERT_NE(it, expected.end());
          EXPECT_NEAR(cand.score, it->second, 1e-9);
          EXPECT_NEAR(cand.score, cand.log_prob_sum() / static_cast<double>(cand.ids.size()), 1e-12);
          EXPECT_TRUE(cand.finished);
          for (double lp : cand.token_log_probs) EXPECT_LE(lp, 0.0);
          expected.erase(it);
        }
        EXPECT_TRUE(expected.empty());
        for (std::size_t i = 1; i < beam.size(); ++i) EXPECT_FALSE(candidate_before(beam[i], beam[i - 1]));
        ++instances;
      }
    }
  }
  EXPECT_EQ(instances, 144);
}

TEST(Beam, WidthOneIsGreedy) {
  auto c = test::tiny_config();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    c.seed = seed;
    const auto p = random_model(c);
    Rng rng(seed);
    const auto in = random_input(c, rng);
    BeamOptions opt;
    opt.width = 1;
    const auto beam = beam_search(p, in, opt);
    ASSERT_EQ(beam.size(), 1u);

    const auto mem = encode_source(p, in);
    auto st = initial_decoder_state(p);
    int tok = token::kBegin;
    std::vector<int> greedy;
    const auto banned = default_banned_ids();
    for (int t = 0; t < c.max_output_length; ++t) {
      const auto lp = decode_step(p, mem, st, tok);
      int best = -1;
      for (int v = 0; v < c.vocab_size; ++v) {
        if (std::find(banned.begin(), banned.end(), v) != banned.end()) continue;
        if (best < 0 || lp(v) > lp(best)) best = v;
      }
      greedy.push_back(best);
      tok = best;
      if (best == token::kEnd) break;
    }
    EXPECT_EQ(beam[0].ids, greedy);
  }
}

TEST(Beam, ReturnsWidthCandidatesAndDefaults) {
  BeamOptions opt;
  EXPECT_EQ(opt.width, 10);
  const auto c = test::tiny_config();
  const auto p = random_model(c);
  Rng rng(4);
  const auto beam = beam_search(p, random_input(c, rng), opt);
  EXPECT_EQ(beam.size(), 10u);
  for (const auto& cand : beam) {
    EXPECT_TRUE(cand.finished);
    EXPECT_TRUE(cand.ids.back() == token::kEnd || static_cast<int>(cand.ids.size()) == c.max_output_length);
    for (int id : cand.ids) {
      EXPECT_NE(id, token::kPad);
      EXPECT_NE(id, token::kMask);
    }
  }
  opt.width = 0;
  EXPECT_THROW(beam_search(p, random_input(c, rng), opt), ConfigError);
}

TEST(Beam, WiderBeamNeverLowersTheBestScore) {
  auto c = test::tiny_config();
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    c.seed = seed;
    const auto p = random_model(c);
    Rng rng(seed + 7);
    const auto in = random_input(c, rng);
    double prev = -std::numeric_limits<double>::infinity();
    for (int w = 1; w <= 12; ++w) {
      BeamOptions opt;
      opt.width = w;
      const double best = beam_search(p, in, opt).front().score;
      EXPECT_GE(best, prev) << "seed " << seed << " width " << w;
      prev = std::max(prev, best);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 480);
}

Candidate named(const std::string& t, double score) {
  Candidate c;
  c.text = t;
  c.score = score;
  return c;
}

std::vector<std::string> texts(const std::vector<Candidate>& cs) {
  std::vector<std::string> out;
  for (const auto& c : cs) out.push_back(c.text);
  return out;
}

TEST(ApiCheck, HandCases) {
  ApiLibrary lib({"a.b", "a.c", "Java.Util.List"});
  EXPECT_TRUE(lib.contains("java.util.list"));
  EXPECT_TRUE(lib.contains(" java..util.list "));

  auto out = api_check_filter({named("x.y", -1), named("a.b", -2), named("a.c", -3)}, lib, 2);
  EXPECT_EQ(texts(out), (std::vector<std::string>{"a.b", "a.c"}));
  EXPECT_TRUE(*out[0].in_library);

  out = api_check_filter({named("a.b", -1), named("a.c", -2), named("java.util.list", -3)}, lib, 2);
  EXPECT_EQ(texts(out), (std::vector<std::string>{"a.b", "a.c"}));

  std::vector<Candidate> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(named(i % 3 == 0 && i < 9 ? std::vector<std::string>{"a.b", "a.c", "java.util.list"}[static_cast<std::size_t>(i / 3)] : "bad.api" + std::to_string(i), -i));
  out = api_check_filter(ten, lib, 5);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(texts(out), (std::vector<std::string>{"a.b", "a.c", "java.util.list", "bad.api1", "bad.api2"}));
  EXPECT_FALSE(*out[3].in_library);
  EXPECT_FALSE(*out[4].in_library);

  out = api_check_filter({named("x.y", -1)}, lib, 5);
  ASSERT_EQ(out.size(), 1u);

  std::string warning;
  out = api_check_filter({named("x.y", -1), named("z.w", -2)}, ApiLibrary{}, 1, &warning);
  EXPECT_EQ(out.size(), 2u);
  EXPECT_FALSE(warning.empty());
}

TEST(ApiCheck, LoadSkipsComments) {
  test::TempDir dir;
  {
    std::ofstream f(dir.file("lib.txt"));
    f << "# header\njava.util.list\n\n  # indented comment\nJAVA.IO.FILE\n";
  }
  const auto lib = ApiLibrary::load(dir.file("lib.txt"));
  EXPECT_EQ(lib.size(), 2u);
  EXPECT_TRUE(lib.contains("java.io.file"));
  EXPECT_THROW(ApiLibrary::load(dir.file("missing.txt")), std::runtime_error);
}

TEST(Complete, RejectsKAboveWidthAndHonoursPrefix) {
  const auto pairs = std::vector<std::string>{"how to convert a timestamp to a date", "java.util.calendar.gettime"};
  const auto vocab = Vocab::train(pairs, 300);
  auto c = test::tiny_config();
  c.vocab_size = static_cast<int>(vocab.size());
  c.max_input_length = 48;
  c.max_output_length = 8;
  const auto p = init_params<float>(c);
  CompletionOptions opt;
  opt.beam.width = 3;
  EXPECT_THROW(complete(p, vocab, "q", "", 4, opt), ConfigError);

  opt.beam.width = 1;
  const auto one = complete(p, vocab, "convert a timestamp to a date", "java.util.calendar", 1, opt);
  EXPECT_LE(one.size(), 1u);

  opt.beam.width = 10;
  opt.prefix_consistency = true;
  const auto filtered = complete(p, vocab, "convert a timestamp to a date", "java.util.calendar", 5, opt);
  for (const auto& r : filtered) EXPECT_TRUE(r.text.starts_with("java.util.calendar.")) << r.text;

  const auto in = completion_input(vocab, c, "q", "");
  EXPECT_EQ(vocab.decode(in.tokens()), "<mask><sep>q");
}

}  // namespace
}  // namespace apicomplete

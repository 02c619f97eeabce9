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

#include "apicomplete/evaluate.hpp"
#include "apicomplete/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>


namespace apicomplete {
namespace {

RankedResult rr(std::vector<std::string> c, std::vector<std::string> rel) {
  return make_ranked_result("q", c, rel);
}

TEST(Metrics, EmHandCases) {
  std::vector<RankedResult> rs = {rr({"a.x", "b.x"}, {"a.x"}), rr({"c.x", "d.x", "e.x"}, {"e.x"})};
  EXPECT_EQ(em_at_k(rs, 1), 50.0);
  EXPECT_EQ(em_at_k(rs, 2), 50.0);
  EXPECT_EQ(em_at_k(rs, 3), 100.0);
  std::vector<RankedResult> none = {rr({"a.x"}, {"z.z"}), rr({}, {"z.z"})};
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(em_at_k(none, k), 0.0);
  EXPECT_THROW(em_at_k({}, 1), std::invalid_argument);
  EXPECT_THROW(em_at_k(rs, 0), std::invalid_argument);
}

TEST(Metrics, MrrHandCases) {
  std::vector<RankedResult> rs = {rr({"t.t"}, {"t.t"}), rr({"x.x", "t.t"}, {"t.t"}),
                                  rr({"x.x", "y.y", "z.z", "t.t"}, {"t.t"})};
  EXPECT_NEAR(mrr(rs), 7.0 / 12, 1e-15);
  std::vector<RankedResult> half = {rr({"t.t"}, {"t.t"}), rr({"x.x"}, {"t.t"})};
  EXPECT_EQ(mrr(half), 0.5);
  std::vector<RankedResult> all = {rr({"t.t"}, {"t.t"}), rr({"u.u"}, {"u.u"})};
  EXPECT_EQ(mrr(all), 1.0);
}

TEST(Metrics, AveragePrecisionHandCases) {
  EXPECT_NEAR(average_precision({"a.a", "x.x", "b.b", "y.y", "z.z"}, {"a.a", "b.b"}), 5.0 / 6, 1e-15);
  EXPECT_EQ(average_precision({"x.x", "a.a"}, {"a.a"}), 0.5);
  EXPECT_EQ(average_precision({"x.x", "y.y"}, {"a.a"}), 0.0);
  EXPECT_EQ(average_precision({"a.a"}, {"a.a", "b.b"}), 0.5);
  EXPECT_THROW(average_precision({"a.a"}, {}), std::invalid_argument);
}

TEST(Metrics, NormalizationAndDedup) {
  auto r = make_ranked_result("q", {" Java.Util.List ", "java.util.list", "a.b"}, {"JAVA.util.list"});
  EXPECT_EQ(r.candidates, (std::vector<std::string>{"java.util.list", "a.b"}));
  EXPECT_EQ(first_relevant_rank(r), 1u);
}

TEST(Metrics, MatchesBruteForceOracle) {
  Rng rng(11);
  const std::vector<std::string> pool = {"a.a", "b.b", "c.c", "d.d", "e.e", "f.f", "g.g", "h.h"};
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + rng.below(12);
    std::vector<RankedResult> rs;
    std::vector<std::vector<std::string>> cands;
    std::vector<std::set<std::string>> rels;
    for (std::size_t q = 0; q < n; ++q) {
      auto shuffled = pool;
      rng.shuffle(shuffled);
      shuffled.resize(rng.below(pool.size() + 1));
      auto rel_pick = pool;
      rng.shuffle(rel_pick);
      rel_pick.resize(1 + rng.below(3));
      rs.push_back(make_ranked_result(std::to_string(q), shuffled, rel_pick));
      cands.push_back(shuffled);
      rels.emplace_back(rel_pick.begin(), rel_pick.end());
    }
    const auto o = test::metrics_oracle(cands, rels);
    for (int k = 1; k <= 5; ++k) ASSERT_EQ(em_at_k(rs, k), o.em[static_cast<std::size_t>(k - 1)]);
    ASSERT_EQ(mrr(rs), o.mrr);
    ASSERT_EQ(mean_average_precision(rs), o.map);
  }
}

TEST(Metrics, Invariants) {
  Rng rng(12);
  const std::vector<std::string> pool = {"a.a", "b.b", "c.c", "d.d", "e.e", "f.f"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RankedResult> rs, singles;
    for (int q = 0; q < 9; ++q) {
      auto c = pool;
      rng.shuffle(c);
      c.resize(rng.below(pool.size() + 1));
      std::vector<std::string> rel = {pool[rng.below(pool.size())], pool[rng.below(pool.size())]};
      rs.push_back(make_ranked_result("", c, rel));
      singles.push_back(make_ranked_result("", c, {rel[0]}));
    }
    double prev = 0;
    for (int k = 1; k <= 5; ++k) {
      const double e = em_at_k(rs, k);
      EXPECT_GE(e, prev);
      prev = e;
    }
    EXPECT_EQ(mean_average_precision(singles), mrr(singles));

    auto perm = rs;
    rng.shuffle(perm);
    EXPECT_EQ(mrr(perm), mrr(rs));
    EXPECT_EQ(mean_average_precision(perm), mean_average_precision(rs));

    // Candidates appended after the last relevant hit change nothing.
    auto extended = rs;
    for (auto& r : extended) r.candidates.push_back("zz.appended");
    EXPECT_EQ(mrr(extended), mrr(rs));
    EXPECT_EQ(mean_average_precision(extended), mean_average_precision(rs));
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(em_at_k(extended, k), em_at_k(rs, k));
    for (double v : {mrr(rs), mean_average_precision(rs)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Report, TableAndJson) {
  std::vector<RankedResult> rs = {rr({"a.a", "b.b"}, {"b.b"})};
  const auto rep = make_report(rs, {});
  ASSERT_EQ(rep.em.size(), 5u);
  EXPECT_EQ(rep.em[0], 0.0);
  EXPECT_EQ(rep.em[1], 100.0);
  const auto table = format_table({{"atcom", &rep}, {"none", &rep}});
  EXPECT_NE(table.find("EM@1"), std::string::npos);
  EXPECT_NE(table.find("atcom"), std::string::npos);
  const auto j = to_json_value(rep);
  EXPECT_EQ(j["em@2"], 100.0);
  EXPECT_EQ(j["mrr"], 0.5);
}

}  // namespace
}  // namespace apicomplete

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
#include "apicomplete/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apicomplete {

struct RankedResult {
  std::string query_id;
  std::vector<std::string> candidates;  // normalized, deduplicated, best first
  std::vector<std::string> relevant;    // normalized, deduplicated, non-empty
};

// Normalizes strings and drops repeated candidates, keeping the best rank.
inline RankedResult make_ranked_result(std::string query_id, const std::vector<std::string>& candidates,
                                       const std::vector<std::string>& relevant) {
  RankedResult r;
  r.query_id = std::move(query_id);
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    auto n = text::normalize_api(c);
    if (seen.insert(n).second) r.candidates.push_back(std::move(n));
  }
  seen.clear();
  for (const auto& c : relevant) {
    auto n = text::normalize_api(c);
    if (!n.empty() && seen.insert(n).second) r.relevant.push_back(std::move(n));
  }
  if (r.relevant.empty()) throw std::invalid_argument("ranked result needs a non-empty relevant set");
  return r;
}

namespace detail {

inline bool is_relevant(const RankedResult& r, const std::string& c) {
  return std::find(r.relevant.begin(), r.relevant.end(), c) != r.relevant.end();
}

// Order-independent sum: terms are sorted before Neumaier summation, so any
// permutation of the inputs gives the same bits.
inline double stable_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0, comp = 0;
  for (double t : terms) {
    const double s = sum + t;
    comp += std::abs(sum) >= std::abs(t) ? (sum - s) + t : (t - s) + sum;
    sum = s;
  }
  return sum + comp;
}

// Sum of non-negative fractions num/den divided by `count`. Exact rational
// arithmetic keeps the result independent of term order; if a denominator
// outgrows 128 bits the compensated double sum is used instead.
class FractionMean {
 public:
  void add(std::int64_t num, std::int64_t den) {
    terms_.push_back(static_cast<double>(num) / static_cast<double>(den));
    if (overflow_) return;
    __int128 n = 0, d = 0;
    if (__builtin_mul_overflow(num_, static_cast<__int128>(den), &n) ||
        __builtin_mul_overflow(static_cast<__int128>(num), den_, &d) || __builtin_add_overflow(n, d, &n) ||
        __builtin_mul_overflow(den_, static_cast<__int128>(den), &d)) {
      overflow_ = true;
      return;
    }
    const __int128 g = gcd(n, d);
    num_ = n / g;
    den_ = d / g;
  }

  double mean(std::size_t count) const {
    if (!overflow_) {
      __int128 d = 0;
      if (!__builtin_mul_overflow(den_, static_cast<__int128>(count), &d)) {
        const __int128 g = gcd(num_, d);
        return static_cast<double>(num_ / g) / static_cast<double>(d / g);
      }
    }
    return stable_sum(terms_) / static_cast<double>(count);
  }

 private:
  static __int128 gcd(__int128 a, __int128 b) {
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }

  __int128 num_ = 0;
  __int128 den_ = 1;
  bool overflow_ = false;
  std::vector<double> terms_;
};

}  // namespace detail

// 1-based rank of the first relevant candidate, 0 when none is retrieved.
inline std::size_t first_relevant_rank(const RankedResult& r) {
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (detail::is_relevant(r, r.candidates[i])) return i + 1;
  }
  return 0;
}

// Percentage of queries with a relevant api among the top k.
inline double em_at_k(std::span<const RankedResult> results, int k) {
  if (results.empty()) throw std::invalid_argument("em_at_k: no results");
  if (k < 1) throw std::invalid_argument("em_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& r : results) {
    const auto rank = first_relevant_rank(r);
    if (rank >= 1 && rank <= static_cast<std::size_t>(k)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

inline double mrr(std::span<const RankedResult> results) {
  if (results.empty()) throw std::invalid_argument("mrr: no results");
  detail::FractionMean sum;
  for (const auto& r : results) {
    const auto rank = first_relevant_rank(r);
    if (rank) sum.add(1, static_cast<std::int64_t>(rank));
  }
  return sum.mean(results.size());
}

// Sum over relevant hits of precision at the hit's rank, over |relevant|.
namespace detail {
inline void add_average_precision(FractionMean& sum, const RankedResult& r) {
  std::int64_t hits = 0;
  const auto rel = static_cast<std::int64_t>(r.relevant.size());
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (!is_relevant(r, r.candidates[i])) continue;
    ++hits;
    sum.add(hits, static_cast<std::int64_t>(i + 1) * rel);
  }
}
}  // namespace detail

inline double average_precision(const RankedResult& r) {
  detail::FractionMean sum;
  detail::add_average_precision(sum, r);
  return sum.mean(1);
}

inline double average_precision(const std::vector<std::string>& candidates,
                                const std::vector<std::string>& relevant) {
  return average_precision(make_ranked_result("", candidates, relevant));
}

inline double mean_average_precision(std::span<const RankedResult> results) {
  if (results.empty()) throw std::invalid_argument("mean_average_precision: no results");
  detail::FractionMean sum;
  for (const auto& r : results) detail::add_average_precision(sum, r);
  return sum.mean(results.size());
}

}  // namespace apicomplete

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

// Byte-level BPE with a fixed reserved-token prefix.
//
// Id layout:
//   0..4    <pad> <s> </s> <mask> <sep>
//   5..260  one token per byte value (fallback alphabet)
//   261..   learned merges, in rank order
//
// Text is pre-split into chunks (an optional leading space plus a run of
// alphanumeric/non-ASCII bytes, or a single other byte). Merges never cross
// chunk boundaries, so "java.util" always splits at the dot.

#pragma once

#include "apicomplete/common.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace apicomplete {

namespace token {
inline constexpr int kPad = 0;
inline constexpr int kBegin = 1;
inline constexpr int kEnd = 2;
inline constexpr int kMask = 3;
inline constexpr int kSep = 4;
inline constexpr int kReservedCount = 5;
inline constexpr int kByteBase = kReservedCount;
inline constexpr int kBaseCount = kReservedCount + 256;

inline constexpr std::array<std::string_view, kReservedCount> kReservedText = {
    "<pad>", "<s>", "</s>", "<mask>", "<sep>"};
inline constexpr std::string_view kMaskText = "<mask>";
inline constexpr std::string_view kSepText = "<sep>";
}  // namespace token

// Fixed-length id sequence. Positions >= true_length hold the pad id.
struct TokenSeq {
  std::vector<int> ids;
  int true_length = 0;

  int max_len() const { return static_cast<int>(ids.size()); }
  std::span<const int> tokens() const { return {ids.data(), static_cast<std::size_t>(true_length)}; }

  static TokenSeq from_tokens(std::span<const int> tokens, int max_len) {
    TokenSeq seq;
    seq.ids.assign(static_cast<std::size_t>(max_len), token::kPad);
    const int n = std::min<int>(max_len, static_cast<int>(tokens.size()));
    std::copy_n(tokens.begin(), n, seq.ids.begin());
    seq.true_length = n;
    return seq;
  }
};

class Vocab {
 public:
  using Merge = std::pair<int, int>;

  Vocab() { init_base(); }

  static Vocab train(const std::vector<std::string>& texts, std::size_t vocab_size,
                     std::size_t min_frequency = 2) {
    if (vocab_size < static_cast<std::size_t>(token::kBaseCount)) {
      throw ConfigError(detail::concat("vocab_size ", vocab_size, " is below the ", token::kBaseCount,
                                       " reserved and byte tokens"));
    }
    Vocab vocab;

    // Unique chunks with counts; std::map keeps iteration order fixed.
    std::map<std::string, std::int64_t> chunk_counts;
    for (const auto& t : texts) {
      for (const auto& piece : split_special(t)) {
        if (piece.special >= 0) continue;
        for (auto chunk : pre_tokenize(piece.text)) ++chunk_counts[std::string(chunk)];
      }
    }
    std::vector<std::vector<int>> words;
    std::vector<std::int64_t> counts;
    for (const auto& [chunk, count] : chunk_counts) {
      std::vector<int> ids;
      for (unsigned char c : chunk) ids.push_back(token::kByteBase + c);
      words.push_back(std::move(ids));
      counts.push_back(count);
    }

    struct PairHash {
      std::size_t operator()(const Merge& p) const {
        return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(p.first) << 32) ^
                                          static_cast<std::uint32_t>(p.second));
      }
    };

    while (vocab.size() < vocab_size) {
      std::unordered_map<Merge, std::int64_t, PairHash> pair_counts;
      for (std::size_t w = 0; w < words.size(); ++w) {
        const auto& ids = words[w];
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) pair_counts[{ids[i], ids[i + 1]}] += counts[w];
      }
      const Merge* best = nullptr;
      std::int64_t best_count = 0;
      for (const auto& [pair, count] : pair_counts) {
        if (count > best_count ||
            (count == best_count && best && vocab.pair_less(pair, *best))) {
          best = &pair;
          best_count = count;
        }
      }
      if (!best || best_count < static_cast<std::int64_t>(min_frequency)) break;
      const Merge merge = *best;
      const int new_id = vocab.add_merge(merge);
      for (auto& ids : words) apply_merge(ids, merge, new_id);
    }
    return vocab;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token_bytes(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // Unbounded encoding of text; mask/separator literals become single ids.
  std::vector<int> encode_ids(std::string_view text) const {
    std::vector<int> out;
    for (const auto& piece : split_special(text)) {
      if (piece.special >= 0) {
        out.push_back(piece.special);
        continue;
      }
      for (auto chunk : pre_tokenize(piece.text)) {
        auto ids = encode_chunk(chunk);
        out.insert(out.end(), ids.begin(), ids.end());
      }
    }
    return out;
  }

  // Right-pads with id 0 or truncates the tail. With append_end the end token
  // is added before truncation is applied to the content, so it always
  // survives.
  TokenSeq encode(std::string_view text, int max_len, bool append_end = false) const {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    std::vector<int> ids = encode_ids(text);
    if (append_end) {
      if (static_cast<int>(ids.size()) >= max_len) ids.resize(static_cast<std::size_t>(max_len - 1));
      ids.push_back(token::kEnd);
    }
    return TokenSeq::from_tokens(ids, max_len);
  }

  // Pads and <s> are skipped; </s> terminates.
  std::string decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range(detail::concat("unknown token id ", id));
      }
      if (id == token::kEnd) break;
      if (id == token::kPad || id == token::kBegin) continue;
      out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  // Text format: a header line, the reserved tokens, then one merge per line
  // in rank order: the two input ids followed by the merged bytes in hex.
  // The ids are authoritative; the hex column is for humans.
  std::string serialize() const {
    std::string out = "#apicomplete-vocab v1\n";
    out += "reserved";
    for (auto r : token::kReservedText) {
      out += ' ';
      out += r;
    }
    out += '\n';
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      const auto& [a, b] = merges_[r];
      out += std::to_string(a);
      out += ' ';
      out += std::to_string(b);
      out += ' ';
      out += to_hex(tokens_[token::kBaseCount + r]);
      out += '\n';
    }
    return out;
  }

  static Vocab deserialize(std::string_view data) {
    Vocab vocab;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < data.size()) {
      std::size_t end = data.find('\n', pos);
      if (end == std::string_view::npos) end = data.size();
      std::string_view line = data.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line_no == 1) {
        if (line != "#apicomplete-vocab v1") throw FormatError("vocab: bad header");
        continue;
      }
      if (line_no == 2) {
        std::string expected = "reserved";
        for (auto r : token::kReservedText) {
          expected += ' ';
          expected += r;
        }
        if (line != expected) throw FormatError("vocab: reserved token line mismatch");
        continue;
      }
      if (line.empty()) continue;
      int left = -1, right = -1;
      std::string hex;
      {
        std::istringstream fields{std::string(line)};
        if (!(fields >> left >> right >> hex)) {
          throw FormatError(detail::concat("vocab: malformed merge on line ", line_no));
        }
      }
      const int limit = static_cast<int>(vocab.size());
      if (left < 0 || right < 0 || left >= limit || right >= limit) {
        throw FormatError(detail::concat("vocab: merge on line ", line_no, " uses an unknown token"));
      }
      vocab.add_merge({left, right});
      if (to_hex(vocab.tokens_.back()) != hex) {
        throw FormatError(detail::concat("vocab: merge on line ", line_no, " does not match its bytes"));
      }
    }
    if (line_no < 2) throw FormatError("vocab: truncated file");
    return vocab;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocab file " + path);
    out << serialize();
    if (!out) throw std::runtime_error("failed writing vocab file " + path);
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocab file " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(data);
  }

  // Chunking shared by training and encoding.
  static std::vector<std::string_view> pre_tokenize(std::string_view text) {
    auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
    std::vector<std::string_view> chunks;
    std::size_t i = 0;
    while (i < text.size()) {
      const std::size_t start = i;
      const auto c = static_cast<unsigned char>(text[i]);
      if (c == ' ' && i + 1 < text.size() && is_word(static_cast<unsigned char>(text[i + 1]))) ++i;
      if (is_word(static_cast<unsigned char>(text[i]))) {
        while (i < text.size() && is_word(static_cast<unsigned char>(text[i]))) ++i;
      } else {
        ++i;
      }
      chunks.push_back(text.substr(start, i - start));
    }
    return chunks;
  }

 private:
  struct Piece {
    std::string_view text;
    int special = -1;
  };

  static std::vector<Piece> split_special(std::string_view text) {
    std::vector<Piece> pieces;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto m = text.find(token::kMaskText, pos);
      const auto s = text.find(token::kSepText, pos);
      const auto next = std::min(m, s);
      if (next == std::string_view::npos) {
        pieces.push_back({text.substr(pos), -1});
        break;
      }
      if (next > pos) pieces.push_back({text.substr(pos, next - pos), -1});
      if (next == m) {
        pieces.push_back({token::kMaskText, token::kMask});
        pos = next + token::kMaskText.size();
      } else {
        pieces.push_back({token::kSepText, token::kSep});
        pos = next + token::kSepText.size();
      }
    }
    return pieces;
  }

  static void apply_merge(std::vector<int>& ids, const Merge& merge, int new_id) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i + 1 < ids.size() && ids[i] == merge.first && ids[i + 1] == merge.second) {
        ids[out++] = new_id;
        ++i;
      } else {
        ids[out++] = ids[i];
      }
    }
    ids.resize(out);
  }

  std::vector<int> encode_chunk(std::string_view chunk) const {
    std::vector<int> ids;
    ids.reserve(chunk.size());
    for (unsigned char c : chunk) ids.push_back(token::kByteBase + c);
    // Applying the lowest-ranked present merge everywhere, repeatedly, is
    // the same as replaying the merge table in order.
    while (ids.size() > 1) {
      int best_rank = -1;
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        auto it = rank_.find(key(ids[i], ids[i + 1]));
        if (it != rank_.end() && (best_rank < 0 || it->second < best_rank)) best_rank = it->second;
      }
      if (best_rank < 0) break;
      apply_merge(ids, merges_[static_cast<std::size_t>(best_rank)],
                  token::kBaseCount + best_rank);
    }
    return ids;
  }

  // Ties in training are broken by the byte strings of the pair.
  bool pair_less(const Merge& a, const Merge& b) const {
    const auto& al = tokens_[static_cast<std::size_t>(a.first)];
    const auto& bl = tokens_[static_cast<std::size_t>(b.first)];
    if (al != bl) return al < bl;
    const auto& ar = tokens_[static_cast<std::size_t>(a.second)];
    const auto& br = tokens_[static_cast<std::size_t>(b.second)];
    if (ar != br) return ar < br;
    return a < b;
  }

  int add_merge(const Merge& merge) {
    const int id = static_cast<int>(tokens_.size());
    rank_[key(merge.first, merge.second)] = static_cast<int>(merges_.size());
    merges_.push_back(merge);
    tokens_.push_back(tokens_[static_cast<std::size_t>(merge.first)] +
                      tokens_[static_cast<std::size_t>(merge.second)]);
    return id;
  }

  void init_base() {
    for (auto r : token::kReservedText) tokens_.emplace_back(r);
    for (int b = 0; b < 256; ++b) {
      tokens_.emplace_back(1, static_cast<char>(b));
    }
  }

  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  static std::string to_hex(std::string_view bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned char c : bytes) {
      out += kDigits[c >> 4];
      out += kDigits[c & 15];
    }
    return out;
  }

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::unordered_map<std::uint64_t, int> rank_;
};

}  // namespace apicomplete

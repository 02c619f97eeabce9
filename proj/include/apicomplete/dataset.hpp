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

// Glue between corpus records, the tokenizer and the trainer.

#pragma once

#include "apicomplete/corpus.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/rng.hpp"
#include "apicomplete/tokenizer.hpp"
#include "apicomplete/trainer.hpp"

#include <span>
#include <string>
#include <vector>

namespace apicomplete {

// Texts the tokenizer is trained on: queries and apis.
inline std::vector<std::string> tokenizer_texts(std::span<const QueryApiPair> pairs) {
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    texts.push_back(p.query);
    texts.push_back(p.api);
  }
  return texts;
}

struct PromptedDataset {
  std::vector<PromptedExample> prompts;
  std::vector<Example> examples;  // tokenized, aligned with prompts
};

inline Example tokenize_example(const Vocab& vocab, const ModelConfig& config, const PromptedExample& ex) {
  return {vocab.encode(ex.input_text, config.max_input_length),
          vocab.encode(ex.target_text, config.max_output_length, true)};
}

// `prompts_per_api` masked prompts per pair; 0 trains without prompts (the
// bare mask token stands in for the prefix).
inline PromptedDataset build_dataset(std::span<const QueryApiPair> pairs, const Vocab& vocab,
                                     const ModelConfig& config, std::uint64_t seed, int prompts_per_api = 3) {
  PromptedDataset ds;
  Rng rng(derive_seed(seed, "prompts"));
  for (const auto& pair : pairs) {
    std::vector<PromptedExample> prompts;
    if (prompts_per_api == 0) {
      prompts.push_back(prompt_with_prefix_words(pair, 0));
    } else {
      prompts = make_prompted_examples(pair, rng, prompts_per_api);
    }
    for (auto& p : prompts) {
      ds.examples.push_back(tokenize_example(vocab, config, p));
      ds.prompts.push_back(std::move(p));
    }
  }
  return ds;
}

// Clean-input examples for validation loss: one random prompt per pair.
inline std::vector<Example> validation_examples(std::span<const QueryApiPair> pairs, const Vocab& vocab,
                                                const ModelConfig& config, std::uint64_t seed,
                                                bool with_prompts = true) {
  return build_dataset(pairs, vocab, config, derive_seed(seed, "valid"), with_prompts ? 1 : 0).examples;
}

}  // namespace apicomplete

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


// Command-line front end: synth, prepare, train, eval, complete, sweep.

#include "apicomplete.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace ac = apicomplete;

namespace {

void add_common(CLI::App* cmd, std::string& config, ac::Overrides& o) {
  cmd->add_option("--config", config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "Top-level seed");
  cmd->add_option("--method", o.method, "Adversarial method: none, fgsm, fgm, pgd, atcom");
  cmd->add_option("--epsilon", o.epsilon, "Perturbation radius");
  cmd->add_option("--k-adv", o.k_adv, "Adversarial steps (pgd, atcom)");
  cmd->add_option("--alpha", o.alpha, "atcom L1/L2 mixing weight");
  cmd->add_option("--beam-width", o.beam_width, "Beam width");
  cmd->add_option("--api-library", o.api_library, "File with one known API per line (enables APICheck)");
  cmd->add_option("--top", o.top, "Number of completions to return");
  cmd->add_option("--output-dir", o.output_dir, "Run directory");
  cmd->add_option("--corpus", o.corpus, "Corpus JSONL file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"API completion from natural-language queries"};
  app.require_subcommand(1);

  std::string config;
  ac::Overrides o;

  auto* synth = app.add_subcommand("synth", "Write a built-in synthetic corpus as JSONL");
  std::string synth_kind = "desk", synth_out;
  synth->add_option("--kind", synth_kind, "desk, overfit or ambiguous")
      ->check(CLI::IsMember({"desk", "overfit", "ambiguous"}));
  synth->add_option("--out", synth_out, "Output path")->required();

  auto* prepare = app.add_subcommand("prepare", "Split, tokenize and prompt the corpus");
  auto* train = app.add_subcommand("train", "Train on prepared data");
  auto* eval = app.add_subcommand("eval", "Evaluate the trained model on the test split");
  auto* complete = app.add_subcommand("complete", "Complete one query");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate every configured method");
  for (auto* c : {prepare, train, eval, complete, sweep}) add_common(c, config, o);

  std::string query, prefix;
  complete->add_option("--query", query, "Natural-language query")->required();
  complete->add_option("--prefix", prefix, "Known leading API words, e.g. java.io");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      std::vector<ac::QueryApiPair> pairs;
      if (synth_kind == "desk") pairs = ac::synthetic::desk_corpus();
      if (synth_kind == "overfit") pairs = ac::synthetic::overfit_corpus();
      if (synth_kind == "ambiguous") pairs = ac::synthetic::ambiguous_corpus();
      std::ofstream out(synth_out, std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + synth_out);
      ac::synthetic::write_jsonl(out, pairs);
      if (!out.flush()) throw std::runtime_error("failed writing " + synth_out);
      std::cerr << "wrote " << pairs.size() << " pairs to " << synth_out << "\n";
      return 0;
    }
    const auto cfg = ac::load_run_config(config, o);
    if (prepare->parsed()) ac::cmd_prepare(cfg, std::cerr);
    if (train->parsed()) ac::cmd_train(cfg, std::cerr);
    if (eval->parsed()) ac::cmd_eval(cfg, std::cerr);
    if (complete->parsed()) std::cout << ac::dump_json(ac::cmd_complete(cfg, query, prefix, cfg.decoder.top), 2) << "\n";
    if (sweep->parsed()) {
      if (!ac::cmd_sweep(cfg, std::cerr).all_ok) {
        std::cerr << "error: some sweep settings failed; see sweep_report.json\n";
        return 1;
      }
    }
  } catch (const ac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

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

// The prepare / train / eval / complete / sweep pipeline. Each command reads
// a resolved RunConfig and writes its artifacts under output_dir:
//
//   splits/{train,valid,test}.txt   corpus line numbers, seed in the header
//   vocab.txt                       tokenizer
//   data/{train,valid,test}.jsonl   prompted and tokenized examples
//   stats.json, prepare_report.json
//   model.ckpt                      best-validation checkpoint
//   train_log.jsonl, train_report.json, train_timing.json
//   eval_report.json, eval_table.txt
//   sweep/<setting>/...             one train run per sweep setting
//   sweep_report.json, sweep_table.txt
//
// Reports hold no wall-clock values (those go to *_timing.json), so reruns
// with the same inputs produce identical files.

#pragma once

#include "apicomplete/checkpoint.hpp"
#include "apicomplete/config.hpp"
#include "apicomplete/corpus.hpp"
#include "apicomplete/dataset.hpp"
#include "apicomplete/decoder.hpp"
#include "apicomplete/evaluate.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/tokenizer.hpp"
#include "apicomplete/trainer.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace apicomplete {

namespace fs = std::filesystem;

// Exclusive ownership of an output directory for the lifetime of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw std::runtime_error("output directory " + dir.string() + " is locked by another command (" +
                               path_.string() + "); remove the file if no command is running");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

inline void write_text_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Decoded candidates can hold partial UTF-8 sequences; those bytes become U+FFFD.
inline std::string dump_json(const nlohmann::json& j, int indent = -1) {
  return j.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text_atomic(path, dump_json(j, 2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

inline void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + path.string() + " (" + hint + ")");
}

// ---------------------------------------------------------------------------
// Split manifests and prepared data

inline std::string manifest_text(std::uint64_t seed, std::span<const QueryApiPair> pairs,
                                 const std::vector<std::size_t>& idx) {
  std::string s = "# seed " + std::to_string(seed) + "\n";
  for (auto i : idx) s += std::to_string(pairs[i].line) + "\n";
  return s;
}

// Pairs listed in a manifest, looked up by source line.
inline std::vector<QueryApiPair> read_manifest(const fs::path& path, std::span<const QueryApiPair> pairs) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read split manifest " + path.string());
  std::map<std::size_t, const QueryApiPair*> by_line;
  for (const auto& p : pairs) by_line[p.line] = &p;
  std::vector<QueryApiPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto n = static_cast<std::size_t>(std::stoull(line));
    const auto it = by_line.find(n);
    if (it == by_line.end()) throw FormatError(detail::concat("manifest ", path.string(), " names unknown line ", n));
    out.push_back(*it->second);
  }
  return out;
}

inline std::string dataset_jsonl(const PromptedDataset& ds) {
  std::string s;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const auto& p = ds.prompts[i];
    const auto& e = ds.examples[i];
    nlohmann::json j = {{"input", p.input_text},
                        {"target", p.target_text},
                        {"masked", p.masked_count},
                        {"input_ids", std::vector<int>(e.input.tokens().begin(), e.input.tokens().end())},
                        {"target_ids", std::vector<int>(e.target.tokens().begin(), e.target.tokens().end())}};
    s += dump_json(j) + "\n";
  }
  return s;
}

inline std::vector<Example> read_dataset(const fs::path& path, const ModelConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto in_ids = j.at("input_ids").get<std::vector<int>>();
    const auto tgt_ids = j.at("target_ids").get<std::vector<int>>();
    out.push_back({TokenSeq::from_tokens(in_ids, config.max_input_length),
                   TokenSeq::from_tokens(tgt_ids, config.max_output_length)});
  }
  return out;
}

inline LoadResult load_corpus_checked(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("no corpus configured (set \"corpus\" or --corpus)");
  if (!fs::exists(cfg.corpus)) throw ConfigError("corpus file not found: " + cfg.corpus);
  return load_pairs(cfg.corpus);
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareResult {
  std::size_t pairs = 0;
  std::size_t errors = 0;
  std::size_t vocab_size = 0;
};

inline PrepareResult prepare_into(const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  auto loaded = load_corpus_checked(cfg);
  for (std::size_t i = 0; i < loaded.errors.size() && i < 20; ++i) {
    log << "corpus line " << loaded.errors[i].line << ": " << loaded.errors[i].message << "\n";
  }
  if (loaded.errors.size() > 20) log << "... " << loaded.errors.size() - 20 << " more malformed lines\n";
  if (loaded.duplicates) log << "dropped " << loaded.duplicates << " duplicate (query, api) pairs\n";
  const auto& pairs = loaded.pairs;
  const auto split = split_corpus(pairs.size(), cfg.split);
  const auto train = CorpusSplit::gather<QueryApiPair>(pairs, split.train);
  const auto valid = CorpusSplit::gather<QueryApiPair>(pairs, split.valid);
  const auto test = CorpusSplit::gather<QueryApiPair>(pairs, split.test);

  const auto vocab = Vocab::train(tokenizer_texts(train), cfg.vocab_size);
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());

  write_text_atomic(dir / "splits" / "train.txt", manifest_text(cfg.split.seed, pairs, split.train));
  write_text_atomic(dir / "splits" / "valid.txt", manifest_text(cfg.split.seed, pairs, split.valid));
  write_text_atomic(dir / "splits" / "test.txt", manifest_text(cfg.split.seed, pairs, split.test));
  write_text_atomic(dir / "vocab.txt", vocab.serialize());
  write_text_atomic(dir / "data" / "train.jsonl",
                    dataset_jsonl(build_dataset(train, vocab, mc, cfg.prompt_seed(), cfg.prompts_per_api)));
  write_text_atomic(dir / "data" / "valid.jsonl",
                    dataset_jsonl(build_dataset(valid, vocab, mc, derive_seed(cfg.prompt_seed(), "valid"),
                                                cfg.prompts_per_api == 0 ? 0 : 1)));
  write_text_atomic(dir / "data" / "test.jsonl",
                    dataset_jsonl(build_dataset(test, vocab, mc, derive_seed(cfg.prompt_seed(), "test"),
                                                cfg.prompts_per_api == 0 ? 0 : 1)));
  write_json(dir / "stats.json", to_json(corpus_stats(pairs, vocab)));

  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : loaded.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  RunConfig resolved = cfg;
  resolved.model = mc;
  write_json(dir / "prepare_report.json", {{"config", resolved},
                                           {"pairs", pairs.size()},
                                           {"duplicates", loaded.duplicates},
                                           {"errors", errors},
                                           {"split_sizes", {split.train.size(), split.valid.size(), split.test.size()}},
                                           {"vocab_size", vocab.size()}});
  log << "prepared " << pairs.size() << " pairs (" << split.train.size() << "/" << split.valid.size() << "/"
      << split.test.size() << "), vocab " << vocab.size() << "\n";
  return {pairs.size(), loaded.errors.size(), vocab.size()};
}

inline PrepareResult cmd_prepare(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  load_corpus_checked(cfg);  // fail before touching the output directory
  OutputLock lock(cfg.output_dir);
  return prepare_into(cfg, cfg.output_dir, log);
}

// ---------------------------------------------------------------------------
// train

template <typename F>
decltype(auto) with_dtype(const std::string& numeric, F&& f) {
  if (numeric == "float64") return f(double{});
  if (numeric == "float32") return f(float{});
  throw ConfigError("unknown numeric mode " + numeric);
}

struct TrainOutcome {
  TrainReport report;
};

inline ModelConfig prepared_model_config(const RunConfig& cfg, const Vocab& vocab) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.validate();
  return mc;
}

// Trains on the prepared data in `data_dir` and writes model artifacts to
// `run_dir`. The checkpoint is replaced only when validation improves.
inline TrainOutcome train_into(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir,
                               std::ostream& log) {
  require_file(data_dir / "vocab.txt", "run prepare first");
  require_file(data_dir / "data" / "train.jsonl", "run prepare first");
  require_file(data_dir / "data" / "valid.jsonl", "run prepare first");
  const auto vocab = Vocab::load((data_dir / "vocab.txt").string());
  const auto mc = prepared_model_config(cfg, vocab);
  const auto train = read_dataset(data_dir / "data" / "train.jsonl", mc);
  const auto valid = read_dataset(data_dir / "data" / "valid.jsonl", mc);
  if (train.empty()) throw std::runtime_error("training set is empty");
  if (valid.empty()) throw std::runtime_error("validation set is empty");
  fs::create_directories(run_dir);

  std::ofstream train_log(run_dir / "train_log.jsonl", std::ios::trunc);
  nlohmann::json timing = nlohmann::json::array();
  const auto ckpt = (run_dir / "model.ckpt").string();
  RunConfig resolved = cfg;
  resolved.model = mc;

  TrainReport report = with_dtype(cfg.train.numeric, [&](auto tag) {
    using S = decltype(tag);
    auto on_epoch = [&](const EpochRecord& rec, const Params<S>& best, bool improved) {
      nlohmann::json line = {{"epoch", rec.epoch},
                             {"train_loss", rec.train_loss},
                             {"valid_loss", rec.valid_loss},
                             {"adv", to_json_value(rec.stats)},
                             {"improved", improved}};
      train_log << dump_json(line) << "\n" << std::flush;
      timing.push_back({{"epoch", rec.epoch}, {"seconds", rec.seconds}});
      if (rec.stats.clipped_batches) {
        log << "epoch " << rec.epoch << ": gradient clipped in " << rec.stats.clipped_batches << " of "
            << rec.stats.batches << " batches\n";
      }
      log << "epoch " << rec.epoch << " train " << rec.train_loss << " valid " << rec.valid_loss
          << (improved ? " *" : "") << "\n";
      if (improved) save_checkpoint(best, ckpt, {{"epoch", rec.epoch}, {"valid_loss", rec.valid_loss}});
    };
    return fit<S>(init_params<S>(mc), train, valid, cfg.train, on_epoch).report;
  });

  nlohmann::json train_report = {{"config", resolved}, {"report", to_json_value(report)}};
  if (cfg.train.adv.method == AdvMethod::kAtcom) {
    train_report["atcom_alpha"] = cfg.train.adv.atcom_literal
                                      ? "literal: sign-direction step scaled by eps*|g|_2/|g|_1"
                                      : "mixture: eps*(alpha*g/|g|_1 + (1-alpha)*g/|g|_2)";
  }
  write_json(run_dir / "train_report.json", train_report);
  write_json(run_dir / "train_timing.json", timing);
  log << "best epoch " << report.best_epoch << " valid loss " << report.best_valid_loss << " (" << report.stop_reason
      << ")\n";
  return {report};
}

inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  OutputLock lock(cfg.output_dir);
  return train_into(cfg, cfg.output_dir, cfg.output_dir, log);
}

// ---------------------------------------------------------------------------
// eval

inline std::optional<ApiLibrary> load_library(const RunConfig& cfg) {
  if (cfg.api_library.empty()) return std::nullopt;
  if (!fs::exists(cfg.api_library)) throw std::runtime_error("api library not found: " + cfg.api_library);
  return ApiLibrary::load(cfg.api_library);
}

inline CompletionOptions completion_options(const RunConfig& cfg) {
  CompletionOptions o;
  o.beam.width = cfg.decoder.beam_width;
  o.beam.max_len = cfg.decoder.max_len;
  o.prefix_consistency = cfg.decoder.prefix_consistency;
  return o;
}

inline std::vector<QueryApiPair> load_test_pairs(const RunConfig& cfg, const fs::path& data_dir) {
  require_file(data_dir / "splits" / "test.txt", "run prepare first");
  const auto loaded = load_corpus_checked(cfg);
  auto test = read_manifest(data_dir / "splits" / "test.txt", loaded.pairs);
  if (test.empty()) throw std::runtime_error("test manifest is empty");
  return test;
}

// Evaluates the checkpoint in `run_dir` for one prefix mode.
inline EvalOutcome eval_checkpoint(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir,
                                   std::span<const QueryApiPair> test, int prefix_mode,
                                   const ApiLibrary* library) {
  require_file(run_dir / "model.ckpt", "run train first");
  const auto vocab = Vocab::load((data_dir / "vocab.txt").string());
  const auto mc = prepared_model_config(cfg, vocab);
  const auto header = read_checkpoint_header((run_dir / "model.ckpt").string());
  EvalOptions opt;
  opt.completion = completion_options(cfg);
  opt.prefix_mode = prefix_mode;
  opt.seed = cfg.eval_seed();
  opt.library = library;
  return with_dtype(header.dtype, [&](auto tag) {
    using S = decltype(tag);
    const auto params = load_checkpoint<S>((run_dir / "model.ckpt").string(), mc);
    return evaluate(params, vocab, test, opt);
  });
}

inline EvalOutcome cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  require_file(dir / "model.ckpt", "run train first");
  const auto library = load_library(cfg);
  const auto test = load_test_pairs(cfg, dir);
  OutputLock lock(dir);
  auto outcome = eval_checkpoint(cfg, dir, dir, test, cfg.decoder.prefix_mode, library ? &*library : nullptr);
  nlohmann::json report = {{"config", cfg}, {"prefix_mode", cfg.decoder.prefix_mode},
                           {"plain", to_json_value(outcome.plain)}};
  std::vector<std::pair<std::string, const EvalReport*>> rows = {{"plain", &outcome.plain}};
  if (outcome.checked) {
    report["apicheck"] = to_json_value(*outcome.checked);
    rows.push_back({"apicheck", &*outcome.checked});
  }
  write_json(dir / "eval_report.json", report);
  const auto table = format_table(rows);
  write_text_atomic(dir / "eval_table.txt", table);
  log << table;
  return outcome;
}

// ---------------------------------------------------------------------------
// complete

inline nlohmann::json cmd_complete(const RunConfig& cfg, const std::string& query, const std::string& prefix, int k) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  require_file(dir / "model.ckpt", "run train first");
  require_file(dir / "vocab.txt", "run prepare first");
  if (k > cfg.decoder.beam_width) {
    throw ConfigError(detail::concat("--top ", k, " exceeds --beam-width ", cfg.decoder.beam_width,
                                     "; raise the beam width"));
  }
  const auto vocab = Vocab::load((dir / "vocab.txt").string());
  const auto mc = prepared_model_config(cfg, vocab);
  const auto library = load_library(cfg);
  auto opt = completion_options(cfg);
  if (library) {
    opt.library = &*library;
    opt.need = k;
  }
  const auto header = read_checkpoint_header((dir / "model.ckpt").string());
  const auto results = with_dtype(header.dtype, [&](auto tag) {
    using S = decltype(tag);
    const auto params = load_checkpoint<S>((dir / "model.ckpt").string(), mc);
    return complete(params, vocab, query, prefix, k, opt);
  });
  nlohmann::json j = {{"query", query}, {"prefix", prefix}};
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : results) j["candidates"].push_back(to_json_value(c));
  return j;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepSetting {
  std::string label;
  AdvMethod method;
  int k;
};

inline std::vector<SweepSetting> sweep_settings(const RunConfig& cfg) {
  std::vector<SweepSetting> out;
  for (const auto& name : cfg.sweep.methods) {
    const auto m = parse_adv_method(name);
    if (m == AdvMethod::kAtcom && !cfg.sweep.k_values.empty()) {
      for (int k : cfg.sweep.k_values) out.push_back({"atcom-k" + std::to_string(k), m, k});
    } else if (m == AdvMethod::kPgd || m == AdvMethod::kAtcom) {
      out.push_back({name + "-k" + std::to_string(cfg.train.adv.k), m, cfg.train.adv.k});
    } else {
      out.push_back({name, m, cfg.train.adv.k});
    }
  }
  return out;
}

struct SweepRow {
  SweepSetting setting;
  int prefix_mode = 0;
  std::optional<EvalReport> report;
  std::string error;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  bool all_ok = true;
};

inline SweepOutcome cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  const auto test = load_test_pairs(cfg, dir);
  OutputLock lock(dir);
  SweepOutcome out;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& s : sweep_settings(cfg)) {
    RunConfig sub = cfg;
    sub.train.adv.method = s.method;
    sub.train.adv.k = s.k;
    const fs::path run_dir = dir / "sweep" / s.label;
    log << "== " << s.label << "\n";
    std::string train_error;
    try {
      train_into(sub, dir, run_dir, log);
    } catch (const std::exception& e) {
      train_error = e.what();
      log << s.label << " failed: " << train_error << "\n";
    }
    for (int mode : cfg.sweep.prefix_modes) {
      SweepRow row{s, mode, std::nullopt, train_error};
      if (train_error.empty()) {
        try {
          row.report = eval_checkpoint(sub, dir, run_dir, test, mode, nullptr).plain;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
      nlohmann::json rj = {{"setting", s.label}, {"method", to_string(s.method)}, {"k", s.k},
                           {"prefix_mode", mode}, {"seed", sub.seed}, {"train_seed", sub.train.seed}};
      if (row.report) {
        rj["result"] = to_json_value(*row.report, false);
      } else {
        rj["error"] = row.error;
        out.all_ok = false;
      }
      rows_json.push_back(rj);
      out.rows.push_back(std::move(row));
    }
  }

  // Methods ordered by EM@1 averaged over prefix modes (reported, not gated).
  std::map<std::string, std::pair<double, int>> by_setting;
  for (const auto& r : out.rows) {
    if (!r.report) continue;
    auto& [sum, n] = by_setting[r.setting.label];
    sum += r.report->em[0];
    ++n;
  }
  std::vector<std::pair<std::string, double>> ordering;
  for (const auto& [label, v] : by_setting) ordering.emplace_back(label, v.first / v.second);
  std::stable_sort(ordering.begin(), ordering.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  nlohmann::json order_json = nlohmann::json::array();
  for (const auto& [label, em1] : ordering) order_json.push_back({{"setting", label}, {"mean_em@1", em1}});

  write_json(dir / "sweep_report.json", {{"config", cfg}, {"rows", rows_json}, {"ordering_by_em@1", order_json}});
  std::vector<std::pair<std::string, const EvalReport*>> table_rows;
  std::vector<std::string> labels;
  for (const auto& r : out.rows) labels.push_back(r.setting.label + " prefix=" + std::to_string(r.prefix_mode));
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (out.rows[i].report) table_rows.emplace_back(labels[i], &*out.rows[i].report);
  }
  std::string table = format_table(table_rows);
  for (const auto& r : out.rows) {
    if (!r.report) table += r.setting.label + " prefix=" + std::to_string(r.prefix_mode) + "  FAILED: " + r.error + "\n";
  }
  write_text_atomic(dir / "sweep_table.txt", table);
  log << table;
  return out;
}

}  // namespace apicomplete

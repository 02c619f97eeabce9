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

#include "apicomplete/advaug.hpp"
#include "apicomplete/common.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace apicomplete {

enum class OptimizerKind { kSgd, kAdam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int max_epochs = 30;
  int patience = 5;
  std::uint64_t seed = 42;
  AdvConfig adv;
  std::string numeric = "float32";  // float32 | float64
  double clip_norm = 1.0;           // <= 0 disables clipping

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (numeric != "float32" && numeric != "float64") throw ConfigError("numeric must be float32 or float64");
    if (adv.method != AdvMethod::kNone) adv.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"optimizer", to_string(c.optimizer)}, {"max_epochs", c.max_epochs},
       {"patience", c.patience},     {"seed", c.seed},
       {"adv", c.adv},               {"numeric", c.numeric},
       {"clip_norm", c.clip_norm}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("adv")) j.at("adv").get_to(c.adv);
  c.numeric = j.value("numeric", c.numeric);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
}

struct Example {
  TokenSeq input;
  TokenSeq target;
};

// SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) over whole parameter sets.
template <typename S>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const ModelConfig& config)
      : kind_(kind), lr_(learning_rate) {
    if (kind_ == OptimizerKind::kAdam) {
      m_ = Params<S>::zeros(config);
      v_ = Params<S>::zeros(config);
    }
  }

  void apply(Params<S>& params, const Params<S>& grad) {
    ++step_;
    auto p = params.views();
    const auto g = grad.views();
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        for (Eigen::Index j = 0; j < p[i].size(); ++j) p[i].data[j] -= static_cast<S>(lr_) * g[i].data[j];
      }
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1 - std::pow(b1, step_);
    const double c2 = 1 - std::pow(b2, step_);
    auto m = m_.views();
    auto v = v_.views();
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (Eigen::Index j = 0; j < p[i].size(); ++j) {
        const S gj = g[i].data[j];
        S& mj = m[i].data[j];
        S& vj = v[i].data[j];
        mj = static_cast<S>(b1) * mj + static_cast<S>(1 - b1) * gj;
        vj = static_cast<S>(b2) * vj + static_cast<S>(1 - b2) * gj * gj;
        const double update = lr_ * (static_cast<double>(mj) / c1) /
                              (std::sqrt(static_cast<double>(vj) / c2) + eps);
        p[i].data[j] -= static_cast<S>(update);
      }
    }
  }

  long step() const { return step_; }

 private:
  OptimizerKind kind_;
  double lr_;
  long step_ = 0;
  Params<S> m_, v_;
};

struct EpochStats {
  double train_loss = 0;                // mean clean loss
  std::vector<double> step_loss;        // mean loss at perturbation step t
  std::vector<double> step_delta_l1;    // mean |delta_t|_1
  std::vector<double> step_delta_l2;    // mean |delta_t|_2
  double regularized_loss_estimate = 0; // mean of L + eps/2 |g|_2 on clean inputs
  int batches = 0;
  int clipped_batches = 0;
};

inline nlohmann::json to_json_value(const EpochStats& s) {
  return {{"train_loss", s.train_loss},
          {"step_loss", s.step_loss},
          {"step_delta_l1", s.step_delta_l1},
          {"step_delta_l2", s.step_delta_l2},
          {"regularized_loss_estimate", s.regularized_loss_estimate},
          {"batches", s.batches},
          {"clipped_batches", s.clipped_batches}};
}

// Mean clean loss over a dataset.
template <typename S>
double mean_loss(const Params<S>& params, std::span<const Example> data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  double total = 0;
  for (const auto& ex : data) total += static_cast<double>(example_loss(params, ex.input, ex.target));
  return total / static_cast<double>(data.size());
}

// One pass over the training set in a seed-determined order. Each batch
// update uses the mean over its examples of the augmented gradient.
template <typename S>
EpochStats train_epoch(Params<S>& params, Optimizer<S>& opt, std::span<const Example> data, const TrainConfig& cfg,
                       int epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_epoch: empty training set");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, "epoch-order-" + std::to_string(epoch)));
  rng.shuffle(order);

  EpochStats st;
  const int steps = cfg.adv.adversarial_passes();
  st.step_loss.assign(static_cast<std::size_t>(steps), 0.0);
  st.step_delta_l1.assign(static_cast<std::size_t>(steps), 0.0);
  st.step_delta_l2.assign(static_cast<std::size_t>(steps), 0.0);
  double loss_total = 0;
  double reg_total = 0;

  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    Params<S> grad = Params<S>::zeros(params.config);
    for (std::size_t b = start; b < end; ++b) {
      const Example& ex = data[order[b]];
      PassResult<S> clean;
      try {
        clean = loss_and_gradients(params, ex.input, ex.target);
      } catch (const NumericError& e) {
        throw NumericError(detail::concat("epoch ", epoch, " batch ", st.batches, " example ", order[b], ": ",
                                          e.what()));
      }
      loss_total += static_cast<double>(clean.loss);
      reg_total += adversarial_loss_estimate<S>(static_cast<double>(clean.loss), clean.embedding_grad,
                                                cfg.adv.epsilon, 2);
      if (cfg.adv.method == AdvMethod::kNone) {
        add_scaled(grad, clean.param_grad, S(1));
        continue;
      }
      PerturbationBatch<S> batch;
      try {
        batch = generate(params, ex.input, ex.target, cfg.adv, &clean);
      } catch (const NumericError& e) {
        throw NumericError(detail::concat("epoch ", epoch, " batch ", st.batches, " example ", order[b],
                                          " (adversarial): ", e.what()));
      }
      for (std::size_t t = 0; t < batch.steps.size(); ++t) {
        st.step_loss[t] += static_cast<double>(batch.steps[t].loss);
        st.step_delta_l1[t] += batch.steps[t].delta_l1;
        st.step_delta_l2[t] += batch.steps[t].delta_l2;
      }
      add_scaled(grad, augmented_step_gradient(clean.param_grad, &batch, cfg.adv), S(1));
    }
    scale_params(grad, S(1) / static_cast<S>(end - start));
    if (!all_finite(grad)) throw NumericError(detail::concat("epoch ", epoch, " batch ", st.batches, ": non-finite gradient"));
    if (cfg.clip_norm > 0) {
      const double norm = global_norm(grad);
      if (norm > cfg.clip_norm) {
        scale_params(grad, static_cast<S>(cfg.clip_norm / norm));
        ++st.clipped_batches;
      }
    }
    opt.apply(params, grad);
    ++st.batches;
  }
  const double n = static_cast<double>(data.size());
  st.train_loss = loss_total / n;
  st.regularized_loss_estimate = reg_total / n;
  for (int t = 0; t < steps; ++t) {
    st.step_loss[static_cast<std::size_t>(t)] /= n;
    st.step_delta_l1[static_cast<std::size_t>(t)] /= n;
    st.step_delta_l2[static_cast<std::size_t>(t)] /= n;
  }
  return st;
}

// Stops once the monitored loss has failed to strictly decrease for
// `patience` consecutive epochs. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }

  // Returns true when training should stop after this epoch.
  bool update(double loss) {
    ++epoch_;
    if (loss < best_loss_) {
      best_loss_ = loss;
      best_epoch_ = epoch_;
      waited_ = 0;
    } else {
      ++waited_;
    }
    return waited_ >= patience_;
  }

  bool improved_last() const { return best_epoch_ == epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int epoch() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int waited_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double valid_loss = 0;
  double seconds = 0;
  EpochStats stats;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_valid_loss = 0;
  std::string stop_reason;  // "patience" | "max_epochs"
};

// Wall-clock times are left out so reruns serialize identically.
inline nlohmann::json to_json_value(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}});
  }
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_valid_loss", r.best_valid_loss},
          {"stop_reason", r.stop_reason}};
}

template <typename S>
struct FitResult {
  Params<S> best;
  TrainReport report;
};

template <typename S>
using EpochCallback = std::function<void(const EpochRecord&, const Params<S>& best, bool improved)>;

// Trains until early stopping on the clean validation loss or max_epochs,
// returning the parameters of the best validation epoch.
template <typename S>
FitResult<S> fit(Params<S> params, std::span<const Example> train, std::span<const Example> valid,
                 const TrainConfig& cfg, const EpochCallback<S>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  if (valid.empty()) throw std::invalid_argument("fit: empty validation set");
  Optimizer<S> opt(cfg.optimizer, cfg.learning_rate, params.config);
  EarlyStopping stopper(cfg.patience);
  FitResult<S> result{params, {}};
  result.report.stop_reason = "max_epochs";
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stats = train_epoch(params, opt, train, cfg, epoch);
    rec.train_loss = rec.stats.train_loss;
    rec.valid_loss = mean_loss(params, valid);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool stop = stopper.update(rec.valid_loss);
    if (stopper.improved_last()) result.best = params;
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, result.best, stopper.improved_last());
    if (stop) {
      result.report.stop_reason = "patience";
      break;
    }
  }
  result.report.best_epoch = stopper.best_epoch();
  result.report.best_valid_loss = stopper.best_loss();
  return result;
}

}  // namespace apicomplete

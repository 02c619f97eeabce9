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

// Adversarial perturbations of the encoder embedding output.
//
//   fgsm   delta = eps * sign(g)
//   fgm    delta = eps * g / |g|_2
//   pgd    K steps of the fgm rule, each anchored at the clean input;
//          only the last step's parameter gradient is used
//   atcom  K steps of  delta = eps * (alpha * g/|g|_1 + (1 - alpha) * g/|g|_2),
//          anchored at the clean input; all K perturbed inputs are used and
//          their parameter gradients averaged
//
// The atcom rule is a convex mix of L1- and L2-normalized directions. Its L2
// norm is eps * (alpha * |g|_2/|g|_1 + 1 - alpha), never above eps. Setting
// atcom_literal switches to an elementwise reading,
// delta = eps * sign(g) * |g|_2 / |g|_1, kept for experiments only.
//
// Norms are taken over the whole per-example embedding matrix. Gradients
// with a norm below 1e-12 produce a zero perturbation.

#pragma once

#include "apicomplete/common.hpp"
#include "apicomplete/model.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace apicomplete {

inline constexpr double kZeroGradientNorm = 1e-12;

enum class AdvMethod { kNone, kFgsm, kFgm, kPgd, kAtcom };

inline std::string to_string(AdvMethod m) {
  switch (m) {
    case AdvMethod::kNone: return "none";
    case AdvMethod::kFgsm: return "fgsm";
    case AdvMethod::kFgm: return "fgm";
    case AdvMethod::kPgd: return "pgd";
    case AdvMethod::kAtcom: return "atcom";
  }
  return "?";
}

inline AdvMethod parse_adv_method(const std::string& s) {
  if (s == "none") return AdvMethod::kNone;
  if (s == "fgsm") return AdvMethod::kFgsm;
  if (s == "fgm") return AdvMethod::kFgm;
  if (s == "pgd") return AdvMethod::kPgd;
  if (s == "atcom") return AdvMethod::kAtcom;
  throw ConfigError("unknown adversarial method '" + s + "' (expected none, fgsm, fgm, pgd or atcom)");
}

struct AdvConfig {
  AdvMethod method = AdvMethod::kAtcom;
  double epsilon = 1.0;  // L-inf budget for fgsm, L2 otherwise
  int k = 4;             // steps for pgd and atcom
  double alpha = 0.3;    // L1 weight in the atcom mix
  bool include_clean = true;
  bool atcom_literal = false;

  void validate() const {
    if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0, 1]");
  }

  // Forward/backward passes per example beyond the clean one.
  int adversarial_passes() const {
    switch (method) {
      case AdvMethod::kNone: return 0;
      case AdvMethod::kFgsm:
      case AdvMethod::kFgm: return 1;
      default: return k;
    }
  }
};

inline void to_json(nlohmann::json& j, const AdvConfig& c) {
  j = {{"method", to_string(c.method)}, {"epsilon", c.epsilon},
       {"k", c.k},                      {"alpha", c.alpha},
       {"include_clean", c.include_clean}, {"atcom_literal", c.atcom_literal}};
}

inline void from_json(const nlohmann::json& j, AdvConfig& c) {
  if (j.contains("method")) c.method = parse_adv_method(j.at("method").get<std::string>());
  c.epsilon = j.value("epsilon", c.epsilon);
  c.k = j.value("k", c.k);
  c.alpha = j.value("alpha", c.alpha);
  c.include_clean = j.value("include_clean", c.include_clean);
  c.atcom_literal = j.value("atcom_literal", c.atcom_literal);
}

// ---------------------------------------------------------------------------
// Direction rules

template <typename S>
Matrix<S> fgsm_delta(const Matrix<S>& g, double epsilon) {
  return g.unaryExpr([epsilon](S v) { return v > S(0) ? S(epsilon) : (v < S(0) ? S(-epsilon) : S(0)); });
}

template <typename S>
Matrix<S> fgm_delta(const Matrix<S>& g, double epsilon) {
  const double l2 = static_cast<double>(g.norm());
  if (l2 < kZeroGradientNorm) return Matrix<S>::Zero(g.rows(), g.cols());
  return g * static_cast<S>(epsilon / l2);
}

template <typename S>
Matrix<S> atcom_delta(const Matrix<S>& g, double epsilon, double alpha) {
  const double l2 = static_cast<double>(g.norm());
  if (l2 < kZeroGradientNorm) return Matrix<S>::Zero(g.rows(), g.cols());
  const double l1 = static_cast<double>(g.template lpNorm<1>());
  return g * static_cast<S>(epsilon * (alpha / l1 + (1 - alpha) / l2));
}

template <typename S>
Matrix<S> atcom_literal_delta(const Matrix<S>& g, double epsilon) {
  const double l2 = static_cast<double>(g.norm());
  if (l2 < kZeroGradientNorm) return Matrix<S>::Zero(g.rows(), g.cols());
  const double l1 = static_cast<double>(g.template lpNorm<1>());
  return fgsm_delta<S>(g, epsilon * l2 / l1);
}

// ---------------------------------------------------------------------------
// Generation against a model

template <typename S>
struct PassResult {
  S loss = 0;
  Params<S> param_grad;
  Matrix<S> embedding_grad;
};

template <typename S>
PassResult<S> loss_and_gradients(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                 const Matrix<S>* embeddings = nullptr) {
  auto tr = forward(params, input, target, embeddings);
  const S loss = tr.loss;
  auto g = backward(tr);
  return {loss, std::move(g.params), std::move(g.embeddings)};
}

template <typename S>
struct PerturbationStep {
  Matrix<S> delta;
  Matrix<S> generating_gradient;  // embedding gradient the delta was built from
  S loss = 0;                     // loss at the perturbed input
  double delta_l1 = 0;
  double delta_l2 = 0;
};

template <typename S>
struct PerturbationBatch {
  std::vector<PerturbationStep<S>> steps;
  std::vector<Matrix<S>> adversarial_examples;  // exported perturbed embeddings
  Params<S> g_avg;                              // parameter gradient used for the update
};

namespace detail {

// Runs `steps` perturbations anchored at the clean embedding. Each delta is
// built from the embedding gradient of the previous point (the clean input
// for the first step).
template <typename S, typename DeltaFn>
PerturbationBatch<S> anchored_steps(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                    int steps, bool average, bool export_all, DeltaFn&& delta_fn,
                                    const PassResult<S>* clean) {
  if (steps < 1) throw std::invalid_argument("perturbation needs at least one step");
  const Matrix<S> x = embed_source(params, input);
  PassResult<S> clean_local;
  if (!clean) {
    clean_local = loss_and_gradients(params, input, target);
    clean = &clean_local;
  }
  PerturbationBatch<S> batch;
  batch.g_avg = Params<S>::zeros(params.config);
  Matrix<S> g = clean->embedding_grad;
  for (int t = 0; t < steps; ++t) {
    PerturbationStep<S> step;
    step.delta = delta_fn(g);
    step.delta_l1 = static_cast<double>(step.delta.template lpNorm<1>());
    step.delta_l2 = static_cast<double>(step.delta.norm());
    Matrix<S> x_adv = x + step.delta;
    auto pass = loss_and_gradients(params, input, target, &x_adv);
    step.loss = pass.loss;
    step.generating_gradient = std::move(g);
    if (average) {
      add_scaled(batch.g_avg, pass.param_grad, S(1));
    } else if (t == steps - 1) {
      batch.g_avg = std::move(pass.param_grad);
    }
    if (export_all || t == steps - 1) batch.adversarial_examples.push_back(std::move(x_adv));
    g = std::move(pass.embedding_grad);
    batch.steps.push_back(std::move(step));
  }
  if (average) scale_params(batch.g_avg, S(1) / static_cast<S>(steps));
  return batch;
}

}  // namespace detail

template <typename S>
PerturbationBatch<S> fgsm_generate(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                   double epsilon, const PassResult<S>* clean = nullptr) {
  return detail::anchored_steps(params, input, target, 1, false, true,
                                [&](const Matrix<S>& g) { return fgsm_delta<S>(g, epsilon); }, clean);
}

template <typename S>
PerturbationBatch<S> fgm_generate(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                  double epsilon, const PassResult<S>* clean = nullptr) {
  return detail::anchored_steps(params, input, target, 1, false, true,
                                [&](const Matrix<S>& g) { return fgm_delta<S>(g, epsilon); }, clean);
}

template <typename S>
PerturbationBatch<S> pgd_generate(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                  double epsilon, int steps, const PassResult<S>* clean = nullptr) {
  return detail::anchored_steps(params, input, target, steps, false, false,
                                [&](const Matrix<S>& g) { return fgm_delta<S>(g, epsilon); }, clean);
}

template <typename S>
PerturbationBatch<S> atcom_generate(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                                    const AdvConfig& cfg, const PassResult<S>* clean = nullptr) {
  if (cfg.method != AdvMethod::kAtcom) throw std::invalid_argument("atcom_generate: method is not atcom");
  cfg.validate();
  return detail::anchored_steps(params, input, target, cfg.k, true, true,
                                [&](const Matrix<S>& g) {
                                  return cfg.atcom_literal ? atcom_literal_delta<S>(g, cfg.epsilon)
                                                           : atcom_delta<S>(g, cfg.epsilon, cfg.alpha);
                                },
                                clean);
}

// Dispatch on cfg.method. Empty batch for kNone.
template <typename S>
PerturbationBatch<S> generate(const Params<S>& params, const TokenSeq& input, const TokenSeq& target,
                              const AdvConfig& cfg, const PassResult<S>* clean = nullptr) {
  switch (cfg.method) {
    case AdvMethod::kNone: return {};
    case AdvMethod::kFgsm: return fgsm_generate(params, input, target, cfg.epsilon, clean);
    case AdvMethod::kFgm: return fgm_generate(params, input, target, cfg.epsilon, clean);
    case AdvMethod::kPgd: return pgd_generate(params, input, target, cfg.epsilon, cfg.k, clean);
    case AdvMethod::kAtcom: return atcom_generate(params, input, target, cfg, clean);
  }
  return {};
}

// Gradient of the adversarially augmented loss: the mean of the clean and
// adversarial gradients, or the adversarial one alone. Minimizing it is the
// outer min of  min_theta max_|delta|<=eps L(x + delta).
template <typename S>
Params<S> augmented_step_gradient(const Params<S>& clean_grad, const PerturbationBatch<S>* batch,
                                  const AdvConfig& cfg) {
  if (cfg.method == AdvMethod::kNone || !batch) return clean_grad;
  if (!(batch->g_avg.config == clean_grad.config)) {
    throw std::invalid_argument("augmented_step_gradient: gradient shapes differ");
  }
  if (!cfg.include_clean) return batch->g_avg;
  Params<S> out = clean_grad;
  add_scaled(out, batch->g_avg, S(1));
  scale_params(out, S(0.5));
  return out;
}

// First-order estimate of the adversarial loss, L + (eps/2) |g|_q. Only
// q = 1 and q = 2 are supported. Logged as a diagnostic.
template <typename S>
double adversarial_loss_estimate(double clean_loss, const Matrix<S>& g, double epsilon, int q) {
  double norm = 0;
  if (q == 1) {
    norm = static_cast<double>(g.template lpNorm<1>());
  } else if (q == 2) {
    norm = static_cast<double>(g.norm());
  } else {
    throw std::invalid_argument(detail::concat("adversarial_loss_estimate: unsupported q=", q));
  }
  return clean_loss + 0.5 * epsilon * norm;
}

}  // namespace apicomplete

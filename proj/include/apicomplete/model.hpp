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

// Pre-norm encoder-decoder transformer.
//
// Every sub-block computes  h = h + Block(LayerNorm(h)).  The encoder stack
// and the decoder stack each end with a final layer norm; the decoder output
// goes through an untied projection to vocabulary logits.
//
// Only the first true_length rows of a padded input take part in the
// computation. Masking pad keys makes every other row irrelevant to the
// loss, so dropping them is exact and pad rows get zero gradient.

#pragma once

#include "apicomplete/common.hpp"
#include "apicomplete/ops.hpp"
#include "apicomplete/rng.hpp"
#include "apicomplete/tokenizer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apicomplete {

struct ModelConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int hidden = 128;
  int heads = 4;
  int ffn = 256;
  int vocab_size = 8000;
  int max_input_length = 48;
  int max_output_length = 16;
  std::uint64_t seed = 1;

  int head_dim() const { return hidden / heads; }

  void validate() const {
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("layer counts must be >= 1");
    if (hidden < 2 || heads < 1 || ffn < 1) throw ConfigError("hidden >= 2, heads >= 1, ffn >= 1 required");
    if (hidden % heads != 0) {
      throw ConfigError(detail::concat("hidden size ", hidden, " is not divisible by ", heads, " heads"));
    }
    if (vocab_size < 3) throw ConfigError("vocab_size must cover pad, begin and end ids");
    if (max_input_length < 1 || max_output_length < 1) throw ConfigError("sequence lengths must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
       {"hidden", c.hidden},                 {"heads", c.heads},
       {"ffn", c.ffn},                       {"vocab_size", c.vocab_size},
       {"max_input_length", c.max_input_length}, {"max_output_length", c.max_output_length},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_input_length = j.value("max_input_length", c.max_input_length);
  c.max_output_length = j.value("max_output_length", c.max_output_length);
  c.seed = j.value("seed", c.seed);
}

template <typename S>
struct LayerNormParams {
  RowVector<S> scale, offset;
};

template <typename S>
struct EncoderLayerParams {
  LayerNormParams<S> attention_norm;
  AttentionParams<S> self_attention;
  LayerNormParams<S> ffn_norm;
  FeedForwardParams<S> ffn;
};

template <typename S>
struct DecoderLayerParams {
  LayerNormParams<S> self_attention_norm;
  AttentionParams<S> self_attention;
  LayerNormParams<S> cross_attention_norm;
  AttentionParams<S> cross_attention;
  LayerNormParams<S> ffn_norm;
  FeedForwardParams<S> ffn;
};

// Flat view of one parameter tensor.
template <typename S>
struct TensorView {
  std::string name;
  S* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  std::span<S> span() const { return {data, static_cast<std::size_t>(size())}; }
};

template <typename S>
struct Params {
  ModelConfig config;
  Matrix<S> token_embedding;    // vocab x hidden
  Matrix<S> encoder_positions;  // max_input_length x hidden
  Matrix<S> decoder_positions;  // max_output_length x hidden
  std::vector<EncoderLayerParams<S>> encoder;
  LayerNormParams<S> encoder_norm;
  std::vector<DecoderLayerParams<S>> decoder;
  LayerNormParams<S> decoder_norm;
  Matrix<S> output_weight;  // hidden x vocab
  RowVector<S> output_bias;

  // Visits every tensor in declaration order (the checkpoint order).
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::vector<TensorView<S>> views() {
    std::vector<TensorView<S>> out;
    for_each([&](const std::string& name, auto& t) { out.push_back({name, t.data(), t.rows(), t.cols()}); });
    return out;
  }

  std::vector<TensorView<const S>> views() const {
    std::vector<TensorView<const S>> out;
    for_each([&](const std::string& name, const auto& t) {
      out.push_back({name, t.data(), t.rows(), t.cols()});
    });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  static Params zeros(const ModelConfig& config) {
    config.validate();
    Params p;
    p.config = config;
    const int d = config.hidden;
    auto ln = [d] { return LayerNormParams<S>{RowVector<S>::Zero(d), RowVector<S>::Zero(d)}; };
    auto attn = [d] {
      return AttentionParams<S>{Matrix<S>::Zero(d, d), Matrix<S>::Zero(d, d), Matrix<S>::Zero(d, d),
                                Matrix<S>::Zero(d, d)};
    };
    auto ff = [&] {
      return FeedForwardParams<S>{Matrix<S>::Zero(d, config.ffn), RowVector<S>::Zero(config.ffn),
                                  Matrix<S>::Zero(config.ffn, d), RowVector<S>::Zero(d)};
    };
    p.token_embedding = Matrix<S>::Zero(config.vocab_size, d);
    p.encoder_positions = Matrix<S>::Zero(config.max_input_length, d);
    p.decoder_positions = Matrix<S>::Zero(config.max_output_length, d);
    for (int l = 0; l < config.encoder_layers; ++l) p.encoder.push_back({ln(), attn(), ln(), ff()});
    p.encoder_norm = ln();
    for (int l = 0; l < config.decoder_layers; ++l) {
      p.decoder.push_back({ln(), attn(), ln(), attn(), ln(), ff()});
    }
    p.decoder_norm = ln();
    p.output_weight = Matrix<S>::Zero(d, config.vocab_size);
    p.output_bias = RowVector<S>::Zero(config.vocab_size);
    return p;
  }

  template <typename T>
  Params<T> cast() const {
    Params<T> out = Params<T>::zeros(config);
    auto src = views();
    auto dst = out.views();
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (Eigen::Index j = 0; j < src[i].size(); ++j) dst[i].data[j] = static_cast<T>(src[i].data[j]);
    }
    return out;
  }

 private:
  template <typename P, typename F>
  static void visit(P& p, F& f) {
    auto ln = [&f](const std::string& name, auto& n) {
      f(name + ".scale", n.scale);
      f(name + ".offset", n.offset);
    };
    auto attn = [&f](const std::string& name, auto& a) {
      f(name + ".wq", a.wq);
      f(name + ".wk", a.wk);
      f(name + ".wv", a.wv);
      f(name + ".wo", a.wo);
    };
    auto ff = [&f](const std::string& name, auto& m) {
      f(name + ".w1", m.w1);
      f(name + ".b1", m.b1);
      f(name + ".w2", m.w2);
      f(name + ".b2", m.b2);
    };
    f(std::string("token_embedding"), p.token_embedding);
    f(std::string("encoder_positions"), p.encoder_positions);
    f(std::string("decoder_positions"), p.decoder_positions);
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
      const std::string base = "encoder." + std::to_string(l);
      ln(base + ".attention_norm", p.encoder[l].attention_norm);
      attn(base + ".self_attention", p.encoder[l].self_attention);
      ln(base + ".ffn_norm", p.encoder[l].ffn_norm);
      ff(base + ".ffn", p.encoder[l].ffn);
    }
    ln("encoder_norm", p.encoder_norm);
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
      const std::string base = "decoder." + std::to_string(l);
      ln(base + ".self_attention_norm", p.decoder[l].self_attention_norm);
      attn(base + ".self_attention", p.decoder[l].self_attention);
      ln(base + ".cross_attention_norm", p.decoder[l].cross_attention_norm);
      attn(base + ".cross_attention", p.decoder[l].cross_attention);
      ln(base + ".ffn_norm", p.decoder[l].ffn_norm);
      ff(base + ".ffn", p.decoder[l].ffn);
    }
    ln("decoder_norm", p.decoder_norm);
    f(std::string("output_weight"), p.output_weight);
    f(std::string("output_bias"), p.output_bias);
  }
};

// ---------------------------------------------------------------------------
// Whole-parameter arithmetic. Every loop walks tensors in declaration order,
// so reductions are deterministic.

// dst += weight * src
template <typename S>
void add_scaled(Params<S>& dst, const Params<S>& src, S weight) {
  auto d = dst.views();
  const auto s = src.views();
  if (d.size() != s.size()) throw std::invalid_argument("add_scaled: parameter layout mismatch");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].size() != s[i].size()) throw std::invalid_argument("add_scaled: shape mismatch in " + d[i].name);
    for (Eigen::Index j = 0; j < d[i].size(); ++j) d[i].data[j] += weight * s[i].data[j];
  }
}

template <typename S>
void scale_params(Params<S>& p, S factor) {
  for (auto& v : p.views()) {
    for (Eigen::Index j = 0; j < v.size(); ++j) v.data[j] *= factor;
  }
}

template <typename S>
double global_norm(const Params<S>& p) {
  double sum = 0;
  for (const auto& v : p.views()) {
    for (Eigen::Index j = 0; j < v.size(); ++j) sum += static_cast<double>(v.data[j]) * static_cast<double>(v.data[j]);
  }
  return std::sqrt(sum);
}

template <typename S>
bool all_finite(const Params<S>& p) {
  for (const auto& v : p.views()) {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (!std::isfinite(static_cast<double>(v.data[j]))) return false;
    }
  }
  return true;
}

template <typename S>
bool bitwise_equal(const Params<S>& a, const Params<S>& b) {
  if (!(a.config == b.config)) return false;
  const auto va = a.views();
  const auto vb = b.views();
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].size() != vb[i].size()) return false;
    if (std::memcmp(va[i].data, vb[i].data, sizeof(S) * static_cast<std::size_t>(va[i].size())) != 0) return false;
  }
  return true;
}

// Glorot-uniform matrices, zero biases, unit layer-norm scales.
template <typename S>
Params<S> init_params(const ModelConfig& config) {
  Params<S> p = Params<S>::zeros(config);
  Rng rng(derive_seed(config.seed, "init"));
  p.for_each([&](const std::string& name, auto& t) {
    if (name.ends_with(".scale")) {
      t.setOnes();
    } else if (name.ends_with(".offset") || name.ends_with(".b1") || name.ends_with(".b2") ||
               name == "output_bias") {
      t.setZero();
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
    }
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward for one (input, target) example.

template <typename S>
struct EncoderLayerTrace {
  LayerNormCache<S> attention_norm;
  MultiHeadCache<S> self_attention;
  LayerNormCache<S> ffn_norm;
  FeedForwardCache<S> ffn;
};

template <typename S>
struct DecoderLayerTrace {
  LayerNormCache<S> self_attention_norm;
  MultiHeadCache<S> self_attention;
  LayerNormCache<S> cross_attention_norm;
  MultiHeadCache<S> cross_attention;
  LayerNormCache<S> ffn_norm;
  FeedForwardCache<S> ffn;
};

template <typename S>
struct ForwardTrace {
  const Params<S>* params = nullptr;
  std::vector<int> source;         // non-pad input ids
  std::vector<int> target;         // non-pad target ids
  std::vector<int> decoder_input;  // <s> followed by target[0..m-2]
  Matrix<S> embeddings;            // encoder embedding output, max_input_length rows
  std::vector<EncoderLayerTrace<S>> encoder;
  LayerNormCache<S> encoder_norm;
  Matrix<S> encoder_output;  // X_out, true_length rows
  std::vector<DecoderLayerTrace<S>> decoder;
  LayerNormCache<S> decoder_norm;
  Matrix<S> decoder_output;
  Matrix<S> logits;
  Matrix<S> log_probs;
  S loss = 0;
  bool consumed = false;
};

template <typename S>
struct Gradients {
  Params<S> params;
  Matrix<S> embeddings;  // d loss / d encoder embedding output; pad rows are zero
};

// Token plus position embedding of the encoder input, padded to
// max_input_length rows. This matrix is where adversarial perturbations go.
template <typename S>
Matrix<S> embed_source(const Params<S>& p, const TokenSeq& input) {
  const auto& cfg = p.config;
  if (input.max_len() > cfg.max_input_length) {
    throw std::invalid_argument(detail::concat("input length ", input.max_len(), " exceeds max_input_length ",
                                               cfg.max_input_length));
  }
  Matrix<S> x(cfg.max_input_length, cfg.hidden);
  for (int i = 0; i < cfg.max_input_length; ++i) {
    const int id = i < input.max_len() ? input.ids[static_cast<std::size_t>(i)] : token::kPad;
    if (id < 0 || id >= cfg.vocab_size) throw std::out_of_range(detail::concat("token id ", id, " out of vocab"));
    x.row(i) = p.token_embedding.row(id) + p.encoder_positions.row(i);
  }
  return x;
}

namespace detail {

template <typename S>
Matrix<S> run_encoder(const Params<S>& p, Matrix<S> h, std::vector<EncoderLayerTrace<S>>* traces,
                      LayerNormCache<S>* final_norm) {
  const int heads = p.config.heads;
  const AttentionMask no_mask;
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& L = p.encoder[l];
    EncoderLayerTrace<S>* t = traces ? &(*traces)[l] : nullptr;
    const Matrix<S> a = layer_norm<S>(h, L.attention_norm.scale, L.attention_norm.offset,
                                      t ? &t->attention_norm : nullptr);
    h += multi_head_attention<S>(L.self_attention, a, a, heads, no_mask, t ? &t->self_attention : nullptr);
    const Matrix<S> b = layer_norm<S>(h, L.ffn_norm.scale, L.ffn_norm.offset, t ? &t->ffn_norm : nullptr);
    h += ffn<S>(b, L.ffn, t ? &t->ffn : nullptr);
  }
  return layer_norm<S>(h, p.encoder_norm.scale, p.encoder_norm.offset, final_norm);
}

inline void check_finite_loss(double loss) {
  if (!std::isfinite(loss)) throw NumericError(concat("non-finite loss ", loss));
}

}  // namespace detail

// Cross-entropy of the target given the input, summed over non-pad target
// positions. With `override_embeddings` the encoder consumes that matrix
// instead of embed_source(input); passing the true embeddings gives a
// bit-identical result.
template <typename S>
ForwardTrace<S> forward(const Params<S>& p, const TokenSeq& input, const TokenSeq& target,
                        const Matrix<S>* override_embeddings = nullptr) {
  const auto& cfg = p.config;
  const int n = input.true_length;
  const int m = target.true_length;
  if (n < 1) throw std::invalid_argument("forward: empty input");
  if (m < 1) throw std::invalid_argument("forward: empty target");
  if (m > cfg.max_output_length) {
    throw std::invalid_argument(detail::concat("target length ", m, " exceeds max_output_length ",
                                               cfg.max_output_length));
  }
  ForwardTrace<S> tr;
  tr.params = &p;
  tr.source.assign(input.ids.begin(), input.ids.begin() + n);
  tr.target.assign(target.ids.begin(), target.ids.begin() + m);
  for (int id : tr.target) {
    if (id < 0 || id >= cfg.vocab_size) throw std::out_of_range(detail::concat("target id ", id, " out of vocab"));
  }
  if (override_embeddings) {
    if (override_embeddings->rows() != cfg.max_input_length || override_embeddings->cols() != cfg.hidden) {
      throw std::invalid_argument("forward: override embeddings have the wrong shape");
    }
    tr.embeddings = *override_embeddings;
  } else {
    tr.embeddings = embed_source(p, input);
  }

  tr.encoder.resize(p.encoder.size());
  tr.encoder_output = detail::run_encoder<S>(p, tr.embeddings.topRows(n), &tr.encoder, &tr.encoder_norm);

  tr.decoder_input.push_back(token::kBegin);
  tr.decoder_input.insert(tr.decoder_input.end(), tr.target.begin(), tr.target.end() - 1);
  Matrix<S> h(m, cfg.hidden);
  for (int i = 0; i < m; ++i) {
    h.row(i) = p.token_embedding.row(tr.decoder_input[static_cast<std::size_t>(i)]) + p.decoder_positions.row(i);
  }
  AttentionMask causal;
  causal.causal = true;
  const AttentionMask no_mask;
  tr.decoder.resize(p.decoder.size());
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& L = p.decoder[l];
    auto& t = tr.decoder[l];
    const Matrix<S> a =
        layer_norm<S>(h, L.self_attention_norm.scale, L.self_attention_norm.offset, &t.self_attention_norm);
    h += multi_head_attention<S>(L.self_attention, a, a, cfg.heads, causal, &t.self_attention);
    const Matrix<S> b =
        layer_norm<S>(h, L.cross_attention_norm.scale, L.cross_attention_norm.offset, &t.cross_attention_norm);
    h += multi_head_attention<S>(L.cross_attention, b, tr.encoder_output, cfg.heads, no_mask, &t.cross_attention);
    const Matrix<S> c = layer_norm<S>(h, L.ffn_norm.scale, L.ffn_norm.offset, &t.ffn_norm);
    h += ffn<S>(c, L.ffn, &t.ffn);
  }
  tr.decoder_output = layer_norm<S>(h, p.decoder_norm.scale, p.decoder_norm.offset, &tr.decoder_norm);
  tr.logits = (tr.decoder_output * p.output_weight).rowwise() + p.output_bias;
  tr.log_probs = log_softmax<S>(tr.logits);
  S loss = 0;
  for (int i = 0; i < m; ++i) loss -= tr.log_probs(i, tr.target[static_cast<std::size_t>(i)]);
  tr.loss = loss;
  detail::check_finite_loss(static_cast<double>(loss));
  return tr;
}

// d loss / d params and d loss / d embeddings. Consumes the trace.
template <typename S>
Gradients<S> backward(ForwardTrace<S>& tr) {
  if (tr.consumed) throw std::logic_error("backward: trace already consumed");
  if (!tr.params) throw std::logic_error("backward: trace has no forward pass");
  tr.consumed = true;
  const Params<S>& p = *tr.params;
  const auto& cfg = p.config;
  const int heads = cfg.heads;
  const int n = static_cast<int>(tr.source.size());
  const int m = static_cast<int>(tr.target.size());

  Gradients<S> g{Params<S>::zeros(cfg), Matrix<S>::Zero(cfg.max_input_length, cfg.hidden)};
  Params<S>& G = g.params;

  Matrix<S> d_logits = tr.log_probs.array().exp().matrix();
  for (int i = 0; i < m; ++i) d_logits(i, tr.target[static_cast<std::size_t>(i)]) -= S(1);
  G.output_weight.noalias() += tr.decoder_output.transpose() * d_logits;
  G.output_bias += d_logits.colwise().sum();
  Matrix<S> dh = d_logits * p.output_weight.transpose();
  dh = layer_norm_backward<S>(dh, p.decoder_norm.scale, tr.decoder_norm, G.decoder_norm.scale,
                              G.decoder_norm.offset);

  Matrix<S> d_memory = Matrix<S>::Zero(n, cfg.hidden);
  Matrix<S> dq, dkv;
  for (std::size_t l = p.decoder.size(); l-- > 0;) {
    const auto& L = p.decoder[l];
    auto& GL = G.decoder[l];
    const auto& t = tr.decoder[l];
    // h3 = h2 + FFN(LN(h2))
    Matrix<S> d_sub = ffn_backward<S>(dh, L.ffn, t.ffn, GL.ffn);
    dh += layer_norm_backward<S>(d_sub, L.ffn_norm.scale, t.ffn_norm, GL.ffn_norm.scale, GL.ffn_norm.offset);
    // h2 = h1 + Cross(LN(h1), X_out)
    multi_head_attention_backward<S>(dh, L.cross_attention, t.cross_attention, heads, GL.cross_attention, dq, dkv);
    d_memory += dkv;
    dh += layer_norm_backward<S>(dq, L.cross_attention_norm.scale, t.cross_attention_norm,
                                 GL.cross_attention_norm.scale, GL.cross_attention_norm.offset);
    // h1 = h0 + Self(LN(h0))
    multi_head_attention_backward<S>(dh, L.self_attention, t.self_attention, heads, GL.self_attention, dq, dkv);
    dq += dkv;
    dh += layer_norm_backward<S>(dq, L.self_attention_norm.scale, t.self_attention_norm,
                                 GL.self_attention_norm.scale, GL.self_attention_norm.offset);
  }
  for (int i = 0; i < m; ++i) {
    G.token_embedding.row(tr.decoder_input[static_cast<std::size_t>(i)]) += dh.row(i);
    G.decoder_positions.row(i) += dh.row(i);
  }

  Matrix<S> dx = layer_norm_backward<S>(d_memory, p.encoder_norm.scale, tr.encoder_norm, G.encoder_norm.scale,
                                        G.encoder_norm.offset);
  for (std::size_t l = p.encoder.size(); l-- > 0;) {
    const auto& L = p.encoder[l];
    auto& GL = G.encoder[l];
    const auto& t = tr.encoder[l];
    Matrix<S> d_sub = ffn_backward<S>(dx, L.ffn, t.ffn, GL.ffn);
    dx += layer_norm_backward<S>(d_sub, L.ffn_norm.scale, t.ffn_norm, GL.ffn_norm.scale, GL.ffn_norm.offset);
    multi_head_attention_backward<S>(dx, L.self_attention, t.self_attention, heads, GL.self_attention, dq, dkv);
    dq += dkv;
    dx += layer_norm_backward<S>(dq, L.attention_norm.scale, t.attention_norm, GL.attention_norm.scale,
                                 GL.attention_norm.offset);
  }
  g.embeddings.topRows(n) = dx;
  // The embedding output depends on the tables whether or not it was
  // overridden (a perturbation is an additive constant).
  for (int i = 0; i < n; ++i) {
    G.token_embedding.row(tr.source[static_cast<std::size_t>(i)]) += dx.row(i);
    G.encoder_positions.row(i) += dx.row(i);
  }
  return g;
}

// Loss only, no caches kept beyond the call.
template <typename S>
S example_loss(const Params<S>& p, const TokenSeq& input, const TokenSeq& target,
               const Matrix<S>* override_embeddings = nullptr) {
  return forward(p, input, target, override_embeddings).loss;
}

// ---------------------------------------------------------------------------
// Incremental decoding with cached keys/values, used by beam search.

template <typename S>
struct EncoderMemory {
  Matrix<S> output;
  std::vector<Matrix<S>> cross_keys;
  std::vector<Matrix<S>> cross_values;
};

template <typename S>
struct DecoderState {
  std::vector<Matrix<S>> keys;    // per layer, one row per consumed token
  std::vector<Matrix<S>> values;
  int length = 0;
};

template <typename S>
EncoderMemory<S> encode_source(const Params<S>& p, const TokenSeq& input) {
  const int n = input.true_length;
  if (n < 1) throw std::invalid_argument("encode_source: empty input");
  EncoderMemory<S> mem;
  mem.output = detail::run_encoder<S>(p, embed_source(p, input).topRows(n), nullptr, nullptr);
  for (const auto& L : p.decoder) {
    mem.cross_keys.push_back(mem.output * L.cross_attention.wk);
    mem.cross_values.push_back(mem.output * L.cross_attention.wv);
  }
  return mem;
}

template <typename S>
DecoderState<S> initial_decoder_state(const Params<S>& p) {
  DecoderState<S> st;
  st.keys.assign(p.decoder.size(), Matrix<S>(0, p.config.hidden));
  st.values.assign(p.decoder.size(), Matrix<S>(0, p.config.hidden));
  return st;
}

// Feeds one token at position state.length and returns log-probabilities
// of the next token.
template <typename S>
RowVector<S> decode_step(const Params<S>& p, const EncoderMemory<S>& mem, DecoderState<S>& st, int token_id) {
  const auto& cfg = p.config;
  if (st.length >= cfg.max_output_length) throw std::out_of_range("decode_step: past max_output_length");
  const int heads = cfg.heads;
  const Eigen::Index dk = cfg.head_dim();
  Matrix<S> h = p.token_embedding.row(token_id) + p.decoder_positions.row(st.length);

  auto attend = [&](const Matrix<S>& q, const Matrix<S>& keys, const Matrix<S>& values) {
    Matrix<S> ctx(1, cfg.hidden);
    for (int hd = 0; hd < heads; ++hd) {
      const Matrix<S> qh = q.middleCols(hd * dk, dk);
      const Matrix<S> kh = keys.middleCols(hd * dk, dk);
      const Matrix<S> w = attention_weights<S>(qh, kh);
      ctx.middleCols(hd * dk, dk).noalias() = w * values.middleCols(hd * dk, dk);
    }
    return ctx;
  };

  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& L = p.decoder[l];
    const Matrix<S> a = layer_norm<S>(h, L.self_attention_norm.scale, L.self_attention_norm.offset);
    auto& K = st.keys[l];
    auto& V = st.values[l];
    K.conservativeResize(K.rows() + 1, Eigen::NoChange);
    V.conservativeResize(V.rows() + 1, Eigen::NoChange);
    K.row(K.rows() - 1) = a * L.self_attention.wk;
    V.row(V.rows() - 1) = a * L.self_attention.wv;
    h += attend(a * L.self_attention.wq, K, V) * L.self_attention.wo;
    const Matrix<S> b = layer_norm<S>(h, L.cross_attention_norm.scale, L.cross_attention_norm.offset);
    h += attend(b * L.cross_attention.wq, mem.cross_keys[l], mem.cross_values[l]) * L.cross_attention.wo;
    const Matrix<S> c = layer_norm<S>(h, L.ffn_norm.scale, L.ffn_norm.offset);
    h += ffn<S>(c, L.ffn);
  }
  ++st.length;
  const Matrix<S> out = layer_norm<S>(h, p.decoder_norm.scale, p.decoder_norm.offset);
  const Matrix<S> logits = (out * p.output_weight).rowwise() + p.output_bias;
  return log_softmax<S>(logits).row(0);
}

}  // namespace apicomplete

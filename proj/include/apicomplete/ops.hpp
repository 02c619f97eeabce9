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

// Transformer building blocks with explicit backward passes. All functions
// are row-wise: row i of an activation matrix is sequence position i.

#pragma once

#include "apicomplete/common.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace apicomplete {

inline constexpr double kLayerNormEpsilon = 1e-6;

// ---------------------------------------------------------------------------
// Layer normalization

template <typename S>
struct LayerNormCache {
  Matrix<S> normalized;
  ColumnVector<S> inv_std;
};

template <typename S>
Matrix<S> layer_norm(const Matrix<S>& x, const RowVector<S>& scale, const RowVector<S>& offset,
                     LayerNormCache<S>* cache = nullptr) {
  if (x.cols() < 2) throw std::invalid_argument("layer_norm needs at least 2 features");
  if (scale.cols() != x.cols() || offset.cols() != x.cols()) {
    throw std::invalid_argument("layer_norm: scale/offset width mismatch");
  }
  const ColumnVector<S> mean = x.rowwise().mean();
  Matrix<S> centered = x.colwise() - mean;
  const ColumnVector<S> var = centered.array().square().rowwise().mean().matrix();
  const ColumnVector<S> inv_std = (var.array() + S(kLayerNormEpsilon)).rsqrt().matrix();
  Matrix<S> normalized = centered.array().colwise() * inv_std.array();
  Matrix<S> out = (normalized.array().rowwise() * scale.array()).rowwise() + offset.array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return out;
}

template <typename S>
RowVector<S> layer_norm(const RowVector<S>& x, const RowVector<S>& scale, const RowVector<S>& offset) {
  Matrix<S> m = x;
  return layer_norm<S>(m, scale, offset).row(0);
}

// Accumulates into grad_scale / grad_offset; returns d/dx.
template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& grad_out, const RowVector<S>& scale,
                              const LayerNormCache<S>& cache, RowVector<S>& grad_scale,
                              RowVector<S>& grad_offset) {
  grad_scale += (grad_out.array() * cache.normalized.array()).colwise().sum().matrix();
  grad_offset += grad_out.colwise().sum();
  const Matrix<S> g_hat = grad_out.array().rowwise() * scale.array();
  const ColumnVector<S> mean_g = g_hat.rowwise().mean();
  const ColumnVector<S> mean_gx = (g_hat.array() * cache.normalized.array()).rowwise().mean().matrix();
  Matrix<S> dx = g_hat.colwise() - mean_g;
  dx -= (cache.normalized.array().colwise() * mean_gx.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

// ---------------------------------------------------------------------------
// Position-wise feed-forward: max(0, x W1 + b1) W2 + b2

template <typename S>
struct FeedForwardParams {
  Matrix<S> w1;
  RowVector<S> b1;
  Matrix<S> w2;
  RowVector<S> b2;
};

template <typename S>
struct FeedForwardCache {
  Matrix<S> input;
  Matrix<S> pre_activation;
};

template <typename S>
Matrix<S> ffn(const Matrix<S>& x, const Matrix<S>& w1, const RowVector<S>& b1, const Matrix<S>& w2,
              const RowVector<S>& b2, FeedForwardCache<S>* cache = nullptr) {
  if (x.cols() != w1.rows() || w1.cols() != b1.cols() || w1.cols() != w2.rows() ||
      w2.cols() != b2.cols()) {
    throw std::invalid_argument("ffn: shape mismatch");
  }
  Matrix<S> pre = (x * w1).rowwise() + b1;
  Matrix<S> out = (pre.cwiseMax(S(0)) * w2).rowwise() + b2;
  if (cache) {
    cache->input = x;
    cache->pre_activation = std::move(pre);
  }
  return out;
}

template <typename S>
Matrix<S> ffn(const Matrix<S>& x, const FeedForwardParams<S>& p, FeedForwardCache<S>* cache = nullptr) {
  return ffn<S>(x, p.w1, p.b1, p.w2, p.b2, cache);
}

template <typename S>
Matrix<S> ffn_backward(const Matrix<S>& grad_out, const FeedForwardParams<S>& p,
                       const FeedForwardCache<S>& cache, FeedForwardParams<S>& grads) {
  const Matrix<S> hidden = cache.pre_activation.cwiseMax(S(0));
  grads.w2.noalias() += hidden.transpose() * grad_out;
  grads.b2 += grad_out.colwise().sum();
  Matrix<S> grad_hidden = grad_out * p.w2.transpose();
  grad_hidden = (cache.pre_activation.array() > S(0)).select(grad_hidden, S(0));
  grads.w1.noalias() += cache.input.transpose() * grad_hidden;
  grads.b1 += grad_hidden.colwise().sum();
  return grad_hidden * p.w1.transpose();
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention

// key_valid empty means every key is valid. With causal set, query row i
// only sees keys j <= i.
struct AttentionMask {
  std::vector<bool> key_valid;
  bool causal = false;

  bool allows(Eigen::Index query, Eigen::Index key) const {
    if (!key_valid.empty() && !key_valid[static_cast<std::size_t>(key)]) return false;
    return !causal || key <= query;
  }
};

// softmax(Q K^T / sqrt(d_k)) with disallowed entries at exactly zero.
template <typename S>
Matrix<S> attention_weights(const Matrix<S>& q, const Matrix<S>& k, const AttentionMask& mask = {}) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: query/key width mismatch");
  if (!mask.key_valid.empty() && static_cast<Eigen::Index>(mask.key_valid.size()) != k.rows()) {
    throw std::invalid_argument("attention: mask length does not match key count");
  }
  const S scale = S(1) / std::sqrt(static_cast<S>(q.cols()));
  Matrix<S> w = (q * k.transpose()) * scale;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    S row_max = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (mask.allows(i, j)) row_max = std::max(row_max, w(i, j));
    }
    S total = 0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (mask.allows(i, j)) {
        w(i, j) = std::exp(w(i, j) - row_max);
        total += w(i, j);
      } else {
        w(i, j) = 0;
      }
    }
    if (total > 0) w.row(i) /= total;
  }
  return w;
}

template <typename S>
Matrix<S> attention(const Matrix<S>& q, const Matrix<S>& k, const Matrix<S>& v,
                    const AttentionMask& mask = {}, Matrix<S>* weights_out = nullptr) {
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: key/value count mismatch");
  Matrix<S> w = attention_weights<S>(q, k, mask);
  Matrix<S> out = w * v;
  if (weights_out) *weights_out = std::move(w);
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head attention without projection biases.

template <typename S>
struct AttentionParams {
  Matrix<S> wq, wk, wv, wo;
};

template <typename S>
struct MultiHeadCache {
  Matrix<S> query_input;
  Matrix<S> memory_input;
  Matrix<S> q, k, v;
  std::vector<Matrix<S>> weights;  // one per head
  Matrix<S> context;
};

template <typename S>
Matrix<S> multi_head_attention(const AttentionParams<S>& p, const Matrix<S>& query_input,
                               const Matrix<S>& memory_input, int heads, const AttentionMask& mask,
                               MultiHeadCache<S>* cache = nullptr) {
  const Eigen::Index d = p.wq.cols();
  const Eigen::Index dk = d / heads;
  Matrix<S> q = query_input * p.wq;
  Matrix<S> k = memory_input * p.wk;
  Matrix<S> v = memory_input * p.wv;
  Matrix<S> context(q.rows(), d);
  std::vector<Matrix<S>> weights;
  if (cache) weights.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Matrix<S> qh = q.middleCols(h * dk, dk);
    const Matrix<S> kh = k.middleCols(h * dk, dk);
    Matrix<S> w = attention_weights<S>(qh, kh, mask);
    context.middleCols(h * dk, dk).noalias() = w * v.middleCols(h * dk, dk);
    if (cache) weights.push_back(std::move(w));
  }
  Matrix<S> out = context * p.wo;
  if (cache) {
    cache->query_input = query_input;
    cache->memory_input = memory_input;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
    cache->context = std::move(context);
  }
  return out;
}

// Accumulates parameter gradients; writes input gradients. For
// self-attention the caller adds grad_query_input and grad_memory_input.
template <typename S>
void multi_head_attention_backward(const Matrix<S>& grad_out, const AttentionParams<S>& p,
                                   const MultiHeadCache<S>& c, int heads, AttentionParams<S>& grads,
                                   Matrix<S>& grad_query_input, Matrix<S>& grad_memory_input) {
  const Eigen::Index d = p.wq.cols();
  const Eigen::Index dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  grads.wo.noalias() += c.context.transpose() * grad_out;
  const Matrix<S> grad_context = grad_out * p.wo.transpose();
  Matrix<S> gq(c.q.rows(), d), gk(c.k.rows(), d), gv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix<S>& w = c.weights[static_cast<std::size_t>(h)];
    const Matrix<S> g_ctx = grad_context.middleCols(h * dk, dk);
    gv.middleCols(h * dk, dk).noalias() = w.transpose() * g_ctx;
    const Matrix<S> g_w = g_ctx * c.v.middleCols(h * dk, dk).transpose();
    // softmax backward: dS = W .* (dW - rowsum(dW .* W))
    const ColumnVector<S> dot = (g_w.array() * w.array()).rowwise().sum().matrix();
    Matrix<S> g_scores = (w.array() * (g_w.colwise() - dot).array()).matrix() * scale;
    gq.middleCols(h * dk, dk).noalias() = g_scores * c.k.middleCols(h * dk, dk);
    gk.middleCols(h * dk, dk).noalias() = g_scores.transpose() * c.q.middleCols(h * dk, dk);
  }
  grads.wq.noalias() += c.query_input.transpose() * gq;
  grads.wk.noalias() += c.memory_input.transpose() * gk;
  grads.wv.noalias() += c.memory_input.transpose() * gv;
  grad_query_input = gq * p.wq.transpose();
  grad_memory_input = gk * p.wk.transpose() + gv * p.wv.transpose();
}

// Row-wise log-softmax.
template <typename S>
Matrix<S> log_softmax(const Matrix<S>& logits) {
  const ColumnVector<S> row_max = logits.rowwise().maxCoeff();
  Matrix<S> shifted = logits.colwise() - row_max;
  const ColumnVector<S> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

}  // namespace apicomplete

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

#include "apicomplete/model.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace apicomplete {
namespace {

using Mat = Matrix<double>;
using Row = RowVector<double>;

Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

TEST(Attention, HandComputedSoftmax) {
  const Mat q = mat({{1, 0}});
  const Mat k = mat({{1, 0}, {0, 1}});
  const Mat v = mat({{1, 0}, {0, 1}});
  Mat w;
  const Mat out = attention<double>(q, k, v, {}, &w);
  // softmax(1/sqrt(2), 0)
  const double a = std::exp(1 / std::sqrt(2.0));
  const double w0 = a / (a + 1);
  EXPECT_NEAR(w(0, 0), w0, 1e-12);
  EXPECT_NEAR(w(0, 0), 0.6698, 1e-4);
  EXPECT_NEAR(w(0, 1), 0.3302, 1e-4);
  EXPECT_NEAR(out(0, 0), w0, 1e-12);
  EXPECT_NEAR(out(0, 1), 1 - w0, 1e-12);
}

TEST(Attention, EqualKeysGiveUniformWeights) {
  const Mat q = mat({{0.3, -2.0}, {5, 1}});
  const Mat k = mat({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  const Mat w = attention_weights<double>(q, k);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) EXPECT_NEAR(w(i, j), 0.25, 1e-15);
  }
}

TEST(Attention, SingleUnmaskedKeyCopiesItsValue) {
  const Mat q = mat({{0.7, -0.1}});
  const Mat k = mat({{1, 2}, {3, 4}, {5, 6}});
  const Mat v = mat({{1, 2}, {-3, 9}, {4, 4}});
  AttentionMask mask;
  mask.key_valid = {false, true, false};
  Mat w;
  const Mat out = attention<double>(q, k, v, mask, &w);
  EXPECT_EQ(out(0, 0), -3.0);
  EXPECT_EQ(out(0, 1), 9.0);
  EXPECT_EQ(w(0, 0), 0.0);
  EXPECT_EQ(w(0, 2), 0.0);
}

TEST(Attention, RowsSumToOneAndMaskedWeightsAreZero) {
  Rng rng(3);
  const Mat q = test::random_matrix(5, 4, rng, 3.0);
  const Mat k = test::random_matrix(7, 4, rng, 3.0);
  AttentionMask mask;
  mask.key_valid = {true, true, false, true, true, false, true};
  mask.causal = true;
  const Mat w = attention_weights<double>(q, k, mask);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!mask.allows(i, j)) EXPECT_EQ(w(i, j), 0.0);
    }
  }
}

TEST(Attention, ShapeMismatchThrows) {
  EXPECT_THROW(attention<double>(Mat::Zero(1, 2), Mat::Zero(2, 3), Mat::Zero(2, 2)), std::invalid_argument);
  EXPECT_THROW(attention<double>(Mat::Zero(1, 2), Mat::Zero(2, 2), Mat::Zero(3, 2)), std::invalid_argument);
}

TEST(FeedForward, ReluThenAffine) {
  const Mat x = mat({{-1, 2}});
  const Mat eye = Mat::Identity(2, 2);
  const Row zero = Row::Zero(2);
  const Mat out = ffn<double>(x, eye, zero, eye, zero);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(0, 1), 2.0);
}

TEST(FeedForward, ZeroInputGivesSecondBias) {
  Rng rng(5);
  const Mat w1 = test::random_matrix(3, 4, rng);
  const Mat w2 = test::random_matrix(4, 3, rng);
  Row b2(3);
  b2 << 0.5, -1, 2;
  const Mat out = ffn<double>(Mat::Zero(1, 3), w1, Row::Zero(4), w2, b2);
  EXPECT_EQ(out.row(0), b2);
}

TEST(FeedForward, DeadReluIgnoresSecondWeight) {
  const Mat x = mat({{1, 1}});
  const Mat w1 = -Mat::Identity(2, 2);
  Rng rng(9);
  Row b2(2);
  b2 << 3, 4;
  const Mat out = ffn<double>(x, w1, Row::Zero(2), test::random_matrix(2, 2, rng), b2);
  EXPECT_EQ(out.row(0), b2);
}

TEST(LayerNorm, ConstantInputNormalizesToZero) {
  Row x(3);
  x << 1, 1, 1;
  const Row y = layer_norm<double>(x, Row::Ones(3), Row::Zero(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y(i), 0.0, 1e-12);
}

TEST(LayerNorm, UnitVarianceInputIsUnchanged) {
  Row x(2);
  x << -1, 1;
  const Row y = layer_norm<double>(x, Row::Ones(2), Row::Zero(2));
  EXPECT_NEAR(y(0), -1.0, 1e-6);
  EXPECT_NEAR(y(1), 1.0, 1e-6);
}

TEST(LayerNorm, ZeroScaleGivesOffset) {
  Row x(4);
  x << 3, -7, 0.5, 2;
  const Row y = layer_norm<double>(x, Row::Zero(4), Row::Constant(4, 5.0));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y(i), 5.0);
}

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig c = test::tiny_config();
  c.hidden = 6;
  c.heads = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(init_params<double>(c), ConfigError);
}

TEST(InitParams, DeterministicAndIdentityNorms) {
  const ModelConfig c = test::tiny_config();
  const auto a = init_params<double>(c);
  const auto b = init_params<double>(c);
  const auto va = a.views();
  const auto vb = b.views();
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    for (Eigen::Index j = 0; j < va[i].size(); ++j) ASSERT_EQ(va[i].data[j], vb[i].data[j]) << va[i].name;
  }
  EXPECT_EQ(a.encoder[0].attention_norm.scale(0), 1.0);
  EXPECT_EQ(a.decoder_norm.scale(3), 1.0);
  EXPECT_EQ(a.decoder_norm.offset(3), 0.0);
}

TEST(Forward, UniformLogitsGiveLogVocabPerToken) {
  ModelConfig c = test::tiny_config();
  c.vocab_size = 4;
  auto p = init_params<double>(c);
  p.output_weight.setZero();
  p.output_bias.setZero();
  const TokenSeq in = TokenSeq::from_tokens(std::vector<int>{3, 2}, c.max_input_length);
  const TokenSeq out = TokenSeq::from_tokens(std::vector<int>{3, 2}, c.max_output_length);
  EXPECT_NEAR(forward(p, in, out).loss, 2 * std::log(4.0), 1e-12);
  EXPECT_NEAR(2 * std::log(4.0), 2.7726, 1e-4);
}

TEST(Forward, CertainPredictionsGiveZeroLoss) {
  ModelConfig c = test::tiny_config();
  auto p = init_params<double>(c);
  p.output_weight.setZero();
  p.output_bias.setConstant(-1e4);
  p.output_bias(5) = 1e4;
  const TokenSeq in = TokenSeq::from_tokens(std::vector<int>{7, 8, 9}, c.max_input_length);
  const TokenSeq out = TokenSeq::from_tokens(std::vector<int>{5, 5, 5}, c.max_output_length);
  EXPECT_NEAR(forward(p, in, out).loss, 0.0, 1e-12);
}

TEST(Forward, OverrideWithTrueEmbeddingsIsBitIdentical) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 11);
  const Mat x = embed_source(p, in);
  EXPECT_EQ(forward(p, in, out).loss, forward(p, in, out, &x).loss);
}

TEST(Forward, PadNeutrality) {
  ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const std::vector<int> src{5, 6, 7}, tgt{8, 2};
  const double base = forward(p, TokenSeq::from_tokens(src, 3), TokenSeq::from_tokens(tgt, 2)).loss;
  const double padded = forward(p, TokenSeq::from_tokens(src, c.max_input_length),
                                TokenSeq::from_tokens(tgt, c.max_output_length))
                            .loss;
  EXPECT_EQ(base, padded);
}

TEST(Forward, CausalityOfDecoderLogits) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const TokenSeq in = TokenSeq::from_tokens(std::vector<int>{5, 6, 7, 9}, c.max_input_length);
  const std::vector<int> a{3, 4, 5, 6}, b{3, 4, 11, 6};
  const auto ta = forward(p, in, TokenSeq::from_tokens(a, c.max_output_length));
  const auto tb = forward(p, in, TokenSeq::from_tokens(b, c.max_output_length));
  // target[2] is decoder input at position 3 only.
  for (int pos = 0; pos <= 2; ++pos) EXPECT_EQ(ta.logits.row(pos), tb.logits.row(pos)) << pos;
  EXPECT_NE(ta.logits.row(3), tb.logits.row(3));
}

TEST(Forward, ZeroedSubBlocksPassInputThrough) {
  ModelConfig c = test::tiny_config();
  auto p = init_params<double>(c);
  for (auto& L : p.encoder) {
    L.self_attention.wo.setZero();
    L.ffn.w2.setZero();
    L.ffn.b2.setZero();
  }
  const auto [in, out] = test::tiny_example(c, 2);
  const Mat x = embed_source(p, in);
  const auto tr = forward(p, in, out);
  const Mat expected =
      layer_norm<double>(Mat(x.topRows(in.true_length)), p.encoder_norm.scale, p.encoder_norm.offset);
  EXPECT_TRUE(tr.encoder_output.isApprox(expected, 1e-14));
}

TEST(Forward, RejectsWrongOverrideShape) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 1);
  const Mat bad = Mat::Zero(2, c.hidden);
  EXPECT_THROW(forward(p, in, out, &bad), std::invalid_argument);
}

TEST(Backward, SecondCallOnConsumedTraceThrows) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 4);
  auto tr = forward(p, in, out);
  backward(tr);
  EXPECT_THROW(backward(tr), std::logic_error);
}

TEST(Backward, PadRowsHaveZeroEmbeddingGradient) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 6);
  auto tr = forward(p, in, out);
  const auto g = backward(tr);
  for (int r = in.true_length; r < c.max_input_length; ++r) EXPECT_TRUE(g.embeddings.row(r).isZero(0.0));
  EXPECT_FALSE(g.embeddings.row(0).isZero(0.0));
}

TEST(Backward, ZeroStepLeavesLossUnchanged) {
  const ModelConfig c = test::tiny_config();
  auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 8);
  auto tr = forward(p, in, out);
  const double before = tr.loss;
  const auto g = backward(tr);
  auto pv = p.views();
  const auto gv = g.params.views();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    for (Eigen::Index j = 0; j < pv[i].size(); ++j) pv[i].data[j] -= 0.0 * gv[i].data[j];
  }
  EXPECT_EQ(forward(p, in, out).loss, before);
}

// Central finite differences on every parameter, 64-bit.
TEST(Backward, MatchesFiniteDifferencesOnEveryParameter) {
  const ModelConfig c = test::tiny_config();
  auto p = init_params<double>(c);
  test::jitter_norms(p, 17);
  const auto [in, out] = test::tiny_example(c, 21);
  auto tr = forward(p, in, out);
  const auto g = backward(tr);
  const auto report = test::finite_difference_check(p, in, out, g.params, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-4) << "worst: " << report.worst;
  EXPECT_GT(report.checked, 1000u);
}

TEST(Backward, EmbeddingGradientMatchesFiniteDifferences) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 33);
  auto tr = forward(p, in, out);
  const auto g = backward(tr);
  Rng rng(77);
  const Mat x = embed_source(p, in);
  for (int s = 0; s < 5; ++s) {
    const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(in.true_length)));
    const auto col = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(c.hidden)));
    Mat xp = x, xm = x;
    xp(r, col) += 1e-5;
    xm(r, col) -= 1e-5;
    const double fd = (example_loss(p, in, out, &xp) - example_loss(p, in, out, &xm)) / 2e-5;
    EXPECT_LT(test::relative_error(g.embeddings(r, col), fd), 1e-4);
  }
}

TEST(IncrementalDecoding, MatchesTeacherForcedForward) {
  const ModelConfig c = test::tiny_config();
  const auto p = init_params<double>(c);
  const auto [in, out] = test::tiny_example(c, 13);
  const auto tr = forward(p, in, out);
  const auto mem = encode_source(p, in);
  auto st = initial_decoder_state(p);
  for (int i = 0; i < out.true_length; ++i) {
    const Row lp = decode_step(p, mem, st, tr.decoder_input[static_cast<std::size_t>(i)]);
    EXPECT_TRUE(lp.isApprox(tr.log_probs.row(i), 1e-12)) << i;
  }
}

}  // namespace
}  // namespace apicomplete

// SPDX-License-Identifier: Apache-2.0
#include "ala/adapter.hpp"
#include "ala/errors.hpp"
#include "ala/model.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

namespace ala {
namespace {

using testing::random_matrix;
using testing::toy_model_config;

TEST(Bilinear, HandStencilOnTwoByTwo) {
  const AttentionMap m = AttentionMap::from_grid({0, 1, 0, 1}, 2, 2, 4, 4);
  const double row[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(m.pixel(y, x), row[x]);
  }
}

TEST(Bilinear, GeneralStencilIsConvexCombination) {
  const std::vector<double> g{0.1, 0.9, 0.4, 0.3};
  const auto out = bilinear_resize(g, 2, 2, 4, 4);
  // pixel (1,2): fy = 0.25, fx = 0.75
  const double expected = 0.75 * (0.25 * 0.1 + 0.75 * 0.9) + 0.25 * (0.25 * 0.4 + 0.75 * 0.3);
  EXPECT_NEAR(out[1 * 4 + 2], expected, 1e-15);
}

TEST(AdapterConfig, EvenTapSchedule) {
  EXPECT_EQ(AdapterConfig::even_taps(4, 12), (std::vector<int>{0, 3, 6, 9}));
  EXPECT_EQ(AdapterConfig::even_taps(4, 4), (std::vector<int>{0, 1, 2, 3}));
}

TEST(AdapterConfig, RejectsBadTaps) {
  EncoderConfig enc;
  AdapterConfig a;
  a.num_taps = 5;
  EXPECT_THROW(a.validate(enc), ConfigError);
  a = AdapterConfig{};
  a.tap_blocks = {0, 2, 2, 3};
  EXPECT_THROW(a.validate(enc), ConfigError);
  a = AdapterConfig{};
  a.patch_size = 8;
  EXPECT_THROW(a.validate(enc), ConfigError);
}

TEST(AeaGate, OddPassesEvenSubstitutesOnes) {
  const AttentionMap alpha = AttentionMap::from_grid({0.1, 0.2, 0.3, 0.4}, 2, 2, 4, 4);
  for (int e : {1, 3}) {
    const GatedAttention g = aea_gate(alpha, e);
    EXPECT_EQ(g.gate_state, GateState::PassAlpha);
    EXPECT_EQ(g.h_ala, alpha.token_grid);
  }
  const GatedAttention g = aea_gate(alpha, 4);
  EXPECT_EQ(g.gate_state, GateState::AllOnes);
  for (double v : g.h_ala) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(aea_gate(alpha, 0), ConfigError);
}

TEST(Adapter, TapProjectMatchesPerTokenLoop) {
  const ModelConfig c = toy_model_config(6);
  AlaModel model(c);
  Rng rng(1);
  Linear& proj = model.adapter().tap_projection(1);
  ag::Var w = proj.weight();
  w.mutable_value() = random_matrix(w.rows(), w.cols(), rng);
  ag::Var b = proj.bias();
  b.mutable_value() = random_matrix(1, w.rows(), rng);
  const Matrix x = random_matrix(3, 6, rng);
  const Matrix y = model.adapter().tap_project(ag::constant(x), 1).value();
  for (int t = 0; t < 3; ++t) {
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      double s = b.value()(0, o);
      for (int i = 0; i < 6; ++i) s += w.value()(o, i) * x(t, i);
      EXPECT_NEAR(y(t, o), s, 1e-14);
    }
  }
  w.mutable_value().setZero();
  b.mutable_value().setZero();
  EXPECT_TRUE(model.adapter().tap_project(ag::constant(x), 1).value().isZero(0.0));
}

TEST(Adapter, ZeroWeightsGiveZeroTokens) {
  AlaModel model(toy_model_config());
  for (const auto& p : model.ala_parameters()) {
    ag::Var v = p.var;
    if (p.name.find("gamma") == std::string::npos) v.mutable_value().setZero();
  }
  Rng rng(2);
  const ag::Var img = ag::constant(testing::random_image(3, 16, 16, rng).pixels);
  const Matrix h = model.adapter().former(img, model.encoder().encode_with_taps(img)).value();
  EXPECT_TRUE(h.isZero(0.0));
  // f1 of zero weights is the logistic of zero
  const AttentionMap a = model.adapter().attention(ag::constant(h), 16, 16);
  for (double v : a.token_grid) EXPECT_EQ(v, 0.5);
}

TEST(Adapter, AttentionStaysInUnitRange) {
  AlaModel model(toy_model_config());
  Rng rng(3);
  testing::randomize(model.ala_parameters(), rng, 2.0);
  for (int i = 0; i < 5; ++i) {
    const AttentionMap a = model.explain(testing::random_image(3, 16, 16, rng));
    for (double v : a.pixel_map) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Adapter, NonGridTokenCountIsInternalError) {
  AlaModel model(toy_model_config());
  EXPECT_THROW(model.adapter().attention_grid(ag::constant(Matrix::Zero(15, 4))), InternalError);
}

TEST(Adapter, ClassifyIsASimplexAndConstantOnOnes) {
  AlaModel model(toy_model_config());
  Rng rng(4);
  testing::randomize(model.ala_parameters(), rng);
  GatedAttention g;
  g.grid_height = g.grid_width = 4;
  g.h_ala.assign(16, 1.0);
  g.gate_state = GateState::AllOnes;
  const Prediction p = model.adapter().classify(g);
  EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-6);
  EXPECT_EQ(p.probs, model.adapter().classify(g).probs);
}

TEST(Adapter, LatticeWiringReachesTappedFeatures) {
  ModelConfig c = toy_model_config(4, 3);
  c.adapter.num_layers = 2;
  c.adapter.num_taps = 2;
  c.adapter.tap_blocks = {0, 2};
  AlaModel model(c);
  Rng rng(5);
  testing::randomize(model.ala_parameters(), rng);
  const ag::Var img = ag::constant(testing::random_image(3, 16, 16, rng).pixels);
  EncoderOutput taps = model.encoder().encode_with_taps(img);
  // Detach every feature so gradients measure the direct adapter paths only.
  for (auto& f : taps.features) f = ag::leaf(f.value(), true);
  const ag::Var h = model.adapter().former(img, taps);
  ag::backward(ag::mean_rows(ag::transpose(ag::mean_rows(ag::mul(h, h)))));
  EXPECT_TRUE(taps.features[0].has_grad() && !taps.features[0].grad().isZero(0.0));
  EXPECT_TRUE(taps.features[2].has_grad() && !taps.features[2].grad().isZero(0.0));
  EXPECT_FALSE(taps.features[1].has_grad());
  EXPECT_FALSE(taps.features[3].has_grad());
}

TEST(Adapter, TapFreeAblationIgnoresEncoder) {
  ModelConfig c = toy_model_config();
  c.adapter.use_taps = false;
  AlaModel model(c);
  Rng rng(6);
  testing::randomize(model.parameters(), rng);
  const ag::Var img = ag::constant(testing::random_image(3, 16, 16, rng).pixels);
  const Matrix a = model.adapter().former(img, model.encoder().encode_with_taps(img)).value();
  const Matrix b = model.adapter().former(img, EncoderOutput{}).value();
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace ala

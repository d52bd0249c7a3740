#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hsd/blocks.hpp"
#include "support/head_checks.hpp"

namespace hsd {
namespace {

using testing::random_matrix;
using Vd = Var<double>;
using Td = Tensor<double>;

BlockConfig config(Variant v, std::size_t d, Ablation a = Ablation::none) {
  BlockConfig c;
  c.variant = v;
  c.ablation = a;
  c.dim = d;
  c.hidden = 4;
  c.reduction = 4;
  return c;
}

void set(Head<double>& h, const std::string& name, std::vector<double> values) {
  for (auto& np : h.parameters())
    if (np.name == name) {
      np.var.mutable_value() = Td(np.var.shape(), std::move(values));
      return;
    }
  FAIL() << "no parameter " << name;
}

void zero_all(Head<double>& h) {
  for (auto& np : h.parameters()) np.var.mutable_value().fill(0.0);
}

std::vector<double> logits(const Head<double>& h, const Td& x, const Mask& m = {}) {
  return h.forward(x, m).value().values();
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

Td permute_rows(const Td& x, const std::vector<std::size_t>& order) {
  Td out(x.shape());
  for (std::size_t t = 0; t < order.size(); ++t)
    for (std::size_t j = 0; j < x.dim(1); ++j) out.at(t, j) = x.at(order[t], j);
  return out;
}

TEST(ParamCount, ClosedFormByHandAtDim8) {
  // d = 8, bottleneck 2, hidden 4, dense layer 2·8 + 2 = 18, channel MLP 8·2 + 2 + 2·8 + 8 = 42.
  const std::vector<std::pair<std::string, std::size_t>> expected = {
      {"dense_first_token", 18},
      {"max_pool", 18},
      {"avg_pool", 18},
      {"lstm_head:1", 2 * (16 * 12 + 16) + 18},
      {"lstm_head:2", 2 * (16 * 12 + 16) + 2 * (16 * 12 + 16) + 18},
      {"attention", 8 + 18},
      {"rcab", 42 + 18},
      {"cbam", 42 + 15 + 18},
      {"csar", 42 + 25 + 136 + 18},
      {"ram", 42 + 25 + 18},
      {"axel", 8 + 72 + 4 + 18},
      {"axel_ablation:att_avg_fc", 8 + 72 + 3 + 18},
      {"axel_ablation:att_max_fc", 8 + 72 + 3 + 18},
      {"axel_ablation:att_avg_fc_max_fc", 8 + 144 + 4 + 18},
      {"axel_ablation:sum_fusion", 8 + 72 + 18},
      {"axel_ablation:tanh_act", 8 + 72 + 4 + 18},
      {"axel_ablation:var_fc", 8 + 72 + 5 + 18},
  };
  const auto configs = all_head_configs(8);
  ASSERT_EQ(configs.size(), expected.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    EXPECT_EQ(configs[i].name(), expected[i].first);
    EXPECT_EQ(Head<float>::build(configs[i], 1).param_count(), expected[i].second) << expected[i].first;
    EXPECT_EQ(expected_param_count(configs[i]), expected[i].second) << expected[i].first;
  }
}

TEST(ParamCount, DenseFirstTokenDim4) {
  EXPECT_EQ(Head<float>::build(config(Variant::dense_first_token, 4), 0).param_count(), 4u * 2 + 2);
}

TEST(ParamCount, AxelAtXlmDimIsAboutOneMillion) {
  auto c = config(Variant::axel, 1024);
  const std::size_t n = Head<float>::build(c, 0).param_count();
  EXPECT_EQ(n, 1024u * 1024 + 1024 + 1024 + 4 + 2 * 1024 + 2);
  EXPECT_GT(n, 1'000'000u);
  EXPECT_LT(n, 1'100'000u);
}

TEST(ParamCount, BiLstmAtBertDim) {
  BlockConfig c = config(Variant::lstm, 768);
  c.hidden = 128;
  c.lstm_layers = 2;
  const std::size_t layer1 = 2 * (4 * (768 + 128) * 128 + 4 * 128);
  const std::size_t layer2 = 2 * (4 * (256 + 128) * 128 + 4 * 128);
  EXPECT_EQ(Head<float>::build(c, 0).param_count(), layer1 + layer2 + 2 * 256 + 2);
}

TEST(ParamCount, ProjectedAttentionAddsMatrix) {
  auto c = config(Variant::attention, 6);
  c.projected_attention = true;
  EXPECT_EQ(Head<float>::build(c, 0).param_count(), 36u + 6 + 14);
  EXPECT_EQ(expected_param_count(c), 36u + 6 + 14);
}

TEST(Build, SameSeedBitIdentical) {
  for (const auto& c : all_head_configs(6)) {
    auto a = Head<float>::build(c, 99).snapshot();
    auto b = Head<float>::build(c, 99).snapshot();
    auto other = Head<float>::build(c, 100).snapshot();
    EXPECT_EQ(a, b) << c.name();
    EXPECT_NE(a, other) << c.name();
  }
}

TEST(Build, BiasesZeroWeightsWithinGlorotRange) {
  auto h = Head<double>::build(config(Variant::axel, 10), 3);
  for (const auto& np : h.parameters()) {
    if (np.name.find("bias") != std::string::npos) {
      for (double v : np.var.value().values()) EXPECT_EQ(v, 0.0) << np.name;
    }
  }
  const double limit = std::sqrt(6.0 / 20.0);
  for (double v : h.param("fc_shared.weight").value().values()) EXPECT_LE(std::abs(v), limit);
}

TEST(Build, InvalidConfigsRejected) {
  EXPECT_THROW(Head<float>::build(config(Variant::axel, 0), 0), ConfigError);
  auto c = config(Variant::lstm, 4);
  c.lstm_layers = 3;
  EXPECT_THROW(Head<float>::build(c, 0), ConfigError);
  EXPECT_THROW(Head<float>::build(config(Variant::rcab, 4, Ablation::var_fc), 0), ConfigError);
  auto r = config(Variant::rcab, 4);
  r.reduction = 0;
  EXPECT_THROW(Head<float>::build(r, 0), ConfigError);
}

TEST(Build, BottleneckClampedToOne) {
  auto c = config(Variant::rcab, 3);
  c.reduction = 16;
  EXPECT_EQ(c.bottleneck(), 1u);
  EXPECT_EQ(Head<float>::build(c, 0).param_count(), 3u + 1 + 3 + 3 + 8);
}

TEST(Forward, WrongDimAndAllMaskedRejected) {
  auto h = Head<double>::build(config(Variant::max_pool, 3), 0);
  EXPECT_THROW(h.forward(Td(Shape{2, 4})), DimensionError);
  EXPECT_THROW(h.forward(Td(Shape{2, 3}), Mask{false, false}), EmptySequenceError);
  EXPECT_THROW(h.forward(Td(Shape{2, 3}), Mask{true}), DimensionError);
  for (const auto& c : all_head_configs(3)) {
    if (c.variant == Variant::dense_first_token) continue;
    EXPECT_THROW(Head<double>::build(c, 0).forward(Td(Shape{2, 3}), Mask{false, false}), EmptySequenceError)
        << c.name();
  }
}

TEST(DenseFirstToken, HandLogits) {
  auto h = Head<double>::build(config(Variant::dense_first_token, 3), 0);
  set(h, "out.weight", {1, 0, 0, 0, 2, -1});
  set(h, "out.bias", {0.5, -0.5});
  Td x(Shape{2, 3}, {3, 4, 5, 9, 9, 9});
  expect_close(logits(h, x), {3.5, 2.5}, 1e-12);
  Td y = x;
  y.at(1, 0) = -100;
  expect_close(logits(h, y), {3.5, 2.5}, 1e-12);
  zero_all(h);
  set(h, "out.bias", {0.25, 0.75});
  expect_close(logits(h, x), {0.25, 0.75}, 0);
}

TEST(PoolHeads, ConstantSequenceMaxEqualsAvg) {
  auto mx = Head<double>::build(config(Variant::max_pool, 4), 5);
  auto av = Head<double>::build(config(Variant::avg_pool, 4), 5);
  av.restore(mx.snapshot());
  Td x(Shape{3, 4}, {1, -2, 3, 0.5, 1, -2, 3, 0.5, 1, -2, 3, 0.5});
  expect_close(logits(mx, x), logits(av, x), 1e-12);
}

TEST(PoolHeads, HandTwoByTwo) {
  // H = [[1, 4], [3, 2]]: max = (3, 4), mean = (2, 3).
  auto mx = Head<double>::build(config(Variant::max_pool, 2), 0);
  auto av = Head<double>::build(config(Variant::avg_pool, 2), 0);
  for (auto* h : {&mx, &av}) {
    set(*h, "out.weight", {1, 1, 1, -1});
    set(*h, "out.bias", {0, 1});
  }
  Td x(Shape{2, 2}, {1, 4, 3, 2});
  expect_close(logits(mx, x), {7, 0}, 1e-12);
  expect_close(logits(av, x), {5, 0}, 1e-12);
}

TEST(Lstm, ZeroParametersGiveBias) {
  BlockConfig c = config(Variant::lstm, 3);
  auto h = Head<double>::build(c, 0);
  zero_all(h);
  set(h, "out.bias", {0.3, -0.2});
  std::mt19937_64 rng(4);
  expect_close(logits(h, random_matrix(5, 3, rng)), {0.3, -0.2}, 0);
}

TEST(Lstm, SingleStepScalarOracle) {
  BlockConfig c = config(Variant::lstm, 1);
  c.hidden = 1;
  c.lstm_layers = 1;
  auto h = Head<double>::build(c, 0);
  // Gate order i, f, g, o.
  set(h, "lstm.0.fwd.w_input", {0.5, -0.3, 0.8, 0.2});
  set(h, "lstm.0.fwd.bias", {0.1, 0.0, -0.1, 0.3});
  set(h, "lstm.0.bwd.w_input", {-0.4, 0.6, 0.9, -0.7});
  set(h, "lstm.0.bwd.bias", {0.0, 0.2, 0.05, 0.0});
  set(h, "out.weight", {1, 2, -1, 0.5});
  set(h, "out.bias", {0.1, 0.2});
  const double x = 1.5;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto cell = [&](double wi, double wg, double wo, double bi, double bg, double bo) {
    const double i = sig(wi * x + bi), g = std::tanh(wg * x + bg), o = sig(wo * x + bo);
    return o * std::tanh(i * g);
  };
  const double hf = cell(0.5, 0.8, 0.2, 0.1, -0.1, 0.3);
  const double hb = cell(-0.4, 0.9, -0.7, 0.0, 0.05, 0.0);
  expect_close(logits(h, Td(Shape{1, 1}, {x})), {hf + 2 * hb + 0.1, -hf + 0.5 * hb + 0.2}, 1e-12);
}

TEST(Attention, SingleStepContextIsTheStep) {
  auto att = Head<double>::build(config(Variant::attention, 3), 2);
  auto dense = Head<double>::build(config(Variant::dense_first_token, 3), 2);
  set(dense, "out.weight", att.param("out.weight").value().values());
  Td x(Shape{1, 3}, {0.3, -1.2, 2.0});
  expect_close(logits(att, x), logits(dense, x), 1e-12);
}

TEST(Attention, ZeroScoresGiveMaskedMean) {
  auto att = Head<double>::build(config(Variant::attention, 3), 2);
  auto avg = Head<double>::build(config(Variant::avg_pool, 3), 2);
  set(att, "attention.v", {0, 0, 0});
  set(avg, "out.weight", att.param("out.weight").value().values());
  std::mt19937_64 rng(1);
  auto x = random_matrix(4, 3, rng);
  Mask m{true, false, true, true};
  expect_close(logits(att, x, m), logits(avg, x, m), 1e-12);
}

TEST(Attention, HandTwoSteps) {
  auto att = Head<double>::build(config(Variant::attention, 2), 0);
  set(att, "attention.v", {1, 2});
  set(att, "out.weight", {1, 0, 0, 1});
  set(att, "out.bias", {0, 0});
  // H = I: scores (1, 2), alpha = (1, e)/(1 + e), context = alpha.
  const double e = std::exp(1.0);
  expect_close(logits(att, Td(Shape{2, 2}, {1, 0, 0, 1})), {1 / (1 + e), e / (1 + e)}, 1e-12);
}

TEST(Rcab, ZeroBottleneckHalvesTheMean) {
  auto h = Head<double>::build(config(Variant::rcab, 4), 8);
  for (auto& np : h.parameters())
    if (np.name.rfind("channel.", 0) == 0) np.var.mutable_value().fill(0.0);
  std::mt19937_64 rng(2);
  auto x = random_matrix(3, 4, rng);
  std::vector<double> half_mean(4, 0.0);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) half_mean[j] += 0.5 * x.at(t, j) / 3.0;
  const auto& w = h.param("out.weight").value();
  std::vector<double> expected(2, 0.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 4; ++j) expected[c] += w.at(c, j) * half_mean[j];
  expect_close(logits(h, x), expected, 1e-12);
}

TEST(Heads, OutputShapeForAnyLengthAndDim) {
  std::mt19937_64 rng(6);
  for (std::size_t d : {1, 3, 9}) {
    for (const auto& c : all_head_configs(d)) {
      auto h = Head<double>::build(c, 1);
      for (std::size_t len : {1, 2, 7}) {
        auto out = h.forward(random_matrix(len, d, rng));
        EXPECT_EQ(out.shape(), Shape{2}) << c.name() << " T=" << len << " d=" << d;
      }
    }
  }
}

TEST(Heads, FiniteLogitsForLargeInputs) {
  std::mt19937_64 rng(12);
  for (const auto& c : all_head_configs(6)) {
    auto h = Head<double>::build(c, 4);
    for (double v : logits(h, random_matrix(5, 6, rng, 50.0))) EXPECT_TRUE(std::isfinite(v)) << c.name();
  }
}

TEST(Heads, PaddingNeverChangesLogits) {
  std::mt19937_64 rng(31);
  for (const auto& c : all_head_configs(5)) {
    auto h = Head<double>::build(c, 2);
    for (std::size_t len : {1, 4}) {
      auto x = random_matrix(len, 5, rng);
      Td padded(Shape{len + 3, 5});
      auto junk = random_matrix(3, 5, rng, 10.0);
      for (std::size_t t = 0; t < len + 3; ++t)
        for (std::size_t j = 0; j < 5; ++j) padded.at(t, j) = t < len ? x.at(t, j) : junk.at(t - len, j);
      Mask m(len + 3, false);
      for (std::size_t t = 0; t < len; ++t) m[t] = true;
      expect_close(logits(h, padded, m), logits(h, x), 1e-12);
    }
  }
}

TEST(Heads, PermutationInvarianceSplitsAsExpected) {
  std::mt19937_64 rng(17);
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  for (const auto& c : all_head_configs(4)) {
    auto h = Head<double>::build(c, 9);
    auto x = random_matrix(5, 4, rng);
    const auto a = logits(h, x), b = logits(h, permute_rows(x, order));
    const double diff = std::max(std::abs(a[0] - b[0]), std::abs(a[1] - b[1]));
    const bool order_sensitive = c.variant == Variant::lstm || c.variant == Variant::cbam ||
                                 c.variant == Variant::csar || c.variant == Variant::ram ||
                                 c.variant == Variant::dense_first_token;
    if (order_sensitive) {
      EXPECT_GT(diff, 1e-9) << c.name();
    } else {
      EXPECT_LT(diff, 1e-12) << c.name();
    }
  }
}

TEST(Cbam, SinglePositionStillGated) {
  auto h = Head<double>::build(config(Variant::cbam, 3), 1);
  auto out = logits(h, Td(Shape{1, 3}, {0.5, -0.5, 1.0}));
  EXPECT_TRUE(std::isfinite(out[0]) && std::isfinite(out[1]));
}

TEST(Axel, SharedWeightsOnConstantSequence) {
  for (Ablation a : {Ablation::none, Ablation::tanh_act, Ablation::var_fc}) {
    auto h = Head<double>::build(config(Variant::axel, 6, a), 3);
    Td x(Shape{4, 6});
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 6; ++j) x.at(t, j) = 0.3 * static_cast<double>(j) - 0.7;
    auto ch = h.axel_channels(Vd::constant(x), Mask(4, true));
    ASSERT_GE(ch.size(), 3u);
    EXPECT_EQ(ch[1].value(), ch[2].value());
  }
}

TEST(Axel, UntiedWeightsDifferOnConstantSequence) {
  auto h = Head<double>::build(config(Variant::axel, 6, Ablation::att_avg_fc_max_fc), 3);
  Td x(Shape{4, 6});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 6; ++j) x.at(t, j) = 0.3 * static_cast<double>(j) - 0.7;
  auto ch = h.axel_channels(Vd::constant(x), Mask(4, true));
  double diff = 0;
  for (std::size_t j = 0; j < 6; ++j) diff += std::abs(ch[1].value()[j] - ch[2].value()[j]);
  EXPECT_GT(diff, 1e-3);
}

TEST(Axel, ChannelCountsPerAblation) {
  const std::vector<std::pair<Ablation, std::size_t>> cases = {
      {Ablation::none, 3},       {Ablation::att_avg_fc, 2}, {Ablation::att_max_fc, 2},  {Ablation::att_avg_fc_max_fc, 3},
      {Ablation::sum_fusion, 3}, {Ablation::tanh_act, 3},   {Ablation::var_fc, 4}};
  Td x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  for (const auto& [a, n] : cases) {
    auto h = Head<double>::build(config(Variant::axel, 3, a), 0);
    EXPECT_EQ(h.axel_channels(Vd::constant(x), Mask(2, true)).size(), n) << to_string(a);
  }
}

TEST(Axel, TanhAblationBoundsBranches) {
  auto h = Head<double>::build(config(Variant::axel, 4, Ablation::tanh_act), 1);
  std::mt19937_64 rng(3);
  auto ch = h.axel_channels(Vd::constant(random_matrix(3, 4, rng, 20.0)), Mask(3, true));
  bool negative = false;
  for (std::size_t k = 1; k < ch.size(); ++k)
    for (double v : ch[k].value().values()) {
      EXPECT_LE(std::abs(v), 1.0);
      negative = negative || v < 0;
    }
  EXPECT_TRUE(negative);
}

TEST(Axel, SumFusionEqualsUnitOneByOneConv) {
  auto full = Head<double>::build(config(Variant::axel, 7), 11);
  auto summed = Head<double>::build(config(Variant::axel, 7, Ablation::sum_fusion), 11);
  for (const auto& np : summed.parameters()) set(full, np.name, np.var.value().values());
  set(full, "fuse.weight", {1, 1, 1});
  set(full, "fuse.bias", {0});
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  for (int i = 0; i < 100; ++i) {
    auto x = random_matrix(len(rng), 7, rng, 2.0);
    expect_close(logits(full, x), logits(summed, x), 1e-6);
  }
}

TEST(Dropout, TrainingModeUsesRngAndEvalIsDeterministic) {
  auto c = config(Variant::axel, 8);
  c.dropout = 0.5;
  auto h = Head<double>::build(c, 1);
  std::mt19937_64 data(5);
  auto x = random_matrix(4, 8, data);
  EXPECT_EQ(logits(h, x), logits(h, x));
  Rng a(1), b(1), other(2);
  auto ya = h.forward(x, {}, {true, &a}).value().values();
  auto yb = h.forward(x, {}, {true, &b}).value().values();
  auto yc = h.forward(x, {}, {true, &other}).value().values();
  EXPECT_EQ(ya, yb);
  EXPECT_NE(ya, yc);
  EXPECT_NE(ya, logits(h, x));
  EXPECT_THROW(h.forward(x, {}, {true, nullptr}), std::invalid_argument);
}

TEST(Snapshot, RestoreRoundTrip) {
  auto h = Head<float>::build(config(Variant::csar, 4), 1);
  auto saved = h.snapshot();
  for (auto& np : h.parameters()) np.var.mutable_value().fill(1.0f);
  h.restore(saved);
  EXPECT_EQ(h.snapshot(), saved);
  saved.pop_back();
  EXPECT_THROW(h.restore(saved), DimensionError);
}

TEST(BlockConfigJson, RoundTripAndErrors) {
  for (const auto& c : all_head_configs(5)) {
    auto back = block_config_from_json(to_json(c));
    EXPECT_EQ(back.name(), c.name());
    EXPECT_EQ(back.dim, c.dim);
    EXPECT_EQ(back.reduction, c.reduction);
  }
  auto j = nlohmann::json::parse(R"({"variant":"axel_ablation","ablation":"var_fc","dropout":0.2})");
  auto c = block_config_from_json(j);
  EXPECT_EQ(c.variant, Variant::axel);
  EXPECT_EQ(c.ablation, Ablation::var_fc);
  EXPECT_DOUBLE_EQ(c.dropout, 0.2);
  EXPECT_THROW(block_config_from_json(nlohmann::json::parse(R"({"variant":"axel","colour":1})")), ConfigError);
  EXPECT_THROW(block_config_from_json(nlohmann::json::parse(R"({"variant":"transformer"})")), ConfigError);
  EXPECT_THROW(block_config_from_json(nlohmann::json::parse(R"({"variant":"axel_ablation"})")), ConfigError);
  EXPECT_THROW(block_config_from_json(nlohmann::json::parse(R"({"variant":"rcab","ablation":"var_fc"})")),
               ConfigError);
  EXPECT_THROW(block_config_from_json(nlohmann::json::parse(R"({"variant":"axel","dropout":"high"})")), ConfigError);
}

class HeadGradients : public ::testing::TestWithParam<BlockConfig> {};

TEST_P(HeadGradients, MatchFiniteDifferencesOverThreeSeeds) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = testing::head_gradient_check(GetParam(), seed, 6, 2);
    EXPECT_LT(r.worst_error, 1e-4) << GetParam().name() << " seed " << seed << " worst " << r.worst_name;
  }
}

std::string head_name(const ::testing::TestParamInfo<BlockConfig>& info) {
  std::string n = info.param.name();
  std::replace(n.begin(), n.end(), ':', '_');
  return n;
}

INSTANTIATE_TEST_SUITE_P(AllHeads, HeadGradients, ::testing::ValuesIn(all_head_configs(8)), head_name);

}  // namespace
}  // namespace hsd

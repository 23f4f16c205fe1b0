// Copyright 2026 The xmreid Authors
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

#include "xmreid/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "xmreid/oracles.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {
namespace {

template <typename S>
ArrayX<S> random_image(Rng& rng, const GridShape& grid, double lo = 0.0, double hi = 1.0) {
  ArrayX<S> a(grid.numel());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = static_cast<S>(rng.uniform(lo, hi));
  return a;
}

TwoStreamConfig small_config(int split, Eigen::Index num_classes = 5) {
  TwoStreamConfig cfg;
  cfg.stages = {{3, 4, 1}, {4, 4, 2}, {4, 6, 1}, {6, 6, 1}, {6, 8, 1}};
  cfg.split_index = split;
  cfg.input_grid = GridShape{8, 4, 3};
  cfg.num_parts = 2;
  cfg.embed_dim = 5;
  cfg.num_classes = num_classes;
  return cfg;
}

template <typename S>
ArrayX<S> encoder_values(TwoStreamModel<S>& model, const ArrayX<S>& image, Modality m) {
  Tape<S> tape;
  BoundModel<S> bound = bind_model(model, tape, false);
  return forward_encoder(tape, model, bound, image, m, RunMode::eval).values();
}

TEST(ForwardEncoder, SplitZeroGivesBitIdenticalPathsAcrossModalities) {
  auto model = build_model<float>(small_config(0), 11);
  Rng rng(21);
  ArrayX<float> image = random_image<float>(rng, model.cfg.input_grid);
  ArrayX<float> vis = encoder_values(model, image, Modality::visible);
  ArrayX<float> th = encoder_values(model, image, Modality::thermal);
  ASSERT_EQ(vis.size(), th.size());
  for (Eigen::Index i = 0; i < vis.size(); ++i) EXPECT_EQ(vis[i], th[i]);
}

TEST(ForwardEncoder, SplitFiveIsolatesVisibleFromThermalPerturbation) {
  auto model = build_model<float>(small_config(5), 12);
  Rng rng(22);
  ArrayX<float> image = random_image<float>(rng, model.cfg.input_grid);
  ArrayX<float> before = encoder_values(model, image, Modality::visible);
  for (auto& [name, param] : model.params.entries)
    if (name.rfind("thermal.", 0) == 0) param.value += 0.5f;
  ArrayX<float> after = encoder_values(model, image, Modality::visible);
  ASSERT_EQ(before.size(), after.size());
  for (Eigen::Index i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
  ArrayX<float> th_before = encoder_values(model, image, Modality::thermal);
  bool thermal_changed = false;
  for (auto& [name, param] : model.params.entries)
    if (name.rfind("thermal.", 0) == 0) param.value -= 1.0f;
  ArrayX<float> th_after = encoder_values(model, image, Modality::thermal);
  for (Eigen::Index i = 0; i < th_before.size() && !thermal_changed; ++i)
    thermal_changed = th_before[i] != th_after[i];
  EXPECT_TRUE(thermal_changed);
}

TEST(ForwardEncoder, RejectsUnknownModalityTag) {
  auto model = build_model<float>(small_config(2), 13);
  Rng rng(23);
  ArrayX<float> image = random_image<float>(rng, model.cfg.input_grid);
  Tape<float> tape;
  BoundModel<float> bound = bind_model(model, tape, false);
  EXPECT_THROW(forward_encoder(tape, model, bound, image, static_cast<Modality>(7),
                               RunMode::eval),
               DomainError);
}

TEST(ForwardEncoder, OutputGridMatchesDownsampledConfig) {
  auto cfg = TwoStreamConfig::defaults(9);
  auto model = build_model<float>(cfg, 14);
  Rng rng(24);
  ArrayX<float> image = random_image<float>(rng, cfg.input_grid);
  Tape<float> tape;
  BoundModel<float> bound = bind_model(model, tape, false);
  Tensor<float> map = forward_encoder(tape, model, bound, image, Modality::visible, RunMode::eval);
  GridShape fg = cfg.final_grid();
  EXPECT_EQ(fg.rows, 6);
  EXPECT_EQ(fg.cols, 3);
  EXPECT_EQ(fg.channels, 32);
  EXPECT_EQ(map.rows(), fg.cells());
  EXPECT_EQ(map.cols(), fg.channels);
}

TEST(ParameterCounts, StrictlyIncreasingInSplitIndex) {
  long long prev = -1;
  for (int s = 0; s <= kNumStages; ++s) {
    TwoStreamConfig cfg = TwoStreamConfig::defaults(7);
    cfg.split_index = s;
    long long count = parameter_count(cfg);
    EXPECT_GT(count, prev) << "split " << s;
    prev = count;
    auto model = build_model<float>(cfg, 31);
    EXPECT_EQ(model.params.total_size(), count) << "split " << s;
  }
}

TEST(ParameterCounts, SplitZeroHasNoModalitySpecificParameters) {
  auto model = build_model<float>(small_config(0), 32);
  for (const auto& [name, param] : model.params.entries) {
    EXPECT_NE(name.rfind("visible.", 0), 0u) << name;
    EXPECT_NE(name.rfind("thermal.", 0), 0u) << name;
  }
}

TEST(ParameterCounts, SameSeedRebuildsIdenticalParameters) {
  auto a = build_model<float>(small_config(3), 77);
  auto b = build_model<float>(small_config(3), 77);
  auto c = build_model<float>(small_config(3), 78);
  bool any_diff = false;
  for (const auto& [name, pa] : a.params.entries) {
    const auto& pb = b.params.at(name);
    for (Eigen::Index i = 0; i < pa.value.size(); ++i) EXPECT_EQ(pa.value[i], pb.value[i]);
    const auto& pc = c.params.at(name);
    for (Eigen::Index i = 0; i < pa.value.size(); ++i)
      if (pa.value[i] != pc.value[i]) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Strips, ReassembledStripsEqualOriginalMap) {
  Rng rng(41);
  const Eigen::Index H = 12, W = 4, C = 3;
  Tape<double> tape;
  ArrayX<double> data(H * W * C);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng.uniform(-1, 1);
  Tensor<double> map = tape.constant({H * W, C}, data);
  auto strips = partition_strips(map, H, W, 6);
  ASSERT_EQ(strips.size(), 6u);
  for (const auto& s : strips) EXPECT_EQ(s.rows(), (H / 6) * W);
  Tensor<double> rebuilt = concat_rows(strips);
  ArrayX<double> r = rebuilt.values();
  for (Eigen::Index i = 0; i < data.size(); ++i) EXPECT_EQ(r[i], data[i]);
}

TEST(Strips, SinglePartIsWholeMap) {
  Tape<double> tape;
  Tensor<double> map = tape.constant({4, 2}, ArrayX<double>::LinSpaced(8, 1, 8));
  auto strips = partition_strips(map, 4, 1, 1);
  ASSERT_EQ(strips.size(), 1u);
  ArrayX<double> s = strips[0].values();
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_EQ(s[i], static_cast<double>(i + 1));
}

TEST(Strips, IndivisiblePartitionFailsAtBuildTime) {
  TwoStreamConfig cfg = small_config(2);
  cfg.num_parts = 3;  // final rows = 4
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(build_model<float>(cfg, 1), ConfigError);
}

TEST(GemPoolWrapper, ExponentOneMatchesMeanOnPositiveStrip) {
  Tape<double> tape;
  Rng rng(51);
  const Eigen::Index n = 6, C = 4;
  ArrayX<double> data(n * C);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng.uniform(0.2, 2.0);
  Tensor<double> strip = tape.constant({n, C}, data);
  Tensor<double> p = tape.scalar(1.0);
  Tensor<double> pooled = gem_pool(strip, p);
  ASSERT_EQ(pooled.rows(), 1);
  ASSERT_EQ(pooled.cols(), C);
  Tensor<double> mean = segment_mean(strip, {n});
  Eigen::Map<const MatrixRM<double>> m(data.data(), n, C);
  for (Eigen::Index c = 0; c < C; ++c) {
    EXPECT_EQ(pooled.values()[c], mean.values()[c]);
    EXPECT_NEAR(pooled.values()[c], m.col(c).mean(), 1e-14);
  }
}

TEST(ReduceProject, IdentityConfigurationPassesInputThrough) {
  TwoStreamConfig cfg = small_config(2);
  cfg.embed_dim = cfg.stages.back().out_channels;  // C == d
  auto model = build_model<double>(cfg, 61);
  const Eigen::Index C = cfg.embed_dim;
  auto& w = model.params.at("head.part0.proj.weight");
  Eigen::Map<MatrixRM<double>>(w.value.data(), C, C).setIdentity();

  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  Rng rng(62);
  ArrayX<double> data(2 * C);
  for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = rng.uniform(0.0, 3.0);
  Tensor<double> pooled = tape.constant({2, C}, data);
  Tensor<double> out = reduce_project(tape, model, bound, 0, pooled, RunMode::eval);
  ASSERT_EQ(out.cols(), C);
  ArrayX<double> v = out.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], data[i], 1e-4 * (1 + data[i]));
}

TEST(ReduceProject, OutputDimensionIsEmbedDimAndRejectsBadIndex) {
  auto model = build_model<double>(small_config(2), 63);
  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  Tensor<double> pooled = tape.constant({3, 8}, ArrayX<double>::Ones(24));
  Tensor<double> out = reduce_project(tape, model, bound, 1, pooled, RunMode::eval);
  EXPECT_EQ(out.rows(), 3);
  EXPECT_EQ(out.cols(), model.cfg.embed_dim);
  EXPECT_THROW(reduce_project(tape, model, bound, 2, pooled, RunMode::eval), DomainError);
  EXPECT_THROW(reduce_project(tape, model, bound, -1, pooled, RunMode::eval), DomainError);
}

TEST(ReduceProject, MatchesFiniteDifferencesThroughFullBlock) {
  auto model = build_model<double>(small_config(2), 64);
  const Eigen::Index rows = 3, C = 8, d = model.cfg.embed_dim;
  Rng rng(65);
  std::vector<double> mix(static_cast<std::size_t>(rows * d));
  for (double& m : mix) m = rng.uniform(-1, 1);

  // keep all pre-relu values away from the kink so central differences hold
  std::vector<double> x(static_cast<std::size_t>(rows * C));
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (double& v : x) v = rng.uniform(-2, 2);
    Tape<double> probe;
    BoundModel<double> bound = bind_model(model, probe, false);
    ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(x.data(), rows * C);
    Tensor<double> px = probe.constant({rows, C}, xa);
    Tensor<double> pre = batch_norm(matmul(px, bound.at("head.part0.proj.weight")),
                                    bound.at("head.part0.proj.bn.gamma"),
                                    bound.at("head.part0.proj.bn.beta"),
                                    model.bn_states.at("head.part0.proj.bn"), RunMode::train);
    if (pre.values().abs().minCoeff() > 5e-2) break;
  }

  auto f = [&](const std::vector<double>& in) {
    Tape<double> tape;
    BoundModel<double> bound = bind_model(model, tape, false);
    ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(in.data(), rows * C);
    Tensor<double> tx = tape.constant({rows, C}, xa);
    Tensor<double> out = reduce_project(tape, model, bound, 0, tx, RunMode::train);
    ArrayX<double> ma = Eigen::Map<const ArrayX<double>>(mix.data(), rows * d);
    Tensor<double> w = tape.constant({rows, d}, ma);
    return reduce_sum(mul(out, w)).item();
  };

  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(x.data(), rows * C);
  Tensor<double> tx = tape.leaf({rows, C}, xa, true);
  Tensor<double> out = reduce_project(tape, model, bound, 0, tx, RunMode::train);
  ArrayX<double> ma = Eigen::Map<const ArrayX<double>>(mix.data(), rows * d);
  Tensor<double> w = tape.constant({rows, d}, ma);
  Tensor<double> loss = reduce_sum(mul(out, w));
  tape.backward(loss);
  ArrayX<double> g = tx.grad();
  std::vector<double> analytic(g.data(), g.data() + g.size());
  EXPECT_LE(oracles::max_grad_rel_err(f, x, analytic), 1e-5);
}

TEST(ClassifyPart, ZeroWeightsGiveBiasLogits) {
  auto model = build_model<double>(small_config(2, 4), 71);
  model.params.at("head.part1.cls.weight").value.setZero();
  auto& bias = model.params.at("head.part1.cls.bias").value;
  bias << 0.5, -1.0, 2.0, 0.25;
  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  Tensor<double> feat = tape.constant({3, model.cfg.embed_dim},
                                      ArrayX<double>::Random(3 * model.cfg.embed_dim));
  Tensor<double> logits = classify_part(bound, 1, model.cfg.num_parts, feat);
  ASSERT_EQ(logits.rows(), 3);
  ASSERT_EQ(logits.cols(), 4);
  ArrayX<double> v = logits.values();
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) EXPECT_EQ(v[r * 4 + c], bias[c]);
}

TEST(ClassifyPart, PerturbingOneClassifierLeavesOthersUnchanged) {
  auto model = build_model<double>(small_config(2, 4), 72);
  Rng rng(73);
  ArrayX<double> feat_data(2 * model.cfg.embed_dim);
  for (Eigen::Index i = 0; i < feat_data.size(); ++i) feat_data[i] = rng.uniform(-1, 1);

  auto part1_logits = [&]() {
    Tape<double> tape;
    BoundModel<double> bound = bind_model(model, tape, false);
    Tensor<double> feat = tape.constant({2, model.cfg.embed_dim}, feat_data);
    return classify_part(bound, 1, model.cfg.num_parts, feat).values();
  };
  ArrayX<double> before = part1_logits();
  model.params.at("head.part0.cls.weight").value += 3.0;
  model.params.at("head.part0.cls.bias").value += 1.0;
  ArrayX<double> after = part1_logits();
  for (Eigen::Index i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(ClassifyPart, RejectsOutOfRangeIndex) {
  auto model = build_model<double>(small_config(2), 74);
  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  Tensor<double> feat = tape.constant({1, model.cfg.embed_dim},
                                      ArrayX<double>::Ones(model.cfg.embed_dim));
  EXPECT_THROW(classify_part(bound, model.cfg.num_parts, model.cfg.num_parts, feat),
               DomainError);
}

TEST(ForwardFull, ConcatenatedDimensionIsPartsTimesEmbedDim) {
  TwoStreamConfig cfg = TwoStreamConfig::defaults(10);
  auto model = build_model<float>(cfg, 81);
  Rng rng(82);
  std::vector<ArrayX<float>> images;
  for (int i = 0; i < 3; ++i) images.push_back(random_image<float>(rng, cfg.input_grid));
  std::vector<const ArrayX<float>*> ptrs{&images[0], &images[1], &images[2]};
  std::vector<Modality> mods{Modality::visible, Modality::thermal, Modality::visible};
  Tape<float> tape;
  BoundModel<float> bound = bind_model(model, tape, false);
  ForwardOutput<float> out = forward_full(tape, model, bound, ptrs, mods, RunMode::eval);
  EXPECT_EQ(out.concatenated.rows(), 3);
  EXPECT_EQ(out.concatenated.cols(), 6 * 256);
  ASSERT_EQ(out.parts.size(), 6u);
  ASSERT_EQ(out.logits.size(), 6u);
  for (const auto& part : out.parts) {
    EXPECT_EQ(part.rows(), 3);
    EXPECT_EQ(part.cols(), 256);
  }
  for (const auto& l : out.logits) {
    EXPECT_EQ(l.rows(), 3);
    EXPECT_EQ(l.cols(), 10);
  }
}

TEST(ForwardFull, ConcatenationPreservesStripOrder) {
  TwoStreamConfig cfg = small_config(1, 4);
  auto model = build_model<double>(cfg, 83);
  Rng rng(84);
  ArrayX<double> image = random_image<double>(rng, cfg.input_grid);
  std::vector<const ArrayX<double>*> ptrs{&image};
  std::vector<Modality> mods{Modality::thermal};
  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, false);
  ForwardOutput<double> out = forward_full(tape, model, bound, ptrs, mods, RunMode::eval);
  const Eigen::Index d = cfg.embed_dim;
  ArrayX<double> cat = out.concatenated.values();
  for (int j = 0; j < cfg.num_parts; ++j) {
    ArrayX<double> part = out.parts[static_cast<std::size_t>(j)].values();
    for (Eigen::Index k = 0; k < d; ++k) EXPECT_EQ(cat[j * d + k], part[k]);
  }
}

TEST(ForwardFull, IdenticalImagesGetIdenticalRowsInEvalMode) {
  TwoStreamConfig cfg = small_config(2, 4);
  auto model = build_model<float>(cfg, 85);
  Rng rng(86);
  ArrayX<float> image = random_image<float>(rng, cfg.input_grid);
  ArrayX<float> other = random_image<float>(rng, cfg.input_grid);
  std::vector<const ArrayX<float>*> ptrs{&image, &other, &image};
  std::vector<Modality> mods{Modality::visible, Modality::visible, Modality::visible};
  Tape<float> tape;
  BoundModel<float> bound = bind_model(model, tape, false);
  ForwardOutput<float> out = forward_full(tape, model, bound, ptrs, mods, RunMode::eval);
  const Eigen::Index cols = out.concatenated.cols();
  ArrayX<float> cat = out.concatenated.values();
  bool differs_from_other = false;
  for (Eigen::Index c = 0; c < cols; ++c) {
    EXPECT_EQ(cat[0 * cols + c], cat[2 * cols + c]);
    if (cat[0 * cols + c] != cat[1 * cols + c]) differs_from_other = true;
  }
  EXPECT_TRUE(differs_from_other);
}

TEST(ForwardFull, SplitZeroIgnoresModalityTag) {
  TwoStreamConfig cfg = small_config(0, 4);
  auto model = build_model<float>(cfg, 87);
  Rng rng(88);
  ArrayX<float> image = random_image<float>(rng, cfg.input_grid);
  std::vector<const ArrayX<float>*> ptrs{&image, &image};
  std::vector<Modality> mods{Modality::visible, Modality::thermal};
  Tape<float> tape;
  BoundModel<float> bound = bind_model(model, tape, false);
  ForwardOutput<float> out = forward_full(tape, model, bound, ptrs, mods, RunMode::eval);
  const Eigen::Index cols = out.concatenated.cols();
  ArrayX<float> cat = out.concatenated.values();
  for (Eigen::Index c = 0; c < cols; ++c) EXPECT_EQ(cat[c], cat[cols + c]);
}

TEST(ForwardFull, PoolKindsProduceDistinctFeatures) {
  Rng rng(89);
  TwoStreamConfig cfg = small_config(2, 4);
  ArrayX<double> image = random_image<double>(rng, cfg.input_grid);
  std::vector<Modality> mods{Modality::visible};
  auto run = [&](PoolKind kind) {
    TwoStreamConfig c = cfg;
    c.pool = kind;
    auto model = build_model<double>(c, 90);
    std::vector<const ArrayX<double>*> ptrs{&image};
    Tape<double> tape;
    BoundModel<double> bound = bind_model(model, tape, false);
    return forward_full(tape, model, bound, ptrs, mods, RunMode::eval).concatenated.values();
  };
  ArrayX<double> gem = run(PoolKind::gem);
  ArrayX<double> mean = run(PoolKind::mean);
  ArrayX<double> max = run(PoolKind::max);
  ASSERT_EQ(gem.size(), mean.size());
  ASSERT_EQ(gem.size(), max.size());
  EXPECT_GT((gem - mean).abs().maxCoeff(), 0.0);
  EXPECT_GT((mean - max).abs().maxCoeff(), 0.0);
}

TEST(Gradients, VisibleOnlyLossLeavesThermalStagesUntouched) {
  TwoStreamConfig cfg = small_config(2, 4);
  auto model = build_model<double>(cfg, 91);
  Rng rng(92);
  std::vector<ArrayX<double>> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_image<double>(rng, cfg.input_grid));
  std::vector<const ArrayX<double>*> ptrs;
  for (auto& im : images) ptrs.push_back(&im);
  std::vector<Modality> mods(4, Modality::visible);

  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, true);
  ForwardOutput<double> out = forward_full(tape, model, bound, ptrs, mods, RunMode::train);
  tape.backward(reduce_sum(out.concatenated));

  for (const auto& [name, leaf] : bound.tensors) {
    if (name.rfind("thermal.", 0) == 0)
      EXPECT_EQ(leaf.grad().abs().maxCoeff(), 0.0) << name;
  }
  EXPECT_GT(bound.at("visible.stage0.mix").grad().abs().maxCoeff(), 0.0);
  EXPECT_GT(bound.at("shared.stage2.mix").grad().abs().maxCoeff(), 0.0);
  EXPECT_GT(bound.at("head.part0.proj.weight").grad().abs().maxCoeff(), 0.0);
}

TEST(Gradients, MixedBatchVisibleRowLossStaysOffThermalParamsInEvalMode) {
  TwoStreamConfig cfg = small_config(2, 4);
  auto model = build_model<double>(cfg, 93);
  Rng rng(94);
  std::vector<ArrayX<double>> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_image<double>(rng, cfg.input_grid));
  std::vector<const ArrayX<double>*> ptrs;
  for (auto& im : images) ptrs.push_back(&im);
  std::vector<Modality> mods{Modality::visible, Modality::thermal, Modality::visible,
                             Modality::thermal};

  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, true);
  ForwardOutput<double> out = forward_full(tape, model, bound, ptrs, mods, RunMode::eval);
  Tensor<double> visible_rows = gather_rows(out.concatenated, {0, 2});
  tape.backward(reduce_sum(visible_rows));

  for (const auto& [name, leaf] : bound.tensors) {
    if (name.rfind("thermal.", 0) == 0)
      EXPECT_EQ(leaf.grad().abs().maxCoeff(), 0.0) << name;
  }
  EXPECT_GT(bound.at("visible.stage1.mix").grad().abs().maxCoeff(), 0.0);
  EXPECT_GT(bound.at("shared.stage3.mix").grad().abs().maxCoeff(), 0.0);
}

TEST(Gradients, FrozenGemExponentIsExcludedFromTraining) {
  TwoStreamConfig cfg = small_config(2, 4);
  cfg.learnable_gem = false;
  auto model = build_model<double>(cfg, 95);
  Tape<double> tape;
  BoundModel<double> bound = bind_model(model, tape, true);
  EXPECT_FALSE(bound.at("head.gem_p").requires_grad());
  EXPECT_TRUE(bound.at("head.part0.proj.weight").requires_grad());
}

TEST(ConfigValidation, RejectsBrokenChannelChainAndBadSplit) {
  TwoStreamConfig cfg = small_config(2);
  cfg.stages[2].in_channels = 99;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(2);
  cfg.split_index = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(2);
  cfg.stages[1].downsample_rows = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(2);
  cfg.input_grid.rows = 7;  // stage 1 would halve an odd extent
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(small_config(2).validate());
}

}  // namespace
}  // namespace xmreid

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

#include "xmreid/losses.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "xmreid/oracles.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {
namespace {

ArrayX<double> arr(std::initializer_list<double> v) {
  ArrayX<double> a(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) a[i++] = x;
  return a;
}

/// Synthetic 2PK batch: identity i contributes K visible then K thermal rows.
struct BatchDraw {
  oracles::MatD features;
  std::vector<int> labels;
  std::vector<Modality> modalities;
};

BatchDraw draw_batch(Rng& rng, int P, int K, Eigen::Index dim, double spread = 2.0) {
  BatchDraw b;
  b.features = oracles::MatD(2 * P * K, dim);
  for (Eigen::Index r = 0; r < b.features.rows(); ++r)
    for (Eigen::Index c = 0; c < dim; ++c) b.features(r, c) = rng.uniform(-spread, spread);
  for (int i = 0; i < P; ++i)
    for (int k = 0; k < 2 * K; ++k) {
      b.labels.push_back(i);
      b.modalities.push_back(k < K ? Modality::visible : Modality::thermal);
    }
  return b;
}

ArrayX<double> flat(const oracles::MatD& m) {
  ArrayX<double> a(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a[r * m.cols() + c] = m(r, c);
  return a;
}

/// True when every anchor's mined argmax/argmin is separated from the
/// runner-up, so finite differences cannot cross a mining switch.
bool bh_mining_is_stable(const oracles::MatD& f, const std::vector<int>& labels, double gap) {
  const Eigen::Index B = f.rows();
  for (Eigen::Index a = 0; a < B; ++a) {
    std::vector<double> pos, neg;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (b == a) continue;
      const double d = oracles::euclid(f, a, b);
      (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(a)] ? pos : neg)
          .push_back(d);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    if (pos.size() >= 2 && pos[pos.size() - 1] - pos[pos.size() - 2] < gap) return false;
    if (neg.size() >= 2 && neg[1] - neg[0] < gap) return false;
  }
  return true;
}

bool hc_mining_is_stable(const BatchDraw& b, double gap) {
  std::vector<int> ids;
  oracles::MatD vis, th;
  oracles::brute_modality_centers(b.features, b.labels, b.modalities, ids, vis, th);
  const Eigen::Index P = vis.rows();
  oracles::MatD all(2 * P, vis.cols());
  for (Eigen::Index i = 0; i < P; ++i) {
    all.row(2 * i) = vis.row(i);
    all.row(2 * i + 1) = th.row(i);
  }
  for (Eigen::Index a = 0; a < 2 * P; ++a) {
    std::vector<double> neg;
    for (Eigen::Index c = 0; c < 2 * P; ++c)
      if (c / 2 != a / 2) neg.push_back((all.row(a) - all.row(c)).norm());
    std::sort(neg.begin(), neg.end());
    if (neg.size() >= 2 && neg[1] - neg[0] < gap) return false;
  }
  return true;
}

TEST(BatchHard, SeparatedTightClustersGiveExactZero) {
  Tape<double> tape;
  // two identities clustered around 0 and 100, margin easily met
  Tensor<double> f = tape.constant({4, 1}, arr({0.0, 0.01, 100.0, 100.01}));
  Tensor<double> loss = batch_hard_triplet(f, {0, 0, 1, 1}, 0.3);
  EXPECT_EQ(loss.item(), 0.0);
}

TEST(BatchHard, OneDimensionalHandExample) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 1}, arr({0.0, 0.4, 0.5, 0.9}));
  Tensor<double> loss = batch_hard_triplet(f, {0, 0, 1, 1}, 0.3);
  oracles::MatD m(4, 1);
  m << 0.0, 0.4, 0.5, 0.9;
  const double expected = oracles::brute_batch_hard_triplet(m, {0, 0, 1, 1}, 0.3);
  EXPECT_NEAR(loss.item(), expected, 1e-9);
  EXPECT_NEAR(loss.item(), 1.6, 1e-9);
}

TEST(BatchHard, ZeroFeaturesCollapseToMarginTimesBatch) {
  Tape<double> tape;
  const int P = 3, K = 2;
  Tensor<double> f = tape.constant({2 * P * K, 4}, ArrayX<double>::Zero(2 * P * K * 4));
  std::vector<int> labels;
  for (int i = 0; i < P; ++i)
    for (int k = 0; k < 2 * K; ++k) labels.push_back(i);
  Tensor<double> loss = batch_hard_triplet(f, labels, 0.3);
  EXPECT_NEAR(loss.item(), 2 * P * K * 0.3, 1e-12);
}

TEST(BatchHard, RejectsDegenerateLabelSets) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({3, 2}, ArrayX<double>::Ones(6));
  EXPECT_THROW(batch_hard_triplet(f, {0, 1, 1}, 0.3), DomainError);  // label 0 has no positive
  EXPECT_THROW(batch_hard_triplet(f, {4, 4, 4}, 0.3), DomainError);  // no negatives exist
}

TEST(BatchHard, MatchesBruteForceOnRandomBatchesWithExactCounts) {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int P = 2 + static_cast<int>(rng.below(7));   // 2..8
    const int K = 2 + static_cast<int>(rng.below(5));   // 2..6
    const Eigen::Index dims[] = {2, 8, 64};
    const Eigen::Index dim = dims[rng.below(3)];
    BatchDraw b = draw_batch(rng, P, K, dim);

    Tape<double> tape;
    Tensor<double> f = tape.constant({b.features.rows(), dim}, flat(b.features));
    DistanceCounter counter;
    Tensor<double> loss = batch_hard_triplet(f, b.labels, 0.3, &counter);
    const double expected = oracles::brute_batch_hard_triplet(b.features, b.labels, 0.3);
    EXPECT_NEAR(loss.item(), expected, 1e-5 * (1.0 + std::abs(expected)));
    EXPECT_GE(loss.item(), 0.0);

    const ComparisonCounts formula = comparison_counts(P, K);
    EXPECT_EQ(counter.positive, formula.bh_positive);
    EXPECT_EQ(counter.negative, formula.bh_negative);
  }
}

TEST(BatchHard, PermutationAndTranslationInvariance) {
  Rng rng(102);
  BatchDraw b = draw_batch(rng, 4, 3, 8);
  Tape<double> tape;
  Tensor<double> f = tape.constant({b.features.rows(), 8}, flat(b.features));
  const double base = batch_hard_triplet(f, b.labels, 0.3).item();

  std::vector<std::size_t> perm(b.labels.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  oracles::MatD pf(b.features.rows(), 8);
  std::vector<int> plabels(b.labels.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pf.row(static_cast<Eigen::Index>(i)) = b.features.row(static_cast<Eigen::Index>(perm[i]));
    plabels[i] = b.labels[perm[i]];
  }
  Tensor<double> f2 = tape.constant({pf.rows(), 8}, flat(pf));
  EXPECT_NEAR(batch_hard_triplet(f2, plabels, 0.3).item(), base, 1e-9);

  oracles::MatD shifted = b.features;
  for (Eigen::Index r = 0; r < shifted.rows(); ++r)
    for (Eigen::Index c = 0; c < 8; ++c) shifted(r, c) += 17.0 - static_cast<double>(c);
  Tensor<double> f3 = tape.constant({shifted.rows(), 8}, flat(shifted));
  EXPECT_NEAR(batch_hard_triplet(f3, b.labels, 0.3).item(), base, 1e-8);
}

TEST(BatchHard, GradientMatchesFiniteDifferences) {
  Rng rng(103);
  const int P = 3, K = 2;
  const Eigen::Index dim = 4;
  BatchDraw b;
  do {
    b = draw_batch(rng, P, K, dim);
  } while (!bh_mining_is_stable(b.features, b.labels, 1e-2));

  std::vector<double> x(b.features.data(), b.features.data() + b.features.size());
  auto f = [&](const std::vector<double>& in) {
    Tape<double> tape;
    ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(in.data(), Eigen::Index(in.size()));
    Tensor<double> t = tape.constant({b.features.rows(), dim}, xa);
    return batch_hard_triplet(t, b.labels, 0.3).item();
  };

  Tape<double> tape;
  Tensor<double> t = tape.leaf({b.features.rows(), dim},
                               Eigen::Map<const ArrayX<double>>(x.data(), Eigen::Index(x.size())),
                               true);
  tape.backward(batch_hard_triplet(t, b.labels, 0.3));
  ArrayX<double> g = t.grad();
  std::vector<double> analytic(g.data(), g.data() + g.size());
  EXPECT_LE(oracles::max_grad_rel_err(f, x, analytic), 1e-5);
}

TEST(Centers, IdenticalVectorsReproduceThatVector) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 2}, arr({3, -1, 3, -1, 7, 2, 7, 2}));
  CenterSet<double> cs = modality_centers(f, {5, 5, 5, 5},
                                          {Modality::visible, Modality::visible,
                                           Modality::thermal, Modality::thermal});
  ASSERT_EQ(cs.num_identities(), 1);
  ArrayX<double> v = cs.centers.values();
  EXPECT_EQ(v[0], 3);
  EXPECT_EQ(v[1], -1);
  EXPECT_EQ(v[2], 7);
  EXPECT_EQ(v[3], 2);
}

TEST(Centers, TranslationShiftsEveryCenterExactly) {
  Rng rng(111);
  BatchDraw b = draw_batch(rng, 3, 2, 4);
  Tape<double> tape;
  Tensor<double> f = tape.constant({b.features.rows(), 4}, flat(b.features));
  ArrayX<double> base = modality_centers(f, b.labels, b.modalities).centers.values();

  oracles::MatD shifted = b.features;
  Eigen::RowVectorXd u(4);
  u << 0.5, -2.0, 1.25, 3.0;
  for (Eigen::Index r = 0; r < shifted.rows(); ++r) shifted.row(r) += u;
  Tensor<double> f2 = tape.constant({shifted.rows(), 4}, flat(shifted));
  ArrayX<double> moved = modality_centers(f2, b.labels, b.modalities).centers.values();
  for (Eigen::Index i = 0; i < base.size(); ++i)
    EXPECT_NEAR(moved[i], base[i] + u[i % 4], 1e-12);
}

TEST(Centers, MatchesNaiveSummationOracle) {
  Rng rng(112);
  BatchDraw b = draw_batch(rng, 5, 4, 6);
  Tape<double> tape;
  Tensor<double> f = tape.constant({b.features.rows(), 6}, flat(b.features));
  CenterSet<double> cs = modality_centers(f, b.labels, b.modalities);
  std::vector<int> ids;
  oracles::MatD vis, th;
  oracles::brute_modality_centers(b.features, b.labels, b.modalities, ids, vis, th);
  ASSERT_EQ(cs.identity_ids, ids);
  ArrayX<double> v = cs.centers.values();
  for (Eigen::Index i = 0; i < vis.rows(); ++i)
    for (Eigen::Index c = 0; c < 6; ++c) {
      EXPECT_NEAR(v[(2 * i) * 6 + c], vis(i, c), 1e-6);
      EXPECT_NEAR(v[(2 * i + 1) * 6 + c], th(i, c), 1e-6);
    }
}

TEST(Centers, MissingModalityGroupThrows) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({3, 2}, ArrayX<double>::Ones(6));
  EXPECT_THROW(modality_centers(f, {1, 1, 2},
                                {Modality::visible, Modality::thermal, Modality::visible}),
               DomainError);
}

TEST(Centers, GradientSpreadsUniformlyOverGroupMembers) {
  Tape<double> tape;
  Tensor<double> f = tape.leaf({4, 2}, arr({1, 2, 3, 4, 5, 6, 7, 8}), true);
  CenterSet<double> cs = modality_centers(f, {9, 9, 9, 9},
                                          {Modality::visible, Modality::visible,
                                           Modality::thermal, Modality::thermal});
  tape.backward(reduce_sum(cs.centers));
  ArrayX<double> g = f.grad();
  for (Eigen::Index i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.5, 1e-15);
}

TEST(HeteroCenterTriplet, OneDimensionalHandExampleGivesOnePointSix) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 1}, arr({0.0, 0.4, 0.5, 0.9}));
  CenterSet<double> cs = modality_centers(f, {1, 1, 2, 2},
                                          {Modality::visible, Modality::thermal,
                                           Modality::visible, Modality::thermal});
  EXPECT_NEAR(hetero_center_triplet(cs, 0.3).item(), 1.6, 1e-9);
}

TEST(HeteroCenterTriplet, CoincidentModalityCentersFarApartGiveExactZero) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 1}, arr({0.0, 0.0, 50.0, 50.0}));
  CenterSet<double> cs = modality_centers(f, {1, 1, 2, 2},
                                          {Modality::visible, Modality::thermal,
                                           Modality::visible, Modality::thermal});
  EXPECT_EQ(hetero_center_triplet(cs, 0.3).item(), 0.0);
}

TEST(HeteroCenterTriplet, SingleIdentityThrows) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({2, 1}, arr({0.0, 1.0}));
  CenterSet<double> cs = modality_centers(f, {3, 3}, {Modality::visible, Modality::thermal});
  EXPECT_THROW(hetero_center_triplet(cs, 0.3), DomainError);
}

TEST(HeteroCenterTriplet, MatchesBruteForceOnRandomSetsWithExactCounts) {
  Rng rng(121);
  for (int trial = 0; trial < 100; ++trial) {
    const int P = 2 + static_cast<int>(rng.below(7));
    const int K = 1 + static_cast<int>(rng.below(4));
    const Eigen::Index dims[] = {2, 8, 64};
    const Eigen::Index dim = dims[rng.below(3)];
    BatchDraw b = draw_batch(rng, P, K, dim);

    Tape<double> tape;
    Tensor<double> f = tape.constant({b.features.rows(), dim}, flat(b.features));
    CenterSet<double> cs = modality_centers(f, b.labels, b.modalities);
    DistanceCounter counter;
    Tensor<double> loss = hetero_center_triplet(cs, 0.3, &counter);

    std::vector<int> ids;
    oracles::MatD vis, th;
    oracles::brute_modality_centers(b.features, b.labels, b.modalities, ids, vis, th);
    const double expected = oracles::brute_hetero_center_triplet(vis, th, 0.3);
    EXPECT_NEAR(loss.item(), expected, 1e-5 * (1.0 + std::abs(expected)));
    EXPECT_GE(loss.item(), 0.0);

    const ComparisonCounts formula = comparison_counts(P, K);
    EXPECT_EQ(counter.positive, formula.hc_positive);
    EXPECT_EQ(counter.negative, formula.hc_negative);
  }
}

TEST(HeteroCenterTriplet, GradientMatchesFiniteDifferencesThroughCenters) {
  Rng rng(122);
  const int P = 3, K = 2;
  const Eigen::Index dim = 3;
  BatchDraw b;
  do {
    b = draw_batch(rng, P, K, dim);
  } while (!hc_mining_is_stable(b, 1e-2));

  std::vector<double> x(b.features.data(), b.features.data() + b.features.size());
  auto f = [&](const std::vector<double>& in) {
    Tape<double> tape;
    ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(in.data(), Eigen::Index(in.size()));
    Tensor<double> t = tape.constant({b.features.rows(), dim}, xa);
    return hetero_center_triplet(modality_centers(t, b.labels, b.modalities), 0.3).item();
  };

  Tape<double> tape;
  Tensor<double> t = tape.leaf({b.features.rows(), dim},
                               Eigen::Map<const ArrayX<double>>(x.data(), Eigen::Index(x.size())),
                               true);
  tape.backward(hetero_center_triplet(modality_centers(t, b.labels, b.modalities), 0.3));
  ArrayX<double> g = t.grad();
  std::vector<double> analytic(g.data(), g.data() + g.size());
  EXPECT_LE(oracles::max_grad_rel_err(f, x, analytic), 1e-5);
}

TEST(LearnedCenter, FeaturesAtTheirCentersGiveNearZero) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({2, 2}, arr({1, 2, 1, 2}));
  Tensor<double> c = tape.constant({1, 2}, arr({1, 2}));
  Tensor<double> loss = learned_center_loss(f, {4, 4},
                                            {Modality::visible, Modality::thermal}, c, {4});
  EXPECT_NEAR(loss.item(), 0.0, 1e-5);
}

TEST(LearnedCenter, HandExampleHalvesTheDistanceSum) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({2, 1}, arr({2.0, -4.0}));
  Tensor<double> c = tape.constant({1, 1}, arr({0.0}));
  Tensor<double> loss = learned_center_loss(f, {7, 7},
                                            {Modality::visible, Modality::thermal}, c, {7});
  EXPECT_NEAR(loss.item(), 3.0, 1e-9);
}

TEST(LearnedCenter, MissingCenterThrows) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({2, 1}, arr({2.0, -4.0}));
  Tensor<double> c = tape.constant({1, 1}, arr({0.0}));
  EXPECT_THROW(learned_center_loss(f, {7, 8}, {Modality::visible, Modality::thermal}, c, {7}),
               DomainError);
}

TEST(LearnedCenter, CenterGradientMatchesFiniteDifferencesAndPointsAtFeatures) {
  Rng rng(131);
  const Eigen::Index dim = 3;
  oracles::MatD feats(4, dim);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) feats(r, c) = rng.uniform(1.0, 2.0);
  std::vector<int> labels{0, 0, 1, 1};
  std::vector<Modality> mods{Modality::visible, Modality::thermal, Modality::visible,
                             Modality::thermal};
  std::vector<double> cx{5.0, 5.0, 5.0, -4.0, -4.0, -4.0};

  auto f = [&](const std::vector<double>& in) {
    Tape<double> tape;
    Tensor<double> ft = tape.constant({4, dim}, flat(feats));
    ArrayX<double> ca = Eigen::Map<const ArrayX<double>>(in.data(), Eigen::Index(in.size()));
    Tensor<double> ct = tape.constant({2, dim}, ca);
    return learned_center_loss(ft, labels, mods, ct, {0, 1}).item();
  };

  Tape<double> tape;
  Tensor<double> ft = tape.constant({4, dim}, flat(feats));
  Tensor<double> ct = tape.leaf({2, dim},
                                Eigen::Map<const ArrayX<double>>(cx.data(), 6), true);
  tape.backward(learned_center_loss(ft, labels, mods, ct, {0, 1}));
  ArrayX<double> g = ct.grad();
  std::vector<double> analytic(g.data(), g.data() + g.size());
  EXPECT_LE(oracles::max_grad_rel_err(f, cx, analytic), 1e-5);

  // descending the gradient moves center 0 toward its features (all > 0,
  // center far above) and center 1 upward (center far below)
  for (Eigen::Index c = 0; c < dim; ++c) {
    EXPECT_GT(g[c], 0.0);
    EXPECT_LT(g[dim + c], 0.0);
  }
}

TEST(HeteroCenterLoss, CoincidentCentersGiveNearZero) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 1}, arr({2.0, 2.0, -3.0, -3.0}));
  CenterSet<double> cs = modality_centers(f, {1, 1, 2, 2},
                                          {Modality::visible, Modality::thermal,
                                           Modality::visible, Modality::thermal});
  EXPECT_NEAR(hetero_center_loss(cs).item(), 0.0, 1e-5);
}

TEST(HeteroCenterLoss, SumsPerIdentityGaps) {
  Tape<double> tape;
  Tensor<double> f = tape.constant({4, 1}, arr({0.0, 0.4, 1.0, 1.5}));
  CenterSet<double> cs = modality_centers(f, {1, 1, 2, 2},
                                          {Modality::visible, Modality::thermal,
                                           Modality::visible, Modality::thermal});
  EXPECT_NEAR(hetero_center_loss(cs).item(), 0.9, 1e-9);

  // a third identity with coincident centers adds only the distance floor
  Tensor<double> f2 = tape.constant({6, 1}, arr({0.0, 0.4, 1.0, 1.5, 9.0, 9.0}));
  CenterSet<double> cs2 = modality_centers(f2, {1, 1, 2, 2, 3, 3},
                                           {Modality::visible, Modality::thermal,
                                            Modality::visible, Modality::thermal,
                                            Modality::visible, Modality::thermal});
  EXPECT_NEAR(hetero_center_loss(cs2).item(), 0.9, 1e-5);
}

TEST(HeteroCenterLoss, EqualsPositivePairSumInsideTripletLoss) {
  Rng rng(141);
  BatchDraw b = draw_batch(rng, 4, 2, 5);
  Tape<double> tape;
  Tensor<double> f = tape.constant({b.features.rows(), 5}, flat(b.features));
  CenterSet<double> cs = modality_centers(f, b.labels, b.modalities);
  std::vector<int> ids;
  oracles::MatD vis, th;
  oracles::brute_modality_centers(b.features, b.labels, b.modalities, ids, vis, th);
  double pos_sum = 0.0;
  for (Eigen::Index i = 0; i < vis.rows(); ++i) pos_sum += (vis.row(i) - th.row(i)).norm();
  EXPECT_NEAR(hetero_center_loss(cs).item(), pos_sum, 1e-9);
}

TEST(IdLoss, SmoothedTargetsFollowTheQDefinition) {
  Rng rng(151);
  const Eigen::Index N = 10;
  Tape<double> tape;
  ArrayX<double> lx(N);
  for (Eigen::Index i = 0; i < N; ++i) lx[i] = rng.uniform(-2, 2);
  Tensor<double> logits = tape.constant({1, N}, lx);
  const double loss = id_loss_label_smooth(logits, {3}, 0.1).item();
  oracles::VecD lv(N);
  for (Eigen::Index i = 0; i < N; ++i) lv[i] = lx[i];
  EXPECT_NEAR(loss, oracles::brute_label_smooth_ce(lv, 3, 0.1), 1e-12);
  // the q vector behind that oracle: on-target 0.91, off-target 0.01
  EXPECT_NEAR(1.0 - (9.0 / 10.0) * 0.1, 0.91, 1e-15);
  EXPECT_NEAR(0.1 / 10.0, 0.01, 1e-15);
}

TEST(IdLoss, ZeroSmoothingIsPlainCrossEntropy) {
  Rng rng(152);
  const Eigen::Index N = 6;
  Tape<double> tape;
  ArrayX<double> lx(2 * N);
  for (Eigen::Index i = 0; i < lx.size(); ++i) lx[i] = rng.uniform(-3, 3);
  Tensor<double> logits = tape.constant({2, N}, lx);
  const double loss = id_loss_label_smooth(logits, {2, 5}, 0.0).item();
  oracles::VecD r0(N), r1(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    r0[i] = lx[i];
    r1[i] = lx[N + i];
  }
  const double expected = 0.5 * (oracles::brute_label_smooth_ce(r0, 2, 0.0) +
                                 oracles::brute_label_smooth_ce(r1, 5, 0.0));
  EXPECT_NEAR(loss, expected, 1e-12);
}

TEST(IdLoss, UniformLogitsCostLogN) {
  Tape<double> tape;
  const Eigen::Index N = 10;
  Tensor<double> logits = tape.constant({1, N}, ArrayX<double>::Constant(N, 0.7));
  EXPECT_NEAR(id_loss_label_smooth(logits, {4}, 0.0).item(), std::log(10.0), 1e-12);
  EXPECT_NEAR(id_loss_label_smooth(logits, {4}, 0.1).item(), std::log(10.0), 1e-12);
}

TEST(IdLoss, RejectsBadLabelAndBadSmoothing) {
  Tape<double> tape;
  Tensor<double> logits = tape.constant({1, 4}, arr({0, 1, 2, 3}));
  EXPECT_THROW(id_loss_label_smooth(logits, {4}, 0.1), DomainError);
  EXPECT_THROW(id_loss_label_smooth(logits, {-1}, 0.1), DomainError);
  EXPECT_THROW(id_loss_label_smooth(logits, {0}, 1.0), DomainError);
}

TEST(IdLoss, GradientMatchesFiniteDifferences) {
  Rng rng(153);
  const Eigen::Index N = 5;
  std::vector<double> x(2 * N);
  for (double& v : x) v = rng.uniform(-2, 2);
  std::vector<int> labels{1, 3};
  auto f = [&](const std::vector<double>& in) {
    Tape<double> tape;
    ArrayX<double> xa = Eigen::Map<const ArrayX<double>>(in.data(), Eigen::Index(in.size()));
    Tensor<double> t = tape.constant({2, N}, xa);
    return id_loss_label_smooth(t, labels, 0.1).item();
  };
  Tape<double> tape;
  Tensor<double> t = tape.leaf({2, N}, Eigen::Map<const ArrayX<double>>(x.data(), 2 * N), true);
  tape.backward(id_loss_label_smooth(t, labels, 0.1));
  ArrayX<double> g = t.grad();
  std::vector<double> analytic(g.data(), g.data() + g.size());
  EXPECT_LE(oracles::max_grad_rel_err(f, x, analytic), 1e-5);
}

TEST(Overall, LambdaZeroSuppressesPartTripletTerms) {
  Rng rng(161);
  const int P = 3, K = 2;
  const Eigen::Index d = 4, N = 3;
  BatchDraw b = draw_batch(rng, P, K, d);
  Tape<double> tape;
  std::vector<Tensor<double>> parts{
      tape.constant({b.features.rows(), d}, flat(b.features)),
      tape.constant({b.features.rows(), d}, flat(b.features) * 0.5 + 1.0)};
  std::vector<Tensor<double>> logits;
  for (int j = 0; j < 2; ++j) {
    ArrayX<double> lx(b.features.rows() * N);
    for (Eigen::Index i = 0; i < lx.size(); ++i) lx[i] = rng.uniform(-1, 1);
    logits.push_back(tape.constant({b.features.rows(), N}, lx));
  }
  Tensor<double> cat = concat_cols(parts);

  LossConfig<double> cfg;
  cfg.rho = 0.3;
  cfg.lambda = 0.0;
  cfg.xi = 0.1;
  cfg.num_classes = N;
  const double loss = overall_loss(logits, parts, cat, b.labels, b.modalities, cfg).item();

  double expected =
      hetero_center_triplet(modality_centers(cat, b.labels, b.modalities), 0.3).item();
  for (int j = 0; j < 2; ++j)
    expected += id_loss_label_smooth(logits[static_cast<std::size_t>(j)], b.labels, 0.1).item();
  EXPECT_NEAR(loss, expected, 1e-12);
}

TEST(Overall, SinglePartCompositionIncludesWeightedTriplet) {
  Rng rng(162);
  const int P = 2, K = 2;
  const Eigen::Index d = 3, N = 2;
  BatchDraw b = draw_batch(rng, P, K, d);
  Tape<double> tape;
  Tensor<double> part = tape.constant({b.features.rows(), d}, flat(b.features));
  ArrayX<double> lx(b.features.rows() * N);
  for (Eigen::Index i = 0; i < lx.size(); ++i) lx[i] = rng.uniform(-1, 1);
  Tensor<double> logits = tape.constant({b.features.rows(), N}, lx);

  LossConfig<double> cfg;
  cfg.rho = 0.3;
  cfg.lambda = 0.7;
  cfg.xi = 0.1;
  cfg.num_classes = N;
  const double loss = overall_loss<double>({logits}, {part}, part, b.labels, b.modalities,
                                           cfg).item();
  const double tri = hetero_center_triplet(modality_centers(part, b.labels, b.modalities),
                                           0.3).item();
  const double id = id_loss_label_smooth(logits, b.labels, 0.1).item();
  EXPECT_NEAR(loss, tri + id + 0.7 * tri, 1e-12);
}

TEST(Overall, RejectsMismatchedClassCount) {
  Rng rng(163);
  BatchDraw b = draw_batch(rng, 2, 2, 3);
  Tape<double> tape;
  Tensor<double> part = tape.constant({b.features.rows(), 3}, flat(b.features));
  Tensor<double> logits = tape.constant({b.features.rows(), 4},
                                        ArrayX<double>::Ones(b.features.rows() * 4));
  LossConfig<double> cfg;
  cfg.num_classes = 5;
  EXPECT_THROW(
      overall_loss<double>({logits}, {part}, part, b.labels, b.modalities, cfg).item(),
      ShapeError);
}

TEST(Counts, FullScaleBatchRowAndFormulas) {
  const ComparisonCounts c = comparison_counts(8, 4);
  EXPECT_EQ(c.bh_positive, 448);
  EXPECT_EQ(c.bh_negative, 3584);
  EXPECT_EQ(c.hc_positive, 16);
  EXPECT_EQ(c.hc_negative, 224);
}

TEST(Counts, FormulasAgreeWithExplicitEnumeration) {
  for (int P = 2; P <= 5; ++P)
    for (int K = 1; K <= 4; ++K) {
      const ComparisonCounts f = comparison_counts(P, K);
      const oracles::PairCounts e = oracles::enumerate_pair_counts(P, K);
      EXPECT_EQ(f.bh_positive, e.bh_positive) << "P=" << P << " K=" << K;
      EXPECT_EQ(f.bh_negative, e.bh_negative) << "P=" << P << " K=" << K;
      EXPECT_EQ(f.hc_positive, e.hc_positive) << "P=" << P << " K=" << K;
      EXPECT_EQ(f.hc_negative, e.hc_negative) << "P=" << P << " K=" << K;
    }
}

TEST(Counts, BatchHardAndCenterCountsCoincideAtKOne) {
  // with one sample per identity and modality the 2PK batch IS the center
  // set, so both mining schemes scan identical pair sets
  const ComparisonCounts c = comparison_counts(2, 1);
  EXPECT_EQ(c.bh_positive, c.hc_positive);
  EXPECT_EQ(c.bh_negative, c.hc_negative);
  EXPECT_EQ(c.bh_positive, 4);
  EXPECT_EQ(c.bh_negative, 8);
  const oracles::PairCounts e = oracles::enumerate_pair_counts(2, 1);
  EXPECT_EQ(e.bh_positive, 4);
  EXPECT_EQ(e.bh_negative, 8);
}

TEST(Counts, RejectsDegenerateShapes) {
  EXPECT_THROW(comparison_counts(1, 4), DomainError);
  EXPECT_THROW(comparison_counts(4, 0), DomainError);
}

TEST(Invariants, TripletFamilyIsTranslationInvariant) {
  Rng rng(171);
  BatchDraw b = draw_batch(rng, 3, 2, 4);
  Tape<double> tape;
  Tensor<double> f = tape.constant({b.features.rows(), 4}, flat(b.features));
  CenterSet<double> cs = modality_centers(f, b.labels, b.modalities);
  const double tri = hetero_center_triplet(cs, 0.3).item();
  const double hc = hetero_center_loss(cs).item();

  oracles::MatD shifted = b.features;
  for (Eigen::Index r = 0; r < shifted.rows(); ++r)
    for (Eigen::Index c = 0; c < 4; ++c) shifted(r, c) += 5.5;
  Tensor<double> f2 = tape.constant({shifted.rows(), 4}, flat(shifted));
  CenterSet<double> cs2 = modality_centers(f2, b.labels, b.modalities);
  EXPECT_NEAR(hetero_center_triplet(cs2, 0.3).item(), tri, 1e-8);
  EXPECT_NEAR(hetero_center_loss(cs2).item(), hc, 1e-8);
}

}  // namespace
}  // namespace xmreid

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "xmreid/common.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

template <typename S>
struct LossConfig {
  S rho = S(0.3);
  S lambda = S(1);
  S xi = S(0.1);
  Eigen::Index num_classes = 0;

  void validate() const {
    if (!(rho >= S(0))) throw ConfigError("rho must be >= 0");
    if (!(lambda >= S(0))) throw ConfigError("lambda must be >= 0");
    if (!(xi >= S(0) && xi < S(1))) throw ConfigError("xi must lie in [0, 1)");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  }
};

/// Counts distance evaluations performed while mining, split by pair kind.
struct DistanceCounter {
  long long positive = 0;
  long long negative = 0;
};

/// Floor inside every Euclidean sqrt; keeps the distance gradient finite at
/// coincident points.
constexpr double kDistanceFloor = 1e-12;

/// Row-aligned Euclidean distances between two [M, D] tensors -> [M, 1].
template <typename S>
Tensor<S> paired_row_distance(const Tensor<S>& a, const Tensor<S>& b) {
  Tensor<S> d = sub(a, b);
  Tensor<S> sq = reduce_sum(mul(d, d), Axis::cols);
  return pow_scalar(clamp_min(sq, static_cast<S>(kDistanceFloor)), S(0.5));
}

namespace detail {

/// Off-tape distance for mining decisions. Accumulation order and the final
/// power match the on-tape path bit for bit, so the mined indices are the
/// argmins of the distances the graph will actually compute.
template <typename S>
S mining_distance(const ArrayX<S>& values, Eigen::Index cols, Eigen::Index a, Eigen::Index b) {
  S sumsq = S(0);
  for (Eigen::Index k = 0; k < cols; ++k) {
    const S d = values[a * cols + k] - values[b * cols + k];
    sumsq += d * d;
  }
  sumsq = std::max(sumsq, static_cast<S>(kDistanceFloor));
  return std::pow(sumsq, S(0.5));
}

}  // namespace detail

/// Batch-hard triplet loss: per anchor, hinge of margin plus the farthest
/// same-label distance minus the nearest other-label distance, summed over
/// all anchors. Mining ignores modality tags and breaks ties toward the
/// lowest index; only the mined pairs enter the gradient graph.
template <typename S>
Tensor<S> batch_hard_triplet(const Tensor<S>& features, const std::vector<int>& labels, S rho,
                             DistanceCounter* counter = nullptr) {
  const Eigen::Index B = features.rows(), D = features.cols();
  if (static_cast<std::size_t>(B) != labels.size())
    throw ShapeError("batch_hard_triplet: " + std::to_string(B) + " feature rows vs " +
                     std::to_string(labels.size()) + " labels");
  std::map<int, int> occurrences;
  for (int l : labels) ++occurrences[l];
  if (occurrences.size() < 2)
    throw DomainError("batch_hard_triplet: need at least 2 distinct labels");
  for (const auto& [label, n] : occurrences)
    if (n < 2)
      throw DomainError("batch_hard_triplet: label " + std::to_string(label) +
                        " occurs once; no positive pair exists");

  const ArrayX<S> vals = features.values();
  std::vector<Eigen::Index> hardest_pos(static_cast<std::size_t>(B)),
      hardest_neg(static_cast<std::size_t>(B));
  for (Eigen::Index a = 0; a < B; ++a) {
    S best_pos = -std::numeric_limits<S>::infinity();
    S best_neg = std::numeric_limits<S>::infinity();
    Eigen::Index pos_idx = -1, neg_idx = -1;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (b == a) continue;
      const S d = detail::mining_distance(vals, D, a, b);
      if (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(a)]) {
        if (counter) ++counter->positive;
        if (d > best_pos) {
          best_pos = d;
          pos_idx = b;
        }
      } else {
        if (counter) ++counter->negative;
        if (d < best_neg) {
          best_neg = d;
          neg_idx = b;
        }
      }
    }
    hardest_pos[static_cast<std::size_t>(a)] = pos_idx;
    hardest_neg[static_cast<std::size_t>(a)] = neg_idx;
  }

  std::vector<Eigen::Index> anchors(static_cast<std::size_t>(B));
  for (Eigen::Index a = 0; a < B; ++a) anchors[static_cast<std::size_t>(a)] = a;
  Tensor<S> fa = gather_rows(features, anchors);
  Tensor<S> dpos = paired_row_distance(fa, gather_rows(features, hardest_pos));
  Tensor<S> dneg = paired_row_distance(fa, gather_rows(features, hardest_neg));
  Tape<S>* tape = features.tape();
  Tensor<S> hinge = relu(add(sub(dpos, dneg), tape->scalar(rho)));
  return reduce_sum(hinge);
}

/// Per-identity, per-modality feature centers, differentiable through the
/// group means. Row 2i holds the visible center of identity_ids[i], row
/// 2i + 1 its thermal center.
template <typename S>
struct CenterSet {
  Tensor<S> centers;              // [2P, D]
  std::vector<int> identity_ids;  // ascending

  Eigen::Index num_identities() const {
    return static_cast<Eigen::Index>(identity_ids.size());
  }
};

template <typename S>
CenterSet<S> modality_centers(const Tensor<S>& features, const std::vector<int>& labels,
                              const std::vector<Modality>& modalities) {
  const Eigen::Index B = features.rows();
  if (static_cast<std::size_t>(B) != labels.size() || labels.size() != modalities.size())
    throw ShapeError("modality_centers: features, labels and modalities disagree in length");
  if (B == 0) throw ShapeError("modality_centers: empty batch");

  std::vector<int> ids = labels;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::vector<Eigen::Index> gathered;
  std::vector<Eigen::Index> sizes;
  for (int id : ids)
    for (Modality m : {Modality::visible, Modality::thermal}) {
      Eigen::Index count = 0;
      for (Eigen::Index r = 0; r < B; ++r)
        if (labels[static_cast<std::size_t>(r)] == id &&
            modalities[static_cast<std::size_t>(r)] == m) {
          gathered.push_back(r);
          ++count;
        }
      if (count == 0)
        throw DomainError("modality_centers: identity " + std::to_string(id) + " has no " +
                          modality_name(m) + " samples");
      sizes.push_back(count);
    }

  CenterSet<S> out;
  out.centers = segment_mean(gather_rows(features, gathered), sizes);
  out.identity_ids = std::move(ids);
  return out;
}

/// Hetero-center triplet loss: for each identity, each modality center
/// anchors one hinge against its opposite-modality center as the positive
/// and the nearest center of any other identity (either modality) as the
/// negative; hinges are summed.
template <typename S>
Tensor<S> hetero_center_triplet(const CenterSet<S>& centers, S rho,
                                DistanceCounter* counter = nullptr) {
  const Eigen::Index P = centers.num_identities();
  if (P < 2) throw DomainError("hetero_center_triplet: need >= 2 identities, got " +
                               std::to_string(P));
  const Eigen::Index rows = 2 * P, D = centers.centers.cols();
  const ArrayX<S> vals = centers.centers.values();

  std::vector<Eigen::Index> anchors, positives, negatives;
  for (Eigen::Index a = 0; a < rows; ++a) {
    anchors.push_back(a);
    positives.push_back(a % 2 == 0 ? a + 1 : a - 1);
    if (counter) ++counter->positive;
    S best = std::numeric_limits<S>::infinity();
    Eigen::Index best_idx = -1;
    for (Eigen::Index b = 0; b < rows; ++b) {
      if (b / 2 == a / 2) continue;
      if (counter) ++counter->negative;
      const S d = detail::mining_distance(vals, D, a, b);
      if (d < best) {
        best = d;
        best_idx = b;
      }
    }
    negatives.push_back(best_idx);
  }

  Tensor<S> ca = gather_rows(centers.centers, anchors);
  Tensor<S> dpos = paired_row_distance(ca, gather_rows(centers.centers, positives));
  Tensor<S> dneg = paired_row_distance(ca, gather_rows(centers.centers, negatives));
  Tape<S>* tape = centers.centers.tape();
  Tensor<S> hinge = relu(add(sub(dpos, dneg), tape->scalar(rho)));
  return reduce_sum(hinge);
}

/// Learned-center loss: half the summed Euclidean distances from each
/// feature to its identity's learned center; the center table is shared
/// across modalities and receives gradients.
template <typename S>
Tensor<S> learned_center_loss(const Tensor<S>& features, const std::vector<int>& labels,
                              const std::vector<Modality>& modalities,
                              const Tensor<S>& center_params,
                              const std::vector<int>& center_labels) {
  const Eigen::Index B = features.rows();
  if (static_cast<std::size_t>(B) != labels.size() || labels.size() != modalities.size())
    throw ShapeError("learned_center_loss: features, labels and modalities disagree in length");
  if (static_cast<std::size_t>(center_params.rows()) != center_labels.size())
    throw ShapeError("learned_center_loss: center rows vs center labels mismatch");
  if (features.cols() != center_params.cols())
    throw ShapeError("learned_center_loss: feature dim " + std::to_string(features.cols()) +
                     " vs center dim " + std::to_string(center_params.cols()));

  std::map<int, Eigen::Index> row_of;
  for (std::size_t i = 0; i < center_labels.size(); ++i)
    row_of[center_labels[i]] = static_cast<Eigen::Index>(i);
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(B));
  for (int l : labels) {
    auto it = row_of.find(l);
    if (it == row_of.end())
      throw DomainError("learned_center_loss: no center for label " + std::to_string(l));
    rows.push_back(it->second);
  }
  Tensor<S> selected = gather_rows(center_params, rows);
  Tensor<S> d = paired_row_distance(features, selected);
  return scale(reduce_sum(d), S(0.5));
}

/// Summed per-identity distance between the two modality centers; exactly
/// the positive-pair part of the hetero-center triplet loss, before mining.
template <typename S>
Tensor<S> hetero_center_loss(const CenterSet<S>& centers) {
  const Eigen::Index P = centers.num_identities();
  if (P < 1) throw DomainError("hetero_center_loss: empty center set");
  std::vector<Eigen::Index> vis, th;
  for (Eigen::Index i = 0; i < P; ++i) {
    vis.push_back(2 * i);
    th.push_back(2 * i + 1);
  }
  Tensor<S> d = paired_row_distance(gather_rows(centers.centers, vis),
                                    gather_rows(centers.centers, th));
  return reduce_sum(d);
}

/// Label-smoothed identification loss, averaged over the batch rows. The
/// true class gets target 1 - ((N-1)/N) xi, every other class xi/N.
template <typename S>
Tensor<S> id_loss_label_smooth(const Tensor<S>& logits, const std::vector<int>& labels, S xi) {
  const Eigen::Index B = logits.rows(), N = logits.cols();
  if (N < 2) throw DomainError("id_loss_label_smooth: need >= 2 classes");
  if (!(xi >= S(0) && xi < S(1))) throw DomainError("id_loss_label_smooth: xi must be in [0, 1)");
  if (static_cast<std::size_t>(B) != labels.size())
    throw ShapeError("id_loss_label_smooth: logits rows vs labels mismatch");

  ArrayX<S> q(B * N);
  const S off = xi / static_cast<S>(N);
  const S on = S(1) - (static_cast<S>(N - 1) / static_cast<S>(N)) * xi;
  for (Eigen::Index r = 0; r < B; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= N)
      throw DomainError("id_loss_label_smooth: label " + std::to_string(y) +
                        " outside [0, " + std::to_string(N) + ")");
    for (Eigen::Index c = 0; c < N; ++c) q[r * N + c] = c == y ? on : off;
  }
  Tape<S>* tape = logits.tape();
  Tensor<S> targets = tape->constant({B, N}, std::move(q), "smooth_targets");
  Tensor<S> ll = mul(log_softmax(logits), targets);
  return scale(reduce_sum(ll), S(-1) / static_cast<S>(B));
}

/// Overall objective: hetero-center triplet on the concatenated feature,
/// plus per-part identification loss and lambda-weighted per-part
/// hetero-center triplet loss.
template <typename S>
Tensor<S> overall_loss(const std::vector<Tensor<S>>& part_logits,
                       const std::vector<Tensor<S>>& part_features,
                       const Tensor<S>& concatenated, const std::vector<int>& labels,
                       const std::vector<Modality>& modalities, const LossConfig<S>& cfg) {
  cfg.validate();
  if (part_logits.empty() || part_logits.size() != part_features.size())
    throw ShapeError("overall_loss: need matching, nonempty part logits and features");
  Tensor<S> total = hetero_center_triplet(modality_centers(concatenated, labels, modalities),
                                          cfg.rho);
  for (std::size_t j = 0; j < part_logits.size(); ++j) {
    if (part_logits[j].cols() != cfg.num_classes)
      throw ShapeError("overall_loss: part " + std::to_string(j) + " has " +
                       std::to_string(part_logits[j].cols()) + " logits, config says " +
                       std::to_string(cfg.num_classes));
    total = add(total, id_loss_label_smooth(part_logits[j], labels, cfg.xi));
    if (cfg.lambda != S(0)) {
      Tensor<S> part_tri = hetero_center_triplet(
          modality_centers(part_features[j], labels, modalities), cfg.rho);
      total = add(total, scale(part_tri, cfg.lambda));
    }
  }
  return total;
}

/// Closed-form mined-comparison counts for a 2PK batch: batch-hard scans
/// 2PK(2K-1) positives and 2PK*2(P-1)K negatives; the center variant scans
/// 2P positives and 2P*2(P-1) negatives.
struct ComparisonCounts {
  long long bh_positive = 0;
  long long bh_negative = 0;
  long long hc_positive = 0;
  long long hc_negative = 0;
};

inline ComparisonCounts comparison_counts(long long P, long long K) {
  if (P < 2) throw DomainError("comparison_counts: P must be >= 2");
  if (K < 1) throw DomainError("comparison_counts: K must be >= 1");
  ComparisonCounts out;
  out.bh_positive = 2 * P * K * (2 * K - 1);
  out.bh_negative = 2 * P * K * 2 * (P - 1) * K;
  out.hc_positive = 2 * P;
  out.hc_negative = 2 * P * 2 * (P - 1);
  return out;
}

}  // namespace xmreid

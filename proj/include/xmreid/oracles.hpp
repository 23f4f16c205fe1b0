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

// Reference implementations used to check the production path. Everything
// here is written in the most literal form possible (plain loops, full
// enumeration, central differences) and must stay independent of the tape.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "xmreid/common.hpp"
#include "xmreid/errors.hpp"

namespace xmreid::oracles {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecD = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// finite differences

/// Central finite-difference gradient of a scalar function of a flat vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Relative error with a unit floor, so near-zero gradients compare absolutely.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(a) + std::abs(b));
}

/// Largest componentwise rel_err between an analytic gradient and central
/// finite differences.
inline double max_grad_rel_err(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& x, const std::vector<double>& analytic,
                               double h = 1e-4) {
  const std::vector<double> fd = finite_diff(f, x, h);
  if (fd.size() != analytic.size())
    throw ShapeError("max_grad_rel_err: gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

// ---------------------------------------------------------------------------
// losses by full enumeration

inline double euclid(const MatD& m, Eigen::Index a, Eigen::Index b) {
  return (m.row(a) - m.row(b)).norm();
}

/// Batch-hard triplet by scanning every anchor/positive/negative explicitly.
inline double brute_batch_hard_triplet(const MatD& features, const std::vector<int>& labels,
                                       double rho) {
  const Eigen::Index B = features.rows();
  double total = 0.0;
  for (Eigen::Index a = 0; a < B; ++a) {
    double hardest_pos = -std::numeric_limits<double>::infinity();
    double hardest_neg = std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < B; ++b) {
      if (b == a) continue;
      const double d = euclid(features, a, b);
      if (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(a)])
        hardest_pos = std::max(hardest_pos, d);
      else
        hardest_neg = std::min(hardest_neg, d);
    }
    total += std::max(0.0, rho + hardest_pos - hardest_neg);
  }
  return total;
}

/// Hetero-center triplet by enumerating all center pairs. Centers are given
/// as P visible rows and P thermal rows aligned by identity.
inline double brute_hetero_center_triplet(const MatD& visible, const MatD& thermal, double rho) {
  const Eigen::Index P = visible.rows();
  auto center = [&](Eigen::Index i, int mod) -> Eigen::RowVectorXd {
    return mod == 0 ? visible.row(i) : thermal.row(i);
  };
  double total = 0.0;
  for (Eigen::Index i = 0; i < P; ++i) {
    for (int mod = 0; mod < 2; ++mod) {
      const Eigen::RowVectorXd anchor = center(i, mod);
      const double dpos = (anchor - center(i, 1 - mod)).norm();
      double dneg = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < P; ++j) {
        if (j == i) continue;
        for (int nm = 0; nm < 2; ++nm)
          dneg = std::min(dneg, (anchor - center(j, nm)).norm());
      }
      total += std::max(0.0, rho + dpos - dneg);
    }
  }
  return total;
}

/// Per-(identity, modality) means by naive accumulation.
inline void brute_modality_centers(const MatD& features, const std::vector<int>& labels,
                                   const std::vector<Modality>& modalities,
                                   std::vector<int>& out_ids, MatD& out_visible,
                                   MatD& out_thermal) {
  out_ids.clear();
  for (int l : labels)
    if (std::find(out_ids.begin(), out_ids.end(), l) == out_ids.end()) out_ids.push_back(l);
  std::sort(out_ids.begin(), out_ids.end());
  const Eigen::Index P = static_cast<Eigen::Index>(out_ids.size());
  out_visible = MatD::Zero(P, features.cols());
  out_thermal = MatD::Zero(P, features.cols());
  for (Eigen::Index i = 0; i < P; ++i) {
    for (int mod = 0; mod < 2; ++mod) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.cols());
      int count = 0;
      for (Eigen::Index r = 0; r < features.rows(); ++r) {
        if (labels[static_cast<std::size_t>(r)] != out_ids[static_cast<std::size_t>(i)]) continue;
        if (static_cast<int>(modalities[static_cast<std::size_t>(r)]) != mod) continue;
        sum += features.row(r);
        ++count;
      }
      if (count == 0) throw DomainError("brute_modality_centers: empty identity-modality group");
      if (mod == 0) out_visible.row(i) = sum / count;
      else out_thermal.row(i) = sum / count;
    }
  }
}

/// Label-smoothed cross entropy of one logit row, by direct evaluation.
inline double brute_label_smooth_ce(const VecD& logits, int label, double xi) {
  const Eigen::Index N = logits.size();
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) z += std::exp(logits[i] - mx);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double q = i == label ? 1.0 - (double(N - 1) / double(N)) * xi : xi / double(N);
    const double logp = logits[i] - mx - std::log(z);
    loss -= q * logp;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Table-style comparison counts by direct pair enumeration

struct PairCounts {
  long long bh_positive = 0;
  long long bh_negative = 0;
  long long hc_positive = 0;
  long long hc_negative = 0;
};

/// Counts mined comparisons by walking a synthetic 2PK batch sample by
/// sample, never through the closed-form expressions.
inline PairCounts enumerate_pair_counts(int P, int K) {
  PairCounts out;
  std::vector<int> labels;
  for (int i = 0; i < P; ++i)
    for (int k = 0; k < 2 * K; ++k) labels.push_back(i);
  const int B = static_cast<int>(labels.size());
  for (int a = 0; a < B; ++a)
    for (int b = 0; b < B; ++b) {
      if (b == a) continue;
      if (labels[static_cast<std::size_t>(b)] == labels[static_cast<std::size_t>(a)])
        ++out.bh_positive;
      else
        ++out.bh_negative;
    }
  // centers: one per (identity, modality)
  for (int i = 0; i < P; ++i)
    for (int mod = 0; mod < 2; ++mod) {
      (void)mod;
      ++out.hc_positive;  // the opposite-modality center of the same identity
      out.hc_negative += 2 * (P - 1);
    }
  return out;
}

// ---------------------------------------------------------------------------
// retrieval metrics by full sort

struct BruteMetrics {
  std::vector<double> cmc;
  double map = 0.0;
  double minp = 0.0;
};

/// CMC/mAP/mINP computed per query with an explicit stable sort and literal
/// definitions. Ties broken by gallery index.
inline BruteMetrics brute_metrics(const MatD& query, const std::vector<int>& query_labels,
                                  const MatD& gallery, const std::vector<int>& gallery_labels) {
  const Eigen::Index Q = query.rows(), G = gallery.rows();
  BruteMetrics out;
  out.cmc.assign(static_cast<std::size_t>(G), 0.0);
  double ap_sum = 0.0, inp_sum = 0.0;
  for (Eigen::Index q = 0; q < Q; ++q) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(G));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> dist(static_cast<std::size_t>(G));
    for (Eigen::Index g = 0; g < G; ++g)
      dist[static_cast<std::size_t>(g)] = (query.row(q) - gallery.row(g)).norm();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    int good = 0;
    double ap = 0.0;
    Eigen::Index last_rank = 0, first_rank = 0;
    for (Eigen::Index r = 0; r < G; ++r) {
      if (gallery_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] ==
          query_labels[static_cast<std::size_t>(q)]) {
        ++good;
        ap += double(good) / double(r + 1);
        last_rank = r + 1;
        if (good == 1) first_rank = r + 1;
      }
    }
    if (good == 0)
      throw DomainError("brute_metrics: query label " +
                        std::to_string(query_labels[static_cast<std::size_t>(q)]) +
                        " has no gallery match");
    ap_sum += ap / good;
    inp_sum += double(good) / double(last_rank);
    for (Eigen::Index r = first_rank - 1; r < G; ++r) out.cmc[static_cast<std::size_t>(r)] += 1.0;
  }
  for (double& v : out.cmc) v /= double(Q);
  out.map = ap_sum / double(Q);
  out.minp = inp_sum / double(Q);
  return out;
}

}  // namespace xmreid::oracles

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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xmreid/common.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/sampling.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

struct EmbeddingSet {
  MatrixRM<float> vectors;  // [M, dim]
  std::vector<int> labels;
  std::vector<Modality> modalities;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }

  void validate() const {
    if (static_cast<std::size_t>(vectors.rows()) != labels.size() ||
        labels.size() != modalities.size())
      throw ShapeError("embedding set: vectors, labels and modalities disagree in length");
    for (Eigen::Index r = 0; r < vectors.rows(); ++r)
      for (Eigen::Index c = 0; c < vectors.cols(); ++c)
        if (!std::isfinite(vectors(r, c)))
          throw NumericError("embedding set: non-finite value in vector " + std::to_string(r));
  }
};

inline EmbeddingSet subset_by_modality(const EmbeddingSet& set, Modality m) {
  EmbeddingSet out;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < set.size(); ++r)
    if (set.modalities[static_cast<std::size_t>(r)] == m) rows.push_back(r);
  out.vectors.resize(static_cast<Eigen::Index>(rows.size()), set.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.vectors.row(static_cast<Eigen::Index>(i)) = set.vectors.row(rows[i]);
    out.labels.push_back(set.labels[static_cast<std::size_t>(rows[i])]);
    out.modalities.push_back(m);
  }
  return out;
}

/// Scales every vector to unit Euclidean norm; norms accumulate in double.
inline EmbeddingSet l2_normalize(const EmbeddingSet& set) {
  set.validate();
  EmbeddingSet out = set;
  for (Eigen::Index r = 0; r < out.vectors.rows(); ++r) {
    double sumsq = 0.0;
    for (Eigen::Index c = 0; c < out.vectors.cols(); ++c)
      sumsq += static_cast<double>(out.vectors(r, c)) * out.vectors(r, c);
    if (sumsq == 0.0)
      throw DomainError("l2_normalize: vector " + std::to_string(r) + " has zero norm");
    const float inv = static_cast<float>(1.0 / std::sqrt(sumsq));
    out.vectors.row(r) *= inv;
  }
  return out;
}

/// Per-query gallery ranking by ascending Euclidean distance; equal
/// distances rank by gallery index.
inline std::vector<std::vector<Eigen::Index>> rank_gallery(const EmbeddingSet& query,
                                                           const EmbeddingSet& gallery) {
  if (query.dim() != gallery.dim())
    throw ShapeError("rank_gallery: query dim " + std::to_string(query.dim()) +
                     " vs gallery dim " + std::to_string(gallery.dim()));
  const Eigen::Index Q = query.size(), G = gallery.size();
  std::vector<std::vector<Eigen::Index>> ranked(static_cast<std::size_t>(Q));
  std::vector<std::pair<double, Eigen::Index>> row(static_cast<std::size_t>(G));
  for (Eigen::Index q = 0; q < Q; ++q) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const double d =
          (query.vectors.row(q).cast<double>() - gallery.vectors.row(g).cast<double>()).norm();
      row[static_cast<std::size_t>(g)] = {d, g};
    }
    std::sort(row.begin(), row.end());
    auto& out = ranked[static_cast<std::size_t>(q)];
    out.resize(static_cast<std::size_t>(G));
    for (Eigen::Index g = 0; g < G; ++g) out[static_cast<std::size_t>(g)] = row[g].second;
  }
  return ranked;
}

struct EvalReport {
  std::vector<double> cmc;  // rank-r accuracy, r = 1..gallery size
  double map = 0.0;
  double minp = 0.0;
  int num_queries = 0;
  std::string config_echo;
};

/// CMC, mAP and mINP over a ranked gallery. AP averages k / rank_k over a
/// query's correct matches; INP is G / rank_G with rank_G the position of
/// the hardest (last) correct match.
inline EvalReport compute_metrics(const EmbeddingSet& query, const EmbeddingSet& gallery) {
  query.validate();
  gallery.validate();
  if (query.size() == 0) throw ShapeError("compute_metrics: empty query set");
  if (gallery.size() == 0) throw ShapeError("compute_metrics: empty gallery");
  const std::vector<std::vector<Eigen::Index>> ranked = rank_gallery(query, gallery);

  const Eigen::Index Q = query.size(), G = gallery.size();
  std::vector<double> first_match_hist(static_cast<std::size_t>(G), 0.0);
  double ap_sum = 0.0, inp_sum = 0.0;
  for (Eigen::Index q = 0; q < Q; ++q) {
    const int label = query.labels[static_cast<std::size_t>(q)];
    long long matches = 0;
    long long last_rank = 0;
    double ap = 0.0;
    long long first_rank = 0;
    const auto& order = ranked[static_cast<std::size_t>(q)];
    for (Eigen::Index r = 0; r < G; ++r) {
      if (gallery.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] != label)
        continue;
      ++matches;
      last_rank = r + 1;
      if (matches == 1) first_rank = r + 1;
      ap += static_cast<double>(matches) / static_cast<double>(r + 1);
    }
    if (matches == 0)
      throw DomainError("compute_metrics: query label " + std::to_string(label) +
                        " has no gallery match");
    ap_sum += ap / static_cast<double>(matches);
    inp_sum += static_cast<double>(matches) / static_cast<double>(last_rank);
    first_match_hist[static_cast<std::size_t>(first_rank - 1)] += 1.0;
  }

  EvalReport report;
  report.num_queries = static_cast<int>(Q);
  report.map = ap_sum / static_cast<double>(Q);
  report.minp = inp_sum / static_cast<double>(Q);
  report.cmc.resize(static_cast<std::size_t>(G));
  double cum = 0.0;
  for (Eigen::Index r = 0; r < G; ++r) {
    cum += first_match_hist[static_cast<std::size_t>(r)];
    report.cmc[static_cast<std::size_t>(r)] = cum / static_cast<double>(Q);
  }
  return report;
}

// ---------------------------------------------------------------------------
// embedding export/import: header (M, dim), rows of label, modality, floats

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_embeddings: cannot open " + path.string());
  detail::write_u32(out, static_cast<std::uint32_t>(set.size()));
  detail::write_u32(out, static_cast<std::uint32_t>(set.dim()));
  for (Eigen::Index r = 0; r < set.size(); ++r) {
    detail::write_u32(out, std::bit_cast<std::uint32_t>(
                               static_cast<std::int32_t>(set.labels[static_cast<std::size_t>(r)])));
    detail::write_u32(out, static_cast<std::uint32_t>(set.modalities[static_cast<std::size_t>(r)]));
    for (Eigen::Index c = 0; c < set.dim(); ++c)
      detail::write_u32(out, std::bit_cast<std::uint32_t>(set.vectors(r, c)));
  }
  if (!out) throw IoError("save_embeddings: write failed for " + path.string());
}

inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_embeddings: cannot open " + path.string());
  std::uint32_t m = 0, dim = 0;
  if (!detail::read_u32(in, m) || !detail::read_u32(in, dim))
    throw IoError("load_embeddings: truncated header in " + path.string());
  EmbeddingSet set;
  set.vectors.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim));
  for (std::uint32_t r = 0; r < m; ++r) {
    std::uint32_t label = 0, modality = 0, bits = 0;
    if (!detail::read_u32(in, label) || !detail::read_u32(in, modality))
      throw IoError("load_embeddings: truncated row in " + path.string());
    set.labels.push_back(static_cast<int>(std::bit_cast<std::int32_t>(label)));
    if (modality > 1)
      throw IoError("load_embeddings: bad modality tag in " + path.string());
    set.modalities.push_back(static_cast<Modality>(modality));
    for (std::uint32_t c = 0; c < dim; ++c) {
      if (!detail::read_u32(in, bits))
        throw IoError("load_embeddings: truncated row in " + path.string());
      set.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::bit_cast<float>(bits);
    }
  }
  return set;
}

/// Textual variant for external plotting: label,modality,f0,...,f{dim-1}.
/// %.9g keeps float round trips exact.
inline void save_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  std::ofstream out(path);
  if (!out) throw IoError("save_embeddings_csv: cannot open " + path.string());
  out << "label,modality";
  for (Eigen::Index c = 0; c < set.dim(); ++c) out << ",f" << c;
  out << "\n";
  char buf[32];
  for (Eigen::Index r = 0; r < set.size(); ++r) {
    out << set.labels[static_cast<std::size_t>(r)] << ','
        << modality_name(set.modalities[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < set.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(set.vectors(r, c)));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("save_embeddings_csv: write failed for " + path.string());
}

}  // namespace xmreid

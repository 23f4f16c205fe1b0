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

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xmreid/common.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

// ---------------------------------------------------------------------------
// configuration

/// One backbone stage: per-cell channel mix, then batch norm, relu, and an
/// optional 2x spatial (row and column) average pooling.
struct StageSpec {
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  int downsample_rows = 1;  // 1 or 2
};

struct GridShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index channels = 0;

  Eigen::Index cells() const { return rows * cols; }
  Eigen::Index numel() const { return rows * cols * channels; }
};

enum class PoolKind { gem, mean, max };

inline const char* pool_name(PoolKind k) {
  switch (k) {
    case PoolKind::gem: return "gem";
    case PoolKind::mean: return "mean";
    default: return "max";
  }
}

inline PoolKind parse_pool(const std::string& s) {
  if (s == "gem") return PoolKind::gem;
  if (s == "mean") return PoolKind::mean;
  if (s == "max") return PoolKind::max;
  throw ConfigError("unknown pooling kind '" + s + "' (expected gem, mean or max)");
}

constexpr int kNumStages = 5;

/// Stages before split_index carry independent visible/thermal parameters;
/// stages at and after it share one parameter set.
struct TwoStreamConfig {
  std::vector<StageSpec> stages;  // exactly kNumStages
  int split_index = 2;            // 0..5
  GridShape input_grid{24, 12, 8};
  int num_parts = 6;
  Eigen::Index embed_dim = 256;
  double gem_p_init = 3.0;
  Eigen::Index num_classes = 0;
  bool learnable_gem = true;
  PoolKind pool = PoolKind::gem;

  static TwoStreamConfig defaults(Eigen::Index num_classes) {
    TwoStreamConfig cfg;
    cfg.stages = {{8, 12, 1}, {12, 16, 2}, {16, 24, 2}, {24, 32, 1}, {32, 32, 1}};
    cfg.num_classes = num_classes;
    return cfg;
  }

  GridShape final_grid() const {
    GridShape g = input_grid;
    for (const StageSpec& s : stages) {
      if (s.downsample_rows == 2) {
        g.rows /= 2;
        g.cols /= 2;
      }
      g.channels = s.out_channels;
    }
    return g;
  }

  /// Model-build-time validation: all geometry errors surface here, never
  /// during a forward pass.
  void validate() const {
    if (static_cast<int>(stages.size()) != kNumStages)
      throw ConfigError("expected " + std::to_string(kNumStages) + " stages, got " +
                        std::to_string(stages.size()));
    if (split_index < 0 || split_index > kNumStages)
      throw ConfigError("split_index must lie in [0, " + std::to_string(kNumStages) + "], got " +
                        std::to_string(split_index));
    if (input_grid.rows <= 0 || input_grid.cols <= 0 || input_grid.channels <= 0)
      throw ConfigError("input grid extents must be positive");
    Eigen::Index ch = input_grid.channels;
    Eigen::Index rows = input_grid.rows, cols = input_grid.cols;
    for (int i = 0; i < kNumStages; ++i) {
      const StageSpec& s = stages[static_cast<std::size_t>(i)];
      if (s.in_channels != ch)
        throw ConfigError("stage " + std::to_string(i) + " expects " +
                          std::to_string(s.in_channels) + " input channels, got " +
                          std::to_string(ch));
      if (s.out_channels <= 0)
        throw ConfigError("stage " + std::to_string(i) + " output channels must be positive");
      if (s.downsample_rows != 1 && s.downsample_rows != 2)
        throw ConfigError("stage " + std::to_string(i) + " downsample must be 1 or 2");
      if (s.downsample_rows == 2) {
        if (rows % 2 != 0 || cols % 2 != 0)
          throw ConfigError("stage " + std::to_string(i) + " downsamples a " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            " grid with an odd extent");
        rows /= 2;
        cols /= 2;
      }
      ch = s.out_channels;
    }
    if (num_parts <= 0) throw ConfigError("num_parts must be positive");
    if (rows % num_parts != 0)
      throw ConfigError("final feature rows " + std::to_string(rows) +
                        " not divisible by num_parts " + std::to_string(num_parts));
    if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
    if (num_classes <= 0) throw ConfigError("num_classes must be positive");
    if (gem_p_init < 1.0) throw ConfigError("gem_p_init must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// parameter store

template <typename S>
struct Param {
  Shape shape;
  ArrayX<S> value;
};

template <typename S>
struct ParamStore {
  std::map<std::string, Param<S>> entries;

  Param<S>& add(const std::string& name, Shape shape, ArrayX<S> value) {
    if (entries.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    if (shape_size(shape) != value.size())
      throw ShapeError("parameter '" + name + "' shape/value size mismatch");
    return entries.emplace(name, Param<S>{std::move(shape), std::move(value)}).first->second;
  }

  Param<S>& at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Param<S>& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  long long total_size() const {
    long long n = 0;
    for (const auto& [k, p] : entries) n += static_cast<long long>(p.value.size());
    return n;
  }
};

// ---------------------------------------------------------------------------
// model

inline std::string stage_prefix(const std::string& stream, int stage) {
  return stream + ".stage" + std::to_string(stage);
}

/// Streams owning each stage for a given split: "visible" and "thermal"
/// before the split, "shared" at and after it.
inline std::vector<std::string> stage_streams(const TwoStreamConfig& cfg, int stage) {
  if (stage < cfg.split_index) return {"visible", "thermal"};
  return {"shared"};
}

template <typename S>
struct TwoStreamModel {
  TwoStreamConfig cfg;
  ParamStore<S> params;
  std::map<std::string, BatchNormState<S>> bn_states;
};

namespace detail {

template <typename S>
ArrayX<S> normal_array(Rng& rng, Eigen::Index n, double sigma) {
  ArrayX<S> a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = static_cast<S>(rng.normal(0.0, sigma));
  return a;
}

template <typename S>
void add_stage_params(TwoStreamModel<S>& model, const std::string& stream, int stage,
                      const StageSpec& spec, Rng& rng) {
  const std::string prefix = stage_prefix(stream, stage);
  const double sigma = std::sqrt(2.0 / static_cast<double>(spec.in_channels));
  model.params.add(prefix + ".mix", {spec.in_channels, spec.out_channels},
                   normal_array<S>(rng, spec.in_channels * spec.out_channels, sigma));
  model.params.add(prefix + ".bn.gamma", {1, spec.out_channels},
                   ArrayX<S>::Ones(spec.out_channels));
  model.params.add(prefix + ".bn.beta", {1, spec.out_channels},
                   ArrayX<S>::Zero(spec.out_channels));
  model.bn_states.emplace(prefix + ".bn", BatchNormState<S>::identity(spec.out_channels));
}

}  // namespace detail

/// Builds a model with deterministic, seed-derived initial parameters.
/// Stage order, then parts, fixes the draw sequence.
template <typename S>
TwoStreamModel<S> build_model(const TwoStreamConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TwoStreamModel<S> model;
  model.cfg = cfg;
  Rng rng(derive_seed(seed, 0x1017));
  for (int i = 0; i < kNumStages; ++i)
    for (const std::string& stream : stage_streams(cfg, i))
      detail::add_stage_params(model, stream, i, cfg.stages[static_cast<std::size_t>(i)], rng);

  const GridShape fg = cfg.final_grid();
  const Eigen::Index C = fg.channels, d = cfg.embed_dim, N = cfg.num_classes;
  model.params.add("head.gem_p", {1, 1}, ArrayX<S>::Constant(1, static_cast<S>(cfg.gem_p_init)));
  const double proj_sigma = std::sqrt(2.0 / static_cast<double>(C));
  for (int j = 0; j < cfg.num_parts; ++j) {
    const std::string prefix = "head.part" + std::to_string(j);
    model.params.add(prefix + ".proj.weight", {C, d}, detail::normal_array<S>(rng, C * d, proj_sigma));
    model.params.add(prefix + ".proj.bn.gamma", {1, d}, ArrayX<S>::Ones(d));
    model.params.add(prefix + ".proj.bn.beta", {1, d}, ArrayX<S>::Zero(d));
    model.bn_states.emplace(prefix + ".proj.bn", BatchNormState<S>::identity(d));
    model.params.add(prefix + ".cls.weight", {d, N}, detail::normal_array<S>(rng, d * N, 0.01));
    model.params.add(prefix + ".cls.bias", {1, N}, ArrayX<S>::Zero(N));
  }
  return model;
}

/// Closed-form learnable-parameter count for a split choice; used to check
/// the shared + 2 * specific monotonicity without building models.
inline long long parameter_count(const TwoStreamConfig& cfg) {
  long long total = 0;
  for (int i = 0; i < kNumStages; ++i) {
    const StageSpec& s = cfg.stages[static_cast<std::size_t>(i)];
    const long long stage = static_cast<long long>(s.in_channels) * s.out_channels +
                            2LL * s.out_channels;
    total += (i < cfg.split_index ? 2 : 1) * stage;
  }
  const GridShape fg = cfg.final_grid();
  total += 1;  // gem exponent
  total += static_cast<long long>(cfg.num_parts) *
           (static_cast<long long>(fg.channels) * cfg.embed_dim + 2LL * cfg.embed_dim +
            static_cast<long long>(cfg.embed_dim) * cfg.num_classes + cfg.num_classes);
  return total;
}

// ---------------------------------------------------------------------------
// binding parameters onto a tape

template <typename S>
struct BoundModel {
  std::map<std::string, Tensor<S>> tensors;
  bool trainable = false;

  const Tensor<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("parameter '" + name + "' is not bound");
    return it->second;
  }
};

/// Creates one leaf per parameter on the tape. With trainable set, leaves
/// require gradients (except a frozen gem exponent).
template <typename S>
BoundModel<S> bind_model(TwoStreamModel<S>& model, Tape<S>& tape, bool trainable) {
  BoundModel<S> bound;
  bound.trainable = trainable;
  for (auto& [name, p] : model.params.entries) {
    bool rg = trainable;
    if (name == "head.gem_p" && !model.cfg.learnable_gem) rg = false;
    bound.tensors.emplace(name, tape.leaf(p.shape, p.value, rg, name));
  }
  return bound;
}

// ---------------------------------------------------------------------------
// forward pieces

namespace detail {

/// Gather permutation that groups each 2x2 spatial block of every image into
/// four consecutive rows, ready for a size-4 segment mean.
inline std::vector<Eigen::Index> pool2x2_perm(Eigen::Index images, Eigen::Index H,
                                              Eigen::Index W) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(images * H * W));
  for (Eigen::Index n = 0; n < images; ++n) {
    const Eigen::Index base = n * H * W;
    for (Eigen::Index r = 0; r < H / 2; ++r)
      for (Eigen::Index c = 0; c < W / 2; ++c) {
        idx.push_back(base + (2 * r) * W + 2 * c);
        idx.push_back(base + (2 * r) * W + 2 * c + 1);
        idx.push_back(base + (2 * r + 1) * W + 2 * c);
        idx.push_back(base + (2 * r + 1) * W + 2 * c + 1);
      }
  }
  return idx;
}

template <typename S>
Tensor<S> run_stage(Tape<S>& tape, TwoStreamModel<S>& model, const BoundModel<S>& bound,
                    const std::string& stream, int stage, Tensor<S> x, Eigen::Index images,
                    Eigen::Index& H, Eigen::Index& W, RunMode mode) {
  const std::string prefix = stage_prefix(stream, stage);
  Tensor<S> mixed = matmul(x, bound.at(prefix + ".mix"));
  Tensor<S> normed = batch_norm(mixed, bound.at(prefix + ".bn.gamma"),
                                bound.at(prefix + ".bn.beta"),
                                model.bn_states.at(prefix + ".bn"), mode);
  Tensor<S> act = relu(normed);
  const StageSpec& spec = model.cfg.stages[static_cast<std::size_t>(stage)];
  if (spec.downsample_rows == 2) {
    Tensor<S> grouped = gather_rows(act, pool2x2_perm(images, H, W));
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(images * (H / 2) * (W / 2)), 4);
    act = segment_mean(grouped, sizes);
    H /= 2;
    W /= 2;
  }
  return act;
}

/// Stacks per-image flat buffers (H*W*C row-major) into one cell matrix.
template <typename S>
Tensor<S> stack_images(Tape<S>& tape, const std::vector<const ArrayX<S>*>& images,
                       const GridShape& grid) {
  const Eigen::Index cells = grid.cells(), C = grid.channels;
  ArrayX<S> data(static_cast<Eigen::Index>(images.size()) * cells * C);
  Eigen::Index at = 0;
  for (const ArrayX<S>* img : images) {
    if (img->size() != grid.numel())
      throw ShapeError("image has " + std::to_string(img->size()) + " values, expected " +
                       std::to_string(grid.numel()));
    data.segment(at, img->size()) = *img;
    at += img->size();
  }
  return tape.constant({static_cast<Eigen::Index>(images.size()) * cells, C}, std::move(data),
                       "images");
}

}  // namespace detail

template <typename S>
struct EncodedBatch {
  Tensor<S> feature_cells;                // [B*H*W, C], rows grouped per image
  std::vector<std::size_t> image_order;   // stream position -> original batch index
  GridShape grid;                         // final per-image geometry
};

/// Runs the two-stream backbone over a batch: modality-specific stages on
/// each stream, then shared stages over the merged batch. Output image order
/// is visible images first, then thermal, each preserving batch order.
template <typename S>
EncodedBatch<S> encode_batch(Tape<S>& tape, TwoStreamModel<S>& model, const BoundModel<S>& bound,
                             const std::vector<const ArrayX<S>*>& images,
                             const std::vector<Modality>& modalities, RunMode mode) {
  if (images.empty()) throw ShapeError("encode_batch: empty batch");
  if (images.size() != modalities.size())
    throw ShapeError("encode_batch: images and modality tags differ in length");
  const TwoStreamConfig& cfg = model.cfg;

  for (Modality m : modalities)
    if (m != Modality::visible && m != Modality::thermal)
      throw DomainError("encode_batch: unknown modality tag " +
                        std::to_string(static_cast<int>(m)));

  std::vector<std::size_t> order;
  std::vector<const ArrayX<S>*> vis, th;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (modalities[i] == Modality::visible) {
      vis.push_back(images[i]);
      order.push_back(i);
    }
  for (std::size_t i = 0; i < images.size(); ++i)
    if (modalities[i] == Modality::thermal) {
      th.push_back(images[i]);
      order.push_back(i);
    }

  Eigen::Index H = cfg.input_grid.rows, W = cfg.input_grid.cols;
  auto run_specific = [&](std::vector<const ArrayX<S>*>& imgs, const std::string& stream,
                          Eigen::Index& h, Eigen::Index& w) -> Tensor<S> {
    Tensor<S> x = detail::stack_images(tape, imgs, cfg.input_grid);
    for (int i = 0; i < cfg.split_index; ++i)
      x = detail::run_stage(tape, model, bound, stream, i, x,
                            static_cast<Eigen::Index>(imgs.size()), h, w, mode);
    return x;
  };

  Tensor<S> merged;
  if (!vis.empty() && !th.empty()) {
    Eigen::Index hv = H, wv = W, ht = H, wt = W;
    Tensor<S> xv = run_specific(vis, "visible", hv, wv);
    Tensor<S> xt = run_specific(th, "thermal", ht, wt);
    merged = concat_rows<S>({xv, xt});
    H = hv;
    W = wv;
  } else if (!vis.empty()) {
    merged = run_specific(vis, "visible", H, W);
  } else {
    merged = run_specific(th, "thermal", H, W);
  }

  const Eigen::Index B = static_cast<Eigen::Index>(images.size());
  for (int i = cfg.split_index; i < kNumStages; ++i)
    merged = detail::run_stage(tape, model, bound, "shared", i, merged, B, H, W, mode);

  EncodedBatch<S> out;
  out.feature_cells = merged;
  out.image_order = std::move(order);
  out.grid = GridShape{H, W, cfg.stages.back().out_channels};
  return out;
}

/// Single-image encoder pass; the per-image face of encode_batch.
template <typename S>
Tensor<S> forward_encoder(Tape<S>& tape, TwoStreamModel<S>& model, const BoundModel<S>& bound,
                          const ArrayX<S>& image, Modality modality, RunMode mode) {
  std::vector<const ArrayX<S>*> imgs{&image};
  std::vector<Modality> mods{modality};
  return encode_batch(tape, model, bound, imgs, mods, mode).feature_cells;
}

/// Splits a single-image feature map [H*W, C] into p contiguous row bands of
/// (H/p)*W cells each, top to bottom.
template <typename S>
std::vector<Tensor<S>> partition_strips(const Tensor<S>& feature_map, Eigen::Index map_rows,
                                        Eigen::Index map_cols, int num_parts) {
  if (num_parts <= 0 || map_rows % num_parts != 0)
    throw ConfigError("partition_strips: " + std::to_string(map_rows) +
                      " rows not divisible by " + std::to_string(num_parts) + " parts");
  if (feature_map.rows() != map_rows * map_cols)
    throw ShapeError("partition_strips: feature map has " + std::to_string(feature_map.rows()) +
                     " cells, expected " + std::to_string(map_rows * map_cols));
  const Eigen::Index hs = map_rows / num_parts;
  std::vector<Tensor<S>> strips;
  for (int j = 0; j < num_parts; ++j) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index r = j * hs; r < (j + 1) * hs; ++r)
      for (Eigen::Index c = 0; c < map_cols; ++c) idx.push_back(r * map_cols + c);
    strips.push_back(gather_rows(feature_map, idx));
  }
  return strips;
}

constexpr double kGemInputFloor = 1e-6;

/// Generalized-mean pooling of one strip to a channel row vector.
template <typename S>
Tensor<S> gem_pool(const Tensor<S>& strip, const Tensor<S>& gem_p) {
  Tensor<S> safe = clamp_min(strip, static_cast<S>(kGemInputFloor));
  return gem_segments(safe, gem_p, strip.rows());
}

/// Linear reduce to embed_dim, then batch norm and relu, for one part.
template <typename S>
Tensor<S> reduce_project(Tape<S>& tape, TwoStreamModel<S>& model, const BoundModel<S>& bound,
                         int part_index, const Tensor<S>& pooled, RunMode mode) {
  if (part_index < 0 || part_index >= model.cfg.num_parts)
    throw DomainError("reduce_project: part index " + std::to_string(part_index) +
                      " out of range");
  const std::string prefix = "head.part" + std::to_string(part_index);
  Tensor<S> projected = matmul(pooled, bound.at(prefix + ".proj.weight"));
  Tensor<S> normed = batch_norm(projected, bound.at(prefix + ".proj.bn.gamma"),
                                bound.at(prefix + ".proj.bn.beta"),
                                model.bn_states.at(prefix + ".proj.bn"), mode);
  return relu(normed);
}

/// Affine classifier owned by one part; parts share nothing.
template <typename S>
Tensor<S> classify_part(const BoundModel<S>& bound, int part_index, int num_parts,
                        const Tensor<S>& part_feature) {
  if (part_index < 0 || part_index >= num_parts)
    throw DomainError("classify_part: part index " + std::to_string(part_index) +
                      " out of range");
  const std::string prefix = "head.part" + std::to_string(part_index);
  return add(matmul(part_feature, bound.at(prefix + ".cls.weight")),
             bound.at(prefix + ".cls.bias"));
}

template <typename S>
struct ForwardOutput {
  std::vector<Tensor<S>> parts;   // p tensors, each [B, d], original batch order
  std::vector<Tensor<S>> logits;  // p tensors, each [B, N]
  Tensor<S> concatenated;         // [B, p*d], strip order preserved
};

/// Full pipeline: encoder, strip pooling, per-part projection and
/// classification, concatenation. Rows follow the caller's batch order.
template <typename S>
ForwardOutput<S> forward_full(Tape<S>& tape, TwoStreamModel<S>& model, const BoundModel<S>& bound,
                              const std::vector<const ArrayX<S>*>& images,
                              const std::vector<Modality>& modalities, RunMode mode) {
  const TwoStreamConfig& cfg = model.cfg;
  EncodedBatch<S> enc = encode_batch(tape, model, bound, images, modalities, mode);
  const Eigen::Index B = static_cast<Eigen::Index>(images.size());
  const Eigen::Index H = enc.grid.rows, W = enc.grid.cols;
  const int p = cfg.num_parts;
  const Eigen::Index hs = H / p, strip_cells = hs * W;

  // group rows as (stream image, part): row block q*p + j holds part j of the
  // image at stream position q
  std::vector<Eigen::Index> strip_perm;
  strip_perm.reserve(static_cast<std::size_t>(B * H * W));
  for (Eigen::Index q = 0; q < B; ++q)
    for (int j = 0; j < p; ++j)
      for (Eigen::Index r = j * hs; r < (j + 1) * hs; ++r)
        for (Eigen::Index c = 0; c < W; ++c) strip_perm.push_back(q * H * W + r * W + c);
  Tensor<S> grouped = gather_rows(enc.feature_cells, strip_perm);

  Tensor<S> pooled;  // [B*p, C] in stream order
  if (cfg.pool == PoolKind::gem) {
    Tensor<S> safe = clamp_min(grouped, static_cast<S>(kGemInputFloor));
    pooled = gem_segments(safe, bound.at("head.gem_p"), strip_cells);
  } else {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(B * p), strip_cells);
    pooled = cfg.pool == PoolKind::mean ? segment_mean(grouped, sizes)
                                        : segment_max(grouped, sizes);
  }

  // stream position of each original batch index
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(B));
  for (Eigen::Index q = 0; q < B; ++q)
    pos[enc.image_order[static_cast<std::size_t>(q)]] = q;

  ForwardOutput<S> out;
  for (int j = 0; j < p; ++j) {
    std::vector<Eigen::Index> part_rows;
    part_rows.reserve(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b)
      part_rows.push_back(pos[static_cast<std::size_t>(b)] * p + j);
    Tensor<S> part_pooled = gather_rows(pooled, part_rows);  // [B, C], batch order
    Tensor<S> feature = reduce_project(tape, model, bound, j, part_pooled, mode);
    out.parts.push_back(feature);
    out.logits.push_back(classify_part(bound, j, p, feature));
  }
  out.concatenated = concat_cols(out.parts);
  return out;
}

}  // namespace xmreid

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

#ifndef XMREID_TRAINER_HPP_
#define XMREID_TRAINER_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "xmreid/checkpoint.hpp"
#include "xmreid/encoder.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/evaluation.hpp"
#include "xmreid/losses.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/sampling.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

// ---------------------------------------------------------------------------
// loss variants

enum class LossVariant { bh_tri, hc_tri, lc, hc, id_only };

inline std::string loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::bh_tri: return "bh_tri";
    case LossVariant::hc_tri: return "hc_tri";
    case LossVariant::lc: return "lc";
    case LossVariant::hc: return "hc";
    case LossVariant::id_only: return "id_only";
  }
  throw ConfigError("unknown loss variant");
}

inline LossVariant parse_loss_variant(const std::string& name) {
  if (name == "bh_tri") return LossVariant::bh_tri;
  if (name == "hc_tri") return LossVariant::hc_tri;
  if (name == "lc") return LossVariant::lc;
  if (name == "hc") return LossVariant::hc;
  if (name == "id_only") return LossVariant::id_only;
  throw ConfigError("unknown loss variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// configuration

template <typename S>
struct TrainConfig {
  int P = 4;
  int K = 4;
  int epochs = 30;
  S momentum = S(0.9);
  S base_lr = S(0.1);
  LossVariant variant = LossVariant::hc_tri;
  LossConfig<S> loss;
  TwoStreamConfig encoder;
  std::uint64_t seed = 1;
  double val_fraction = 0.2;

  void validate() const {
    if (P < 2) throw ConfigError("P must be >= 2");
    if (K < 1) throw ConfigError("K must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(momentum >= S(0) && momentum < S(1))) throw ConfigError("momentum must lie in [0, 1)");
    if (!(base_lr >= S(0))) throw ConfigError("base_lr must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw ConfigError("val_fraction must lie in (0, 1)");
    loss.validate();
    encoder.validate();
    if (static_cast<Eigen::Index>(encoder.num_classes) != loss.num_classes)
      throw ConfigError("encoder and loss disagree on the class count");
  }
};

// ---------------------------------------------------------------------------
// identity-level train/validation split

struct SplitDataset {
  DatasetIndex train;
  DatasetIndex val;
};

namespace detail {

inline DatasetIndex subset_identities(const DatasetIndex& full, int first, int count) {
  DatasetIndex out;
  out.grid = full.grid;
  for (int id = first; id < first + count; ++id) {
    out.identity_names.push_back(full.identity_names[static_cast<std::size_t>(id)]);
    std::array<std::vector<std::size_t>, 2> group;
    for (int m = 0; m < 2; ++m)
      for (std::size_t src : full.groups[static_cast<std::size_t>(id)][static_cast<std::size_t>(m)]) {
        group[static_cast<std::size_t>(m)].push_back(out.images.size());
        out.images.push_back(full.images[src]);
      }
    out.groups.push_back(std::move(group));
    if (!full.prototypes.empty())
      out.prototypes.push_back(full.prototypes[static_cast<std::size_t>(id)]);
  }
  return out;
}

}  // namespace detail

/// Holds out the last fraction of identities (in sorted name order) for
/// validation; training labels stay dense 0..n_train-1.
inline SplitDataset split_by_identity(const DatasetIndex& full, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  const int n = full.num_identities();
  int val_count = static_cast<int>(std::llround(n * val_fraction));
  if (val_count < 1) val_count = 1;
  if (n - val_count < 2)
    throw DomainError("split_by_identity: " + std::to_string(n) +
                      " identities leave fewer than 2 for training");
  SplitDataset split;
  split.train = detail::subset_identities(full, 0, n - val_count);
  split.val = detail::subset_identities(full, n - val_count, val_count);
  return split;
}

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
struct OptimizerState {
  std::map<std::string, ArrayX<S>> buffers;

  static OptimizerState<S> init(const ParamStore<S>& params) {
    OptimizerState<S> state;
    for (const auto& [name, p] : params.entries)
      state.buffers.emplace(name, ArrayX<S>::Zero(p.value.size()));
    return state;
  }
};

/// buffer <- momentum * buffer + grad; param <- param - lr * buffer.
/// Parameters without a gradient entry are untouched.
template <typename S>
void sgd_step(ParamStore<S>& params, const std::map<std::string, ArrayX<S>>& grads, S lr,
              S momentum, OptimizerState<S>& state) {
  for (auto& [name, p] : params.entries) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const ArrayX<S>& g = git->second;
    if (g.size() != p.value.size())
      throw ShapeError("sgd_step: gradient for '" + name + "' has " + std::to_string(g.size()) +
                       " values, parameter has " + std::to_string(p.value.size()));
    auto bit = state.buffers.find(name);
    if (bit == state.buffers.end())
      bit = state.buffers.emplace(name, ArrayX<S>::Zero(p.value.size())).first;
    else if (bit->second.size() != p.value.size())
      throw ShapeError("sgd_step: momentum buffer for '" + name + "' has wrong size");
    bit->second = momentum * bit->second + g;
    p.value -= lr * bit->second;
  }
}

// ---------------------------------------------------------------------------
// learning-rate schedule

/// Warmup then staged decay: base*(t+1)/10 for t<10, base for t<20, base/10
/// for t<50, base/100 after, where base defaults to 0.1.
inline double lr_schedule(int epoch, double base_lr = 0.1) {
  if (epoch < 0) throw DomainError("lr_schedule: epoch must be >= 0");
  const double scale = base_lr / 0.1;
  double value = 0.001;
  if (epoch < 10)
    value = 0.1 * (epoch + 1) / 10.0;
  else if (epoch < 20)
    value = 0.1;
  else if (epoch < 50)
    value = 0.01;
  return value * scale;
}

// ---------------------------------------------------------------------------
// loss composition per variant

template <typename S>
struct LossTerms {
  Tensor<S> total;
  double metric = 0.0;  // metric-learning term, weighted parts included
  double id = 0.0;      // summed per-part identification terms
};

namespace detail {

/// Metric term on one feature set for the center-based variants.
template <typename S>
Tensor<S> center_metric(LossVariant v, const Tensor<S>& features, const std::vector<int>& labels,
                        const std::vector<Modality>& modalities, S rho) {
  CenterSet<S> centers = modality_centers(features, labels, modalities);
  if (v == LossVariant::hc) return hetero_center_loss(centers);
  return hetero_center_triplet(centers, rho);
}

}  // namespace detail

/// Composes the selected training loss from the forward outputs. Every
/// variant carries the per-part identification losses except the pure
/// metric-term structure differences: bh_tri/hc_tri/hc add their metric term
/// on the concatenated feature plus lambda-weighted per-part terms, lc adds a
/// single learned-center term on the concatenated feature, id_only adds
/// nothing beyond identification.
template <typename S>
LossTerms<S> compose_loss(LossVariant variant, const ForwardOutput<S>& out,
                          const std::vector<int>& labels,
                          const std::vector<Modality>& modalities, const LossConfig<S>& cfg,
                          const Tensor<std::type_identity_t<S>>* center_table = nullptr,
                          const std::vector<int>* center_labels = nullptr) {
  cfg.validate();
  const std::size_t parts = out.logits.size();
  if (parts == 0) throw ShapeError("compose_loss: no part outputs");

  const bool per_part_metric =
      variant == LossVariant::bh_tri || variant == LossVariant::hc_tri || variant == LossVariant::hc;

  auto metric_on = [&](const Tensor<S>& features) -> Tensor<S> {
    if (variant == LossVariant::bh_tri) return batch_hard_triplet(features, labels, cfg.rho);
    return detail::center_metric(variant, features, labels, modalities, cfg.rho);
  };

  LossTerms<S> terms{out.logits[0], 0.0, 0.0};
  bool have_total = false;
  auto accumulate = [&](const Tensor<S>& t) {
    terms.total = have_total ? add(terms.total, t) : t;
    have_total = true;
  };

  if (per_part_metric) {
    Tensor<S> m = metric_on(out.concatenated);
    terms.metric += static_cast<double>(m.item());
    accumulate(m);
  } else if (variant == LossVariant::lc) {
    if (center_table == nullptr || center_labels == nullptr)
      throw ConfigError("compose_loss: lc variant needs a center table");
    Tensor<S> m =
        learned_center_loss(out.concatenated, labels, modalities, *center_table, *center_labels);
    terms.metric += static_cast<double>(m.item());
    accumulate(m);
  }

  for (std::size_t j = 0; j < parts; ++j) {
    Tensor<S> idj = id_loss_label_smooth(out.logits[j], labels, cfg.xi);
    terms.id += static_cast<double>(idj.item());
    accumulate(idj);
    if (per_part_metric && cfg.lambda != S(0)) {
      Tensor<S> mj = scale(metric_on(out.parts[j]), cfg.lambda);
      terms.metric += static_cast<double>(mj.item());
      accumulate(mj);
    }
  }
  return terms;
}

// ---------------------------------------------------------------------------
// embedding a dataset

namespace detail {

/// Per-image (label, modality) lookup recovered from the identity groups.
inline std::vector<std::pair<int, Modality>> image_tags(const DatasetIndex& index) {
  std::vector<std::pair<int, Modality>> tags(index.total_images(),
                                             {-1, Modality::visible});
  for (std::size_t id = 0; id < index.groups.size(); ++id)
    for (int m = 0; m < 2; ++m)
      for (std::size_t img : index.groups[id][static_cast<std::size_t>(m)])
        tags[img] = {static_cast<int>(id), static_cast<Modality>(m)};
  return tags;
}

}  // namespace detail

/// Runs the encoder in eval mode over the whole dataset and collects the
/// concatenated part features row per image.
template <typename S>
EmbeddingSet embed_dataset(TwoStreamModel<S>& model, const DatasetIndex& index,
                           Eigen::Index chunk = 64) {
  if (chunk < 1) throw ConfigError("embed_dataset: chunk must be positive");
  const auto tags = detail::image_tags(index);
  const Eigen::Index total = static_cast<Eigen::Index>(index.total_images());
  if (total == 0) throw ShapeError("embed_dataset: empty dataset");

  EmbeddingSet set;
  const Eigen::Index dim =
      static_cast<Eigen::Index>(model.cfg.num_parts) * model.cfg.embed_dim;
  set.vectors.resize(total, dim);
  set.labels.resize(static_cast<std::size_t>(total));
  set.modalities.resize(static_cast<std::size_t>(total));

  for (Eigen::Index start = 0; start < total; start += chunk) {
    const Eigen::Index n = std::min(chunk, total - start);
    std::vector<ArrayX<S>> casted;
    std::vector<const ArrayX<S>*> ptrs;
    std::vector<Modality> modalities;
    casted.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t img = static_cast<std::size_t>(start + i);
      casted.push_back(index.images[img].template cast<S>());
      modalities.push_back(tags[img].second);
      set.labels[img] = tags[img].first;
      set.modalities[img] = tags[img].second;
    }
    for (const auto& c : casted) ptrs.push_back(&c);
    Tape<S> tape;
    BoundModel<S> bound = bind_model(model, tape, false);
    ForwardOutput<S> out = forward_full(tape, model, bound, ptrs, modalities, RunMode::eval);
    const ArrayX<S>& v = out.concatenated.values();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < dim; ++c)
        set.vectors(start + i, c) = static_cast<float>(v[i * dim + c]);
  }
  return set;
}

/// Thermal-query, visible-gallery retrieval on L2-normalized embeddings; the
/// swap flag evaluates the opposite direction.
inline EvalReport cross_modality_report(const EmbeddingSet& embeddings, bool visible_query = false) {
  EmbeddingSet normalized = l2_normalize(embeddings);
  EmbeddingSet visible = subset_by_modality(normalized, Modality::visible);
  EmbeddingSet thermal = subset_by_modality(normalized, Modality::thermal);
  return visible_query ? compute_metrics(visible, thermal) : compute_metrics(thermal, visible);
}

// ---------------------------------------------------------------------------
// training loop

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_metric = 0.0;
  double loss_id = 0.0;
  double val_rank1 = 0.0;
  double val_map = 0.0;
  double val_minp = 0.0;
};

template <typename S>
struct TrainResult {
  TwoStreamModel<S> model;
  ParamStore<S> aux;
  OptimizerState<S> opt;
  std::vector<EpochRow> history;
  int epochs_completed = 0;
};

inline int batches_per_epoch(std::size_t total_images, int P, int K) {
  const std::size_t batch = static_cast<std::size_t>(2 * P * K);
  return static_cast<int>((total_images + batch - 1) / batch);
}

namespace detail {

inline constexpr std::uint64_t kModelStream = 0x6d6f64656cull;
inline constexpr std::uint64_t kBatchStream = 0x62617463ull;

}  // namespace detail

template <typename S>
Checkpoint<S> make_checkpoint(const TrainResult<S>& result) {
  Checkpoint<S> ckpt;
  ckpt.epoch = result.epochs_completed;
  ckpt.params = result.model.params;
  ckpt.aux = result.aux;
  ckpt.opt_buffers = result.opt.buffers;
  ckpt.bn_states = result.model.bn_states;
  return ckpt;
}

/// One optimization run: per epoch, batches of sample -> augment ->
/// forward -> loss -> backward -> SGD at the scheduled rate, then held-out
/// cross-modality retrieval metrics. Deterministic given (seed, config,
/// dataset); resuming from a checkpoint reproduces the uninterrupted
/// trajectory bit-for-bit.
template <typename S>
TrainResult<S> train(const TrainConfig<S>& cfg, const DatasetIndex& dataset,
                     const Checkpoint<S>* resume = nullptr) {
  cfg.validate();
  SplitDataset split = split_by_identity(dataset, cfg.val_fraction);
  split.train.validate_for_training();
  if (split.train.num_identities() != static_cast<int>(cfg.encoder.num_classes))
    throw ConfigError("config expects " + std::to_string(cfg.encoder.num_classes) +
                      " classes, train split has " +
                      std::to_string(split.train.num_identities()) + " identities");

  TrainResult<S> result{build_model<S>(cfg.encoder, derive_seed(cfg.seed, detail::kModelStream)),
                        {}, {}, {}, 0};

  std::vector<int> center_labels;
  if (cfg.variant == LossVariant::lc) {
    const Eigen::Index n = cfg.loss.num_classes;
    const Eigen::Index dim =
        static_cast<Eigen::Index>(cfg.encoder.num_parts) * cfg.encoder.embed_dim;
    result.aux.add("centers.table", Shape{n, dim}, ArrayX<S>::Zero(n * dim));
    for (Eigen::Index i = 0; i < n; ++i) center_labels.push_back(static_cast<int>(i));
  }

  result.opt = OptimizerState<S>::init(result.model.params);
  for (const auto& [name, p] : result.aux.entries)
    result.opt.buffers.emplace(name, ArrayX<S>::Zero(p.value.size()));

  int start_epoch = 0;
  if (resume != nullptr) {
    for (const auto& [name, p] : resume->params.entries) {
      Param<S>& dst = result.model.params.at(name);
      if (dst.value.size() != p.value.size())
        throw ShapeError("checkpoint parameter '" + name + "' has wrong size");
      dst.value = p.value;
    }
    for (const auto& [name, p] : resume->aux.entries) {
      Param<S>& dst = result.aux.at(name);
      if (dst.value.size() != p.value.size())
        throw ShapeError("checkpoint auxiliary '" + name + "' has wrong size");
      dst.value = p.value;
    }
    for (const auto& [name, buf] : resume->opt_buffers) {
      auto it = result.opt.buffers.find(name);
      if (it == result.opt.buffers.end() || it->second.size() != buf.size())
        throw ShapeError("checkpoint momentum buffer '" + name + "' does not match the model");
      it->second = buf;
    }
    for (const auto& [name, st] : resume->bn_states) {
      auto it = result.model.bn_states.find(name);
      if (it == result.model.bn_states.end())
        throw ShapeError("checkpoint batch-norm state '" + name + "' does not match the model");
      it->second = st;
    }
    start_epoch = resume->epoch;
    if (start_epoch > cfg.epochs)
      throw ConfigError("checkpoint is at epoch " + std::to_string(start_epoch) +
                        ", config trains only " + std::to_string(cfg.epochs));
  }

  const int num_batches = batches_per_epoch(split.train.total_images(), cfg.P, cfg.K);
  const GridShape& grid = split.train.grid;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, static_cast<double>(cfg.base_lr));
    double sum_total = 0.0, sum_metric = 0.0, sum_id = 0.0;

    for (int b = 0; b < num_batches; ++b) {
      const std::uint64_t bseed =
          derive_seed(cfg.seed, detail::kBatchStream + static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(b));
      MiniBatch batch = pk_sample(split.train, cfg.P, cfg.K, derive_seed(bseed, 0));
      Rng aug_rng(derive_seed(bseed, 1));

      std::vector<ArrayX<S>> inputs;
      std::vector<const ArrayX<S>*> ptrs;
      inputs.reserve(batch.images.size());
      for (const ArrayX<float>& img : batch.images)
        inputs.push_back(augment(img, grid, aug_rng).template cast<S>());
      for (const auto& x : inputs) ptrs.push_back(&x);

      Tape<S> tape;
      BoundModel<S> bound = bind_model(result.model, tape, true);
      std::optional<Tensor<S>> center_table;
      if (cfg.variant == LossVariant::lc) {
        const Param<S>& c = result.aux.at("centers.table");
        center_table = tape.leaf(c.shape, c.value, true, "centers.table");
      }

      ForwardOutput<S> out =
          forward_full(tape, result.model, bound, ptrs, batch.modalities, RunMode::train);
      LossTerms<S> terms =
          compose_loss(cfg.variant, out, batch.labels, batch.modalities, cfg.loss,
                       center_table ? &*center_table : nullptr,
                       center_table ? &center_labels : nullptr);

      const double loss_value = static_cast<double>(terms.total.item());
      if (!std::isfinite(loss_value))
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                           ": loss is not finite");
      sum_total += loss_value;
      sum_metric += terms.metric;
      sum_id += terms.id;

      tape.backward(terms.total);

      std::map<std::string, ArrayX<S>> grads;
      for (const auto& [name, t] : bound.tensors)
        if (t.requires_grad()) grads.emplace(name, t.grad());
      if (center_table) grads.emplace("centers.table", center_table->grad());

      sgd_step(result.model.params, grads, static_cast<S>(lr), cfg.momentum, result.opt);
      sgd_step(result.aux, grads, static_cast<S>(lr), cfg.momentum, result.opt);
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_total = sum_total / num_batches;
    row.loss_metric = sum_metric / num_batches;
    row.loss_id = sum_id / num_batches;

    // a dead row (all-zero embedding) makes the epoch's retrieval unusable;
    // score it zero and keep training
    try {
      EmbeddingSet val_embeddings = embed_dataset(result.model, split.val);
      EvalReport report = cross_modality_report(val_embeddings);
      row.val_rank1 = report.cmc.empty() ? 0.0 : report.cmc[0];
      row.val_map = report.map;
      row.val_minp = report.minp;
    } catch (const DomainError&) {
      row.val_rank1 = 0.0;
      row.val_map = 0.0;
      row.val_minp = 0.0;
    }

    result.history.push_back(row);
    result.epochs_completed = epoch + 1;
  }
  return result;
}

// ---------------------------------------------------------------------------
// history output

inline void save_history_csv(const std::filesystem::path& path,
                             const std::vector<EpochRow>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open history '" + path.string() + "' for writing");
  out << "epoch,lr,loss_total,loss_metric,loss_id,val_rank1,val_map,val_minp\n";
  char buf[256];
  for (const EpochRow& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.lr, r.loss_total, r.loss_metric, r.loss_id, r.val_rank1, r.val_map,
                  r.val_minp);
    out << buf;
  }
  if (!out) throw IoError("failed writing history '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// ablation harness

enum class AblationAxis { split, loss, parts, pool, dim };

inline std::string ablation_axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::split: return "split";
    case AblationAxis::loss: return "loss";
    case AblationAxis::parts: return "parts";
    case AblationAxis::pool: return "pool";
    case AblationAxis::dim: return "dim";
  }
  throw ConfigError("unknown ablation axis");
}

inline AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "split") return AblationAxis::split;
  if (name == "loss") return AblationAxis::loss;
  if (name == "parts") return AblationAxis::parts;
  if (name == "pool") return AblationAxis::pool;
  if (name == "dim") return AblationAxis::dim;
  throw ConfigError("unknown ablation axis '" + name + "'");
}

inline std::vector<std::string> ablation_default_values(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::split: return {"0", "1", "2", "3", "4", "5"};
    case AblationAxis::loss: return {"bh_tri", "hc_tri", "lc", "hc", "id_only"};
    case AblationAxis::parts: return {"1", "2", "3", "6"};
    case AblationAxis::pool: return {"gem", "mean", "max"};
    case AblationAxis::dim: return {"64", "128", "256"};
  }
  throw ConfigError("unknown ablation axis");
}

struct AblationRow {
  std::string axis;
  std::string value;
  double rank1 = 0.0;
  double map = 0.0;
  double minp = 0.0;
  std::string error;  // empty on success
  std::string config_echo;
};

namespace detail {

template <typename S>
TrainConfig<S> apply_axis_value(TrainConfig<S> cfg, AblationAxis axis, const std::string& value) {
  switch (axis) {
    case AblationAxis::split: cfg.encoder.split_index = std::stoi(value); break;
    case AblationAxis::loss: cfg.variant = parse_loss_variant(value); break;
    case AblationAxis::parts: cfg.encoder.num_parts = std::stoi(value); break;
    case AblationAxis::pool: cfg.encoder.pool = parse_pool(value); break;
    case AblationAxis::dim: cfg.encoder.embed_dim = std::stoi(value); break;
  }
  return cfg;
}

}  // namespace detail

/// Trains one model per axis value with the shared seed and reports held-out
/// cross-modality retrieval per cell; per-cell failures are recorded in the
/// row instead of aborting the sweep.
template <typename S>
std::vector<AblationRow> run_ablation(const TrainConfig<S>& base, AblationAxis axis,
                                      const DatasetIndex& dataset,
                                      std::vector<std::string> values = {}) {
  if (values.empty()) values = ablation_default_values(axis);
  std::vector<AblationRow> rows;
  for (const std::string& value : values) {
    AblationRow row;
    row.axis = ablation_axis_name(axis);
    row.value = value;
    row.config_echo = row.axis + "=" + value + " seed=" + std::to_string(base.seed);
    try {
      TrainConfig<S> cfg = detail::apply_axis_value(base, axis, value);
      TrainResult<S> result = train(cfg, dataset);
      const EpochRow& last = result.history.back();
      row.rank1 = last.val_rank1;
      row.map = last.val_map;
      row.minp = last.val_minp;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void save_ablation_csv(const std::filesystem::path& path,
                              const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open ablation table '" + path.string() + "' for writing");
  out << "axis,value,rank1,map,minp,error\n";
  char buf[128];
  for (const AblationRow& r : rows) {
    out << r.axis << "," << r.value << ",";
    if (r.error.empty()) {
      std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,", r.rank1, r.map, r.minp);
      out << buf;
    } else {
      out << ",,,\"" << r.error << "\"";
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing ablation table '" + path.string() + "'");
}

}  // namespace xmreid

#endif  // XMREID_TRAINER_HPP_

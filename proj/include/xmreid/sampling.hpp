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
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "xmreid/common.hpp"
#include "xmreid/encoder.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/rng.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

// ---------------------------------------------------------------------------
// numeric-grid image file format

constexpr std::uint32_t kGridMagic = 0x44495247;  // "GRID" little-endian
constexpr std::uint32_t kGridVersion = 1;

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace detail

inline void save_grid(const std::filesystem::path& path, const GridShape& grid,
                      const ArrayX<float>& data) {
  if (data.size() != grid.numel())
    throw ShapeError("save_grid: data size " + std::to_string(data.size()) +
                     " does not match grid " + std::to_string(grid.numel()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_grid: cannot open " + path.string());
  detail::write_u32(out, kGridMagic);
  detail::write_u32(out, kGridVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(grid.rows));
  detail::write_u32(out, static_cast<std::uint32_t>(grid.cols));
  detail::write_u32(out, static_cast<std::uint32_t>(grid.channels));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    detail::write_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  if (!out) throw IoError("save_grid: write failed for " + path.string());
}

struct ImageGrid {
  GridShape grid;
  ArrayX<float> data;
};

inline ImageGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_grid: cannot open " + path.string());
  std::uint32_t magic = 0, version = 0, h = 0, w = 0, c = 0;
  if (!detail::read_u32(in, magic) || !detail::read_u32(in, version) ||
      !detail::read_u32(in, h) || !detail::read_u32(in, w) || !detail::read_u32(in, c))
    throw IoError("load_grid: truncated header in " + path.string());
  if (magic != kGridMagic) throw IoError("load_grid: bad magic in " + path.string());
  if (version != kGridVersion)
    throw IoError("load_grid: unsupported version " + std::to_string(version) + " in " +
                  path.string());
  if (h == 0 || w == 0 || c == 0)
    throw IoError("load_grid: zero extent in " + path.string());
  ImageGrid img;
  img.grid = GridShape{static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w),
                       static_cast<Eigen::Index>(c)};
  img.data.resize(img.grid.numel());
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    std::uint32_t bits = 0;
    if (!detail::read_u32(in, bits))
      throw IoError("load_grid: truncated payload in " + path.string());
    img.data[i] = std::bit_cast<float>(bits);
  }
  return img;
}

// ---------------------------------------------------------------------------
// dataset index

struct DatasetIndex {
  GridShape grid;
  std::vector<std::string> identity_names;  // sorted; dense label == position
  std::vector<ArrayX<float>> images;        // flat storage, all conforming to grid
  // per identity, image indices split by modality (0 visible, 1 thermal)
  std::vector<std::array<std::vector<std::size_t>, 2>> groups;
  std::vector<ArrayX<float>> prototypes;    // synthetic datasets only

  int num_identities() const { return static_cast<int>(identity_names.size()); }
  long long total_images() const { return static_cast<long long>(images.size()); }

  /// Training needs at least one image for every (identity, modality) group.
  void validate_for_training() const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      for (int m = 0; m < 2; ++m)
        if (groups[i][static_cast<std::size_t>(m)].empty())
          throw DomainError("identity " + identity_names[i] + " has no " +
                            modality_name(static_cast<Modality>(m)) + " images");
  }
};

struct MiniBatch {
  std::vector<ArrayX<float>> images;  // 2PK image buffers
  std::vector<int> labels;
  std::vector<Modality> modalities;

  Eigen::Index size() const { return static_cast<Eigen::Index>(images.size()); }
};

/// PK cross-modality sampler: P identities without replacement, then K
/// visible and K thermal images each, without replacement unless the group
/// holds fewer than K images. Layout is identity-major, visible block first.
inline MiniBatch pk_sample(const DatasetIndex& index, int P, int K, std::uint64_t seed) {
  if (P < 1 || K < 1) throw ConfigError("pk_sample: P and K must be positive");
  if (index.num_identities() < P)
    throw DomainError("pk_sample: need " + std::to_string(P) + " identities, dataset has " +
                      std::to_string(index.num_identities()));
  Rng rng(seed);
  std::vector<std::size_t> ids =
      rng.sample_without_replacement(static_cast<std::size_t>(index.num_identities()),
                                     static_cast<std::size_t>(P));
  MiniBatch batch;
  batch.images.reserve(static_cast<std::size_t>(2 * P * K));
  for (std::size_t id : ids) {
    for (int m = 0; m < 2; ++m) {
      const std::vector<std::size_t>& pool = index.groups[id][static_cast<std::size_t>(m)];
      if (pool.empty())
        throw DomainError("pk_sample: identity " + index.identity_names[id] + " has no " +
                          modality_name(static_cast<Modality>(m)) + " images");
      std::vector<std::size_t> picks;
      if (pool.size() >= static_cast<std::size_t>(K)) {
        std::vector<std::size_t> at =
            rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(K));
        for (std::size_t a : at) picks.push_back(pool[a]);
      } else {
        for (int k = 0; k < K; ++k) picks.push_back(pool[rng.below(pool.size())]);
      }
      for (std::size_t p : picks) {
        batch.images.push_back(index.images[p]);
        batch.labels.push_back(static_cast<int>(id));
        batch.modalities.push_back(static_cast<Modality>(m));
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// synthetic bimodal data

/// Fixed spectrum-gap transform between modalities: channels permuted, then
/// per-channel affine shift. Recoverable by modality-specific stages.
struct CrossModalityShift {
  std::vector<Eigen::Index> channel_perm;
  ArrayX<float> scale;
  ArrayX<float> offset;

  static CrossModalityShift identity(Eigen::Index channels) {
    CrossModalityShift s;
    for (Eigen::Index c = 0; c < channels; ++c) s.channel_perm.push_back(c);
    s.scale = ArrayX<float>::Ones(channels);
    s.offset = ArrayX<float>::Zero(channels);
    return s;
  }

  /// Rotate-by-one permutation with channel-dependent gain and bias.
  static CrossModalityShift default_gap(Eigen::Index channels) {
    CrossModalityShift s;
    s.scale.resize(channels);
    s.offset.resize(channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
      s.channel_perm.push_back(channels - 1 - c);
      s.scale[c] = 0.3f + 1.6f * static_cast<float>(c) / static_cast<float>(channels);
      s.offset[c] = (c % 2 == 0 ? 0.7f : -0.7f);
    }
    return s;
  }

  void validate(Eigen::Index channels) const {
    if (static_cast<Eigen::Index>(channel_perm.size()) != channels ||
        scale.size() != channels || offset.size() != channels)
      throw ConfigError("cross-modality shift does not cover " + std::to_string(channels) +
                        " channels");
    std::vector<bool> seen(static_cast<std::size_t>(channels), false);
    for (Eigen::Index c : channel_perm) {
      if (c < 0 || c >= channels || seen[static_cast<std::size_t>(c)])
        throw ConfigError("cross-modality shift permutation is not a bijection");
      seen[static_cast<std::size_t>(c)] = true;
    }
  }
};

inline ArrayX<float> apply_cross_modality_shift(const ArrayX<float>& image,
                                                const GridShape& grid,
                                                const CrossModalityShift& shift) {
  ArrayX<float> out(image.size());
  const Eigen::Index C = grid.channels;
  for (Eigen::Index cell = 0; cell < grid.cells(); ++cell)
    for (Eigen::Index c = 0; c < C; ++c)
      out[cell * C + c] = image[cell * C + shift.channel_perm[static_cast<std::size_t>(c)]] *
                              shift.scale[c] +
                          shift.offset[c];
  return out;
}

/// Per identity: a latent prototype grid; visible images add noise to it,
/// thermal images add noise to its shifted version. Prototype and noise
/// streams are seed-derived independently, so the prototypes do not move
/// when noise_sigma changes.
inline DatasetIndex generate_synthetic(int num_ids, int images_per_modality,
                                       const GridShape& grid,
                                       const CrossModalityShift& shift, double noise_sigma,
                                       std::uint64_t seed) {
  if (num_ids < 2) throw DomainError("generate_synthetic: need at least 2 identities");
  if (images_per_modality < 1)
    throw DomainError("generate_synthetic: need at least 1 image per modality");
  require_positive_extents({grid.rows, grid.cols, grid.channels});
  shift.validate(grid.channels);

  DatasetIndex index;
  index.grid = grid;
  Rng proto_rng(derive_seed(seed, 0xA1));
  Rng noise_rng(derive_seed(seed, 0xB2));
  char name[16];
  for (int id = 0; id < num_ids; ++id) {
    std::snprintf(name, sizeof(name), "id%04d", id);
    index.identity_names.emplace_back(name);
    ArrayX<float> proto(grid.numel());
    for (Eigen::Index i = 0; i < proto.size(); ++i)
      proto[i] = static_cast<float>(proto_rng.uniform(0.1, 0.9));
    ArrayX<float> shifted = apply_cross_modality_shift(proto, grid, shift);
    index.prototypes.push_back(proto);

    std::array<std::vector<std::size_t>, 2> group;
    for (int m = 0; m < 2; ++m) {
      const ArrayX<float>& base = m == 0 ? proto : shifted;
      for (int j = 0; j < images_per_modality; ++j) {
        ArrayX<float> img = base;
        if (noise_sigma > 0.0)
          for (Eigen::Index i = 0; i < img.size(); ++i)
            img[i] += static_cast<float>(noise_rng.normal(0.0, noise_sigma));
        group[static_cast<std::size_t>(m)].push_back(index.images.size());
        index.images.push_back(std::move(img));
      }
    }
    index.groups.push_back(std::move(group));
  }
  return index;
}

// ---------------------------------------------------------------------------
// on-disk dataset layout: <root>/<identity>/<visible|thermal>/<*.grid>

inline void save_dataset(const DatasetIndex& index, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("save_dataset: cannot create " + root.string());
  char name[16];
  for (std::size_t id = 0; id < index.groups.size(); ++id)
    for (int m = 0; m < 2; ++m) {
      const fs::path dir =
          root / index.identity_names[id] / modality_name(static_cast<Modality>(m));
      fs::create_directories(dir, ec);
      if (ec) throw IoError("save_dataset: cannot create " + dir.string());
      const auto& pool = index.groups[id][static_cast<std::size_t>(m)];
      for (std::size_t j = 0; j < pool.size(); ++j) {
        std::snprintf(name, sizeof(name), "img%04zu.grid", j);
        save_grid(dir / name, index.grid, index.images[pool[j]]);
      }
    }
}

inline DatasetIndex load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("load_dataset: no directory at " + root.string());

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("load_dataset: no identity directories in " + root.string());

  DatasetIndex index;
  bool have_grid = false;
  for (const std::string& name : names) {
    std::array<std::vector<std::size_t>, 2> group;
    for (int m = 0; m < 2; ++m) {
      const fs::path dir = root / name / modality_name(static_cast<Modality>(m));
      if (!fs::is_directory(dir))
        throw IoError("load_dataset: missing modality directory " + dir.string());
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw IoError("load_dataset: no images in " + dir.string());
      for (const fs::path& file : files) {
        ImageGrid img = load_grid(file);
        if (!have_grid) {
          index.grid = img.grid;
          have_grid = true;
        } else if (img.grid.rows != index.grid.rows || img.grid.cols != index.grid.cols ||
                   img.grid.channels != index.grid.channels) {
          throw IoError("load_dataset: grid shape of " + file.string() +
                        " disagrees with the rest of the dataset");
        }
        group[static_cast<std::size_t>(m)].push_back(index.images.size());
        index.images.push_back(std::move(img.data));
      }
    }
    index.identity_names.push_back(name);
    index.groups.push_back(std::move(group));
  }
  return index;
}

// ---------------------------------------------------------------------------
// augmentation

constexpr int kAugmentPad = 2;

inline ArrayX<float> flip_columns(const ArrayX<float>& image, const GridShape& grid) {
  ArrayX<float> out(image.size());
  const Eigen::Index W = grid.cols, C = grid.channels;
  for (Eigen::Index r = 0; r < grid.rows; ++r)
    for (Eigen::Index c = 0; c < W; ++c)
      out.segment((r * W + c) * C, C) = image.segment((r * W + (W - 1 - c)) * C, C);
  return out;
}

/// Zero-pads `pad` cells on every spatial border, then crops back to the
/// original size at the given offsets; offsets (pad, pad) reproduce the
/// input exactly.
inline ArrayX<float> crop_from_padded(const ArrayX<float>& image, const GridShape& grid,
                                      int pad, int row_off, int col_off) {
  if (row_off < 0 || col_off < 0 || row_off > 2 * pad || col_off > 2 * pad)
    throw DomainError("crop_from_padded: offset outside [0, " + std::to_string(2 * pad) + "]");
  ArrayX<float> out = ArrayX<float>::Zero(image.size());
  const Eigen::Index W = grid.cols, C = grid.channels;
  for (Eigen::Index r = 0; r < grid.rows; ++r) {
    const Eigen::Index src_r = r + row_off - pad;
    if (src_r < 0 || src_r >= grid.rows) continue;
    for (Eigen::Index c = 0; c < W; ++c) {
      const Eigen::Index src_c = c + col_off - pad;
      if (src_c < 0 || src_c >= W) continue;
      out.segment((r * W + c) * C, C) = image.segment((src_r * W + src_c) * C, C);
    }
  }
  return out;
}

/// Training augmentation: coin-flip column reversal, then a random crop of
/// the zero-padded grid. Draw order is flip, row offset, column offset.
inline ArrayX<float> augment(const ArrayX<float>& image, const GridShape& grid, Rng& rng) {
  ArrayX<float> work = rng.uniform() < 0.5 ? flip_columns(image, grid) : image;
  const int row_off = static_cast<int>(rng.below(2 * kAugmentPad + 1));
  const int col_off = static_cast<int>(rng.below(2 * kAugmentPad + 1));
  return crop_from_padded(work, grid, kAugmentPad, row_off, col_off);
}

}  // namespace xmreid

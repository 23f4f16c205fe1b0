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

#ifndef XMREID_CHECKPOINT_HPP_
#define XMREID_CHECKPOINT_HPP_

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "xmreid/encoder.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/tensor.hpp"

namespace xmreid {

// ---------------------------------------------------------------------------
// checkpoint state
//
// Text format, one value block per line, floats printed as C hexfloats so a
// save/load round trip is bit-exact. Sections: model parameters, auxiliary
// training parameters (e.g. a learned center table), optimizer momentum
// buffers, batch-norm running statistics, epoch counter.

inline constexpr const char* kCheckpointMagic = "xmreid-checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <typename S>
struct Checkpoint {
  int epoch = 0;
  ParamStore<S> params;
  ParamStore<S> aux;
  std::map<std::string, ArrayX<S>> opt_buffers;
  std::map<std::string, BatchNormState<S>> bn_states;
};

namespace detail {

template <typename S>
void write_values(std::ostream& out, const ArrayX<S>& v) {
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%a", static_cast<double>(v[i]));
    out << (i ? " " : "") << buf;
  }
  out << "\n";
}

template <typename S>
ArrayX<S> read_values(std::istream& in, Eigen::Index n, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw IoError("checkpoint '" + path + "': truncated value block");
  ArrayX<S> v(n);
  const char* cursor = line.c_str();
  for (Eigen::Index i = 0; i < n; ++i) {
    char* end = nullptr;
    const double x = std::strtod(cursor, &end);
    if (end == cursor)
      throw IoError("checkpoint '" + path + "': expected " + std::to_string(n) +
                    " values, found " + std::to_string(i));
    v[i] = static_cast<S>(x);
    cursor = end;
  }
  return v;
}

inline Shape read_shape(std::istringstream& head) {
  Eigen::Index rows = 0, cols = 0;
  head >> rows >> cols;
  return Shape{rows, cols};
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<S>& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint '" + path.string() + "' for writing");
  out << kCheckpointMagic << " " << kCheckpointVersion << "\n";
  out << "epoch " << ckpt.epoch << "\n";
  auto write_store = [&](const char* tag, const ParamStore<S>& store) {
    for (const auto& [name, p] : store.entries) {
      out << tag << " " << name;
      for (Eigen::Index d : p.shape) out << " " << d;
      out << "\n";
      detail::write_values(out, p.value);
    }
  };
  write_store("param", ckpt.params);
  write_store("aux", ckpt.aux);
  for (const auto& [name, buf] : ckpt.opt_buffers) {
    out << "opt " << name << " " << buf.size() << "\n";
    detail::write_values(out, buf);
  }
  for (const auto& [name, st] : ckpt.bn_states) {
    out << "bn " << name << " " << st.running_mean.size() << "\n";
    detail::write_values(out, st.running_mean);
    detail::write_values(out, st.running_var);
  }
  out << "end\n";
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string p = path.string();
  std::string line;
  if (!std::getline(in, line))
    throw IoError("checkpoint '" + p + "': empty file");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kCheckpointMagic)
      throw IoError("checkpoint '" + p + "': bad magic '" + magic + "'");
    if (version != kCheckpointVersion)
      throw IoError("checkpoint '" + p + "': unsupported version " + std::to_string(version));
  }
  Checkpoint<S> ckpt;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string kind;
    head >> kind;
    if (kind == "end") {
      saw_end = true;
      break;
    }
    if (kind == "epoch") {
      head >> ckpt.epoch;
    } else if (kind == "param" || kind == "aux") {
      std::string name;
      head >> name;
      Shape shape = detail::read_shape(head);
      ArrayX<S> v = detail::read_values<S>(in, shape_size(shape), p);
      (kind == "param" ? ckpt.params : ckpt.aux).add(name, shape, std::move(v));
    } else if (kind == "opt") {
      std::string name;
      Eigen::Index n = 0;
      head >> name >> n;
      ckpt.opt_buffers.emplace(name, detail::read_values<S>(in, n, p));
    } else if (kind == "bn") {
      std::string name;
      Eigen::Index n = 0;
      head >> name >> n;
      BatchNormState<S> st;
      st.running_mean = detail::read_values<S>(in, n, p);
      st.running_var = detail::read_values<S>(in, n, p);
      ckpt.bn_states.emplace(name, std::move(st));
    } else {
      throw IoError("checkpoint '" + p + "': unknown section '" + kind + "'");
    }
  }
  if (!saw_end) throw IoError("checkpoint '" + p + "': missing end marker");
  return ckpt;
}

}  // namespace xmreid

#endif  // XMREID_CHECKPOINT_HPP_

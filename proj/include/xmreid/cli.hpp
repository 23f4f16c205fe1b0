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

// Command implementations behind the command-line tool: dataset generation,
// training, evaluation, ablation sweeps and self-verification. Every command
// that writes artifacts writes its run manifest first. Exit codes: 0 success,
// 2 usage or config error, 3 numeric failure.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmreid/checkpoint.hpp"
#include "xmreid/errors.hpp"
#include "xmreid/evaluation.hpp"
#include "xmreid/sampling.hpp"
#include "xmreid/trainer.hpp"
#include "xmreid/verify.hpp"

namespace xmreid {

inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// run manifest

struct RunManifest {
  std::string command;
  std::string config_file;  // empty when none was given
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string timestamp;  // ISO 8601 UTC
};

inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[24];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes <out_dir>/manifest.json, creating the directory. Called before any
/// result file so a crashed run still identifies itself.
inline void write_manifest(const RunManifest& m) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(m.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + m.out_dir);
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config_file"] = m.config_file;
  j["seed"] = m.seed;
  j["output_dir"] = m.out_dir;
  j["timestamp"] = m.timestamp;
  j["versions"] = {{"tool", kToolVersion},
                   {"grid_format", kGridVersion},
                   {"checkpoint_format", kCheckpointVersion}};
  const fs::path path = fs::path(m.out_dir) / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

inline RunManifest make_manifest(const std::string& command, const std::string& config_file,
                                 std::uint64_t seed, const std::string& out_dir) {
  return RunManifest{command, config_file, seed, out_dir, utc_timestamp()};
}

// ---------------------------------------------------------------------------
// config file: '#' comments, blank lines, 'key = value' entries

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::map<std::string, std::string> entries;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
    entries[key] = value;
  }
  return entries;
}

namespace detail {

inline long long parse_ll(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not an integer");
  }
  if (used != value.size()) throw ConfigError(key + ": '" + value + "' is not an integer");
  return v;
}

inline double parse_d(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a number");
  }
  if (used != value.size()) throw ConfigError(key + ": '" + value + "' is not a number");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train options: defaults mirror the reference configuration

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string config_file;

  std::string loss = "hc_tri";
  int split = 2;
  int parts = 6;
  long long dim = 256;
  std::string pool = "gem";
  double rho = 0.3;
  double lambda = 1.0;
  double xi = 0.1;
  int P = 8;
  int K = 4;
  int epochs = 30;
  std::uint64_t seed = 1;
  double base_lr = 0.1;
  double momentum = 0.9;
  double val_fraction = 0.2;
};

/// Applies one config-file entry. Keys match the command-line flag names.
inline void apply_config_entry(TrainOptions& o, const std::string& key,
                               const std::string& value) {
  if (key == "loss") o.loss = value;
  else if (key == "split") o.split = static_cast<int>(detail::parse_ll(key, value));
  else if (key == "parts") o.parts = static_cast<int>(detail::parse_ll(key, value));
  else if (key == "dim") o.dim = detail::parse_ll(key, value);
  else if (key == "pool") o.pool = value;
  else if (key == "rho") o.rho = detail::parse_d(key, value);
  else if (key == "lambda") o.lambda = detail::parse_d(key, value);
  else if (key == "xi") o.xi = detail::parse_d(key, value);
  else if (key == "P") o.P = static_cast<int>(detail::parse_ll(key, value));
  else if (key == "K") o.K = static_cast<int>(detail::parse_ll(key, value));
  else if (key == "epochs") o.epochs = static_cast<int>(detail::parse_ll(key, value));
  else if (key == "seed") o.seed = static_cast<std::uint64_t>(detail::parse_ll(key, value));
  else if (key == "base_lr") o.base_lr = detail::parse_d(key, value);
  else if (key == "momentum") o.momentum = detail::parse_d(key, value);
  else if (key == "val_fraction") o.val_fraction = detail::parse_d(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Merges a config file under flags the user already set: command line wins,
/// then the file, then built-in defaults.
inline void apply_config_file(TrainOptions& o, const std::string& path,
                              const std::set<std::string>& set_on_command_line) {
  for (const auto& [key, value] : parse_config_file(path))
    if (!set_on_command_line.count(key)) apply_config_entry(o, key, value);
}

/// Echo of the effective configuration, readable back as a config file.
inline void write_config_echo(const TrainOptions& o, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  auto put_d = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out << buf;
  };
  out << "loss = " << o.loss << "\n";
  out << "split = " << o.split << "\n";
  out << "parts = " << o.parts << "\n";
  out << "dim = " << o.dim << "\n";
  out << "pool = " << o.pool << "\n";
  put_d("rho", o.rho);
  put_d("lambda", o.lambda);
  put_d("xi", o.xi);
  out << "P = " << o.P << "\n";
  out << "K = " << o.K << "\n";
  out << "epochs = " << o.epochs << "\n";
  out << "seed = " << o.seed << "\n";
  put_d("base_lr", o.base_lr);
  put_d("momentum", o.momentum);
  put_d("val_fraction", o.val_fraction);
  if (!out) throw IoError("write failed for " + path.string());
}

/// Builds the full training configuration. The classifier size follows the
/// training side of the identity split, so it depends on the dataset.
inline TrainConfig<float> to_train_config(const TrainOptions& o, const DatasetIndex& data) {
  TrainConfig<float> cfg;
  cfg.P = o.P;
  cfg.K = o.K;
  cfg.epochs = o.epochs;
  cfg.momentum = static_cast<float>(o.momentum);
  cfg.base_lr = static_cast<float>(o.base_lr);
  cfg.variant = parse_loss_variant(o.loss);
  cfg.seed = o.seed;
  cfg.val_fraction = o.val_fraction;

  cfg.encoder = TwoStreamConfig::defaults(0);
  cfg.encoder.split_index = o.split;
  cfg.encoder.num_parts = o.parts;
  cfg.encoder.embed_dim = o.dim;
  cfg.encoder.pool = parse_pool(o.pool);
  cfg.encoder.input_grid = data.grid;

  const SplitDataset split = split_by_identity(data, o.val_fraction);
  cfg.encoder.num_classes = split.train.num_identities();
  cfg.loss.num_classes = split.train.num_identities();
  cfg.loss.rho = static_cast<float>(o.rho);
  cfg.loss.lambda = static_cast<float>(o.lambda);
  cfg.loss.xi = static_cast<float>(o.xi);
  return cfg;
}

// ---------------------------------------------------------------------------
// exit-code policy

/// Maps exceptions onto the documented exit codes. Config, shape and file
/// problems are usage errors (2); numeric and domain failures are 3.
template <typename Fn>
int run_cli_command(Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  int ids = 32;
  int per_modality = 20;
  std::uint64_t seed = 7;
  std::string out_dir;
  double noise = 0.12;
};

inline int cmd_generate(const GenerateOptions& o) {
  if (o.ids < 2)
    throw ConfigError("--ids must be >= 2 (training needs at least two identities)");
  if (o.per_modality < 1) throw ConfigError("--per-modality must be >= 1");
  if (o.out_dir.empty()) throw ConfigError("--out is required");
  write_manifest(make_manifest("generate", "", o.seed, o.out_dir));
  const GridShape grid{24, 12, 8};
  DatasetIndex data = generate_synthetic(o.ids, o.per_modality, grid,
                                         CrossModalityShift::default_gap(grid.channels),
                                         o.noise, o.seed);
  save_dataset(data, o.out_dir);
  std::printf("wrote %d identities x 2 modalities x %d images (%lldx%lldx%lld grid) to %s\n",
              o.ids, o.per_modality, static_cast<long long>(grid.rows),
              static_cast<long long>(grid.cols), static_cast<long long>(grid.channels),
              o.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const TrainOptions& o) {
  if (o.data_dir.empty()) throw ConfigError("--data is required");
  if (o.out_dir.empty()) throw ConfigError("--out is required");
  DatasetIndex data = load_dataset(o.data_dir);
  TrainConfig<float> cfg = to_train_config(o, data);
  cfg.validate();
  write_manifest(make_manifest("train", o.config_file, o.seed, o.out_dir));
  const std::filesystem::path out(o.out_dir);
  write_config_echo(o, out / "train_config.ini");

  TrainResult<float> result = train(cfg, data);

  save_checkpoint(out / "checkpoint.txt", make_checkpoint(result));
  save_history_csv(out / "history.csv", result.history);
  const EpochRow& last = result.history.back();
  std::printf("trained %d epochs (%s): loss %.6g, val rank-1 %.4f map %.4f minp %.4f\n",
              result.epochs_completed, o.loss.c_str(), last.loss_total, last.val_rank1,
              last.val_map, last.val_minp);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

enum class EvalDirection { v2t, t2v, both };

inline EvalDirection parse_direction(const std::string& s) {
  if (s == "v2t") return EvalDirection::v2t;
  if (s == "t2v") return EvalDirection::t2v;
  if (s == "both") return EvalDirection::both;
  throw ConfigError("unknown direction '" + s + "' (expected v2t, t2v or both)");
}

struct EvalOptions {
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
  std::string direction = "t2v";
  std::string export_embeddings;  // empty disables the export
  TrainOptions model;             // shape flags and config file reuse the train set
};

/// Restores checkpoint parameters into a freshly built model. Coverage must
/// be exact in both directions; anything else is a checkpoint/config
/// mismatch.
inline TwoStreamModel<float> restore_model(const TwoStreamConfig& encoder,
                                           const Checkpoint<float>& ckpt) {
  TwoStreamModel<float> model = build_model<float>(encoder, 0);
  if (ckpt.params.entries.size() != model.params.entries.size())
    throw ConfigError("checkpoint carries " + std::to_string(ckpt.params.entries.size()) +
                      " parameters, the configured model has " +
                      std::to_string(model.params.entries.size()));
  for (const auto& [name, p] : ckpt.params.entries) {
    Param<float>& dst = model.params.at(name);
    if (dst.value.size() != p.value.size())
      throw ConfigError("checkpoint parameter '" + name + "' does not fit the configured model");
    dst.value = p.value;
  }
  for (const auto& [name, st] : ckpt.bn_states) {
    auto it = model.bn_states.find(name);
    if (it == model.bn_states.end())
      throw ConfigError("checkpoint batch-norm state '" + name +
                        "' does not fit the configured model");
    it->second = st;
  }
  return model;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["rank1"] = r.cmc.empty() ? 0.0 : r.cmc.front();
  j["map"] = r.map;
  j["minp"] = r.minp;
  j["num_queries"] = r.num_queries;
  j["cmc"] = r.cmc;
  return j;
}

inline int cmd_eval(const EvalOptions& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (o.data_dir.empty()) throw ConfigError("--data is required");
  if (o.out_dir.empty()) throw ConfigError("--out is required");
  const EvalDirection direction = parse_direction(o.direction);

  DatasetIndex data = load_dataset(o.data_dir);
  TrainConfig<float> cfg = to_train_config(o.model, data);
  cfg.validate();
  Checkpoint<float> ckpt = load_checkpoint<float>(o.checkpoint);
  TwoStreamModel<float> model = restore_model(cfg.encoder, ckpt);

  write_manifest(make_manifest("eval", o.model.config_file, o.model.seed, o.out_dir));

  const SplitDataset split = split_by_identity(data, o.model.val_fraction);
  EmbeddingSet embeddings = embed_dataset(model, split.val);
  if (!o.export_embeddings.empty())
    save_embeddings(o.export_embeddings, embeddings);

  std::vector<std::pair<std::string, bool>> directions;  // name, visible_query
  if (direction == EvalDirection::t2v || direction == EvalDirection::both)
    directions.emplace_back("thermal_to_visible", false);
  if (direction == EvalDirection::v2t || direction == EvalDirection::both)
    directions.emplace_back("visible_to_thermal", true);

  nlohmann::ordered_json j;
  const std::filesystem::path out(o.out_dir);
  std::ofstream csv(out / "report.csv");
  if (!csv) throw IoError("cannot write " + (out / "report.csv").string());
  csv << "direction,rank1,map,minp,num_queries\n";
  char buf[160];
  for (const auto& [name, visible_query] : directions) {
    EvalReport r = cross_modality_report(embeddings, visible_query);
    j["directions"][name] = report_to_json(r);
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%d\n", name.c_str(),
                  r.cmc.empty() ? 0.0 : r.cmc.front(), r.map, r.minp, r.num_queries);
    csv << buf;
    std::printf("%s: rank-1 %.4f map %.4f minp %.4f over %d queries\n", name.c_str(),
                r.cmc.empty() ? 0.0 : r.cmc.front(), r.map, r.minp, r.num_queries);
  }
  if (!csv) throw IoError("write failed for " + (out / "report.csv").string());
  std::ofstream jf(out / "report.json");
  if (!jf) throw IoError("cannot write " + (out / "report.json").string());
  jf << j.dump(2) << "\n";
  if (!jf) throw IoError("write failed for " + (out / "report.json").string());
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
  std::string axis;
  TrainOptions train;
};

inline int cmd_ablate(const AblateOptions& o) {
  if (o.train.data_dir.empty()) throw ConfigError("--data is required");
  if (o.train.out_dir.empty()) throw ConfigError("--out is required");
  const AblationAxis axis = parse_ablation_axis(o.axis);
  DatasetIndex data = load_dataset(o.train.data_dir);
  TrainConfig<float> base = to_train_config(o.train, data);
  base.validate();
  write_manifest(make_manifest("ablate", o.train.config_file, o.train.seed, o.train.out_dir));

  std::vector<AblationRow> rows = run_ablation(base, axis, data);
  save_ablation_csv(std::filesystem::path(o.train.out_dir) / "ablation.csv", rows);
  for (const AblationRow& row : rows) {
    if (row.error.empty())
      std::printf("%s=%s: rank-1 %.4f map %.4f minp %.4f\n", o.axis.c_str(), row.value.c_str(),
                  row.rank1, row.map, row.minp);
    else
      std::printf("%s=%s: error: %s\n", o.axis.c_str(), row.value.c_str(), row.error.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyCliOptions {
  std::string suite = "all";
  std::string out_dir;  // optional; stores the suite report when given
  double hinge_margin_shift = 0.0;
};

inline int cmd_verify(const VerifyCliOptions& o) {
  const VerifySuite suite = parse_verify_suite(o.suite);
  VerifyOptions options;
  options.hinge_margin_shift = o.hinge_margin_shift;
  if (!o.out_dir.empty()) write_manifest(make_manifest("verify", "", options.seed, o.out_dir));

  std::vector<SuiteReport> reports = run_verify(suite, options);
  int failures = 0;
  for (const SuiteReport& r : reports) {
    std::printf("suite %s\n", r.name.c_str());
    for (const SuiteCheck& c : r.checks)
      std::printf("  [%s] %s\n", c.passed ? " ok " : "FAIL", c.line.c_str());
    failures += r.failures();
  }
  std::printf("%d suite(s), %d failure(s)\n", static_cast<int>(reports.size()), failures);

  if (!o.out_dir.empty()) {
    nlohmann::ordered_json j;
    j["suites"] = nlohmann::ordered_json::array();
    for (const SuiteReport& r : reports) {
      nlohmann::ordered_json js;
      js["name"] = r.name;
      js["failures"] = r.failures();
      js["checks"] = nlohmann::ordered_json::array();
      for (const SuiteCheck& c : r.checks)
        js["checks"].push_back({{"line", c.line}, {"passed", c.passed}});
      j["suites"].push_back(std::move(js));
    }
    const std::filesystem::path path = std::filesystem::path(o.out_dir) / "verify_report.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path.string());
  }
  return failures == 0 ? 0 : 3;
}

}  // namespace xmreid

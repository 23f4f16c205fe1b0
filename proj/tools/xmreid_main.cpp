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

#include <set>
#include <string>

#include <CLI11.hpp>

#include "xmreid/cli.hpp"

namespace {

// Registers the model/training flags shared by train, eval and ablate, and
// records which config-file keys they shadow when set on the command line.
void add_train_flags(CLI::App* cmd, xmreid::TrainOptions& o, bool with_schedule) {
  cmd->add_option("--loss", o.loss, "Objective: bh_tri, hc_tri, lc, hc or id_only");
  cmd->add_option("--split", o.split, "Index of the first shared encoder stage (0..5)");
  cmd->add_option("--parts", o.parts, "Number of horizontal feature parts");
  cmd->add_option("--dim", o.dim, "Per-part embedding width");
  cmd->add_option("--pool", o.pool, "Part pooling: gem, mean or max");
  cmd->add_option("--rho", o.rho, "Triplet hinge margin");
  cmd->add_option("--lambda", o.lambda, "Weight of the per-part metric terms");
  cmd->add_option("--P", o.P, "Identities per batch");
  cmd->add_option("--K", o.K, "Images per identity and modality per batch");
  if (with_schedule) {
    cmd->add_option("--epochs", o.epochs, "Training epochs");
    cmd->add_option("--seed", o.seed, "Run seed");
  }
  cmd->add_option("--config", o.config_file,
                  "Config file ('key = value' lines); flags set here override it");
}

std::set<std::string> flags_set_on_command_line(const CLI::App* cmd) {
  static const char* keys[] = {"loss", "split",  "parts", "dim",  "pool", "rho",
                               "lambda", "P",    "K",     "epochs", "seed"};
  std::set<std::string> set_keys;
  for (const char* key : keys) {
    const CLI::Option* opt = cmd->get_option_no_throw("--" + std::string(key));
    if (opt != nullptr && opt->count() > 0) set_keys.insert(key);
  }
  return set_keys;
}

void merge_config_file(const CLI::App* cmd, xmreid::TrainOptions& o) {
  if (!o.config_file.empty())
    xmreid::apply_config_file(o, o.config_file, flags_set_on_command_line(cmd));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modality metric-learning workbench"};
  app.set_version_flag("--version", xmreid::kToolVersion);
  app.require_subcommand(1);

  xmreid::GenerateOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("generate", "Write a synthetic two-modality dataset");
  cmd_gen->add_option("--ids", gen.ids, "Number of identities");
  cmd_gen->add_option("--per-modality", gen.per_modality, "Images per identity and modality");
  cmd_gen->add_option("--seed", gen.seed, "Dataset seed");
  cmd_gen->add_option("--out", gen.out_dir, "Output directory")->required();

  xmreid::TrainOptions train;
  CLI::App* cmd_train = app.add_subcommand("train", "Train an encoder on a dataset");
  cmd_train->add_option("--data", train.data_dir, "Dataset directory")->required();
  cmd_train->add_option("--out", train.out_dir, "Output directory")->required();
  add_train_flags(cmd_train, train, true);

  xmreid::EvalOptions eval;
  CLI::App* cmd_eval = app.add_subcommand("eval", "Score a checkpoint on the held-out split");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  cmd_eval->add_option("--data", eval.data_dir, "Dataset directory")->required();
  cmd_eval->add_option("--out", eval.out_dir, "Output directory")->required();
  cmd_eval->add_option("--direction", eval.direction, "Query direction: v2t, t2v or both");
  cmd_eval->add_option("--export-embeddings", eval.export_embeddings,
                       "Also write the held-out embeddings to this file");
  add_train_flags(cmd_eval, eval.model, false);

  xmreid::AblateOptions ablate;
  CLI::App* cmd_ablate = app.add_subcommand("ablate", "Sweep one axis and tabulate metrics");
  cmd_ablate->add_option("--axis", ablate.axis, "Axis: split, loss, parts, pool or dim")
      ->required();
  cmd_ablate->add_option("--data", ablate.train.data_dir, "Dataset directory")->required();
  cmd_ablate->add_option("--out", ablate.train.out_dir, "Output directory")->required();
  add_train_flags(cmd_ablate, ablate.train, true);

  xmreid::VerifyCliOptions verify;
  CLI::App* cmd_verify = app.add_subcommand("verify", "Run the self-verification suites");
  cmd_verify->add_option("--suite", verify.suite,
                         "Suite: grad, loss-oracle, counts, metrics or all");
  cmd_verify->add_option("--out", verify.out_dir, "Optional directory for the suite report");
  cmd_verify->add_option("--mutate-hinge", verify.hinge_margin_shift,
                         "Self-test fixture: shift the production hinge margin so the "
                         "loss-oracle suite must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (cmd_gen->parsed()) return xmreid::run_cli_command([&] { return xmreid::cmd_generate(gen); });
  if (cmd_train->parsed())
    return xmreid::run_cli_command([&] {
      merge_config_file(cmd_train, train);
      return xmreid::cmd_train(train);
    });
  if (cmd_eval->parsed())
    return xmreid::run_cli_command([&] {
      merge_config_file(cmd_eval, eval.model);
      return xmreid::cmd_eval(eval);
    });
  if (cmd_ablate->parsed())
    return xmreid::run_cli_command([&] {
      merge_config_file(cmd_ablate, ablate.train);
      return xmreid::cmd_ablate(ablate);
    });
  if (cmd_verify->parsed())
    return xmreid::run_cli_command([&] { return xmreid::cmd_verify(verify); });
  return 2;
}

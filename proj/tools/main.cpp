#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptmatch/commands.hpp"
#include "ptmatch/errors.hpp"

using namespace ptmatch;

int main(int argc, char** argv) {
  CLI::App app{"pointcloud/text matching pipeline: synthetic data, dual-attention embeddings, "
               "robust negative contrastive training, bidirectional recall evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = 1;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--set", overrides, "override a config key, e.g. --set train.alpha=4")
      ->take_all();
  app.add_option("--seed", seed, "override the top-level seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--threads", threads, "cap on internal parallelism")
      ->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen", "generate a train/val/test dataset bundle");
  std::string gen_out;
  gen->add_option("out_dir", gen_out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train parameters on a dataset bundle");
  std::string train_data, train_ckpt;
  train_cmd->add_option("data_dir", train_data, "dataset bundle from gen")->required();
  train_cmd->add_option("out_checkpoint", train_ckpt, "checkpoint JSON to write")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out;
  eval_cmd->add_option("checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("data_dir", eval_data)->required();
  eval_cmd->add_option("out_metrics", eval_out)->required();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string corrupt_op;
  std::size_t op_configs = 100, composed_configs = 100;
  gradcheck_cmd->add_option("--corrupt-op", corrupt_op,
                            "deliberately corrupt one op's gradient (harness self-test)");
  gradcheck_cmd->add_option("--op-configs", op_configs, "random configurations per kernel op");
  gradcheck_cmd->add_option("--composed-configs", composed_configs,
                            "random configurations per composed graph");

  auto* scan_cmd = app.add_subcommand("loss-scan", "robust loss landscape CSV");
  std::string scan_out;
  std::vector<double> scan_alphas{0.5, 1.0, 2.0, 4.0};
  std::size_t scan_grid = 200;
  scan_cmd->add_option("out_csv", scan_out)->required();
  scan_cmd->add_option("--alphas", scan_alphas, "alpha values to scan")->take_all();
  scan_cmd->add_option("--grid", scan_grid, "number of S grid points");

  auto* attn_cmd = app.add_subcommand("attn-dump", "per-token attention weights as JSON");
  std::string attn_ckpt, attn_data, attn_out;
  std::vector<int> attn_ids;
  attn_cmd->add_option("checkpoint", attn_ckpt)->required();
  attn_cmd->add_option("data_dir", attn_data)->required();
  attn_cmd->add_option("out_json", attn_out)->required();
  attn_cmd->add_option("--ids", attn_ids, "sample ids (scenes or texts)")
      ->required()
      ->take_all();

  // global flags may appear after the subcommand
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    RunConfig config = load_config(config_path, overrides);
    if (seed_set) config.seed = seed;
    (void)threads;  // commands are single-threaded; the flag caps, never raises

    if (gen->parsed()) return cmd_gen(config, gen_out);
    if (train_cmd->parsed()) return cmd_train(config, train_data, train_ckpt);
    if (eval_cmd->parsed()) return cmd_eval(config, eval_ckpt, eval_data, eval_out);
    if (gradcheck_cmd->parsed()) {
      return cmd_gradcheck(config, corrupt_op, op_configs, composed_configs);
    }
    if (scan_cmd->parsed()) return cmd_loss_scan(scan_alphas, scan_grid, scan_out);
    if (attn_cmd->parsed()) return cmd_attn_dump(config, attn_ckpt, attn_data, attn_ids, attn_out);
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const AnalysisError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitVerification;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}

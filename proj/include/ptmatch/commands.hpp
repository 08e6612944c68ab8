#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ptmatch/io.hpp"

namespace ptmatch {

// Exit codes shared by the CLI: 0 success, 2 usage/config, 3 training
// divergence, 4 verification failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitVerification = 4;

// generate -> split by scene -> inject noise into the training split only,
// then write out_dir/{train,val,test} dataset directories.
int cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir);

// Trains on data_dir/train with data_dir/val for per-epoch R@1 logging;
// writes the checkpoint plus trainlog.jsonl next to it.
int cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
              const std::filesystem::path& out_checkpoint);

// Evaluates a checkpoint on the configured split of data_dir and writes the
// metrics JSON; prints a one-line summary.
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
             const std::filesystem::path& data_dir, const std::filesystem::path& out_metrics);

// Finite-difference verification of every kernel op and the composed
// embedding/loss graphs. `corrupt_op` deliberately breaks one gradient rule
// (harness self-test); nonzero exit 4 when any check fails.
int cmd_gradcheck(const RunConfig& config, const std::string& corrupt_op,
                  std::size_t op_configs, std::size_t composed_configs);

// Per-pair loss landscape CSV over an S grid, one summary row per alpha with
// the bisected sign-change threshold and both closed-form candidates.
int cmd_loss_scan(const std::vector<double>& alphas, std::size_t grid,
                  const std::filesystem::path& out_csv);

// Token-attention records for the given sample ids (scenes or texts).
int cmd_attn_dump(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& data_dir, const std::vector<int>& ids,
                  const std::filesystem::path& out_json);

}  // namespace ptmatch

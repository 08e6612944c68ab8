#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptmatch/evalkit.hpp"
#include "ptmatch/synthgen.hpp"
#include "ptmatch/trainer.hpp"

namespace ptmatch {

inline constexpr int kFormatVersion = 1;

// Effective run configuration: the union of generator, split, model, train
// and eval options plus the top-level seed. Every field has a default;
// paths are CLI arguments, not config keys. Section seeds are derived from
// the top-level seed, so one seed pins the whole pipeline.
struct RunConfig {
  std::uint64_t seed = 17;
  GeneratorSpec generator;  // generator.seed is derived, not configurable
  double noise_rate = 0.13;
  SplitFractions split;
  std::size_t d_c = 32;
  DapConfig dap;
  TrainConfig train;
  std::string eval_split = "test";
};

// Strict parse: unknown keys anywhere are a ConfigError. Overrides are
// dotted key=value pairs (e.g. "train.alpha=4") applied before parsing, so
// they win over the file and share its validation.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& file,
                      const std::vector<std::string>& overrides = {});

// FNV-1a digest of the canonical config dump, embedded in outputs.
std::string config_digest(const RunConfig& config);

// Derived per-stage seeds.
std::uint64_t gen_seed(const RunConfig& config);
std::uint64_t split_seed(const RunConfig& config);
std::uint64_t noise_seed(const RunConfig& config);
std::uint64_t train_seed(const RunConfig& config);

// Fills train.seed / train.d_c / train.dap from the top-level sections.
TrainConfig effective_train_config(const RunConfig& config);

// Dataset directory format: meta.json, scenes.jsonl, texts.jsonl, noise.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                   const GeneratorSpec& spec, const std::string& split_name,
                   const std::string& digest);
Dataset read_dataset(const std::filesystem::path& dir);

void write_checkpoint(const std::filesystem::path& file, const Model& model,
                      const std::string& digest);
Model read_checkpoint(const std::filesystem::path& file);

void write_trainlog(const std::filesystem::path& file, const TrainLog& log);

nlohmann::json metrics_to_json(const RetrievalMetrics& metrics, const std::string& digest);
void write_metrics(const std::filesystem::path& file, const RetrievalMetrics& metrics,
                   const std::string& digest);
std::string metrics_summary_line(const RetrievalMetrics& metrics);

nlohmann::json attention_record_to_json(const AttentionDumpRecord& record);
AttentionDumpRecord attention_record_from_json(const nlohmann::json& j);

}  // namespace ptmatch

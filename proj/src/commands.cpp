#include "ptmatch/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ptmatch/errors.hpp"
#include "ptmatch/gradcheck.hpp"
#include "ptmatch/rncl.hpp"

namespace ptmatch {

namespace {

const char* match_name(ThresholdReport::Match match) {
  switch (match) {
    case ThresholdReport::Match::exp_neg_alpha: return "1m_exp_neg_alpha";
    case ThresholdReport::Match::exp_one_minus_alpha: return "1m_exp_1m_alpha";
    case ThresholdReport::Match::neither: return "neither";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

int cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir) {
  GeneratorSpec spec = config.generator;
  spec.seed = gen_seed(config);
  if (!(config.noise_rate >= 0.0 && config.noise_rate <= 1.0)) {
    throw ConfigError("gen: noise_rate outside [0, 1]");
  }

  const Dataset full = generate(spec);
  Splits parts = split(full, config.split, split_seed(config));
  parts.train = inject_noise(std::move(parts.train), config.noise_rate, noise_seed(config));

  const std::string digest = config_digest(config);
  write_dataset(out_dir / "train", parts.train, spec, "train", digest);
  write_dataset(out_dir / "val", parts.val, spec, "val", digest);
  write_dataset(out_dir / "test", parts.test, spec, "test", digest);

  const nlohmann::json meta{{"format_version", kFormatVersion},
                            {"kind", "dataset-bundle"},
                            {"splits", {"train", "val", "test"}},
                            {"generator", config_to_json(config).at("generator")},
                            {"config_digest", digest}};
  std::ofstream out(out_dir / "meta.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "meta.json").string());
  out << meta.dump(2) << "\n";

  std::printf("gen: %zu scenes, %zu texts (train %zu/%zu noisy, val %zu, test %zu) -> %s\n",
              full.scenes.size(), full.texts.size(), parts.train.texts.size(),
              static_cast<std::size_t>(
                  std::floor(config.noise_rate * parts.train.texts.size() + 0.5)),
              parts.val.texts.size(), parts.test.texts.size(), out_dir.c_str());
  return kExitOk;
}

int cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
              const std::filesystem::path& out_checkpoint) {
  const Dataset ds_train = read_dataset(data_dir / "train");
  const Dataset ds_val = read_dataset(data_dir / "val");

  const TrainConfig train_config = effective_train_config(config);
  const TrainResult result = train(ds_train, ds_val, train_config);

  const std::string digest = config_digest(config);
  write_checkpoint(out_checkpoint, result.model, digest);
  const std::filesystem::path log_path =
      out_checkpoint.parent_path().empty() ? std::filesystem::path("trainlog.jsonl")
                                           : out_checkpoint.parent_path() / "trainlog.jsonl";
  write_trainlog(log_path, result.log);

  const EpochRecord& last = result.log.back();
  std::printf("train: %s loss, %zu epochs, final mean loss %.6f, val r1 %.1f/%.1f -> %s\n",
              loss_name(train_config.loss), train_config.epochs, last.mean_loss, last.val_r1_p2t,
              last.val_r1_t2p, out_checkpoint.c_str());
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
             const std::filesystem::path& data_dir, const std::filesystem::path& out_metrics) {
  const Model model = read_checkpoint(checkpoint);
  const Dataset ds = read_dataset(data_dir / config.eval_split);
  if (!ds.scenes.empty() && ds.scenes.front().features.feature_dim() != model.d_f) {
    throw ConfigError("eval: checkpoint d_f " + std::to_string(model.d_f) +
                      " does not match dataset d_f " +
                      std::to_string(ds.scenes.front().features.feature_dim()));
  }

  const RetrievalMetrics metrics = recall_at_k(encode_corpus(ds, model), ds.clean_map);
  write_metrics(out_metrics, metrics, config_digest(config));
  std::printf("eval[%s]: %s\n", config.eval_split.c_str(),
              metrics_summary_line(metrics).c_str());
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, const std::string& corrupt_op,
                  std::size_t op_configs, std::size_t composed_configs) {
  const GradCheckReport report =
      run_gradcheck(derive_seed(config.seed, 0x6C), op_configs, composed_configs, corrupt_op);
  for (const GradCheckLine& line : report.lines) {
    std::printf("%-24s configs=%-4zu worst_rel_err=%.3e  %s\n", line.name.c_str(), line.configs,
                line.worst_rel_err, line.pass ? "PASS" : "FAIL");
  }
  if (!report.all_pass) {
    std::printf("gradcheck: FAILED (tolerance %.1e)\n", report.tolerance);
    return kExitVerification;
  }
  std::printf("gradcheck: all checks within %.1e\n", report.tolerance);
  return kExitOk;
}

int cmd_loss_scan(const std::vector<double>& alphas, std::size_t grid,
                  const std::filesystem::path& out_csv) {
  if (grid < 10) throw ConfigError("loss-scan: grid must be >= 10");
  if (alphas.empty()) throw ConfigError("loss-scan: need at least one alpha");

  std::ostringstream csv;
  csv << "alpha,s,loss,grad,s_star,cand_1m_exp_neg_alpha,cand_1m_exp_1m_alpha,matched\n";
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw ConfigError("loss-scan: alpha must be > 0");
    for (std::size_t i = 0; i < grid; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(grid);
      const PerPairLoss pair = rnc_per_pair(s, alpha);
      csv << format_double(alpha) << ',' << format_double(s) << ',' << format_double(pair.loss)
          << ',' << format_double(pair.grad) << ",,,,\n";
    }
    const ThresholdReport report = find_threshold(alpha, 1e-9);
    csv << format_double(alpha) << ",,,," << format_double(report.s_star) << ','
        << format_double(report.cand_1m_exp_neg_alpha) << ','
        << format_double(report.cand_1m_exp_1m_alpha) << ',' << match_name(report.match) << "\n";
  }

  std::ofstream out(out_csv, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_csv.string());
  out << csv.str();
  if (!out) throw IoError("write failed for " + out_csv.string());
  std::printf("loss-scan: %zu alphas x %zu grid points -> %s\n", alphas.size(), grid,
              out_csv.c_str());
  return kExitOk;
}

int cmd_attn_dump(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& data_dir, const std::vector<int>& ids,
                  const std::filesystem::path& out_json) {
  if (ids.empty()) throw ConfigError("attn-dump: no sample ids given");
  const Model model = read_checkpoint(checkpoint);

  std::vector<Dataset> splits;
  for (const char* name : {"train", "val", "test"}) {
    splits.push_back(read_dataset(data_dir / name));
  }

  nlohmann::json records = nlohmann::json::array();
  for (int id : ids) {
    const TokenFeatures* sample = nullptr;
    for (const Dataset& ds : splits) {
      if (const SceneSample* s = ds.find_scene(id)) {
        sample = &s->features;
        break;
      }
      if (const TextSample* t = ds.find_text(id)) {
        sample = &t->features;
        break;
      }
    }
    if (sample == nullptr) {
      throw ConfigError("attn-dump: unknown sample id " + std::to_string(id));
    }
    records.push_back(attention_record_to_json(attention_dump(*sample, id, model)));
  }

  const nlohmann::json doc{{"format_version", kFormatVersion},
                           {"config_digest", config_digest(config)},
                           {"records", std::move(records)}};
  std::ofstream out(out_json, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_json.string());
  out << doc.dump(2) << "\n";
  std::printf("attn-dump: %zu records -> %s\n", ids.size(), out_json.c_str());
  return kExitOk;
}

}  // namespace ptmatch

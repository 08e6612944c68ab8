#include "ptmatch/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ptmatch/errors.hpp"

namespace ptmatch {

namespace {

using nlohmann::json;

constexpr std::uint64_t kGenStream = 0x11;
constexpr std::uint64_t kSplitStream = 0x12;
constexpr std::uint64_t kNoiseStream = 0x13;
constexpr std::uint64_t kTrainStream = 0x14;

void require_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: section '" + where + "' must be an object");
  }
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: key '" + key + "' in " + where + " has the wrong type");
  }
}

void check_version(const json& j, const std::filesystem::path& file) {
  const int version = j.value("format_version", -1);
  if (version != kFormatVersion) {
    throw IoError(file.string() + ": unsupported format_version " + std::to_string(version));
  }
}

json load_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << content;
  if (!out) throw IoError("write failed for " + file.string());
}

json tokens_to_json(const DenseArray& tokens) {
  json rows = json::array();
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < tokens.cols(); ++k) row.push_back(tokens.at(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

DenseArray tokens_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array() || rows[0].empty()) {
    throw IoError(where + ": tokens must be a nonempty array of rows");
  }
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  DenseArray out = DenseArray::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (!rows[i].is_array() || rows[i].size() != d) {
      throw IoError(where + ": ragged token rows");
    }
    for (std::size_t k = 0; k < d; ++k) out.at(i, k) = rows[i][k].get<double>();
  }
  return out;
}

json generator_to_json(const GeneratorSpec& spec, bool include_seed) {
  json j{{"num_scenes", spec.num_scenes},
         {"texts_per_scene", spec.texts_per_scene},
         {"p_n", spec.p_n},
         {"t_n", spec.t_n},
         {"d_f", spec.d_f},
         {"num_prototypes", spec.num_prototypes},
         {"jitter_sigma", spec.jitter_sigma},
         {"coverage_ratio", spec.coverage_ratio},
         {"distractor_ratio", spec.distractor_ratio}};
  if (include_seed) j["seed"] = spec.seed;
  return j;
}

const char* axis_name(SoftmaxAxis axis) {
  return axis == SoftmaxAxis::token ? "token" : "feature";
}

}  // namespace

RunConfig config_from_json(const json& j) {
  require_keys(j, "config", {"seed", "generator", "split", "model", "train", "eval"});
  RunConfig config;
  config.seed = get_or<std::uint64_t>(j, "seed", "config", config.seed);

  if (j.contains("generator")) {
    const json& g = j.at("generator");
    require_keys(g, "generator",
                 {"num_scenes", "texts_per_scene", "p_n", "t_n", "d_f", "num_prototypes",
                  "jitter_sigma", "coverage_ratio", "distractor_ratio", "noise_rate"});
    GeneratorSpec& spec = config.generator;
    spec.num_scenes = get_or<std::size_t>(g, "num_scenes", "generator", spec.num_scenes);
    spec.texts_per_scene =
        get_or<std::size_t>(g, "texts_per_scene", "generator", spec.texts_per_scene);
    spec.p_n = get_or<std::size_t>(g, "p_n", "generator", spec.p_n);
    spec.t_n = get_or<std::size_t>(g, "t_n", "generator", spec.t_n);
    spec.d_f = get_or<std::size_t>(g, "d_f", "generator", spec.d_f);
    spec.num_prototypes =
        get_or<std::size_t>(g, "num_prototypes", "generator", spec.num_prototypes);
    spec.jitter_sigma = get_or<double>(g, "jitter_sigma", "generator", spec.jitter_sigma);
    spec.coverage_ratio = get_or<double>(g, "coverage_ratio", "generator", spec.coverage_ratio);
    spec.distractor_ratio =
        get_or<double>(g, "distractor_ratio", "generator", spec.distractor_ratio);
    config.noise_rate = get_or<double>(g, "noise_rate", "generator", config.noise_rate);
  }

  if (j.contains("split")) {
    const json& s = j.at("split");
    require_keys(s, "split", {"train", "val", "test"});
    config.split.train = get_or<double>(s, "train", "split", config.split.train);
    config.split.val = get_or<double>(s, "val", "split", config.split.val);
    config.split.test = get_or<double>(s, "test", "split", config.split.test);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    require_keys(m, "model",
                 {"d_c", "use_token_attention", "use_feature_attention",
                  "use_position_embedding", "feature_softmax_axis"});
    config.d_c = get_or<std::size_t>(m, "d_c", "model", config.d_c);
    config.dap.use_token_attention =
        get_or<bool>(m, "use_token_attention", "model", config.dap.use_token_attention);
    config.dap.use_feature_attention =
        get_or<bool>(m, "use_feature_attention", "model", config.dap.use_feature_attention);
    config.dap.use_position_embedding =
        get_or<bool>(m, "use_position_embedding", "model", config.dap.use_position_embedding);
    const std::string axis = get_or<std::string>(m, "feature_softmax_axis", "model",
                                                 axis_name(config.dap.feature_softmax_axis));
    if (axis == "token") {
      config.dap.feature_softmax_axis = SoftmaxAxis::token;
    } else if (axis == "feature") {
      config.dap.feature_softmax_axis = SoftmaxAxis::feature;
    } else {
      throw ConfigError("config: feature_softmax_axis must be 'token' or 'feature'");
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, "train",
                 {"loss", "alpha", "tau", "batch_size", "epochs", "learning_rate", "optimizer"});
    const std::string loss = get_or<std::string>(t, "loss", "train", loss_name(config.train.loss));
    if (loss == "contrastive") {
      config.train.loss = LossKind::contrastive;
    } else if (loss == "complementary") {
      config.train.loss = LossKind::complementary;
    } else if (loss == "rnc") {
      config.train.loss = LossKind::rnc;
    } else {
      throw ConfigError("config: loss must be contrastive, complementary or rnc");
    }
    config.train.alpha = get_or<double>(t, "alpha", "train", config.train.alpha);
    config.train.tau = get_or<double>(t, "tau", "train", config.train.tau);
    config.train.batch_size =
        get_or<std::size_t>(t, "batch_size", "train", config.train.batch_size);
    config.train.epochs = get_or<std::size_t>(t, "epochs", "train", config.train.epochs);
    config.train.learning_rate =
        get_or<double>(t, "learning_rate", "train", config.train.learning_rate);
    const std::string opt =
        get_or<std::string>(t, "optimizer", "train", optimizer_name(config.train.optimizer));
    if (opt == "sgd") {
      config.train.optimizer = OptimizerKind::sgd;
    } else if (opt == "adaptive-moment") {
      config.train.optimizer = OptimizerKind::adaptive_moment;
    } else {
      throw ConfigError("config: optimizer must be sgd or adaptive-moment");
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, "eval", {"split"});
    config.eval_split = get_or<std::string>(e, "split", "eval", config.eval_split);
    if (config.eval_split != "train" && config.eval_split != "val" &&
        config.eval_split != "test") {
      throw ConfigError("config: eval.split must be train, val or test");
    }
  }
  return config;
}

json config_to_json(const RunConfig& config) {
  json g = generator_to_json(config.generator, false);
  g["noise_rate"] = config.noise_rate;
  return json{
      {"seed", config.seed},
      {"generator", std::move(g)},
      {"split",
       {{"train", config.split.train}, {"val", config.split.val}, {"test", config.split.test}}},
      {"model",
       {{"d_c", config.d_c},
        {"use_token_attention", config.dap.use_token_attention},
        {"use_feature_attention", config.dap.use_feature_attention},
        {"use_position_embedding", config.dap.use_position_embedding},
        {"feature_softmax_axis", axis_name(config.dap.feature_softmax_axis)}}},
      {"train",
       {{"loss", loss_name(config.train.loss)},
        {"alpha", config.train.alpha},
        {"tau", config.train.tau},
        {"batch_size", config.train.batch_size},
        {"epochs", config.train.epochs},
        {"learning_rate", config.train.learning_rate},
        {"optimizer", optimizer_name(config.train.optimizer)}}},
      {"eval", {{"split", config.eval_split}}}};
}

RunConfig load_config(const std::filesystem::path& file,
                      const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!file.empty()) j = load_json_file(file);
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + entry + "' must look like section.key=value");
    }
    std::string path = "/" + entry.substr(0, eq);
    for (char& c : path) {
      if (c == '.') c = '/';
    }
    const std::string raw = entry.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // bare strings stay strings
    }
    try {
      j[json::json_pointer(path)] = value;
    } catch (const json::exception& e) {
      throw ConfigError("override '" + entry + "': " + e.what());
    }
  }
  return config_from_json(j);
}

std::string config_digest(const RunConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << hash;
  return out.str();
}

std::uint64_t gen_seed(const RunConfig& config) { return derive_seed(config.seed, kGenStream); }
std::uint64_t split_seed(const RunConfig& config) {
  return derive_seed(config.seed, kSplitStream);
}
std::uint64_t noise_seed(const RunConfig& config) {
  return derive_seed(config.seed, kNoiseStream);
}
std::uint64_t train_seed(const RunConfig& config) {
  return derive_seed(config.seed, kTrainStream);
}

TrainConfig effective_train_config(const RunConfig& config) {
  TrainConfig train = config.train;
  train.seed = train_seed(config);
  train.d_c = config.d_c;
  train.dap = config.dap;
  return train;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                   const GeneratorSpec& spec, const std::string& split_name,
                   const std::string& digest) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());

  json meta{{"format_version", kFormatVersion},
            {"kind", "dataset"},
            {"split", split_name},
            {"generator", generator_to_json(spec, true)},
            {"noise_rate", ds.noise_rate},
            {"num_scenes", ds.scenes.size()},
            {"num_texts", ds.texts.size()},
            {"config_digest", digest}};
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");

  std::ostringstream scenes;
  for (const SceneSample& s : ds.scenes) {
    json centroids = json::array();
    for (const Centroid& c : s.features.centroids) {
      centroids.push_back(json::array({c[0], c[1]}));
    }
    const json line{{"id", s.id},
                    {"centroids", std::move(centroids)},
                    {"tokens", tokens_to_json(s.features.tokens)}};
    scenes << line.dump() << "\n";
  }
  write_text_file(dir / "scenes.jsonl", scenes.str());

  std::ostringstream texts;
  for (const TextSample& t : ds.texts) {
    const json line{
        {"id", t.id}, {"scene_id", t.scene_id}, {"tokens", tokens_to_json(t.features.tokens)}};
    texts << line.dump() << "\n";
  }
  write_text_file(dir / "texts.jsonl", texts.str());

  json clean = json::object();
  for (const auto& [text_id, scene_id] : ds.clean_map) {
    clean[std::to_string(text_id)] = scene_id;
  }
  const json noise{{"format_version", kFormatVersion},
                   {"rate", ds.noise_rate},
                   {"clean_map", std::move(clean)}};
  write_text_file(dir / "noise.json", noise.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const json meta = load_json_file(dir / "meta.json");
  check_version(meta, dir / "meta.json");

  Dataset ds;
  auto read_lines = [](const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::vector<json> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        lines.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw IoError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return lines;
  };

  for (const json& line : read_lines(dir / "scenes.jsonl")) {
    SceneSample s;
    s.id = line.at("id").get<int>();
    s.features.modality = Modality::pointcloud;
    s.features.tokens = tokens_from_json(line.at("tokens"), (dir / "scenes.jsonl").string());
    for (const json& c : line.at("centroids")) {
      s.features.centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    }
    s.features.validate();
    ds.scenes.push_back(std::move(s));
  }

  for (const json& line : read_lines(dir / "texts.jsonl")) {
    TextSample t;
    t.id = line.at("id").get<int>();
    t.scene_id = line.at("scene_id").get<int>();
    t.features.modality = Modality::text;
    t.features.tokens = tokens_from_json(line.at("tokens"), (dir / "texts.jsonl").string());
    t.features.validate();
    ds.texts.push_back(std::move(t));
  }

  const json noise = load_json_file(dir / "noise.json");
  check_version(noise, dir / "noise.json");
  ds.noise_rate = noise.at("rate").get<double>();
  for (const auto& item : noise.at("clean_map").items()) {
    ds.clean_map[std::stoi(item.key())] = item.value().get<int>();
  }
  try {
    ds.validate();
  } catch (const Error& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return ds;
}

void write_checkpoint(const std::filesystem::path& file, const Model& model,
                      const std::string& digest) {
  json params = json::object();
  const auto arrays = model.params.arrays();
  const auto names = DapParams::array_names();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    params[names[i]] = json{{"shape", arrays[i]->shape}, {"values", arrays[i]->values}};
  }
  const json j{{"format_version", kFormatVersion},
               {"config_digest", digest},
               {"d_f", model.d_f},
               {"d_c", model.d_c},
               {"model",
                {{"use_token_attention", model.config.use_token_attention},
                 {"use_feature_attention", model.config.use_feature_attention},
                 {"use_position_embedding", model.config.use_position_embedding},
                 {"feature_softmax_axis", axis_name(model.config.feature_softmax_axis)}}},
               {"params", std::move(params)}};
  write_text_file(file, j.dump(2) + "\n");
}

Model read_checkpoint(const std::filesystem::path& file) {
  const json j = load_json_file(file);
  check_version(j, file);
  Model model;
  model.d_f = j.at("d_f").get<std::size_t>();
  model.d_c = j.at("d_c").get<std::size_t>();
  const json& m = j.at("model");
  model.config.use_token_attention = m.at("use_token_attention").get<bool>();
  model.config.use_feature_attention = m.at("use_feature_attention").get<bool>();
  model.config.use_position_embedding = m.at("use_position_embedding").get<bool>();
  model.config.feature_softmax_axis =
      m.at("feature_softmax_axis").get<std::string>() == "feature" ? SoftmaxAxis::feature
                                                                   : SoftmaxAxis::token;
  const json& params = j.at("params");
  const auto arrays = model.params.arrays();
  const auto names = DapParams::array_names();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (!params.contains(names[i])) {
      throw IoError(file.string() + ": missing parameter " + names[i]);
    }
    const json& p = params.at(names[i]);
    *arrays[i] = DenseArray(p.at("shape").get<std::vector<std::size_t>>(),
                            p.at("values").get<std::vector<double>>());
  }
  if (model.params.feature_dim() != model.d_f || model.params.common_dim() != model.d_c) {
    throw IoError(file.string() + ": parameter shapes disagree with recorded dimensions");
  }
  return model;
}

void write_trainlog(const std::filesystem::path& file, const TrainLog& log) {
  std::ostringstream out;
  for (const EpochRecord& r : log) {
    const json line{{"format_version", kFormatVersion},
                    {"epoch", r.epoch},
                    {"mean_loss", r.mean_loss},
                    {"val_r1_p2t", r.val_r1_p2t},
                    {"val_r1_t2p", r.val_r1_t2p},
                    {"wall_seconds", r.wall_seconds}};
    out << line.dump() << "\n";
  }
  write_text_file(file, out.str());
}

json metrics_to_json(const RetrievalMetrics& metrics, const std::string& digest) {
  return json{{"format_version", kFormatVersion},
              {"p2t", {{"r1", metrics.p2t.r1}, {"r5", metrics.p2t.r5}, {"r10", metrics.p2t.r10}}},
              {"t2p", {{"r1", metrics.t2p.r1}, {"r5", metrics.t2p.r5}, {"r10", metrics.t2p.r10}}},
              {"rsum", metrics.rsum},
              {"config_digest", digest}};
}

void write_metrics(const std::filesystem::path& file, const RetrievalMetrics& metrics,
                   const std::string& digest) {
  write_text_file(file, metrics_to_json(metrics, digest).dump(2) + "\n");
}

std::string metrics_summary_line(const RetrievalMetrics& metrics) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "p2t r1/r5/r10 = %.1f/%.1f/%.1f | t2p r1/r5/r10 = %.1f/%.1f/%.1f | rsum = %.1f",
                metrics.p2t.r1, metrics.p2t.r5, metrics.p2t.r10, metrics.t2p.r1, metrics.t2p.r5,
                metrics.t2p.r10, metrics.rsum);
  return std::string(buf);
}

json attention_record_to_json(const AttentionDumpRecord& record) {
  return json{{"format_version", kFormatVersion},
              {"id", record.id},
              {"modality", modality_name(record.modality)},
              {"token_weights", record.token_weights},
              {"dual_attention_mean", record.dual_mean}};
}

AttentionDumpRecord attention_record_from_json(const json& j) {
  check_version(j, "attention record");
  AttentionDumpRecord record;
  record.id = j.at("id").get<int>();
  record.modality =
      j.at("modality").get<std::string>() == "pointcloud" ? Modality::pointcloud : Modality::text;
  record.token_weights = j.at("token_weights").get<std::vector<double>>();
  record.dual_mean = j.at("dual_attention_mean").get<std::vector<double>>();
  return record;
}

}  // namespace ptmatch

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ptmatch/commands.hpp"
#include "ptmatch/errors.hpp"
#include "ptmatch/io.hpp"

using namespace ptmatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ptmatch_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

RunConfig small_run_config() {
  RunConfig config;
  config.seed = 9;
  config.generator.num_scenes = 20;
  config.generator.texts_per_scene = 3;
  config.generator.p_n = 9;
  config.generator.t_n = 6;
  config.generator.d_f = 8;
  config.generator.num_prototypes = 10;
  config.noise_rate = 0.2;
  config.d_c = 8;
  config.train.epochs = 2;
  config.train.batch_size = 4;
  return config;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty config gives the documented defaults") {
    const RunConfig config = config_from_json(nlohmann::json::object());
    CHECK(config.seed == 17);
    CHECK(config.generator.num_scenes == 200);
    CHECK(config.generator.texts_per_scene == 5);
    CHECK(config.noise_rate == 0.13);
    CHECK(config.d_c == 32);
    CHECK(config.train.alpha == 2.0);
    CHECK(config.train.tau == 0.05);
    CHECK(config.train.loss == LossKind::rnc);
    CHECK(config.eval_split == "test");
  }
  SUBCASE("unknown keys are rejected everywhere") {
    CHECK_THROWS_AS(config_from_json({{"sneaky", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"train", {{"momentum", 0.9}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"generator", {{"seed", 3}}}}), ConfigError);
  }
  SUBCASE("type errors are configuration errors") {
    CHECK_THROWS_AS(config_from_json({{"train", {{"alpha", "high"}}}}), ConfigError);
  }
  SUBCASE("round trip through canonical json") {
    RunConfig config = small_run_config();
    const RunConfig back = config_from_json(config_to_json(config));
    CHECK(config_to_json(back) == config_to_json(config));
    CHECK(config_digest(back) == config_digest(config));
  }
  SUBCASE("overrides win over the file and are validated") {
    TempDir tmp;
    const fs::path file = tmp.path / "config.json";
    std::ofstream(file) << R"({"train": {"alpha": 1.5}, "seed": 3})";
    const RunConfig config =
        load_config(file, {"train.alpha=4.0", "model.d_c=16", "train.loss=contrastive"});
    CHECK(config.train.alpha == 4.0);
    CHECK(config.d_c == 16);
    CHECK(config.train.loss == LossKind::contrastive);
    CHECK(config.seed == 3);
    CHECK_THROWS_AS(load_config(file, {"train.bogus=1"}), ConfigError);
    CHECK_THROWS_AS(load_config(file, {"no_equals"}), ConfigError);
  }
  SUBCASE("digest is sensitive to every section") {
    RunConfig a = small_run_config();
    RunConfig b = a;
    b.train.alpha = 3.0;
    CHECK(config_digest(a) != config_digest(b));
    RunConfig c = a;
    c.noise_rate = 0.0;
    CHECK(config_digest(a) != config_digest(c));
  }
}

TEST_CASE("dataset directory round trip is byte-stable") {
  TempDir tmp;
  GeneratorSpec spec;
  spec.num_scenes = 8;
  spec.texts_per_scene = 2;
  spec.p_n = 6;
  spec.t_n = 4;
  spec.d_f = 5;
  spec.num_prototypes = 6;
  spec.seed = 21;
  const Dataset ds = inject_noise(generate(spec), 0.25, 3);

  const fs::path dir = tmp.path / "ds";
  write_dataset(dir, ds, spec, "train", "deadbeef00000000");
  const Dataset back = read_dataset(dir);

  REQUIRE(back.scenes.size() == ds.scenes.size());
  REQUIRE(back.texts.size() == ds.texts.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    CHECK(back.scenes[i].id == ds.scenes[i].id);
    CHECK(back.scenes[i].features.tokens.values == ds.scenes[i].features.tokens.values);
    CHECK(back.scenes[i].features.centroids == ds.scenes[i].features.centroids);
  }
  for (std::size_t i = 0; i < ds.texts.size(); ++i) {
    CHECK(back.texts[i].id == ds.texts[i].id);
    CHECK(back.texts[i].scene_id == ds.texts[i].scene_id);
    CHECK(back.texts[i].features.tokens.values == ds.texts[i].features.tokens.values);
  }
  CHECK(back.clean_map == ds.clean_map);
  CHECK(back.noise_rate == ds.noise_rate);

  // writing the reloaded dataset reproduces the files byte for byte
  const fs::path dir2 = tmp.path / "ds2";
  write_dataset(dir2, back, spec, "train", "deadbeef00000000");
  for (const char* name : {"meta.json", "scenes.jsonl", "texts.jsonl", "noise.json"}) {
    CHECK(slurp(dir / name) == slurp(dir2 / name));
  }

  SUBCASE("format_version is enforced") {
    nlohmann::json meta = nlohmann::json::parse(slurp(dir / "meta.json"));
    meta["format_version"] = 99;
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
    CHECK_THROWS_AS(read_dataset(dir), IoError);
  }
  SUBCASE("missing files name the offender") {
    fs::remove(dir2 / "texts.jsonl");
    CHECK_THROWS_WITH_AS(read_dataset(dir2), doctest::Contains("texts.jsonl"), IoError);
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  Model model;
  model.d_f = 5;
  model.d_c = 6;
  model.params = init_dap_params(5, 6, 77);
  model.config.use_position_embedding = false;
  model.config.feature_softmax_axis = SoftmaxAxis::feature;

  const fs::path file = tmp.path / "ckpt.json";
  write_checkpoint(file, model, "0123456789abcdef");
  const Model back = read_checkpoint(file);
  CHECK(back.d_f == model.d_f);
  CHECK(back.d_c == model.d_c);
  CHECK(back.config.use_position_embedding == false);
  CHECK(back.config.feature_softmax_axis == SoftmaxAxis::feature);
  const auto a = model.params.arrays();
  const auto b = back.params.arrays();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->values == b[i]->values);  // shortest round-trip floats are exact
    CHECK(a[i]->shape == b[i]->shape);
  }
}

TEST_CASE("metrics json schema and summary line") {
  RetrievalMetrics m;
  m.p2t = {50.0, 75.0, 100.0};
  m.t2p = {40.0, 60.0, 80.0};
  m.rsum = 405.0;
  const nlohmann::json j = metrics_to_json(m, "cafe");
  CHECK(j.at("format_version") == 1);
  CHECK(j.at("p2t").at("r1") == 50.0);
  CHECK(j.at("p2t").at("r5") == 75.0);
  CHECK(j.at("p2t").at("r10") == 100.0);
  CHECK(j.at("t2p").at("r1") == 40.0);
  CHECK(j.at("rsum") == 405.0);
  CHECK(j.at("config_digest") == "cafe");
  CHECK(metrics_summary_line(m) ==
        "p2t r1/r5/r10 = 50.0/75.0/100.0 | t2p r1/r5/r10 = 40.0/60.0/80.0 | rsum = 405.0");
}

TEST_CASE("attention records round trip bit-exactly") {
  AttentionDumpRecord record;
  record.id = 12;
  record.modality = Modality::pointcloud;
  record.token_weights = {0.123456789012345678, 0.3, 0.576543210987654322};
  record.dual_mean = {1.0 / 3.0, 2.0 / 7.0, 0.1};
  const nlohmann::json j = attention_record_to_json(record);
  const AttentionDumpRecord back = attention_record_from_json(j);
  CHECK(back.id == record.id);
  CHECK(back.modality == record.modality);
  CHECK(back.token_weights == record.token_weights);
  CHECK(back.dual_mean == record.dual_mean);
  // and through actual text serialization
  const AttentionDumpRecord back2 =
      attention_record_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back2.token_weights == record.token_weights);
  CHECK(back2.dual_mean == record.dual_mean);
}

TEST_CASE("gen/train/eval commands produce a coherent bundle") {
  TempDir tmp;
  const RunConfig config = small_run_config();
  const fs::path data = tmp.path / "data";
  REQUIRE(cmd_gen(config, data) == 0);

  const Dataset train_split = read_dataset(data / "train");
  const Dataset val_split = read_dataset(data / "val");
  const Dataset test_split = read_dataset(data / "test");
  CHECK(train_split.scenes.size() == 16);
  CHECK(val_split.scenes.size() == 2);
  CHECK(test_split.scenes.size() == 2);
  CHECK(train_split.noise_rate == 0.2);
  CHECK(val_split.noise_rate == 0.0);
  // noise only touches the train split; val/test assignments stay clean
  for (const TextSample& t : val_split.texts) CHECK(t.scene_id == val_split.clean_map.at(t.id));
  for (const TextSample& t : test_split.texts) CHECK(t.scene_id == test_split.clean_map.at(t.id));
  std::size_t moved = 0;
  for (const TextSample& t : train_split.texts) {
    if (t.scene_id != train_split.clean_map.at(t.id)) ++moved;
  }
  CHECK(moved == 10);  // round(0.2 * 48)

  const fs::path ckpt = tmp.path / "ckpt.json";
  REQUIRE(cmd_train(config, data, ckpt) == 0);
  CHECK(fs::exists(tmp.path / "trainlog.jsonl"));
  const Model model = read_checkpoint(ckpt);
  CHECK(model.d_f == 8);
  CHECK(model.d_c == 8);

  const fs::path metrics_file = tmp.path / "metrics.json";
  REQUIRE(cmd_eval(config, ckpt, data, metrics_file) == 0);
  const nlohmann::json j = nlohmann::json::parse(slurp(metrics_file));
  const double rsum = j.at("p2t").at("r1").get<double>() + j.at("p2t").at("r5").get<double>() +
                      j.at("p2t").at("r10").get<double>() + j.at("t2p").at("r1").get<double>() +
                      j.at("t2p").at("r5").get<double>() + j.at("t2p").at("r10").get<double>();
  CHECK(j.at("rsum").get<double>() == doctest::Approx(rsum).epsilon(1e-12));

  SUBCASE("learning rate zero leaves the checkpoint at initialization") {
    RunConfig frozen = config;
    frozen.train.learning_rate = 0.0;
    const fs::path ckpt0 = tmp.path / "ckpt0.json";
    REQUIRE(cmd_train(frozen, data, ckpt0) == 0);
    const Model untouched = read_checkpoint(ckpt0);
    const DapParams reference =
        init_dap_params(8, frozen.d_c, derive_seed(train_seed(frozen), 0xA0));
    const auto got = untouched.params.arrays();
    const auto want = reference.arrays();
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i]->values == want[i]->values);
  }
  SUBCASE("dimension mismatch between checkpoint and dataset is rejected") {
    RunConfig other = config;
    other.generator.d_f = 12;
    const fs::path data2 = tmp.path / "data2";
    REQUIRE(cmd_gen(other, data2) == 0);
    CHECK_THROWS_AS(cmd_eval(other, ckpt, data2, tmp.path / "m2.json"), ConfigError);
  }
}

TEST_CASE("loss scan command writes grid and summary rows") {
  TempDir tmp;
  const fs::path csv = tmp.path / "scan.csv";
  REQUIRE(cmd_loss_scan({1.0, 2.0}, 40, csv) == 0);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "alpha,s,loss,grad,s_star,cand_1m_exp_neg_alpha,cand_1m_exp_1m_alpha,matched");
  std::size_t grid_rows = 0, summary_rows = 0;
  std::string line;
  bool saw_zero_loss_at_origin = false;
  while (std::getline(in, line)) {
    if (line.find(",,,,") == 0) continue;
    if (line.find("1m_exp") != std::string::npos) {
      ++summary_rows;
    } else {
      ++grid_rows;
      if (line.rfind("1,0,0,", 0) == 0) saw_zero_loss_at_origin = true;
    }
  }
  CHECK(grid_rows == 80);
  CHECK(summary_rows == 2);
  CHECK(saw_zero_loss_at_origin);
  CHECK_THROWS_AS(cmd_loss_scan({1.0}, 5, tmp.path / "x.csv"), ConfigError);
}

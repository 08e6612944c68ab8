#include <cmath>
#include <set>

#include "doctest.h"
#include "ptmatch/errors.hpp"
#include "ptmatch/trainer.hpp"

using namespace ptmatch;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 5, std::size_t scenes = 20) {
  GeneratorSpec spec;
  spec.num_scenes = scenes;
  spec.texts_per_scene = 2;
  spec.p_n = 9;
  spec.t_n = 6;
  spec.d_f = 8;
  spec.num_prototypes = 10;
  spec.seed = seed;
  return generate(spec);
}

TrainConfig tiny_config() {
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 2;
  config.d_c = 8;
  config.seed = 3;
  return config;
}

}  // namespace

TEST_CASE("make_batches is a deterministic shuffle-partition") {
  const Dataset ds = tiny_dataset();
  const auto a = make_batches(ds, 8, 11, 1);
  const auto b = make_batches(ds, 8, 11, 1);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == ds.texts.size() / 8);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text_indices == b[i].text_indices);
    CHECK(a[i].scene_indices == b[i].scene_indices);
    for (std::size_t t : a[i].text_indices) {
      CHECK(seen.insert(t).second);  // each pair at most once per epoch
    }
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(a[i].y.at(r, c) == (r == c ? 1.0 : 0.0));
      }
      // the scene paired with text r is the text's assigned scene
      CHECK(ds.scenes[a[i].scene_indices[r]].id == ds.texts[a[i].text_indices[r]].scene_id);
    }
  }
  const auto next_epoch = make_batches(ds, 8, 11, 2);
  CHECK(next_epoch[0].text_indices != a[0].text_indices);
  CHECK_THROWS_AS(make_batches(ds, ds.texts.size() + 1, 11, 1), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged bit for bit") {
  const Dataset ds = tiny_dataset();
  TrainConfig config = tiny_config();
  config.learning_rate = 0.0;
  config.epochs = 1;

  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adaptive_moment}) {
    config.optimizer = kind;
    const TrainResult result = train(ds, ds, config);
    const DapParams reference =
        init_dap_params(8, config.d_c, derive_seed(config.seed, 0xA0));
    const auto got = result.model.params.arrays();
    const auto want = reference.arrays();
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i]->values == want[i]->values);
    }
  }
}

TEST_CASE("all-positive labels under the rnc loss are a no-op step") {
  const Dataset ds = tiny_dataset();
  TrainConfig config = tiny_config();
  Model model;
  model.d_f = 8;
  model.d_c = config.d_c;
  model.params = init_dap_params(8, config.d_c, 9);
  const DapParams before = model.params;

  PairBatch batch;
  for (std::size_t i = 0; i < 4; ++i) {
    batch.text_indices.push_back(i);
    batch.scene_indices.push_back(i % ds.scenes.size());
  }
  batch.y = DenseArray::full({4, 4}, 1.0);

  Optimizer optimizer(OptimizerKind::adaptive_moment, 1e-3);
  const double loss = train_step(ds, batch, model, optimizer, config, 1, 0);
  CHECK(loss == 0.0);
  const auto got = model.params.arrays();
  const auto want = before.arrays();
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i]->values == want[i]->values);  // zero gradient, zero update
  }
}

TEST_CASE("training reduces the loss on a tiny clean dataset") {
  const Dataset ds = tiny_dataset();
  TrainConfig config = tiny_config();
  config.epochs = 5;
  config.batch_size = 8;
  const TrainResult result = train(ds, ds, config);
  REQUIRE(result.log.size() == 5);
  CHECK(result.log.back().mean_loss < result.log.front().mean_loss);
  for (const EpochRecord& r : result.log) {
    CHECK(std::isfinite(r.mean_loss));
    CHECK(r.wall_seconds >= 0.0);
  }
}

TEST_CASE("training is deterministic in dataset, config and seed") {
  const Dataset ds = tiny_dataset();
  TrainConfig config = tiny_config();
  const TrainResult a = train(ds, ds, config);
  const TrainResult b = train(ds, ds, config);
  const auto pa = a.model.params.arrays();
  const auto pb = b.model.params.arrays();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->values == pb[i]->values);
  }
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].mean_loss == b.log[e].mean_loss);
    CHECK(a.log[e].val_r1_p2t == b.log[e].val_r1_p2t);
    CHECK(a.log[e].val_r1_t2p == b.log[e].val_r1_t2p);
  }
}

TEST_CASE("every loss kind trains without error") {
  const Dataset ds = tiny_dataset();
  TrainConfig config = tiny_config();
  config.epochs = 1;
  for (LossKind kind : {LossKind::contrastive, LossKind::complementary, LossKind::rnc}) {
    config.loss = kind;
    const TrainResult result = train(ds, ds, config);
    CHECK(std::isfinite(result.log.front().mean_loss));
  }
}

TEST_CASE("config validation") {
  TrainConfig config = tiny_config();
  config.batch_size = 1;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = tiny_config();
  config.epochs = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = tiny_config();
  config.d_c = 7;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

#include "ptmatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "ptmatch/errors.hpp"
#include "ptmatch/evalkit.hpp"

namespace ptmatch {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr std::uint64_t kInitStream = 0xA0;
constexpr std::uint64_t kEpochStream = 0xB0;

}  // namespace

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adaptive-moment";
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 for in-batch negatives");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("train: alpha must be > 0");
  if (!(tau > 0.0)) throw ConfigError("train: tau must be > 0");
  if (d_c == 0 || d_c % 2 != 0) throw ConfigError("train: d_c must be even and nonzero");
}

std::vector<PairBatch> make_batches(const Dataset& ds, std::size_t batch_size,
                                    std::uint64_t seed, std::size_t epoch) {
  if (ds.texts.size() < batch_size) {
    throw ConfigError("make_batches: " + std::to_string(ds.texts.size()) +
                      " pairs but batch size " + std::to_string(batch_size));
  }
  std::map<int, std::size_t> scene_index;
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) scene_index[ds.scenes[i].id] = i;

  std::vector<std::size_t> order(ds.texts.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, kEpochStream + epoch));
  std::shuffle(order.begin(), order.end(), rng);

  DenseArray identity = DenseArray::zeros({batch_size, batch_size});
  for (std::size_t i = 0; i < batch_size; ++i) identity.at(i, i) = 1.0;

  std::vector<PairBatch> batches;
  const std::size_t n_batches = ds.texts.size() / batch_size;  // short final batch dropped
  batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    PairBatch batch;
    batch.y = identity;
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t text_idx = order[b * batch_size + i];
      batch.text_indices.push_back(text_idx);
      batch.scene_indices.push_back(scene_index.at(ds.texts[text_idx].scene_id));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {}

void Optimizer::apply(DapParams& params, const std::vector<DenseArray>& grads) {
  auto arrays = params.arrays();
  if (grads.size() != arrays.size()) {
    throw DimensionError("optimizer: expected " + std::to_string(arrays.size()) +
                         " gradients, got " + std::to_string(grads.size()));
  }
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t p = 0; p < arrays.size(); ++p) {
      for (std::size_t i = 0; i < arrays[p]->size(); ++i) {
        arrays[p]->values[i] -= lr_ * grads[p].values[i];
      }
    }
    return;
  }
  if (m_.empty()) {
    for (const DenseArray* a : arrays) {
      m_.push_back(DenseArray::zeros(a->shape));
      v_.push_back(DenseArray::zeros(a->shape));
    }
  }
  ++step_;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < arrays.size(); ++p) {
    for (std::size_t i = 0; i < arrays[p]->size(); ++i) {
      const double g = grads[p].values[i];
      double& m = m_[p].values[i];
      double& v = v_[p].values[i];
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g * g;
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      arrays[p]->values[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

double train_step(const Dataset& ds, const PairBatch& batch, Model& model, Optimizer& optimizer,
                  const TrainConfig& config, std::size_t epoch, std::size_t step) {
  const std::size_t k = batch.text_indices.size();
  if (k == 0 || batch.scene_indices.size() != k) {
    throw ConfigError("train_step: malformed batch");
  }

  Graph g;
  const DapParamVars vars = register_dap_params(g, model.params);
  std::vector<Var> scene_rows, text_rows;
  scene_rows.reserve(k);
  text_rows.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    scene_rows.push_back(
        embed_in_graph(g, ds.scenes[batch.scene_indices[i]].features, vars, model.config)
            .embedding);
    text_rows.push_back(
        embed_in_graph(g, ds.texts[batch.text_indices[i]].features, vars, model.config)
            .embedding);
  }
  const Var p = g.stack_rows(scene_rows);
  const Var t = g.stack_rows(text_rows);
  const Var s_pt = similarity_graph(g, p, t, config.tau, true);
  const Var s_tp = similarity_graph(g, t, p, config.tau, true);

  LossConfig loss_config;
  loss_config.kind = config.loss;
  loss_config.alpha = config.alpha;
  loss_config.tau = config.tau;
  const Var loss = loss_graph(g, s_pt, s_tp, batch.y, loss_config);

  const double loss_value = g.value(loss).values[0];
  if (!std::isfinite(loss_value)) {
    throw DivergenceError("train_step: non-finite loss", epoch, step);
  }
  g.backward(loss);

  std::vector<DenseArray> grads;
  grads.reserve(DapParams::kArrayCount);
  for (Var leaf : vars.all()) {
    const DenseArray& grad = g.grad(leaf);
    if (!all_finite(grad.values)) {
      throw DivergenceError("train_step: non-finite gradient", epoch, step);
    }
    grads.push_back(grad);
  }
  optimizer.apply(model.params, grads);
  return loss_value;
}

TrainResult train(const Dataset& ds_train, const Dataset& ds_val, const TrainConfig& config) {
  config.validate();
  if (ds_train.scenes.empty() || ds_train.texts.empty()) {
    throw ConfigError("train: empty training split");
  }
  const std::size_t d_f = ds_train.scenes.front().features.feature_dim();

  TrainResult result;
  result.model.params = init_dap_params(d_f, config.d_c, derive_seed(config.seed, kInitStream));
  result.model.config = config.dap;
  result.model.d_f = d_f;
  result.model.d_c = config.d_c;

  Optimizer optimizer(config.optimizer, config.learning_rate);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<PairBatch> batches =
        make_batches(ds_train, config.batch_size, config.seed, epoch);
    double loss_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      loss_total += train_step(ds_train, batches[b], result.model, optimizer, config, epoch, b);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_total / static_cast<double>(batches.size());
    if (!ds_val.scenes.empty() && !ds_val.texts.empty()) {
      const RetrievalMetrics metrics =
          recall_at_k(encode_corpus(ds_val, result.model), ds_val.clean_map);
      record.val_r1_p2t = metrics.p2t.r1;
      record.val_r1_t2p = metrics.t2p.r1;
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(record);
  }
  return result;
}

}  // namespace ptmatch

#pragma once

#include <cstdint>
#include <vector>

#include "ptmatch/dap.hpp"
#include "ptmatch/rncl.hpp"
#include "ptmatch/synthgen.hpp"

namespace ptmatch {

enum class OptimizerKind { sgd, adaptive_moment };

const char* optimizer_name(OptimizerKind kind);

struct TrainConfig {
  LossKind loss = LossKind::rnc;
  double alpha = 2.0;
  double tau = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adaptive_moment;
  std::uint64_t seed = 17;
  std::size_t d_c = 32;
  DapConfig dap;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double val_r1_p2t = 0.0;
  double val_r1_t2p = 0.0;
  double wall_seconds = 0.0;
};
using TrainLog = std::vector<EpochRecord>;

// One mini-batch of (text, assigned scene) positive pairs; indices address
// ds.texts / ds.scenes, y is the K x K pair-label matrix (identity for
// in-batch negatives).
struct PairBatch {
  std::vector<std::size_t> text_indices;
  std::vector<std::size_t> scene_indices;
  DenseArray y;
};

// Deterministic shuffle-and-chunk of all positive pairs for one epoch; the
// short final batch is dropped so the 1/K normalization stays uniform.
std::vector<PairBatch> make_batches(const Dataset& ds, std::size_t batch_size,
                                    std::uint64_t seed, std::size_t epoch);

// First-moment / adaptive-moment updates over the twelve parameter arrays.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void apply(DapParams& params, const std::vector<DenseArray>& grads);

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t step_ = 0;
  std::vector<DenseArray> m_;
  std::vector<DenseArray> v_;
};

// Embeds both sides of the batch, evaluates the configured loss on both
// similarity directions, backpropagates and applies one optimizer update.
// Returns the loss before the update; throws DivergenceError on non-finite
// loss or gradients.
double train_step(const Dataset& ds, const PairBatch& batch, Model& model, Optimizer& optimizer,
                  const TrainConfig& config, std::size_t epoch, std::size_t step);

struct TrainResult {
  Model model;
  TrainLog log;
};

// Full deterministic loop with per-epoch validation R@1 logging.
TrainResult train(const Dataset& ds_train, const Dataset& ds_val, const TrainConfig& config);

}  // namespace ptmatch

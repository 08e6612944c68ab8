#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ptmatch/dap.hpp"

namespace ptmatch {

// Desk-scale synthetic stand-in for scene/description data: scenes are bags
// of jittered object prototypes with grid centroids, texts echo a subset of
// their scene's prototypes plus generic filler tokens.
struct GeneratorSpec {
  std::size_t num_scenes = 200;
  std::size_t texts_per_scene = 5;
  std::size_t p_n = 24;  // patches per scene
  std::size_t t_n = 12;  // word tokens per text
  std::size_t d_f = 32;
  std::size_t num_prototypes = 40;
  double jitter_sigma = 0.1;
  double coverage_ratio = 0.5;     // fraction of a scene's distinct prototypes echoed
  double distractor_ratio = 0.25;  // fraction of text tokens drawn as generic filler
  std::uint64_t seed = 0;

  void validate() const;
};

// Scene ids occupy [0, num_scenes); text ids follow at num_scenes + index so
// every sample id is globally unique within a dataset.
struct SceneSample {
  int id = 0;
  TokenFeatures features;
};

struct TextSample {
  int id = 0;
  int scene_id = 0;  // current assignment, possibly noisy
  TokenFeatures features;
};

struct Dataset {
  std::vector<SceneSample> scenes;
  std::vector<TextSample> texts;
  std::map<int, int> clean_map;  // text id -> scene id before any noise
  double noise_rate = 0.0;

  const SceneSample* find_scene(int id) const;
  const TextSample* find_text(int id) const;
  void validate() const;
};

// Deterministic in spec.seed; per-scene and per-text substreams are derived
// from (seed, sample index).
Dataset generate(const GeneratorSpec& spec);

// Reassigns round(rate * N_t) texts (half-up) to a uniformly random different
// scene; clean_map is left untouched. Deterministic in seed.
Dataset inject_noise(Dataset ds, double rate, std::uint64_t seed);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Scene-level partition: all texts of a scene follow it, so no scene leaks
// across splits. Every split must receive at least one scene.
Splits split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

// splitmix-style stream derivation for reproducible substreams
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ptmatch

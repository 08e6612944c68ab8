#include "ptmatch/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "ptmatch/errors.hpp"

namespace ptmatch {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void GeneratorSpec::validate() const {
  if (num_scenes == 0 || texts_per_scene == 0 || p_n == 0 || t_n == 0 || d_f == 0 ||
      num_prototypes == 0) {
    throw ConfigError("generator: all counts must be >= 1");
  }
  if (!(coverage_ratio >= 0.0 && coverage_ratio <= 1.0)) {
    throw ConfigError("generator: coverage_ratio must be in [0, 1]");
  }
  if (!(distractor_ratio >= 0.0 && distractor_ratio <= 1.0)) {
    throw ConfigError("generator: distractor_ratio must be in [0, 1]");
  }
  if (!(jitter_sigma >= 0.0)) {
    throw ConfigError("generator: jitter_sigma must be >= 0");
  }
}

const SceneSample* Dataset::find_scene(int id) const {
  for (const SceneSample& s : scenes) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const TextSample* Dataset::find_text(int id) const {
  for (const TextSample& t : texts) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

void Dataset::validate() const {
  for (const TextSample& t : texts) {
    if (find_scene(t.scene_id) == nullptr) {
      throw ConfigError("dataset: text " + std::to_string(t.id) +
                        " references missing scene " + std::to_string(t.scene_id));
    }
    if (clean_map.find(t.id) == clean_map.end()) {
      throw ConfigError("dataset: text " + std::to_string(t.id) + " missing from clean_map");
    }
  }
}

namespace {

constexpr std::uint64_t kPrototypeStream = 0x01;
constexpr std::uint64_t kSceneStreamBase = 0x1000;
constexpr std::uint64_t kTextStreamBase = 0x2000000;

std::vector<DenseArray> make_prototypes(const GeneratorSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, kPrototypeStream));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<DenseArray> protos;
  protos.reserve(spec.num_prototypes);
  for (std::size_t i = 0; i < spec.num_prototypes; ++i) {
    DenseArray p = DenseArray::zeros({spec.d_f});
    double norm = 0.0;
    while (norm < 1e-6) {  // regenerate in the (practically impossible) degenerate draw
      for (double& x : p.values) x = gauss(rng);
      norm = l2_norm(p.values);
    }
    for (double& x : p.values) x /= norm;
    protos.push_back(std::move(p));
  }
  return protos;
}

}  // namespace

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  const std::vector<DenseArray> prototypes = make_prototypes(spec);

  Dataset ds;
  ds.scenes.reserve(spec.num_scenes);
  std::vector<std::vector<std::size_t>> scene_distinct(spec.num_scenes);

  const std::size_t grid = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(spec.p_n))));
  for (std::size_t s = 0; s < spec.num_scenes; ++s) {
    std::mt19937_64 rng(derive_seed(spec.seed, kSceneStreamBase + s));
    std::uniform_int_distribution<std::size_t> pick(0, spec.num_prototypes - 1);
    std::normal_distribution<double> jitter(0.0, spec.jitter_sigma);
    std::uniform_real_distribution<double> cell_jitter(-0.4, 0.4);

    SceneSample scene;
    scene.id = static_cast<int>(s);
    scene.features.modality = Modality::pointcloud;
    scene.features.tokens = DenseArray::zeros({spec.p_n, spec.d_f});
    std::set<std::size_t> distinct;
    for (std::size_t j = 0; j < spec.p_n; ++j) {
      const std::size_t proto = pick(rng);
      distinct.insert(proto);
      for (std::size_t k = 0; k < spec.d_f; ++k) {
        scene.features.tokens.at(j, k) =
            prototypes[proto].values[k] + (spec.jitter_sigma > 0.0 ? jitter(rng) : 0.0);
      }
      const double col = static_cast<double>(j % grid);
      const double row = static_cast<double>(j / grid);
      const double g = static_cast<double>(grid);
      const double h = std::clamp((col + 0.5 + cell_jitter(rng)) / g, 0.0, 1.0);
      const double v = std::clamp((row + 0.5 + cell_jitter(rng)) / g, 0.0, 1.0);
      scene.features.centroids.push_back({h, v});
    }
    scene_distinct[s].assign(distinct.begin(), distinct.end());
    ds.scenes.push_back(std::move(scene));
  }

  const std::size_t n_texts = spec.num_scenes * spec.texts_per_scene;
  ds.texts.reserve(n_texts);
  for (std::size_t t = 0; t < n_texts; ++t) {
    const std::size_t scene_index = t / spec.texts_per_scene;
    std::mt19937_64 rng(derive_seed(spec.seed, kTextStreamBase + t));
    std::normal_distribution<double> jitter(0.0, spec.jitter_sigma);
    std::uniform_int_distribution<std::size_t> any_proto(0, spec.num_prototypes - 1);

    const std::vector<std::size_t>& pool = scene_distinct[scene_index];
    const std::size_t n_cover = static_cast<std::size_t>(
        std::ceil(spec.coverage_ratio * static_cast<double>(pool.size())));
    if (n_cover > spec.t_n) {
      throw ConfigError("generator: t_n " + std::to_string(spec.t_n) +
                        " too small for " + std::to_string(n_cover) + " coverage tokens");
    }
    const std::size_t n_fill = std::min(
        static_cast<std::size_t>(std::floor(spec.distractor_ratio * spec.t_n + 0.5)),
        spec.t_n - n_cover);

    std::vector<std::size_t> echoes = pool;
    std::shuffle(echoes.begin(), echoes.end(), rng);
    echoes.resize(std::max<std::size_t>(n_cover, 1));

    TextSample text;
    text.id = static_cast<int>(spec.num_scenes + t);
    text.scene_id = static_cast<int>(scene_index);
    text.features.modality = Modality::text;
    text.features.tokens = DenseArray::zeros({spec.t_n, spec.d_f});
    for (std::size_t j = 0; j < spec.t_n; ++j) {
      std::size_t proto;
      if (j < n_cover) {
        proto = echoes[j];
      } else if (j < n_cover + n_fill) {
        proto = any_proto(rng);
      } else {
        proto = echoes[(j - n_cover - n_fill) % echoes.size()];  // extra echoes
      }
      for (std::size_t k = 0; k < spec.d_f; ++k) {
        text.features.tokens.at(j, k) =
            prototypes[proto].values[k] + (spec.jitter_sigma > 0.0 ? jitter(rng) : 0.0);
      }
    }
    ds.clean_map[text.id] = text.scene_id;
    ds.texts.push_back(std::move(text));
  }
  return ds;
}

Dataset inject_noise(Dataset ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("inject_noise: rate " + std::to_string(rate) + " outside [0, 1]");
  }
  const std::size_t n_texts = ds.texts.size();
  const std::size_t n_noisy =
      static_cast<std::size_t>(std::floor(rate * static_cast<double>(n_texts) + 0.5));
  ds.noise_rate = rate;
  if (n_noisy == 0) return ds;
  if (ds.scenes.size() < 2) {
    throw ConfigError("inject_noise: need at least two scenes to reassign texts");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n_texts);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_int_distribution<std::size_t> pick(0, ds.scenes.size() - 2);
  for (std::size_t i = 0; i < n_noisy; ++i) {
    TextSample& text = ds.texts[order[i]];
    const int clean_scene = ds.clean_map.at(text.id);
    // draw among all scenes except the clean one
    std::size_t idx = pick(rng);
    std::size_t clean_index = 0;
    for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
      if (ds.scenes[s].id == clean_scene) {
        clean_index = s;
        break;
      }
    }
    if (idx >= clean_index) ++idx;
    text.scene_id = ds.scenes[idx].id;
  }
  return ds;
}

Splits split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.test > 0.0)) {
    throw ConfigError("split: all fractions must be positive");
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split: fractions sum to " + std::to_string(total) + ", expected 1");
  }
  const std::size_t n = ds.scenes.size();
  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n) + 0.5));
  const std::size_t n_val =
      static_cast<std::size_t>(std::floor(fractions.val * static_cast<double>(n) + 0.5));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ConfigError("split: a split would receive zero scenes (" + std::to_string(n) +
                      " scenes total)");
  }
  const std::size_t n_test = n - n_train - n_val;
  (void)n_test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::map<int, int> scene_to_part;  // scene id -> 0/1/2
  for (std::size_t i = 0; i < n; ++i) {
    const int part = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    scene_to_part[ds.scenes[order[i]].id] = part;
  }

  Splits out;
  Dataset* parts[3] = {&out.train, &out.val, &out.test};
  for (const SceneSample& s : ds.scenes) {
    parts[scene_to_part.at(s.id)]->scenes.push_back(s);
  }
  for (const TextSample& t : ds.texts) {
    Dataset* part = parts[scene_to_part.at(t.scene_id)];
    part->texts.push_back(t);
    part->clean_map[t.id] = ds.clean_map.at(t.id);
  }
  for (Dataset* part : parts) part->noise_rate = ds.noise_rate;
  return out;
}

}  // namespace ptmatch

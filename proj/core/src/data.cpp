#include "canc/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "canc/errors.hpp"
#include "canc/rng.hpp"

namespace canc {

std::vector<Tile> tile_scene(const Scene& scene, std::size_t m) {
  const std::size_t n = scene.size;
  if (m == 0 || n % m != 0)
    throw ConfigError(fmt::format("mask size {} does not divide scene size {}", m, n));
  if (scene.image.size() != n * n * scene.channels || scene.truth.size() != n * n)
    throw DataError(fmt::format("scene {} rasters do not match {}x{}", scene.id, n, n));
  const std::size_t grid = n / m;
  const std::size_t c = scene.channels;
  std::vector<Tile> tiles;
  tiles.reserve(grid * grid);
  for (std::size_t gr = 0; gr < grid; ++gr) {
    for (std::size_t gc = 0; gc < grid; ++gc) {
      Tile t;
      t.row = static_cast<std::uint32_t>(gr);
      t.col = static_cast<std::uint32_t>(gc);
      t.image.reserve(m * m * c);
      t.truth.reserve(m * m);
      for (std::size_t y = 0; y < m; ++y) {
        const std::size_t src = (gr * m + y) * n + gc * m;
        t.image.insert(t.image.end(), scene.image.begin() + src * c,
                       scene.image.begin() + (src + m) * c);
        t.truth.insert(t.truth.end(), scene.truth.begin() + src, scene.truth.begin() + src + m);
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

Scene assemble_scene(std::span<const Tile> tiles, std::size_t n, std::size_t m,
                     std::size_t channels, std::uint32_t id) {
  if (m == 0 || n % m != 0 || tiles.size() != (n / m) * (n / m))
    throw ConfigError("tile count does not match scene geometry");
  Scene scene{n, channels, std::vector<float>(n * n * channels), std::vector<std::uint8_t>(n * n), id};
  for (const auto& t : tiles) {
    for (std::size_t y = 0; y < m; ++y) {
      const std::size_t dst = (t.row * m + y) * n + t.col * m;
      std::copy_n(t.image.begin() + y * m * channels, m * channels,
                  scene.image.begin() + dst * channels);
      std::copy_n(t.truth.begin() + y * m, m, scene.truth.begin() + dst);
    }
  }
  return scene;
}

std::uint8_t label_mask(std::span<const std::uint8_t> truth_patch, double tau) {
  const auto s1 = std::count(truth_patch.begin(), truth_patch.end(), std::uint8_t{1});
  return static_cast<double>(s1) / static_cast<double>(truth_patch.size()) >= tau ? 1 : 0;
}

void SceneGenParams::validate() const {
  if (size == 0 || channels == 0) throw ConfigError("scene size and channels must be positive");
  if (min_buildings > max_buildings) throw ConfigError("empty building count range");
  if (min_side == 0 || min_side > max_side) throw ConfigError("empty building side range");
  if (max_buildings > 0 && max_side > size)
    throw ConfigError(fmt::format("building side {} exceeds scene size {}", max_side, size));
  if (building_spread < 0 || background_spread < 0 || pixel_noise < 0)
    throw ConfigError("intensity spreads and pixel noise must be non-negative");
  if (attempts_per_building == 0) throw ConfigError("attempts_per_building must be positive");
}

namespace {

struct Rect {
  std::size_t y, x, h, w;
  bool overlaps(const Rect& o) const {
    return y < o.y + o.h && o.y < y + h && x < o.x + o.w && o.x < x + w;
  }
};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

Scene generate_scene(const SceneGenParams& params, std::uint32_t id) {
  params.validate();
  Rng rng(derive_seed(params.seed, id));
  const std::size_t n = params.size;
  const std::size_t c = params.channels;

  const auto count = static_cast<std::size_t>(rng.between(
      static_cast<std::int64_t>(params.min_buildings), static_cast<std::int64_t>(params.max_buildings)));
  std::vector<Rect> placed;
  for (std::size_t b = 0; b < count; ++b) {
    for (std::size_t attempt = 0; attempt < params.attempts_per_building; ++attempt) {
      const auto h = static_cast<std::size_t>(rng.between(
          static_cast<std::int64_t>(params.min_side), static_cast<std::int64_t>(params.max_side)));
      const auto w = static_cast<std::size_t>(rng.between(
          static_cast<std::int64_t>(params.min_side), static_cast<std::int64_t>(params.max_side)));
      const Rect r{static_cast<std::size_t>(rng.below(n - h + 1)),
                   static_cast<std::size_t>(rng.below(n - w + 1)), h, w};
      if (std::none_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o); })) {
        placed.push_back(r);
        break;
      }
    }
  }

  Scene scene{n, c, std::vector<float>(n * n * c), std::vector<std::uint8_t>(n * n, 0), id};
  std::vector<double> level(n * n, 0.0);
  const double background =
      rng.uniform(params.background_mean - params.background_spread,
                  params.background_mean + params.background_spread);
  std::fill(level.begin(), level.end(), background);
  for (const auto& r : placed) {
    const double intensity = rng.uniform(params.building_mean - params.building_spread,
                                         params.building_mean + params.building_spread);
    for (std::size_t y = r.y; y < r.y + r.h; ++y) {
      for (std::size_t x = r.x; x < r.x + r.w; ++x) {
        scene.truth[y * n + x] = 1;
        level[y * n + x] = intensity;
      }
    }
  }
  for (std::size_t p = 0; p < n * n; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double noise = params.pixel_noise > 0 ? rng.uniform(-params.pixel_noise, params.pixel_noise) : 0.0;
      scene.image[p * c + ch] = clamp01(level[p] + noise);
    }
  }
  return scene;
}

std::vector<std::uint8_t> MaskDataset::labels() const {
  std::vector<std::uint8_t> out(masks.size());
  std::transform(masks.begin(), masks.end(), out.begin(), [](const Mask& m) { return m.label; });
  return out;
}

std::vector<std::uint8_t> MaskDataset::clean_labels() const {
  std::vector<std::uint8_t> out(masks.size());
  std::transform(masks.begin(), masks.end(), out.begin(),
                 [](const Mask& m) { return m.clean_label; });
  return out;
}

Batch MaskDataset::batch(std::span<const std::size_t> positions) const {
  const std::size_t len = sample_shape().size();
  std::vector<double> samples;
  samples.reserve(positions.size() * len);
  std::vector<std::uint8_t> labels;
  labels.reserve(positions.size());
  for (auto p : positions) {
    const auto& mask = masks.at(p);
    samples.insert(samples.end(), mask.patch.begin(), mask.patch.end());
    labels.push_back(mask.label);
  }
  return Batch(sample_shape(), std::move(samples), std::move(labels),
               std::vector<std::size_t>(positions.begin(), positions.end()));
}

Batch MaskDataset::batch_all() const {
  std::vector<std::size_t> all(masks.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return batch(all);
}

MaskDataset MaskDataset::subset(std::span<const std::size_t> positions) const {
  MaskDataset out{mask_size, channels, tau, {}};
  out.masks.reserve(positions.size());
  for (auto p : positions) out.masks.push_back(masks.at(p));
  return out;
}

MaskDataset build_dataset(std::span<const Scene> scenes, std::size_t m, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError(fmt::format("tau must lie in (0,1), got {}", tau));
  MaskDataset ds{m, scenes.empty() ? 0 : scenes.front().channels, tau, {}};
  for (const auto& scene : scenes) {
    if (scene.channels != ds.channels) throw DataError("scenes differ in channel count");
    for (auto& tile : tile_scene(scene, m)) {
      const auto label = label_mask(tile.truth, tau);
      ds.masks.push_back(Mask{std::move(tile.image), label, label, scene.id, tile.row, tile.col});
    }
  }
  return ds;
}

DatasetSplit split_dataset(const MaskDataset& ds, const SplitFractions& f, std::uint64_t seed) {
  if (f.train <= 0 || f.modelsel < 0 || f.eval < 0 ||
      std::abs(f.train + f.modelsel + f.eval - 1.0) > 1e-9)
    throw ConfigError(fmt::format("split fractions ({}, {}, {}) must be non-negative, sum to 1, "
                                  "with a positive train share",
                                  f.train, f.modelsel, f.eval));
  Rng rng(seed);

  std::set<std::uint32_t> scene_set;
  for (const auto& m : ds.masks) scene_set.insert(m.scene_id);
  std::vector<std::uint32_t> scenes(scene_set.begin(), scene_set.end());
  rng.shuffle(std::span(scenes));
  const auto n_eval = static_cast<std::size_t>(std::llround(f.eval * static_cast<double>(scenes.size())));
  const std::set<std::uint32_t> eval_scenes(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_eval));

  std::vector<std::size_t> eval_pos, rest;
  for (std::size_t i = 0; i < ds.masks.size(); ++i)
    (eval_scenes.contains(ds.masks[i].scene_id) ? eval_pos : rest).push_back(i);

  rng.shuffle(std::span(rest));
  const double train_share = f.train / (f.train + f.modelsel);
  const auto n_train = static_cast<std::size_t>(std::llround(train_share * static_cast<double>(rest.size())));
  std::vector<std::size_t> train_pos(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> modelsel_pos(rest.begin() + static_cast<std::ptrdiff_t>(n_train), rest.end());
  std::sort(train_pos.begin(), train_pos.end());
  std::sort(modelsel_pos.begin(), modelsel_pos.end());

  if (train_pos.empty()) throw ConfigError("split produced an empty train partition");
  if (f.modelsel > 0 && modelsel_pos.empty())
    throw ConfigError("split produced an empty model-selection partition");
  if (f.eval > 0 && eval_pos.empty()) throw ConfigError("split produced an empty eval partition");

  return {ds.subset(train_pos), ds.subset(modelsel_pos), ds.subset(eval_pos)};
}

}  // namespace canc

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "canc/nn.hpp"

namespace canc {

/// Square raster scene: n x n x channels image in [0,1] and an n x n binary
/// building raster (1 = building pixel).
struct Scene {
  std::size_t size = 0;
  std::size_t channels = 0;
  std::vector<float> image;         // HWC, row-major
  std::vector<std::uint8_t> truth;  // row-major
  std::uint32_t id = 0;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Tile {
  std::vector<float> image;         // m x m x channels
  std::vector<std::uint8_t> truth;  // m x m
  std::uint32_t row = 0;
  std::uint32_t col = 0;
};

/// Cuts a scene into (n/m)^2 non-overlapping tiles in row-major grid order.
/// Throws ConfigError when m does not divide n.
std::vector<Tile> tile_scene(const Scene& scene, std::size_t m);

/// Inverse of tile_scene.
Scene assemble_scene(std::span<const Tile> tiles, std::size_t n, std::size_t m,
                     std::size_t channels, std::uint32_t id = 0);

/// 1 iff the building-pixel fraction of the patch is at least tau (inclusive).
std::uint8_t label_mask(std::span<const std::uint8_t> truth_patch, double tau);

struct SceneGenParams {
  std::size_t size = 512;
  std::size_t channels = 3;
  std::size_t min_buildings = 20;
  std::size_t max_buildings = 40;
  std::size_t min_side = 16;
  std::size_t max_side = 64;
  // Intensities are drawn uniformly from mean +/- spread, then each pixel
  // gets independent uniform noise of +/- pixel_noise.
  double building_mean = 0.70;
  double building_spread = 0.15;
  double background_mean = 0.35;
  double background_spread = 0.10;
  double pixel_noise = 0.10;
  std::size_t attempts_per_building = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Seeded synthetic scene with axis-aligned, non-overlapping rectangular
/// buildings. Placement uses rejection sampling with a fixed attempt budget
/// per building, so crowded scenes may hold fewer than the drawn count.
Scene generate_scene(const SceneGenParams& params, std::uint32_t id);

struct Mask {
  std::vector<float> patch;     // m x m x channels
  std::uint8_t clean_label = 0;
  std::uint8_t label = 0;       // label shown to the trainer (noisy after injection)
  std::uint32_t scene_id = 0;
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  friend bool operator==(const Mask&, const Mask&) = default;
};

struct MaskDataset {
  std::size_t mask_size = 0;
  std::size_t channels = 0;
  double tau = 0.01;
  std::vector<Mask> masks;

  std::size_t size() const noexcept { return masks.size(); }
  Shape3 sample_shape() const noexcept { return {mask_size, mask_size, channels}; }

  std::vector<std::uint8_t> labels() const;
  std::vector<std::uint8_t> clean_labels() const;

  /// Builds a network batch from dataset positions, using the observed labels.
  Batch batch(std::span<const std::size_t> positions) const;
  Batch batch_all() const;

  MaskDataset subset(std::span<const std::size_t> positions) const;
};

/// Tiles and labels every scene. Clean and observed labels start equal.
MaskDataset build_dataset(std::span<const Scene> scenes, std::size_t m, double tau);

struct SplitFractions {
  double train = 0.64;
  double modelsel = 0.16;
  double eval = 0.20;
};

struct DatasetSplit {
  MaskDataset train;
  MaskDataset modelsel;
  MaskDataset eval;
};

/// Whole scenes go to eval; the remaining masks are split individually
/// between train and model selection. Partitions keep the input order.
/// A partition with a positive fraction that ends up empty is a ConfigError.
DatasetSplit split_dataset(const MaskDataset& ds, const SplitFractions& fractions,
                           std::uint64_t seed);

}  // namespace canc

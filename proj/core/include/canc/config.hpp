#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "canc/data.hpp"
#include "canc/noise.hpp"
#include "canc/nn.hpp"
#include "canc/train.hpp"

namespace canc {

enum class DataSource { Synthetic, File };
enum class NoiseSource { Inject, File };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  std::filesystem::path file;         // source = file
  std::size_t masks_per_scene = 0;    // source = file; 0 = one scene
  std::size_t scenes = 20;            // source = synthetic
  SceneGenParams scene;               // seed is ignored; data.seed is used
  std::size_t mask_size = 32;
  double tau = 0.01;
  SplitFractions split;
  std::uint64_t seed = 0;
};

struct NoiseConfig {
  NoiseSource source = NoiseSource::Inject;
  NoiseType type = NoiseType::Symmetric;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  bool noise_modelsel = false;
};

struct ModelConfig {
  std::string layers = "auto";  // "auto" or a format_layers() string
  InitScheme init = InitScheme::HeUniform;
};

struct OutputConfig {
  std::filesystem::path directory = "canc-out";
  bool csv = true;
  bool json = true;
};

/// Everything a run needs. Three seeds drive all randomness: data.seed
/// (scenes and split), noise.seed (label corruption) and train.seed
/// (shuffling and both network initializations).
struct ExperimentConfig {
  DataConfig data;
  NoiseConfig noise;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t train_seed = 0;
  OutputConfig output;

  /// Network spec for the configured mask geometry, resolving "auto".
  NetworkSpec network_spec() const;
};

/// One "section.key=value" override, as used by sweeps.
using ConfigOverride = std::pair<std::string, std::string>;

/// Parses the sectioned key-value (INI) config. Unknown sections or keys,
/// malformed values and missing seeds raise ConfigError prefixed with the
/// failing section, e.g. "[train] learning_rate must be positive".
ExperimentConfig parse_config(std::istream& in, const std::vector<ConfigOverride>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<ConfigOverride>& overrides = {});

/// Canonical INI text with every key spelled out; parses back to an equal config.
std::string to_ini(const ExperimentConfig& cfg);

/// Default two-conv + dense network for an m x m x C input.
std::vector<LayerSpec> default_layers(std::size_t mask_size, std::size_t channels);

/// Output directory after applying the CANC_OUTPUT_ROOT environment variable
/// to relative paths.
std::filesystem::path resolve_output_dir(const OutputConfig& out);

}  // namespace canc

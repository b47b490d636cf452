#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canc/config.hpp"
#include "canc/data.hpp"
#include "canc/metrics.hpp"
#include "canc/train.hpp"

namespace canc {

inline constexpr const char* kArtifactVersion = "0.3.0";

/// Clean dataset for the configured source. Observed labels equal the clean
/// ones, except for a paired-label file read with noise.source = file.
MaskDataset load_dataset(const ExperimentConfig& cfg);

/// Split plus label noise: the train partition always receives noise, the
/// model-selection partition only with noise.noise_modelsel, eval never.
DatasetSplit prepare_data(const ExperimentConfig& cfg);

struct SceneIou {
  std::uint32_t scene_id = 0;
  double sp_iou = 0.0;
  friend bool operator==(const SceneIou&, const SceneIou&) = default;
};

/// Per-scene SP-IoU of a network over an eval set, scenes in ascending id.
std::vector<SceneIou> scene_sp_iou(const Network& net, const MaskDataset& eval);

struct RunReport {
  std::string config_echo;  // canonical INI; enough to rerun the experiment
  std::string algorithm;
  std::string noise_type;
  double epsilon = 0.0;
  std::filesystem::path directory;
  std::filesystem::path epochs_csv;
  std::filesystem::path sp_iou_json;
  std::filesystem::path summary_json;
  std::size_t best_epoch = 0;
  int best_network = 1;
  double best_modelsel_accuracy = 0.0;
  std::map<std::string, SplitMetrics> final_metrics;  // "train", "modelsel", "eval"
  std::vector<SceneIou> sp_iou;
  std::vector<EpochRecord> records;  // empty when loaded from disk
  double wall_seconds = 0.0;         // kept out of the JSON so reruns stay byte-identical
  std::string version = kArtifactVersion;
};

/// Rows: epoch, split, accuracy, precision, recall, f1, remember_rate,
/// n_clean, n_swapped, swap_correct_fraction.
std::string epochs_csv(std::span<const EpochRecord> records);

/// [{"scene_id": ..., "sp_iou": ...}, ...]
std::string sp_iou_json(std::span<const SceneIou> values);

std::string summary_json(const RunReport& report);

/// Data -> noise -> training -> evaluation -> reports. Writes epochs.csv,
/// sp_iou.json, config.ini and finally summary.json into the output
/// directory (each via write-temp-then-rename), plus timing.txt.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Reads summary.json and the sp_iou.json it references.
RunReport load_report(const std::filesystem::path& summary_path);

struct ComparisonRow {
  std::uint32_t scene_id = 0;
  std::vector<double> sp_iou;  // one per report
  std::vector<double> ratio;   // sp_iou / sp_iou of the first report
};

/// Reports aligned on their shared eval scenes. The first report is the
/// baseline for improvement ratios.
struct ComparisonTable {
  std::vector<std::string> labels;
  std::vector<RunReport> reports;
  std::vector<ComparisonRow> rows;
  // Per report, the scene with the largest and the smallest ratio.
  std::vector<std::uint32_t> best_scene;
  std::vector<std::uint32_t> worst_scene;
};

/// Throws std::logic_error when the reports were evaluated on different scenes.
ComparisonTable compare_runs(std::span<const RunReport> reports);

std::string format_comparison(const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table);

struct GridAxis {
  std::string key;  // section.key; "algorithm", "noise_type", "epsilon" are accepted aliases
  std::vector<std::string> values;
};

/// "algorithm=vanilla,canc;noise.epsilon=0.35,0.55" -> two axes.
std::vector<GridAxis> parse_grid(const std::string& text);

/// {vanilla, coteaching, canc} x {symmetric, antisymmetric} x {0.15, 0.35, 0.45, 0.55}.
std::vector<GridAxis> default_grid();

struct SweepCell {
  std::vector<ConfigOverride> overrides;
  std::string name;
};

/// Cartesian product in row-major order (last axis fastest).
std::vector<SweepCell> expand_grid(std::span<const GridAxis> grid);

struct SweepResult {
  std::vector<RunReport> reports;
  std::filesystem::path summary_csv;
};

/// Runs every cell (or just the one at `only`) under <output dir>/<cell name>
/// and writes sweep_summary.csv, one row per cell that has a report on disk.
SweepResult run_sweep(const std::filesystem::path& config_path, std::span<const GridAxis> grid,
                      std::optional<std::size_t> only = std::nullopt);

struct GeneratedData {
  std::filesystem::path file;
  std::size_t masks = 0;
  std::size_t positives = 0;
  std::size_t flipped = 0;
  std::size_t masks_per_scene = 0;
};

/// Writes the whole dataset, noise injected into every record, as a paired
/// label (version 2) file at <output dir>/dataset.canc.
GeneratedData generate_data(const ExperimentConfig& cfg);

/// Writes content to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace canc

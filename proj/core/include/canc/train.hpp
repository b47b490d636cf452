#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "canc/data.hpp"
#include "canc/metrics.hpp"
#include "canc/nn.hpp"

namespace canc {

enum class Algorithm { Vanilla, Coteaching, Canc };

std::string_view to_string(Algorithm algo);
Algorithm parse_algorithm(std::string_view name);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Canc;
  double learning_rate = 0.05;
  std::size_t max_epochs = 20;
  std::size_t schedule_knee = 5;          // epochs until the remember rate bottoms out
  std::size_t iterations_per_epoch = 0;   // 0: ceil(|train| / batch_size)
  std::size_t batch_size = 64;
  double forget_rate = 0.5;
  double swap_rate = 0.2;
  std::uint64_t shuffle_seed = 1;
  std::uint64_t init_seed_1 = 101;
  std::uint64_t init_seed_2 = 202;
  bool persist_swaps = false;
  // Ablation: swap rate tracks 1 - R(T) every epoch; swap_rate is ignored.
  bool swap_complements_remember = false;

  /// Throws ConfigError. For CANC outside the ablation, swap_rate must not
  /// exceed forget_rate so the clean and swap sets stay disjoint at the
  /// schedule floor.
  void validate() const;
};

/// R(T) = 1 - min(T / knee * forget_rate, forget_rate). Epochs count from 0.
double remember_rate(std::size_t epoch, std::size_t knee, double forget_rate);

/// floor(rate * n) computed so that products like 0.29 * 100 land on 29.
std::size_t rate_count(double rate, std::size_t n);

/// The max(1, floor(R * n)) smallest-loss indices, ties to the lower index.
/// Returned in ascending index order. Throws NumericError on a non-finite loss.
std::vector<std::size_t> select_clean(std::span<const double> losses, double remember);

/// The floor(S * n) largest-loss indices: the tail of the same (loss, index)
/// order select_clean takes its head from, so among equal losses the higher
/// index is swapped first. Returned in ascending index order.
std::vector<std::size_t> select_swap(std::span<const double> losses, double swap);

/// Copy of labels with 1 - y at every listed index. Throws std::out_of_range.
std::vector<std::uint8_t> flip_labels(std::span<const std::uint8_t> labels,
                                      std::span<const std::size_t> idx);

/// One network's pick for its peer. Positions are batch positions.
struct PeerSelection {
  std::vector<std::size_t> clean;
  std::vector<std::size_t> swap;
};

/// Union of clean and swap positions in ascending order, with the labels at
/// swap positions flipped. A position in both sets is taken once, flipped.
Batch peer_batch(const Batch& batch, const PeerSelection& sel);

struct IterationDiagnostics {
  PeerSelection by_m1;  // chosen from M1's losses, trains M2
  PeerSelection by_m2;  // chosen from M2's losses, trains M1
};

struct PairStep {
  Network m1;
  Network m2;
  IterationDiagnostics diagnostics;
};

/// One mini-batch of co-teaching with active label swapping. Both networks
/// rank the batch by their own pre-update losses on the original labels;
/// each then trains on the other's clean + flipped-swap selection.
PairStep canc_iteration(Network m1, Network m2, const Batch& batch, double remember, double swap,
                        double lr);

/// Plain co-teaching: each network trains on the other's clean selection.
PairStep coteaching_iteration(Network m1, Network m2, const Batch& batch, double remember,
                              double lr);

struct SplitMetrics {
  ConfusionCounts counts;
  Scores scores;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double remember_rate = 1.0;
  double swap_rate = 0.0;
  std::size_t n_seen = 0;
  std::size_t n_clean = 0;
  std::size_t n_swapped = 0;
  // Fraction of swapped samples whose flipped label equals the clean label;
  // NaN when nothing was swapped.
  double swap_correct_fraction = 0.0;
  int network = 1;  // which network the metrics below belong to
  SplitMetrics modelsel;
  std::optional<SplitMetrics> eval;
};

struct TrainResult {
  Network best;
  int best_network = 1;
  std::size_t best_epoch = 0;
  double best_modelsel_accuracy = 0.0;
  std::vector<EpochRecord> records;
  Network final_m1;
  std::optional<Network> final_m2;
};

/// Scores a network on a dataset against either its observed or clean labels.
SplitMetrics evaluate(const Network& net, const MaskDataset& ds, bool use_clean_labels);

/// Runs the configured algorithm. The model-selection set is scored on its
/// observed labels, the optional eval set on its clean labels. The returned
/// best network is the (epoch, network) snapshot with the highest
/// model-selection accuracy; the earliest wins ties, M1 before M2.
TrainResult train(const MaskDataset& train_set, const MaskDataset& modelsel,
                  const TrainConfig& cfg, const NetworkSpec& arch,
                  const MaskDataset* eval = nullptr);

}  // namespace canc

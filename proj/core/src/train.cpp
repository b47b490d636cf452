#include "canc/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "canc/errors.hpp"
#include "canc/rng.hpp"

namespace canc {

std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::Vanilla: return "vanilla";
    case Algorithm::Coteaching: return "coteaching";
    case Algorithm::Canc: return "canc";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "vanilla") return Algorithm::Vanilla;
  if (name == "coteaching") return Algorithm::Coteaching;
  if (name == "canc") return Algorithm::Canc;
  throw ConfigError(fmt::format("unknown algorithm '{}'", name));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError(fmt::format("learning_rate must be positive, got {}", learning_rate));
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (schedule_knee < 1) throw ConfigError("schedule_knee must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(forget_rate >= 0.0 && forget_rate < 1.0))
    throw ConfigError(fmt::format("forget_rate must lie in [0,1), got {}", forget_rate));
  if (!(swap_rate >= 0.0 && swap_rate <= 1.0))
    throw ConfigError(fmt::format("swap_rate must lie in [0,1], got {}", swap_rate));
  if (algorithm == Algorithm::Canc && !swap_complements_remember && swap_rate > forget_rate)
    throw ConfigError(fmt::format("swap_rate {} exceeds forget_rate {}; clean and swap sets would "
                                  "overlap at the schedule floor",
                                  swap_rate, forget_rate));
}

double remember_rate(std::size_t epoch, std::size_t knee, double forget_rate) {
  if (knee < 1) throw ConfigError("schedule knee must be at least 1");
  const double ramp = static_cast<double>(epoch) / static_cast<double>(knee) * forget_rate;
  return 1.0 - std::min(ramp, forget_rate);
}

std::size_t rate_count(double rate, std::size_t n) {
  const double exact = rate * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::floor(exact + 1e-9));
  return std::min(k, n);
}

namespace {

void check_losses(std::span<const double> losses) {
  if (losses.empty()) throw std::invalid_argument("selection needs at least one loss");
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (!std::isfinite(losses[i]))
      throw NumericError(fmt::format("non-finite loss at batch position {}", i));
}

// First k indices under a strict total order, returned ascending.
template <typename Less>
std::vector<std::size_t> first_k(std::size_t n, std::size_t k, Less less) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k < n) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<std::size_t> select_clean(std::span<const double> losses, double remember) {
  check_losses(losses);
  const std::size_t k = std::max<std::size_t>(1, rate_count(remember, losses.size()));
  return first_k(losses.size(), k, [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b] || (losses[a] == losses[b] && a < b);
  });
}

std::vector<std::size_t> select_swap(std::span<const double> losses, double swap) {
  check_losses(losses);
  const std::size_t k = rate_count(swap, losses.size());
  // Reverse of the clean order, so equal losses never land in both sets.
  return first_k(losses.size(), k, [&](std::size_t a, std::size_t b) {
    return losses[a] > losses[b] || (losses[a] == losses[b] && a > b);
  });
}

std::vector<std::uint8_t> flip_labels(std::span<const std::uint8_t> labels,
                                      std::span<const std::size_t> idx) {
  std::vector<std::uint8_t> out(labels.begin(), labels.end());
  for (auto i : idx) {
    if (i >= out.size()) throw std::out_of_range(fmt::format("flip index {} out of range", i));
    out[i] = static_cast<std::uint8_t>(1 - out[i]);
  }
  return out;
}

Batch peer_batch(const Batch& batch, const PeerSelection& sel) {
  std::vector<std::size_t> positions;
  positions.reserve(sel.clean.size() + sel.swap.size());
  std::set_union(sel.clean.begin(), sel.clean.end(), sel.swap.begin(), sel.swap.end(),
                 std::back_inserter(positions));
  const auto flipped = flip_labels(batch.labels(), sel.swap);
  std::vector<std::uint8_t> labels;
  labels.reserve(positions.size());
  for (auto p : positions) labels.push_back(flipped[p]);
  return batch.select(positions).relabeled(std::move(labels));
}

PairStep canc_iteration(Network m1, Network m2, const Batch& batch, double remember, double swap,
                        double lr) {
  if (!(remember > 0.0 && remember <= 1.0))
    throw ConfigError(fmt::format("remember rate must lie in (0,1], got {}", remember));
  if (!(swap >= 0.0 && swap <= 1.0))
    throw ConfigError(fmt::format("swap rate must lie in [0,1], got {}", swap));
  const auto losses1 = per_sample_loss(m1, batch);
  const auto losses2 = per_sample_loss(m2, batch);
  IterationDiagnostics diag{{select_clean(losses1, remember), select_swap(losses1, swap)},
                            {select_clean(losses2, remember), select_swap(losses2, swap)}};
  m2 = sgd_step(std::move(m2), peer_batch(batch, diag.by_m1), lr);
  m1 = sgd_step(std::move(m1), peer_batch(batch, diag.by_m2), lr);
  return {std::move(m1), std::move(m2), std::move(diag)};
}

PairStep coteaching_iteration(Network m1, Network m2, const Batch& batch, double remember,
                              double lr) {
  if (!(remember > 0.0 && remember <= 1.0))
    throw ConfigError(fmt::format("remember rate must lie in (0,1], got {}", remember));
  const auto losses1 = per_sample_loss(m1, batch);
  const auto losses2 = per_sample_loss(m2, batch);
  IterationDiagnostics diag{{select_clean(losses1, remember), {}},
                            {select_clean(losses2, remember), {}}};
  m2 = sgd_step(std::move(m2), batch.select(diag.by_m1.clean), lr);
  m1 = sgd_step(std::move(m1), batch.select(diag.by_m2.clean), lr);
  return {std::move(m1), std::move(m2), std::move(diag)};
}

SplitMetrics evaluate(const Network& net, const MaskDataset& ds, bool use_clean_labels) {
  const auto predicted = predict(net, ds.batch_all());
  const auto truth = use_clean_labels ? ds.clean_labels() : ds.labels();
  const auto counts = confusion(truth, predicted);
  return {counts, prf1(counts)};
}

namespace {

Batch gather(const MaskDataset& ds, std::span<const std::uint8_t> labels,
             std::span<const std::size_t> positions) {
  const std::size_t len = ds.sample_shape().size();
  std::vector<double> samples;
  samples.reserve(positions.size() * len);
  std::vector<std::uint8_t> ys;
  ys.reserve(positions.size());
  for (auto p : positions) {
    const auto& patch = ds.masks[p].patch;
    samples.insert(samples.end(), patch.begin(), patch.end());
    ys.push_back(labels[p]);
  }
  return Batch(ds.sample_shape(), std::move(samples), std::move(ys),
               std::vector<std::size_t>(positions.begin(), positions.end()));
}

NetworkSpec with_seed(NetworkSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  return spec;
}

}  // namespace

TrainResult train(const MaskDataset& train_set, const MaskDataset& modelsel,
                  const TrainConfig& cfg, const NetworkSpec& arch, const MaskDataset* eval) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  if (modelsel.size() == 0) throw ConfigError("model-selection set is empty");
  if (!(arch.input == train_set.sample_shape()))
    throw ConfigError("network input shape does not match the mask shape");

  const bool paired = cfg.algorithm != Algorithm::Vanilla;
  Network m1 = init_network(with_seed(arch, cfg.init_seed_1));
  Network m2 = paired ? init_network(with_seed(arch, cfg.init_seed_2)) : m1;

  const std::size_t n = train_set.size();
  const std::size_t per_epoch =
      cfg.iterations_per_epoch > 0 ? cfg.iterations_per_epoch : (n + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<std::uint8_t> labels = train_set.labels();
  const std::vector<std::uint8_t> clean = train_set.clean_labels();
  std::vector<std::size_t> order(n);
  Rng shuffle_rng(cfg.shuffle_seed);

  std::optional<TrainResult> result;
  std::vector<EpochRecord> records;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.remember_rate = paired ? remember_rate(epoch, cfg.schedule_knee, cfg.forget_rate) : 1.0;
    rec.swap_rate = cfg.algorithm != Algorithm::Canc ? 0.0
                    : cfg.swap_complements_remember ? 1.0 - rec.remember_rate
                                                    : cfg.swap_rate;
    std::size_t swap_correct = 0;

    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span(order));

    for (std::size_t it = 0; it < per_epoch; ++it) {
      std::vector<std::size_t> positions;
      if (cfg.iterations_per_epoch == 0) {
        const std::size_t begin = it * cfg.batch_size;
        const std::size_t end = std::min(n, begin + cfg.batch_size);
        positions.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
      } else {
        for (std::size_t j = 0; j < cfg.batch_size; ++j)
          positions.push_back(order[(it * cfg.batch_size + j) % n]);
      }
      const Batch batch = gather(train_set, labels, positions);

      if (!paired) {
        m1 = sgd_step(std::move(m1), batch, cfg.learning_rate);
        rec.n_seen += batch.size();
        rec.n_clean += batch.size();
        continue;
      }

      PairStep step = cfg.algorithm == Algorithm::Coteaching
                          ? coteaching_iteration(std::move(m1), std::move(m2), batch,
                                                 rec.remember_rate, cfg.learning_rate)
                          : canc_iteration(std::move(m1), std::move(m2), batch, rec.remember_rate,
                                           rec.swap_rate, cfg.learning_rate);
      m1 = std::move(step.m1);
      m2 = std::move(step.m2);
      const auto& d = step.diagnostics;
      rec.n_seen += 2 * batch.size();
      rec.n_clean += d.by_m1.clean.size() + d.by_m2.clean.size();
      rec.n_swapped += d.by_m1.swap.size() + d.by_m2.swap.size();
      for (const auto* swap : {&d.by_m1.swap, &d.by_m2.swap}) {
        for (auto p : *swap) {
          const auto idx = positions[p];
          if (1 - batch.labels()[p] == clean[idx]) ++swap_correct;
        }
      }
      if (cfg.persist_swaps) {
        // A sample swapped by both networks is still flipped once.
        std::vector<std::size_t> touched;
        std::set_union(d.by_m1.swap.begin(), d.by_m1.swap.end(), d.by_m2.swap.begin(),
                       d.by_m2.swap.end(), std::back_inserter(touched));
        for (auto p : touched) labels[positions[p]] = static_cast<std::uint8_t>(1 - batch.labels()[p]);
      }
    }
    rec.swap_correct_fraction = rec.n_swapped > 0 ? static_cast<double>(swap_correct) /
                                                        static_cast<double>(rec.n_swapped)
                                                  : std::numeric_limits<double>::quiet_NaN();

    // Score both networks; report the better one on model selection.
    SplitMetrics sel1 = evaluate(m1, modelsel, false);
    rec.network = 1;
    rec.modelsel = sel1;
    if (paired) {
      SplitMetrics sel2 = evaluate(m2, modelsel, false);
      if (sel2.scores.accuracy > sel1.scores.accuracy) {
        rec.network = 2;
        rec.modelsel = sel2;
      }
    }
    const Network& chosen = rec.network == 1 ? m1 : m2;
    if (eval != nullptr && eval->size() > 0) rec.eval = evaluate(chosen, *eval, true);

    if (!result || rec.modelsel.scores.accuracy > result->best_modelsel_accuracy) {
      if (!result) result.emplace(TrainResult{chosen, rec.network, epoch, 0.0, {}, m1, std::nullopt});
      result->best = chosen;
      result->best_network = rec.network;
      result->best_epoch = epoch;
      result->best_modelsel_accuracy = rec.modelsel.scores.accuracy;
    }
    records.push_back(std::move(rec));
  }

  result->records = std::move(records);
  result->final_m1 = std::move(m1);
  if (paired) result->final_m2 = std::move(m2);
  return std::move(*result);
}

}  // namespace canc

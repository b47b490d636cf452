#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "canc/errors.hpp"
#include "canc/rng.hpp"
#include "canc/train.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace canc {
namespace {

using Idx = std::vector<std::size_t>;
using testing::random_batch;
using testing::small_conv_spec;
using testing::small_dense_spec;

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_double(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_records_identical(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].epoch, b[i].epoch);
    EXPECT_TRUE(same_double(a[i].remember_rate, b[i].remember_rate));
    EXPECT_TRUE(same_double(a[i].swap_rate, b[i].swap_rate));
    EXPECT_EQ(a[i].n_seen, b[i].n_seen);
    EXPECT_EQ(a[i].n_clean, b[i].n_clean);
    EXPECT_EQ(a[i].n_swapped, b[i].n_swapped);
    EXPECT_TRUE(same_double(a[i].swap_correct_fraction, b[i].swap_correct_fraction));
    EXPECT_EQ(a[i].network, b[i].network);
    EXPECT_EQ(a[i].modelsel.counts, b[i].modelsel.counts);
    EXPECT_EQ(a[i].eval.has_value(), b[i].eval.has_value());
    if (a[i].eval && b[i].eval) EXPECT_EQ(a[i].eval->counts, b[i].eval->counts);
  }
}

// Two Gaussian-ish blobs in a 1x1x4 input, with optional label noise.
MaskDataset blob_dataset(std::size_t n, std::uint64_t seed, double flip = 0.0) {
  Rng rng(seed);
  MaskDataset ds;
  ds.mask_size = 1;
  ds.channels = 4;
  for (std::size_t i = 0; i < n; ++i) {
    Mask m;
    const std::uint8_t y = static_cast<std::uint8_t>(i % 2);
    for (int c = 0; c < 4; ++c)
      m.patch.push_back(static_cast<float>((y ? 0.7 : 0.3) + rng.uniform(-0.2, 0.2)));
    m.clean_label = y;
    m.label = rng.uniform() < flip ? static_cast<std::uint8_t>(1 - y) : y;
    m.scene_id = static_cast<std::uint32_t>(i / 16);
    ds.masks.push_back(std::move(m));
  }
  return ds;
}

NetworkSpec blob_spec() {
  NetworkSpec spec;
  spec.input = {1, 1, 4};
  spec.layers = {DenseLayer{4, 6}, LeakyReluLayer{0.01}, DenseLayer{6, 2}};
  return spec;
}

TrainConfig small_config(Algorithm algo) {
  TrainConfig cfg;
  cfg.algorithm = algo;
  cfg.learning_rate = 0.2;
  cfg.max_epochs = 6;
  cfg.schedule_knee = 3;
  cfg.batch_size = 16;
  cfg.forget_rate = 0.3;
  cfg.swap_rate = 0.1;
  cfg.shuffle_seed = 5;
  cfg.init_seed_1 = 6;
  cfg.init_seed_2 = 7;
  return cfg;
}

TEST(RememberRate, Examples) {
  EXPECT_EQ(remember_rate(0, 10, 0.45), 1.0);
  EXPECT_NEAR(remember_rate(10, 10, 0.45), 0.55, 1e-12);
  EXPECT_NEAR(remember_rate(5, 10, 0.45), 0.775, 1e-12);
  EXPECT_NEAR(remember_rate(25, 10, 0.45), 0.55, 1e-12);
}

TEST(RememberRate, MonotoneNonIncreasingWithFloor) {
  for (double tau : {0.1, 0.5, 0.9}) {
    double previous = 1.0;
    for (std::size_t t = 0; t < 30; ++t) {
      const double r = remember_rate(t, 7, tau);
      EXPECT_LE(r, previous);
      EXPECT_GE(r, 1.0 - tau - 1e-15);
      previous = r;
    }
  }
  EXPECT_THROW(remember_rate(1, 0, 0.5), ConfigError);
}

TEST(RateCount, FloorsWithoutRepresentationDrift) {
  EXPECT_EQ(rate_count(0.29, 100), 29u);
  EXPECT_EQ(rate_count(0.7, 10), 7u);
  EXPECT_EQ(rate_count(0.6, 10), 6u);
  EXPECT_EQ(rate_count(0.25, 5), 1u);
  EXPECT_EQ(rate_count(0.0, 5), 0u);
}

TEST(SelectClean, Examples) {
  const std::vector<double> losses{0.9, 0.1, 0.5, 0.3};
  EXPECT_EQ(select_clean(losses, 0.5), (Idx{1, 3}));
  EXPECT_EQ(select_clean(losses, 1.0), (Idx{0, 1, 2, 3}));
  EXPECT_EQ(select_clean(losses, 0.1), (Idx{1}));  // at least one
}

TEST(SelectClean, TiesFollowOneTotalOrder) {
  const std::vector<double> losses{0.2, 0.2, 0.2, 0.1};
  EXPECT_EQ(select_clean(losses, 0.5), (Idx{0, 3}));
  EXPECT_EQ(select_swap(losses, 0.5), (Idx{1, 2}));
  const std::vector<double> flat(10, 1.0);
  EXPECT_EQ(select_clean(flat, 0.6), (Idx{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(select_swap(flat, 0.4), (Idx{6, 7, 8, 9}));
}

TEST(SelectClean, NonFiniteLossIsNumericError) {
  const std::vector<double> losses{0.1, std::nan(""), 0.3};
  EXPECT_THROW(select_clean(losses, 0.5), NumericError);
  EXPECT_THROW(select_swap(losses, 0.5), NumericError);
}

TEST(SelectSwap, Examples) {
  const std::vector<double> losses{0.9, 0.1, 0.5, 0.3};
  EXPECT_EQ(select_swap(losses, 0.25), (Idx{0}));
  EXPECT_TRUE(select_swap(losses, 0.0).empty());
}

TEST(Selection, MatchesSortOracleOnSeededLosses) {
  Rng rng(1000);
  std::vector<double> losses(1000);
  for (auto& l : losses) l = rng.uniform(0.0, 3.0);
  for (int k = 1; k <= 9; ++k) {
    const double rate = k / 10.0;
    EXPECT_EQ(select_clean(losses, rate), oracle::sorted_prefix(losses, rate_count(rate, 1000), false));
    EXPECT_EQ(select_swap(losses, rate), oracle::sorted_prefix(losses, rate_count(rate, 1000), true));
  }
}

TEST(Selection, MatchesSortOracleWithHeavyTies) {
  Rng rng(77);
  std::vector<double> losses(1000);
  for (auto& l : losses) l = static_cast<double>(rng.below(7)) * 0.25;
  for (int k = 1; k <= 9; ++k) {
    const double rate = k / 10.0;
    EXPECT_EQ(select_clean(losses, rate), oracle::sorted_prefix(losses, rate_count(rate, 1000), false));
    EXPECT_EQ(select_swap(losses, rate), oracle::sorted_prefix(losses, rate_count(rate, 1000), true));
  }
}

TEST(Selection, CleanAndSwapDisjointWhenRatesFit) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> losses(1 + rng.below(200));
    for (auto& l : losses) l = static_cast<double>(rng.below(5));
    const double r = rng.uniform(0.05, 1.0);
    const double s = rng.uniform(0.0, 1.0 - r);
    const auto clean = select_clean(losses, r);
    const auto swap = select_swap(losses, s);
    Idx common;
    std::set_intersection(clean.begin(), clean.end(), swap.begin(), swap.end(), std::back_inserter(common));
    if (rate_count(r, losses.size()) > 0) EXPECT_TRUE(common.empty()) << losses.size() << " " << r << " " << s;
  }
}

TEST(FlipLabels, Examples) {
  const std::vector<std::uint8_t> labels{0, 1, 0};
  EXPECT_EQ(flip_labels(labels, Idx{}), labels);
  EXPECT_EQ(flip_labels(labels, Idx{0, 1}), (std::vector<std::uint8_t>{1, 0, 0}));
  EXPECT_EQ(flip_labels(flip_labels(labels, Idx{0, 2}), Idx{0, 2}), labels);
  EXPECT_THROW(flip_labels(labels, Idx{3}), std::out_of_range);
}

TEST(PeerBatch, OverlapIsFlippedOnce) {
  const Batch b({1, 1, 1}, {0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1}, {0, 1, 2, 3});
  const auto peer = peer_batch(b, {{0, 1}, {1, 3}});
  EXPECT_EQ(peer.size(), 3u);
  EXPECT_EQ(std::vector<std::uint8_t>(peer.labels().begin(), peer.labels().end()),
            (std::vector<std::uint8_t>{0, 0, 0}));
  EXPECT_EQ(std::vector<std::size_t>(peer.indices().begin(), peer.indices().end()), (Idx{0, 1, 3}));
}

TEST(CancIteration, PeerBatchCountsForTenSamples) {
  const auto m1 = init_network(small_dense_spec(1));
  const auto m2 = init_network(small_dense_spec(2));
  const auto batch = random_batch(m1.spec().input, 10, 3);
  const auto step = canc_iteration(m1, m2, batch, 0.6, 0.2, 0.1);
  for (const auto* sel : {&step.diagnostics.by_m1, &step.diagnostics.by_m2}) {
    EXPECT_EQ(sel->clean.size(), 6u);
    EXPECT_EQ(sel->swap.size(), 2u);
    const auto peer = peer_batch(batch, *sel);
    EXPECT_EQ(peer.size(), 8u);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < peer.size(); ++i)
      flipped += peer.labels()[i] != batch.labels()[peer.indices()[i]];
    EXPECT_EQ(flipped, 2u);
  }
}

TEST(CancIteration, ZeroSwapEqualsCoteachingBitwise) {
  const auto m1 = init_network(small_conv_spec(1));
  const auto m2 = init_network(small_conv_spec(2));
  const auto batch = random_batch(m1.spec().input, 12, 4);
  const auto a = canc_iteration(m1, m2, batch, 0.7, 0.0, 0.1);
  const auto b = coteaching_iteration(m1, m2, batch, 0.7, 0.1);
  EXPECT_TRUE(bitwise_equal(a.m1.parameters(), b.m1.parameters()));
  EXPECT_TRUE(bitwise_equal(a.m2.parameters(), b.m2.parameters()));
  EXPECT_EQ(a.diagnostics.by_m1.clean, b.diagnostics.by_m1.clean);
  EXPECT_EQ(a.diagnostics.by_m2.clean, b.diagnostics.by_m2.clean);
}

// Rebuilds M2's update by hand: M1 ranks with the oracle forward pass, the
// union batch is assembled sample by sample, then one sgd_step.
TEST(CancIteration, PeerUpdateMatchesManualUnionBatch) {
  const auto spec1 = small_conv_spec(10);
  const auto m1 = init_network(spec1);
  const auto m2 = init_network(small_conv_spec(11));
  const auto batch = random_batch(spec1.input, 10, 12);
  const double r = 0.6, s = 0.3, lr = 0.2;

  std::vector<double> losses;
  for (std::size_t i = 0; i < batch.size(); ++i)
    losses.push_back(oracle::cross_entropy(oracle::forward(spec1, m1.parameters(), batch.sample(i)),
                                           batch.labels()[i]));
  const auto clean = oracle::sorted_prefix(losses, 6, false);
  const auto swap = oracle::sorted_prefix(losses, 3, true);

  std::vector<double> samples;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const bool in_clean = std::find(clean.begin(), clean.end(), i) != clean.end();
    const bool in_swap = std::find(swap.begin(), swap.end(), i) != swap.end();
    if (!in_clean && !in_swap) continue;
    const auto x = batch.sample(i);
    samples.insert(samples.end(), x.begin(), x.end());
    labels.push_back(in_swap ? 1 - batch.labels()[i] : batch.labels()[i]);
    idx.push_back(i);
  }
  const auto expected = sgd_step(m2, Batch(spec1.input, samples, labels, idx), lr);

  const auto step = canc_iteration(m1, m2, batch, r, s, lr);
  ASSERT_EQ(step.m2.parameters().size(), expected.parameters().size());
  for (std::size_t i = 0; i < expected.parameters().size(); ++i)
    EXPECT_LE(oracle::relative_error(step.m2.parameters()[i], expected.parameters()[i], 1e-300), 1e-12);
}

TEST(CancIteration, EachNetworkTrainsOnPeerSelection) {
  const auto m1 = init_network(small_dense_spec(21));
  const auto m2 = init_network(small_dense_spec(22));
  const auto batch = random_batch(m1.spec().input, 20, 23);
  const auto step = canc_iteration(m1, m2, batch, 0.5, 0.2, 0.1);
  const auto& d = step.diagnostics;
  EXPECT_EQ(d.by_m1.clean, select_clean(per_sample_loss(m1, batch), 0.5));
  EXPECT_EQ(d.by_m2.clean, select_clean(per_sample_loss(m2, batch), 0.5));
  EXPECT_TRUE(bitwise_equal(step.m2.parameters(), sgd_step(m2, peer_batch(batch, d.by_m1), 0.1).parameters()));
  EXPECT_TRUE(bitwise_equal(step.m1.parameters(), sgd_step(m1, peer_batch(batch, d.by_m2), 0.1).parameters()));
}

TEST(TrainConfig, SwapAboveForgetIsRejectedOutsideAblation) {
  auto cfg = small_config(Algorithm::Canc);
  cfg.swap_rate = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.swap_complements_remember = true;
  EXPECT_NO_THROW(cfg.validate());
  cfg = small_config(Algorithm::Canc);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, SingleEpochSingleIterationGivesOneRecord) {
  const auto ds = blob_dataset(32, 1);
  auto cfg = small_config(Algorithm::Coteaching);
  cfg.max_epochs = 1;
  cfg.iterations_per_epoch = 1;
  cfg.batch_size = ds.size();
  const auto result = train(ds, blob_dataset(16, 2), cfg, blob_spec());
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].n_seen, 2 * ds.size());
  EXPECT_EQ(result.records[0].n_swapped, 0u);
  EXPECT_TRUE(std::isnan(result.records[0].swap_correct_fraction));
}

TEST(Train, RepeatRunsAreIdentical) {
  const auto ds = blob_dataset(96, 1, 0.3);
  const auto sel = blob_dataset(32, 2);
  const auto eval = blob_dataset(32, 3);
  const auto cfg = small_config(Algorithm::Canc);
  const auto a = train(ds, sel, cfg, blob_spec(), &eval);
  const auto b = train(ds, sel, cfg, blob_spec(), &eval);
  expect_records_identical(a.records, b.records);
  EXPECT_TRUE(bitwise_equal(a.final_m1.parameters(), b.final_m1.parameters()));
  EXPECT_TRUE(bitwise_equal(a.final_m2->parameters(), b.final_m2->parameters()));
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(Train, CancWithoutSwapReproducesCoteaching) {
  const auto ds = blob_dataset(96, 4, 0.3);
  const auto sel = blob_dataset(32, 5);
  auto canc_cfg = small_config(Algorithm::Canc);
  canc_cfg.swap_rate = 0.0;
  const auto a = train(ds, sel, canc_cfg, blob_spec());
  const auto b = train(ds, sel, small_config(Algorithm::Coteaching), blob_spec());
  expect_records_identical(a.records, b.records);
  EXPECT_TRUE(bitwise_equal(a.final_m1.parameters(), b.final_m1.parameters()));
  EXPECT_TRUE(bitwise_equal(a.final_m2->parameters(), b.final_m2->parameters()));
}

TEST(Train, ScheduleIsAppliedPerEpoch) {
  const auto ds = blob_dataset(64, 6, 0.2);
  const auto cfg = small_config(Algorithm::Canc);
  const auto result = train(ds, blob_dataset(16, 7), cfg, blob_spec());
  ASSERT_EQ(result.records.size(), cfg.max_epochs);
  for (const auto& rec : result.records) {
    EXPECT_EQ(rec.remember_rate, remember_rate(rec.epoch, cfg.schedule_knee, cfg.forget_rate));
    EXPECT_EQ(rec.swap_rate, cfg.swap_rate);
    EXPECT_EQ(rec.n_seen, 2 * ds.size());
    EXPECT_GT(rec.n_swapped, 0u);
  }
}

TEST(Train, DoesNotModifyInputs) {
  const auto ds = blob_dataset(64, 8, 0.3);
  const auto copy = ds;
  auto cfg = small_config(Algorithm::Canc);
  cfg.persist_swaps = true;
  (void)train(ds, blob_dataset(16, 9), cfg, blob_spec());
  EXPECT_EQ(ds.masks, copy.masks);
}

TEST(Train, PersistedSwapsChangeLaterEpochs) {
  const auto ds = blob_dataset(64, 10, 0.3);
  const auto sel = blob_dataset(16, 11);
  auto cfg = small_config(Algorithm::Canc);
  const auto plain = train(ds, sel, cfg, blob_spec());
  cfg.persist_swaps = true;
  const auto persisted = train(ds, sel, cfg, blob_spec());
  EXPECT_FALSE(bitwise_equal(plain.final_m1.parameters(), persisted.final_m1.parameters()));
}

TEST(Train, VanillaLearnsCleanBlobs) {
  const auto ds = blob_dataset(128, 12);
  const auto sel = blob_dataset(64, 13);
  auto cfg = small_config(Algorithm::Vanilla);
  cfg.max_epochs = 15;
  const auto result = train(ds, sel, cfg, blob_spec());
  EXPECT_FALSE(result.final_m2.has_value());
  EXPECT_GT(result.best_modelsel_accuracy, 0.9);
  EXPECT_EQ(result.records[0].remember_rate, 1.0);
  double best = 0.0;
  for (const auto& rec : result.records) best = std::max(best, rec.modelsel.scores.accuracy);
  EXPECT_EQ(best, result.best_modelsel_accuracy);
}

TEST(Train, RejectsShapeMismatchAndEmptySets) {
  const auto ds = blob_dataset(16, 1);
  auto spec = blob_spec();
  spec.input = {1, 1, 3};
  spec.layers = {DenseLayer{3, 2}};
  EXPECT_THROW(train(ds, ds, small_config(Algorithm::Canc), spec), ConfigError);
  EXPECT_THROW(train(MaskDataset{1, 4, 0.01, {}}, ds, small_config(Algorithm::Canc), blob_spec()),
               ConfigError);
}

}  // namespace
}  // namespace canc

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "canc/config.hpp"
#include "canc/data.hpp"
#include "canc/experiment.hpp"
#include "canc/metrics.hpp"
#include "canc/noise.hpp"
#include "canc/rng.hpp"
#include "canc/train.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace canc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome noise_matrices_exact() {
  const auto s = symmetric_matrix(0.35, 2);
  const auto a = antisymmetric_matrix(0.35);
  const bool sym = s.at(0, 0) == 0.65 && s.at(0, 1) == 0.35 && s.at(1, 0) == 0.35 && s.at(1, 1) == 0.65;
  const bool anti = a.at(0, 0) == 0.65 && a.at(0, 1) == 0.0 && a.at(1, 0) == 0.35 && a.at(1, 1) == 1.0;
  return {sym && anti, fmt::format("symmetric {} antisymmetric {}", sym ? "exact" : "differs",
                                   anti ? "exact" : "differs")};
}

Outcome noise_fidelity() {
  const auto start = Clock::now();
  constexpr std::size_t n = 100000;
  double worst = 0.0;
  std::uint64_t seed = 1;
  for (double eps : {0.15, 0.35, 0.45, 0.55})
    for (const auto& t : {symmetric_matrix(eps), antisymmetric_matrix(eps)})
      for (std::uint8_t truth : {0, 1}) {
        const std::vector<std::uint8_t> labels(n, truth);
        const auto noisy = apply_noise(labels, t, seed++);
        const double flipped =
            static_cast<double>(std::count(noisy.begin(), noisy.end(), 1 - truth)) / static_cast<double>(n);
        worst = std::max(worst, std::abs(flipped - t.at(1 - truth, truth)));
      }
  const double secs = seconds_since(start);
  return {worst <= 0.01 && secs < 5.0, fmt::format("max |freq - T| = {:.5f}, {:.2f} s", worst, secs)};
}

Outcome gradient_check() {
  const auto start = Clock::now();
  struct Case {
    const char* name;
    NetworkSpec spec;
  };
  std::vector<Case> cases;
  {
    NetworkSpec s;
    s.input = {1, 1, 6};
    s.layers = {DenseLayer{6, 2}};
    s.seed = 1;
    cases.push_back({"dense", s});
  }
  {
    NetworkSpec s;
    s.input = {1, 1, 6};
    s.layers = {DenseLayer{6, 5}, LeakyReluLayer{0.1}, DenseLayer{5, 2}};
    s.seed = 2;
    cases.push_back({"lrelu", s});
  }
  {
    NetworkSpec s;
    s.input = {7, 7, 2};
    s.layers = {ConvLayer{2, 3, 3, 2}, DenseLayer{27, 2}};
    s.seed = 3;
    cases.push_back({"conv", s});
  }
  cases.push_back({"conv+lrelu+dense", testing::small_conv_spec(4)});

  std::string detail;
  bool pass = true;
  for (const auto& c : cases) {
    const auto net = init_network(c.spec);
    const auto batch = testing::random_batch(c.spec.input, 4, 99);
    const auto analytic = loss_gradient(net, batch);
    const std::vector<double> x(net.parameters().begin(), net.parameters().end());
    const auto numeric = oracle::central_difference(
        [&](std::span<const double> p) {
          Network probe = net;
          std::copy(p.begin(), p.end(), probe.parameters().begin());
          return mean_loss(probe, batch);
        },
        x, 1e-5);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      worst = std::max(worst, oracle::relative_error(analytic[i], numeric[i]));
    pass = pass && worst <= 1e-4;
    detail += fmt::format("{} {:.2e}; ", c.name, worst);
  }
  const double secs = seconds_since(start);
  return {pass && secs < 30.0, detail + fmt::format("{:.2f} s", secs)};
}

Outcome selection_oracle() {
  Rng rng(2024);
  std::size_t mismatches = 0, checks = 0;
  for (int vec = 0; vec < 5; ++vec) {
    std::vector<double> losses(1000);
    for (auto& l : losses) l = vec % 2 ? static_cast<double>(rng.below(20)) : rng.uniform(0.0, 5.0);
    for (int k = 1; k <= 9; ++k) {
      const double rate = k / 10.0;
      const std::size_t count = static_cast<std::size_t>(k) * 100;
      mismatches += select_clean(losses, rate) != oracle::sorted_prefix(losses, count, false);
      mismatches += select_swap(losses, rate) != oracle::sorted_prefix(losses, count, true);
      checks += 2;
    }
  }
  return {mismatches == 0, fmt::format("{} of {} index sets match", checks - mismatches, checks)};
}

Outcome schedule_exact() {
  double worst = 0.0;
  std::size_t points = 0;
  for (std::size_t knee : {1, 2, 5, 10, 15})
    for (double tau : {0.0, 0.1, 0.2, 0.45, 0.5, 0.8, 0.95})
      for (std::size_t t = 0; t <= 3 * knee + 2; ++t) {
        const double expected =
            1.0 - std::min(static_cast<double>(t) / static_cast<double>(knee) * tau, tau);
        worst = std::max(worst, std::abs(remember_rate(t, knee, tau) - expected));
        ++points;
      }
  const bool endpoints = remember_rate(0, 10, 0.45) == 1.0 &&
                         std::abs(remember_rate(10, 10, 0.45) - 0.55) <= 1e-12 &&
                         std::abs(remember_rate(40, 10, 0.45) - 0.55) <= 1e-12;
  return {worst <= 1e-12 && endpoints, fmt::format("{} grid points, max error {:.1e}", points, worst)};
}

Outcome coteaching_reduction() {
  SceneGenParams p;
  p.size = 64;
  p.channels = 1;
  p.min_buildings = 2;
  p.max_buildings = 5;
  p.min_side = 8;
  p.max_side = 24;
  p.background_mean = 0.12;
  p.background_spread = 0.08;
  p.seed = 8;
  std::vector<Scene> scenes;
  for (std::uint32_t i = 0; i < 6; ++i) scenes.push_back(generate_scene(p, i));
  auto split = split_dataset(build_dataset(scenes, 16, 0.05), {}, 3);
  inject_noise(split.train, symmetric_matrix(0.3), 4);

  NetworkSpec arch;
  arch.input = split.train.sample_shape();
  arch.layers = {ConvLayer{1, 4, 4, 2}, LeakyReluLayer{0.01}, DenseLayer{196, 2}};

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 6;
  cfg.schedule_knee = 3;
  cfg.batch_size = 8;
  cfg.forget_rate = 0.4;
  cfg.swap_rate = 0.0;
  cfg.algorithm = Algorithm::Canc;
  const auto canc = train(split.train, split.modelsel, cfg, arch, &split.eval);
  cfg.algorithm = Algorithm::Coteaching;
  const auto cot = train(split.train, split.modelsel, cfg, arch, &split.eval);

  bool same = canc.records.size() == cot.records.size();
  for (std::size_t i = 0; same && i < canc.records.size(); ++i) {
    const auto& a = canc.records[i];
    const auto& b = cot.records[i];
    same = a.epoch == b.epoch && a.remember_rate == b.remember_rate && a.n_seen == b.n_seen &&
           a.n_clean == b.n_clean && a.n_swapped == b.n_swapped && a.network == b.network &&
           a.modelsel.counts == b.modelsel.counts && a.eval->counts == b.eval->counts &&
           std::isnan(a.swap_correct_fraction) && std::isnan(b.swap_correct_fraction);
  }
  const bool params = bitwise_equal(canc.final_m1.parameters(), cot.final_m1.parameters()) &&
                      bitwise_equal(canc.final_m2->parameters(), cot.final_m2->parameters()) &&
                      bitwise_equal(canc.best.parameters(), cot.best.parameters());
  return {same && params, fmt::format("{} epochs; records {}, parameters {}", canc.records.size(),
                                      same ? "identical" : "differ", params ? "bitwise equal" : "differ")};
}

Outcome metric_semantics() {
  const auto s = prf1({0, 0, 5, 5});
  const bool degenerate = std::isnan(s.precision) && s.recall == 0.0 && std::isnan(s.f1);
  using L = std::vector<std::uint8_t>;
  const double a = sp_iou(L(10, 1), L(10, 1));
  const double b = sp_iou(L(10, 0), L(10, 0));
  const double c = sp_iou(L{1, 1, 0, 0}, L{1, 0, 1, 0});
  const bool iou = a == 1.0 && b == 1.0 && c == 0.5;
  return {degenerate && iou,
          fmt::format("P={} R={} F1={}; sp_iou {} {} {}", s.precision, s.recall, s.f1, a, b, c)};
}

struct TrendRun {
  RunReport report;
  double seconds = 0.0;
};

TrendRun trend_run(const fs::path& preset, const fs::path& out, const std::string& algorithm,
                   const std::string& noise, const std::string& eps) {
  const auto cfg = load_config(preset, {{"train.algorithm", algorithm},
                                        {"noise.type", noise},
                                        {"noise.epsilon", eps},
                                        {"output.directory", (out / (algorithm + "-" + noise + "-" + eps)).string()}});
  const auto start = Clock::now();
  auto report = run_experiment(cfg);
  return {std::move(report), seconds_since(start)};
}

Outcome trend_reproduction(const fs::path& preset, const fs::path& out) {
  const auto vanilla = trend_run(preset, out, "vanilla", "symmetric", "0.55");
  const auto canc_sym = trend_run(preset, out, "canc", "symmetric", "0.55");
  const auto cot = trend_run(preset, out, "coteaching", "antisymmetric", "0.45");
  const auto canc_anti = trend_run(preset, out, "canc", "antisymmetric", "0.45");

  const double gap = canc_sym.report.best_modelsel_accuracy - vanilla.report.best_modelsel_accuracy;
  const bool sym_ok = gap >= 0.10;
  const bool anti_ok =
      canc_anti.report.best_modelsel_accuracy >= cot.report.best_modelsel_accuracy - 0.02;
  double slowest = 0.0;
  for (const auto* r : {&vanilla, &canc_sym, &cot, &canc_anti}) slowest = std::max(slowest, r->seconds);
  const bool fast = slowest < 600.0;
  return {sym_ok && anti_ok && fast,
          fmt::format("symmetric 0.55: canc {:.4f} vs vanilla {:.4f} (gap {:+.4f}, need >= 0.10) {}; "
                      "antisymmetric 0.45: canc {:.4f} vs coteaching {:.4f} {}; slowest run {:.0f} s",
                      canc_sym.report.best_modelsel_accuracy, vanilla.report.best_modelsel_accuracy, gap,
                      sym_ok ? "ok" : "MISSED", canc_anti.report.best_modelsel_accuracy,
                      cot.report.best_modelsel_accuracy, anti_ok ? "ok" : "MISSED", slowest)};
}

Outcome determinism(const fs::path& preset, const fs::path& out) {
  const auto cfg = load_config(preset, {{"data.scenes", "6"},
                                        {"train.max_epochs", "3"},
                                        {"noise.epsilon", "0.35"},
                                        {"output.directory", (out / "determinism").string()}});
  const std::vector<std::string> files{"epochs.csv", "sp_iou.json", "summary.json", "config.ini"};
  run_experiment(cfg);
  std::vector<std::string> first;
  for (const auto& f : files) first.push_back(slurp(out / "determinism" / f));
  run_experiment(cfg);
  std::size_t same = 0;
  for (std::size_t i = 0; i < files.size(); ++i) same += slurp(out / "determinism" / files[i]) == first[i];
  return {same == files.size(), fmt::format("{} of {} output files byte-identical", same, files.size())};
}

Outcome labeling_and_tiling() {
  auto patch_with = [](std::size_t ones) {
    std::vector<std::uint8_t> p(32 * 32, 0);
    std::fill_n(p.begin(), ones, 1);
    return p;
  };
  const int l0 = label_mask(patch_with(0), 0.01);
  const int l10 = label_mask(patch_with(10), 0.01);
  const int l11 = label_mask(patch_with(11), 0.01);

  SceneGenParams p;
  p.size = 8192;
  p.channels = 1;
  p.min_buildings = 200;
  p.max_buildings = 400;
  p.seed = 1;
  const auto start = Clock::now();
  std::size_t tiles = 0;
  bool grid_ok = false;
  {
    const auto scene = generate_scene(p, 0);
    const auto cut = tile_scene(scene, 32);
    tiles = cut.size();
    grid_ok = cut.back().row == 255 && cut.back().col == 255;
  }
  const bool pass = l0 == 0 && l10 == 0 && l11 == 1 && tiles == 65536 && grid_ok;
  return {pass, fmt::format("S1=0,10,11 -> {},{},{}; 8192/32 -> {} tiles ({:.1f} s)", l0, l10, l11, tiles,
                            seconds_since(start))};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path preset = argc > 1 ? fs::path(argv[1]) : fs::path(CANC_DEFAULT_PRESET);
  const fs::path out = fs::absolute(argc > 2 ? fs::path(argv[2]) : fs::path("acceptance-out"));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"noise matrices bit-exact", noise_matrices_exact},
      {"empirical noise fidelity", noise_fidelity},
      {"gradient correctness", gradient_check},
      {"selection oracle equivalence", selection_oracle},
      {"schedule exactness", schedule_exact},
      {"co-teaching reduction", coteaching_reduction},
      {"metric semantics", metric_semantics},
      {"trend reproduction", [&] { return trend_reproduction(preset, out); }},
      {"determinism", [&] { return determinism(preset, out); }},
      {"mask labeling and tiling", labeling_and_tiling},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

#include "canc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "canc/dataset_io.hpp"
#include "canc/errors.hpp"
#include "canc/noise.hpp"
#include "canc/rng.hpp"

namespace canc {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitStream = std::uint64_t{1} << 32;

json metrics_json(const SplitMetrics& m) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return json{{"accuracy", num(m.scores.accuracy)},
              {"precision", num(m.scores.precision)},
              {"recall", num(m.scores.recall)},
              {"f1", num(m.scores.f1)},
              {"tp", m.counts.tp},
              {"fp", m.counts.fp},
              {"tn", m.counts.tn},
              {"fn", m.counts.fn}};
}

double num_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

SplitMetrics metrics_from_json(const json& j) {
  SplitMetrics m;
  m.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
              j.at("tn").get<std::size_t>(), j.at("fn").get<std::size_t>()};
  m.scores = {num_or_nan(j.at("accuracy")), num_or_nan(j.at("precision")),
              num_or_nan(j.at("recall")), num_or_nan(j.at("f1"))};
  return m;
}

std::string fixed(double v) { return std::isnan(v) ? "nan" : fmt::format("{:.6f}", v); }

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
auto in_stage(const char* section, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    throw ConfigError(what.starts_with("[") ? what : fmt::format("[{}] {}", section, what));
  } catch (const DataError& e) {
    const std::string what = e.what();
    throw DataError(what.starts_with("[") ? what : fmt::format("[{}] {}", section, what));
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("[{}] {}", section, e.what()), e.layer());
  }
}

std::string canonical_key(const std::string& key) {
  if (key == "algorithm") return "train.algorithm";
  if (key == "noise_type" || key == "noise") return "noise.type";
  if (key == "epsilon") return "noise.epsilon";
  return key;
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    if (!out) throw DataError(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

MaskDataset load_dataset(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  if (d.source == DataSource::File) {
    auto ds = read_dataset(d.file, d.masks_per_scene, d.tau);
    if (ds.mask_size != d.mask_size)
      throw ConfigError(fmt::format("mask_size {} does not match the file's {}", d.mask_size,
                                    ds.mask_size));
    if (cfg.noise.source == NoiseSource::Inject)
      for (auto& m : ds.masks) m.label = m.clean_label;
    return ds;
  }
  SceneGenParams params = d.scene;
  params.seed = d.seed;
  std::vector<Scene> scenes;
  scenes.reserve(d.scenes);
  for (std::size_t i = 0; i < d.scenes; ++i)
    scenes.push_back(generate_scene(params, static_cast<std::uint32_t>(i)));
  return build_dataset(scenes, d.mask_size, d.tau);
}

DatasetSplit prepare_data(const ExperimentConfig& cfg) {
  auto ds = in_stage("data", [&] { return load_dataset(cfg); });
  auto split = in_stage("data", [&] {
    return split_dataset(ds, cfg.data.split, derive_seed(cfg.data.seed, kSplitStream));
  });
  in_stage("noise", [&] {
    const auto t = make_transition(cfg.noise.type, cfg.noise.epsilon);
    if (cfg.noise.source == NoiseSource::Inject) inject_noise(split.train, t, cfg.noise.seed);
    if (cfg.noise.noise_modelsel) {
      if (cfg.noise.source == NoiseSource::Inject)
        inject_noise(split.modelsel, t, derive_seed(cfg.noise.seed, 1));
    } else {
      for (auto& m : split.modelsel.masks) m.label = m.clean_label;
    }
    for (auto& m : split.eval.masks) m.label = m.clean_label;
    return 0;
  });
  return split;
}

std::vector<SceneIou> scene_sp_iou(const Network& net, const MaskDataset& eval) {
  std::vector<SceneIou> out;
  if (eval.size() == 0) return out;
  const auto predicted = predict(net, eval.batch_all());
  std::map<std::uint32_t, std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>>> per_scene;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    auto& [truth, pred] = per_scene[eval.masks[i].scene_id];
    truth.push_back(eval.masks[i].clean_label);
    pred.push_back(predicted[i]);
  }
  for (const auto& [id, pair] : per_scene) out.push_back({id, sp_iou(pair.first, pair.second)});
  return out;
}

std::string epochs_csv(std::span<const EpochRecord> records) {
  std::string out =
      "epoch,split,accuracy,precision,recall,f1,remember_rate,n_clean,n_swapped,"
      "swap_correct_fraction\n";
  auto row = [&](const EpochRecord& r, const char* split, const SplitMetrics& m) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.epoch, split, fixed(m.scores.accuracy),
                       fixed(m.scores.precision), fixed(m.scores.recall), fixed(m.scores.f1),
                       fixed(r.remember_rate), r.n_clean, r.n_swapped,
                       fixed(r.swap_correct_fraction));
  };
  for (const auto& r : records) {
    row(r, "modelsel", r.modelsel);
    if (r.eval) row(r, "eval", *r.eval);
  }
  return out;
}

std::string sp_iou_json(std::span<const SceneIou> values) {
  json arr = json::array();
  for (const auto& v : values) arr.push_back({{"scene_id", v.scene_id}, {"sp_iou", v.sp_iou}});
  return arr.dump(2) + "\n";
}

std::string summary_json(const RunReport& r) {
  json finals = json::object();
  for (const auto& [split, m] : r.final_metrics) finals[split] = metrics_json(m);
  double mean = 0.0;
  for (const auto& s : r.sp_iou) mean += s.sp_iou;
  json j{{"artifact_version", r.version},
         {"algorithm", r.algorithm},
         {"noise_type", r.noise_type},
         {"epsilon", r.epsilon},
         {"best", {{"epoch", r.best_epoch},
                   {"network", r.best_network},
                   {"modelsel_accuracy", r.best_modelsel_accuracy}}},
         {"final_metrics", finals},
         {"mean_sp_iou", r.sp_iou.empty() ? json(nullptr) : json(mean / static_cast<double>(r.sp_iou.size()))},
         {"files", {{"epochs_csv", r.epochs_csv.filename().string()},
                    {"sp_iou_json", r.sp_iou_json.filename().string()},
                    {"config", "config.ini"}}},
         {"config", r.config_echo}};
  return j.dump(2) + "\n";
}

RunReport run_experiment(const ExperimentConfig& cfg_in) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;

  const DatasetSplit split = prepare_data(cfg);
  if (cfg.data.source == DataSource::File) cfg.data.scene.channels = split.train.channels;
  const NetworkSpec arch = in_stage("model", [&] { return cfg.network_spec(); });

  const TrainResult result = in_stage("train", [&] {
    return train(split.train, split.modelsel, cfg.train, arch, &split.eval);
  });

  RunReport report;
  report.config_echo = to_ini(cfg_in);
  report.algorithm = std::string(to_string(cfg.train.algorithm));
  report.noise_type = std::string(to_string(cfg.noise.type));
  report.epsilon = cfg.noise.epsilon;
  report.best_epoch = result.best_epoch;
  report.best_network = result.best_network;
  report.best_modelsel_accuracy = result.best_modelsel_accuracy;
  report.records = result.records;
  report.final_metrics["train"] = evaluate(result.best, split.train, true);
  report.final_metrics["modelsel"] = evaluate(result.best, split.modelsel, false);
  if (split.eval.size() > 0) report.final_metrics["eval"] = evaluate(result.best, split.eval, true);
  report.sp_iou = scene_sp_iou(result.best, split.eval);

  report.directory = resolve_output_dir(cfg.output);
  report.epochs_csv = report.directory / "epochs.csv";
  report.sp_iou_json = report.directory / "sp_iou.json";
  report.summary_json = report.directory / "summary.json";

  in_stage("output", [&] {
    std::error_code ec;
    std::filesystem::create_directories(report.directory, ec);
    if (ec)
      throw DataError(fmt::format("cannot create output directory '{}': {}",
                                  report.directory.string(), ec.message()));
    if (cfg.output.csv) write_atomic(report.epochs_csv, epochs_csv(report.records));
    write_atomic(report.directory / "config.ini", report.config_echo);
    if (cfg.output.json) {
      write_atomic(report.sp_iou_json, sp_iou_json(report.sp_iou));
      write_atomic(report.summary_json, summary_json(report));
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_atomic(report.directory / "timing.txt", fmt::format("wall_seconds {:.3f}\n", report.wall_seconds));
    return 0;
  });
  return report;
}

RunReport load_report(const std::filesystem::path& summary_path) {
  json j;
  try {
    j = json::parse(slurp(summary_path));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", summary_path.string(), e.what()));
  }
  RunReport r;
  try {
    r.version = j.at("artifact_version").get<std::string>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.noise_type = j.at("noise_type").get<std::string>();
    r.epsilon = j.at("epsilon").get<double>();
    r.config_echo = j.at("config").get<std::string>();
    const auto& best = j.at("best");
    r.best_epoch = best.at("epoch").get<std::size_t>();
    r.best_network = best.at("network").get<int>();
    r.best_modelsel_accuracy = best.at("modelsel_accuracy").get<double>();
    for (const auto& [split, m] : j.at("final_metrics").items()) r.final_metrics[split] = metrics_from_json(m);
    r.summary_json = summary_path;
    r.directory = summary_path.parent_path();
    r.epochs_csv = r.directory / j.at("files").at("epochs_csv").get<std::string>();
    r.sp_iou_json = r.directory / j.at("files").at("sp_iou_json").get<std::string>();
    for (const auto& s : json::parse(slurp(r.sp_iou_json)))
      r.sp_iou.push_back({s.at("scene_id").get<std::uint32_t>(), s.at("sp_iou").get<double>()});
  } catch (const json::exception& e) {
    throw DataError(fmt::format("'{}' does not follow the report schema: {}", summary_path.string(), e.what()));
  }
  return r;
}

ComparisonTable compare_runs(std::span<const RunReport> reports) {
  if (reports.empty()) throw std::invalid_argument("compare_runs needs at least one report");
  ComparisonTable table;
  const auto& base = reports.front().sp_iou;
  for (const auto& r : reports) {
    if (r.sp_iou.size() != base.size() ||
        !std::equal(base.begin(), base.end(), r.sp_iou.begin(),
                    [](const SceneIou& a, const SceneIou& b) { return a.scene_id == b.scene_id; }))
      throw std::logic_error("reports were evaluated on different scenes");
    table.labels.push_back(fmt::format("{}/{}/{}", r.algorithm, r.noise_type, r.epsilon));
    table.reports.push_back(r);
  }
  for (std::size_t s = 0; s < base.size(); ++s) {
    ComparisonRow row;
    row.scene_id = base[s].scene_id;
    for (const auto& r : reports) {
      row.sp_iou.push_back(r.sp_iou[s].sp_iou);
      row.ratio.push_back(r.sp_iou[s].sp_iou / base[s].sp_iou);
    }
    table.rows.push_back(std::move(row));
  }
  for (std::size_t k = 0; k < reports.size(); ++k) {
    if (table.rows.empty()) break;
    auto by_ratio = [k](const ComparisonRow& a, const ComparisonRow& b) { return a.ratio[k] < b.ratio[k]; };
    table.best_scene.push_back(std::max_element(table.rows.begin(), table.rows.end(), by_ratio)->scene_id);
    table.worst_scene.push_back(std::min_element(table.rows.begin(), table.rows.end(), by_ratio)->scene_id);
  }
  return table;
}

std::string format_comparison(const ComparisonTable& t) {
  std::string out = "summary\n";
  out += fmt::format("{:<32} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "run", "sel_acc",
                     "accuracy", "precision", "recall", "f1", "mean_iou");
  for (std::size_t k = 0; k < t.reports.size(); ++k) {
    const auto& r = t.reports[k];
    Scores s{};
    s.accuracy = s.precision = s.recall = s.f1 = std::numeric_limits<double>::quiet_NaN();
    if (auto it = r.final_metrics.find("eval"); it != r.final_metrics.end()) s = it->second.scores;
    double mean = 0.0;
    for (const auto& v : r.sp_iou) mean += v.sp_iou;
    mean = r.sp_iou.empty() ? std::numeric_limits<double>::quiet_NaN() : mean / static_cast<double>(r.sp_iou.size());
    out += fmt::format("{:<32} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n", t.labels[k],
                       fixed(r.best_modelsel_accuracy), fixed(s.accuracy), fixed(s.precision),
                       fixed(s.recall), fixed(s.f1), fixed(mean));
  }
  out += "\nper-scene sp_iou (ratio to first run)\n";
  out += fmt::format("{:>6}", "scene");
  for (std::size_t k = 0; k < t.labels.size(); ++k) out += fmt::format(" {:>22}", fmt::format("run{}", k));
  out += "\n";
  for (const auto& row : t.rows) {
    out += fmt::format("{:>6}", row.scene_id);
    for (std::size_t k = 0; k < row.sp_iou.size(); ++k) {
      std::string mark;
      if (k > 0 && row.scene_id == t.best_scene[k]) mark = " max";
      if (k > 0 && row.scene_id == t.worst_scene[k]) mark += " min";
      out += fmt::format(" {:>22}", fmt::format("{:.4f} ({:.2f}x){}", row.sp_iou[k], row.ratio[k], mark));
    }
    out += "\n";
  }
  return out;
}

std::string comparison_json(const ComparisonTable& t) {
  json runs = json::array();
  for (std::size_t k = 0; k < t.reports.size(); ++k) {
    json finals = json::object();
    for (const auto& [split, m] : t.reports[k].final_metrics) finals[split] = metrics_json(m);
    json run{{"label", t.labels[k]},
             {"directory", t.reports[k].directory.string()},
             {"best_modelsel_accuracy", t.reports[k].best_modelsel_accuracy},
             {"final_metrics", finals}};
    if (!t.best_scene.empty()) {
      run["best_improved_scene"] = t.best_scene[k];
      run["worst_improved_scene"] = t.worst_scene[k];
    }
    runs.push_back(run);
  }
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"scene_id", r.scene_id}, {"sp_iou", r.sp_iou}, {"ratio", r.ratio}});
  return json{{"runs", runs}, {"scenes", rows}}.dump(2) + "\n";
}

std::vector<GridAxis> parse_grid(const std::string& text) {
  std::vector<GridAxis> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("grid axis '{}' lacks '='", item));
    GridAxis axis;
    auto strip = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    axis.key = canonical_key(strip(item.substr(0, eq)));
    std::stringstream vs(item.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ','))
      if (auto s = strip(v); !s.empty()) axis.values.push_back(s);
    if (axis.values.empty()) throw ConfigError(fmt::format("grid axis '{}' has no values", axis.key));
    grid.push_back(std::move(axis));
  }
  if (grid.empty()) throw ConfigError("empty grid");
  return grid;
}

std::vector<GridAxis> default_grid() {
  return {{"train.algorithm", {"vanilla", "coteaching", "canc"}},
          {"noise.type", {"symmetric", "antisymmetric"}},
          {"noise.epsilon", {"0.15", "0.35", "0.45", "0.55"}}};
}

std::vector<SweepCell> expand_grid(std::span<const GridAxis> grid) {
  std::vector<SweepCell> cells{{}};
  for (const auto& axis : grid) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells) {
      for (const auto& v : axis.values) {
        SweepCell c = cell;
        c.overrides.emplace_back(axis.key, v);
        const auto leaf = axis.key.substr(axis.key.find('.') + 1);
        c.name += (c.name.empty() ? "" : "_") + leaf + "-" + v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

SweepResult run_sweep(const std::filesystem::path& config_path, std::span<const GridAxis> grid,
                      std::optional<std::size_t> only) {
  const auto cells = expand_grid(grid);
  if (only && *only >= cells.size())
    throw ConfigError(fmt::format("cell {} out of range (grid has {} cells)", *only, cells.size()));
  const ExperimentConfig base = load_config(config_path);
  const auto root = resolve_output_dir(base.output);

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (only && *only != i) continue;
    auto overrides = cells[i].overrides;
    overrides.emplace_back("output.directory", (root / cells[i].name).string());
    overrides.emplace_back("output.formats", "csv,json");
    (void)run_experiment(load_config(config_path, overrides));
  }

  SweepResult result;
  std::string csv = "cell,algorithm,noise_type,epsilon";
  for (const auto& axis : grid)
    if (axis.key != "train.algorithm" && axis.key != "noise.type" && axis.key != "noise.epsilon")
      csv += "," + axis.key;
  csv += ",best_epoch,best_modelsel_accuracy,eval_accuracy,eval_precision,eval_recall,eval_f1,mean_sp_iou\n";
  for (const auto& cell : cells) {
    const auto summary = root / cell.name / "summary.json";
    if (!std::filesystem::exists(summary)) continue;
    auto report = load_report(summary);
    Scores s{};
    s.accuracy = s.precision = s.recall = s.f1 = std::numeric_limits<double>::quiet_NaN();
    if (auto it = report.final_metrics.find("eval"); it != report.final_metrics.end()) s = it->second.scores;
    double mean = 0.0;
    for (const auto& v : report.sp_iou) mean += v.sp_iou;
    mean = report.sp_iou.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : mean / static_cast<double>(report.sp_iou.size());
    csv += fmt::format("{},{},{},{}", cell.name, report.algorithm, report.noise_type, report.epsilon);
    for (const auto& [key, value] : cell.overrides)
      if (key != "train.algorithm" && key != "noise.type" && key != "noise.epsilon") csv += "," + value;
    csv += fmt::format(",{},{},{},{},{},{},{}\n", report.best_epoch, fixed(report.best_modelsel_accuracy),
                       fixed(s.accuracy), fixed(s.precision), fixed(s.recall), fixed(s.f1), fixed(mean));
    result.reports.push_back(std::move(report));
  }
  std::filesystem::create_directories(root);
  result.summary_csv = root / "sweep_summary.csv";
  write_atomic(result.summary_csv, csv);
  return result;
}

GeneratedData generate_data(const ExperimentConfig& cfg) {
  auto ds = in_stage("data", [&] { return load_dataset(cfg); });
  in_stage("noise", [&] {
    if (cfg.noise.source == NoiseSource::Inject)
      inject_noise(ds, make_transition(cfg.noise.type, cfg.noise.epsilon), cfg.noise.seed);
    return 0;
  });
  GeneratedData out;
  const auto dir = resolve_output_dir(cfg.output);
  std::filesystem::create_directories(dir);
  out.file = dir / "dataset.canc";
  std::ostringstream buf(std::ios::binary);
  write_dataset(buf, ds, kDatasetVersionPaired);
  write_atomic(out.file, buf.str());
  out.masks = ds.size();
  for (const auto& m : ds.masks) {
    out.positives += m.clean_label;
    out.flipped += m.clean_label != m.label;
  }
  out.masks_per_scene = cfg.data.source == DataSource::Synthetic
                            ? (cfg.data.scene.size / cfg.data.mask_size) * (cfg.data.scene.size / cfg.data.mask_size)
                            : cfg.data.masks_per_scene;
  return out;
}

}  // namespace canc

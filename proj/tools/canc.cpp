// canc: experiment runner for co-teaching with active label swapping on
// synthetic building-mask data.
//
//   canc run <config>
//   canc sweep <config> [--grid "train.algorithm=vanilla,canc;noise.epsilon=0.35,0.55"] [--cell N]
//   canc compare <summary.json>... [--json out.json]
//   canc gen-data <config>
//
// Exit status: 0 ok, 1 usage/other, 2 config error, 3 data error, 4 numeric error.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "canc/config.hpp"
#include "canc/errors.hpp"
#include "canc/experiment.hpp"

namespace {

int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "canc: " << kind << ": " << e.what() << "\n";
  return code;
}

void print_run(const canc::RunReport& r) {
  fmt::print("{} / {} / epsilon {}: best model-selection accuracy {:.4f} (epoch {}, network {})\n",
             r.algorithm, r.noise_type, r.epsilon, r.best_modelsel_accuracy, r.best_epoch,
             r.best_network);
  if (auto it = r.final_metrics.find("eval"); it != r.final_metrics.end()) {
    const auto& s = it->second.scores;
    fmt::print("eval: accuracy {:.4f} precision {:.4f} recall {:.4f} f1 {:.4f}\n", s.accuracy,
               s.precision, s.recall, s.f1);
  }
  fmt::print("outputs in {} ({:.1f} s)\n", r.directory.string(), r.wall_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust mask classification under label noise: vanilla, co-teaching and CANC"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", run_config, "Config file")->required()->check(CLI::ExistingFile);

  std::string sweep_config;
  std::string grid_text;
  std::optional<std::size_t> cell;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments and tabulate them");
  sweep->add_option("config", sweep_config, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid_text,
                    "Axes as key=v1,v2;key=... (default: 3 algorithms x 2 noise types x 4 ratios)");
  sweep->add_option("--cell", cell, "Run only this cell index (for parallel processes)");

  std::vector<std::string> reports;
  std::string compare_json_out;
  auto* compare = app.add_subcommand("compare", "Align per-scene SP-IoU across run reports");
  compare->add_option("reports", reports, "summary.json files; the first is the baseline")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--json", compare_json_out, "Also write the comparison as JSON");

  std::string gen_config;
  auto* gen = app.add_subcommand("gen-data", "Generate and export a noisy mask dataset");
  gen->add_option("config", gen_config, "Config file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; usage mistakes count as config errors.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      print_run(canc::run_experiment(canc::load_config(run_config)));
    } else if (*sweep) {
      const auto grid = grid_text.empty() ? canc::default_grid() : canc::parse_grid(grid_text);
      const auto result = canc::run_sweep(sweep_config, grid, cell);
      fmt::print("{} cell report(s) tabulated in {}\n", result.reports.size(), result.summary_csv.string());
    } else if (*compare) {
      std::vector<canc::RunReport> loaded;
      for (const auto& path : reports) loaded.push_back(canc::load_report(path));
      const auto table = canc::compare_runs(loaded);
      std::cout << canc::format_comparison(table);
      if (!compare_json_out.empty()) canc::write_atomic(compare_json_out, canc::comparison_json(table));
    } else if (*gen) {
      const auto out = canc::generate_data(canc::load_config(gen_config));
      fmt::print("wrote {} masks ({} positive, {} labels flipped) to {}; masks_per_scene = {}\n",
                 out.masks, out.positives, out.flipped, out.file.string(), out.masks_per_scene);
    }
  } catch (const canc::ConfigError& e) {
    return report_error("config error", e, 2);
  } catch (const canc::DataError& e) {
    return report_error("data error", e, 3);
  } catch (const canc::NumericError& e) {
    return report_error("numeric error", e, 4);
  } catch (const std::exception& e) {
    return report_error("error", e, 1);
  }
  return 0;
}

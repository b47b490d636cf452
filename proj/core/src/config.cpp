#include "canc/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "canc/errors.hpp"
#include "canc/rng.hpp"

namespace canc {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data",
       {"source", "file", "masks_per_scene", "scenes", "scene_size", "channels", "min_buildings",
        "max_buildings", "min_side", "max_side", "building_mean", "building_spread",
        "background_mean", "background_spread", "pixel_noise", "placement_attempts", "mask_size",
        "tau", "split", "seed"}},
      {"noise", {"source", "type", "epsilon", "seed", "noise_modelsel"}},
      {"model", {"layers", "init"}},
      {"train",
       {"algorithm", "learning_rate", "max_epochs", "schedule_knee", "iterations_per_epoch",
        "batch_size", "forget_rate", "swap_rate", "seed", "persist_swaps",
        "ablation_s_equals_1_minus_r"}},
      {"output", {"directory", "formats"}},
  };
  return keys;
}

std::string trimmed(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class Section {
 public:
  Section(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (auto child = root.get_child_optional(name_)) node_ = *child;
  }

  bool has(const std::string& key) const { return node_.get_child_optional(key).has_value(); }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto v = node_.get_optional<std::string>(key);
    return v ? trimmed(*v) : fallback;
  }

  template <typename T>
  T number(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key, "");
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ConfigError(fmt::format("{} = '{}' is not a valid number", key, s));
    return value;
  }

  std::uint64_t seed(const std::string& key) const {
    if (!has(key)) throw ConfigError(fmt::format("{} is required (no implicit seeds)", key));
    return number<std::uint64_t>(key, 0);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key, "");
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(fmt::format("{} = '{}' is not a boolean", key, s));
  }

 private:
  std::string name_;
  pt::ptree node_;
};

template <typename F>
void in_section(const std::string& name, F&& body) {
  try {
    body();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("[{}] {}", name, e.what()));
  }
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trimmed(item);
    double v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      throw ConfigError(fmt::format("split entry '{}' is not a number", item));
    out.push_back(v);
  }
  if (out.size() != 3) throw ConfigError("split must list three fractions: train, modelsel, eval");
  return out;
}

void check_known(const pt::ptree& root) {
  for (const auto& [section, node] : root) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError(fmt::format("[{}] unknown section", section));
    if (!node.data().empty() && node.empty())
      throw ConfigError(fmt::format("key '{}' outside of any section", section));
    for (const auto& [key, value] : node) {
      if (!it->second.contains(key))
        throw ConfigError(fmt::format("[{}] unknown key '{}'", section, key));
    }
  }
}

ExperimentConfig from_tree(const pt::ptree& root) {
  check_known(root);
  ExperimentConfig cfg;

  in_section("data", [&] {
    Section s(root, "data");
    const std::string source = s.str("source", "synthetic");
    if (source == "synthetic")
      cfg.data.source = DataSource::Synthetic;
    else if (source == "file")
      cfg.data.source = DataSource::File;
    else
      throw ConfigError(fmt::format("source '{}' must be synthetic or file", source));
    cfg.data.file = s.str("file", "");
    cfg.data.masks_per_scene = s.number<std::size_t>("masks_per_scene", 0);
    cfg.data.scenes = s.number<std::size_t>("scenes", cfg.data.scenes);
    auto& g = cfg.data.scene;
    g.size = s.number<std::size_t>("scene_size", g.size);
    g.channels = s.number<std::size_t>("channels", g.channels);
    g.min_buildings = s.number<std::size_t>("min_buildings", g.min_buildings);
    g.max_buildings = s.number<std::size_t>("max_buildings", g.max_buildings);
    g.min_side = s.number<std::size_t>("min_side", g.min_side);
    g.max_side = s.number<std::size_t>("max_side", g.max_side);
    g.building_mean = s.number<double>("building_mean", g.building_mean);
    g.building_spread = s.number<double>("building_spread", g.building_spread);
    g.background_mean = s.number<double>("background_mean", g.background_mean);
    g.background_spread = s.number<double>("background_spread", g.background_spread);
    g.pixel_noise = s.number<double>("pixel_noise", g.pixel_noise);
    g.attempts_per_building = s.number<std::size_t>("placement_attempts", g.attempts_per_building);
    cfg.data.mask_size = s.number<std::size_t>("mask_size", cfg.data.mask_size);
    cfg.data.tau = s.number<double>("tau", cfg.data.tau);
    if (s.has("split")) {
      const auto f = parse_fractions(s.str("split", ""));
      cfg.data.split = {f[0], f[1], f[2]};
    }
    cfg.data.seed = s.seed("seed");

    if (cfg.data.source == DataSource::File) {
      if (cfg.data.file.empty()) throw ConfigError("file is required when source = file");
      if (!std::filesystem::exists(cfg.data.file))
        throw ConfigError(fmt::format("file '{}' does not exist", cfg.data.file.string()));
    } else {
      if (cfg.data.scenes == 0) throw ConfigError("scenes must be positive");
      g.validate();
      if (cfg.data.mask_size == 0 || g.size % cfg.data.mask_size != 0)
        throw ConfigError(fmt::format("mask_size {} does not divide scene_size {}",
                                      cfg.data.mask_size, g.size));
    }
    if (!(cfg.data.tau > 0.0 && cfg.data.tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
  });

  in_section("noise", [&] {
    Section s(root, "noise");
    const std::string source = s.str("source", "inject");
    if (source == "inject")
      cfg.noise.source = NoiseSource::Inject;
    else if (source == "file")
      cfg.noise.source = NoiseSource::File;
    else
      throw ConfigError(fmt::format("source '{}' must be inject or file", source));
    cfg.noise.type = parse_noise_type(s.str("type", "symmetric"));
    cfg.noise.epsilon = s.number<double>("epsilon", 0.0);
    cfg.noise.seed = s.seed("seed");
    cfg.noise.noise_modelsel = s.flag("noise_modelsel", false);
    (void)make_transition(cfg.noise.type, cfg.noise.epsilon);
  });

  in_section("model", [&] {
    Section s(root, "model");
    cfg.model.layers = s.str("layers", "auto");
    cfg.model.init = parse_init_scheme(s.str("init", "he_uniform"));
    if (cfg.data.source == DataSource::Synthetic) cfg.network_spec().validate();
  });

  in_section("train", [&] {
    Section s(root, "train");
    auto& t = cfg.train;
    t.algorithm = parse_algorithm(s.str("algorithm", "canc"));
    t.learning_rate = s.number<double>("learning_rate", t.learning_rate);
    t.max_epochs = s.number<std::size_t>("max_epochs", t.max_epochs);
    t.schedule_knee = s.number<std::size_t>("schedule_knee", t.schedule_knee);
    t.iterations_per_epoch = s.number<std::size_t>("iterations_per_epoch", t.iterations_per_epoch);
    t.batch_size = s.number<std::size_t>("batch_size", t.batch_size);
    t.forget_rate = s.number<double>("forget_rate", t.forget_rate);
    t.swap_rate = s.number<double>("swap_rate", t.swap_rate);
    t.persist_swaps = s.flag("persist_swaps", false);
    t.swap_complements_remember = s.flag("ablation_s_equals_1_minus_r", false);
    cfg.train_seed = s.seed("seed");
    t.shuffle_seed = derive_seed(cfg.train_seed, 0);
    t.init_seed_1 = derive_seed(cfg.train_seed, 1);
    t.init_seed_2 = derive_seed(cfg.train_seed, 2);
    t.validate();
  });

  in_section("output", [&] {
    Section s(root, "output");
    cfg.output.directory = s.str("directory", cfg.output.directory.string());
    if (s.has("formats")) {
      cfg.output.csv = cfg.output.json = false;
      std::stringstream ss(s.str("formats", ""));
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trimmed(item);
        if (item == "csv")
          cfg.output.csv = true;
        else if (item == "json")
          cfg.output.json = true;
        else if (!item.empty())
          throw ConfigError(fmt::format("unknown output format '{}'", item));
      }
    }
  });

  return cfg;
}

}  // namespace

NetworkSpec ExperimentConfig::network_spec() const {
  NetworkSpec spec;
  const std::size_t channels = data.scene.channels;
  spec.input = {data.mask_size, data.mask_size, channels};
  spec.layers = model.layers == "auto" ? default_layers(data.mask_size, channels)
                                       : parse_layers(model.layers);
  spec.init = model.init;
  spec.validate();
  return spec;
}

std::vector<LayerSpec> default_layers(std::size_t mask_size, std::size_t channels) {
  if (mask_size < 8)
    throw ConfigError(fmt::format("default network needs mask_size >= 8, got {}", mask_size));
  const std::size_t h1 = (mask_size - 4) / 2 + 1;
  const std::size_t h2 = (h1 - 3) / 2 + 1;
  return {ConvLayer{channels, 8, 4, 2}, LeakyReluLayer{0.01}, ConvLayer{8, 16, 3, 2},
          LeakyReluLayer{0.01}, DenseLayer{h2 * h2 * 16, 2}};
}

ExperimentConfig parse_config(std::istream& in, const std::vector<ConfigOverride>& overrides) {
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error: {}", e.message()));
  }
  for (const auto& [key, value] : overrides) {
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      throw ConfigError(fmt::format("override '{}' must be written as section.key", key));
    root.put(pt::ptree::path_type(key, '.'), value);
  }
  return from_tree(root);
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse_config(in, overrides);
}

std::string to_ini(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const auto& g = d.scene;
  const auto& t = cfg.train;
  std::string out;
  out += "[data]\n";
  out += fmt::format("source = {}\n", d.source == DataSource::Synthetic ? "synthetic" : "file");
  if (d.source == DataSource::File) {
    out += fmt::format("file = {}\n", d.file.string());
    out += fmt::format("masks_per_scene = {}\n", d.masks_per_scene);
  }
  out += fmt::format("scenes = {}\n", d.scenes);
  out += fmt::format("scene_size = {}\n", g.size);
  out += fmt::format("channels = {}\n", g.channels);
  out += fmt::format("min_buildings = {}\n", g.min_buildings);
  out += fmt::format("max_buildings = {}\n", g.max_buildings);
  out += fmt::format("min_side = {}\n", g.min_side);
  out += fmt::format("max_side = {}\n", g.max_side);
  out += fmt::format("building_mean = {}\n", g.building_mean);
  out += fmt::format("building_spread = {}\n", g.building_spread);
  out += fmt::format("background_mean = {}\n", g.background_mean);
  out += fmt::format("background_spread = {}\n", g.background_spread);
  out += fmt::format("pixel_noise = {}\n", g.pixel_noise);
  out += fmt::format("placement_attempts = {}\n", g.attempts_per_building);
  out += fmt::format("mask_size = {}\n", d.mask_size);
  out += fmt::format("tau = {}\n", d.tau);
  out += fmt::format("split = {}, {}, {}\n", d.split.train, d.split.modelsel, d.split.eval);
  out += fmt::format("seed = {}\n", d.seed);
  out += "\n[noise]\n";
  out += fmt::format("source = {}\n", cfg.noise.source == NoiseSource::Inject ? "inject" : "file");
  out += fmt::format("type = {}\n", to_string(cfg.noise.type));
  out += fmt::format("epsilon = {}\n", cfg.noise.epsilon);
  out += fmt::format("seed = {}\n", cfg.noise.seed);
  out += fmt::format("noise_modelsel = {}\n", cfg.noise.noise_modelsel);
  out += "\n[model]\n";
  out += fmt::format("layers = {}\n", cfg.model.layers);
  out += fmt::format("init = {}\n", to_string(cfg.model.init));
  out += "\n[train]\n";
  out += fmt::format("algorithm = {}\n", to_string(t.algorithm));
  out += fmt::format("learning_rate = {}\n", t.learning_rate);
  out += fmt::format("max_epochs = {}\n", t.max_epochs);
  out += fmt::format("schedule_knee = {}\n", t.schedule_knee);
  out += fmt::format("iterations_per_epoch = {}\n", t.iterations_per_epoch);
  out += fmt::format("batch_size = {}\n", t.batch_size);
  out += fmt::format("forget_rate = {}\n", t.forget_rate);
  out += fmt::format("swap_rate = {}\n", t.swap_rate);
  out += fmt::format("seed = {}\n", cfg.train_seed);
  out += fmt::format("persist_swaps = {}\n", t.persist_swaps);
  out += fmt::format("ablation_s_equals_1_minus_r = {}\n", t.swap_complements_remember);
  out += "\n[output]\n";
  out += fmt::format("directory = {}\n", cfg.output.directory.string());
  std::string formats;
  if (cfg.output.csv) formats += "csv";
  if (cfg.output.json) formats += formats.empty() ? "json" : ",json";
  out += fmt::format("formats = {}\n", formats);
  return out;
}

std::filesystem::path resolve_output_dir(const OutputConfig& out) {
  if (out.directory.is_absolute()) return out.directory;
  if (const char* root = std::getenv("CANC_OUTPUT_ROOT"); root != nullptr && *root != '\0')
    return std::filesystem::path(root) / out.directory;
  return out.directory;
}

}  // namespace canc

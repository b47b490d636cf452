#include "canc/noise.hpp"

#include <cmath>

#include <fmt/format.h>

#include "canc/errors.hpp"
#include "canc/rng.hpp"

namespace canc {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ConfigError(fmt::format("noise ratio must lie in [0,1], got {}", epsilon));
}

}  // namespace

std::string_view to_string(NoiseType type) {
  return type == NoiseType::Symmetric ? "symmetric" : "antisymmetric";
}

NoiseType parse_noise_type(std::string_view name) {
  if (name == "symmetric") return NoiseType::Symmetric;
  if (name == "antisymmetric" || name == "anti-symmetric") return NoiseType::Antisymmetric;
  throw ConfigError(fmt::format("unknown noise type '{}'", name));
}

NoiseTransition::NoiseTransition(std::size_t classes, std::vector<double> entries, NoiseType type,
                                 double epsilon)
    : classes_(classes), entries_(std::move(entries)), type_(type), epsilon_(epsilon) {
  if (classes_ < 2 || entries_.size() != classes_ * classes_)
    throw ConfigError("transition matrix must be square with at least 2 classes");
  for (std::size_t truth = 0; truth < classes_; ++truth) {
    double sum = 0.0;
    for (std::size_t obs = 0; obs < classes_; ++obs) {
      const double p = at(obs, truth);
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("transition entry outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError(fmt::format("transition column {} sums to {}", truth, sum));
  }
}

NoiseTransition symmetric_matrix(double epsilon, std::size_t classes) {
  check_epsilon(epsilon);
  if (classes < 2) throw ConfigError("symmetric noise needs at least 2 classes");
  const double off = epsilon / static_cast<double>(classes - 1);
  std::vector<double> e(classes * classes, off);
  for (std::size_t i = 0; i < classes; ++i) e[i * classes + i] = 1.0 - epsilon;
  return NoiseTransition(classes, std::move(e), NoiseType::Symmetric, epsilon);
}

NoiseTransition antisymmetric_matrix(double epsilon) {
  check_epsilon(epsilon);
  return NoiseTransition(2, {1.0 - epsilon, 0.0, epsilon, 1.0}, NoiseType::Antisymmetric, epsilon);
}

NoiseTransition make_transition(NoiseType type, double epsilon) {
  return type == NoiseType::Symmetric ? symmetric_matrix(epsilon) : antisymmetric_matrix(epsilon);
}

std::vector<std::uint8_t> apply_noise(std::span<const std::uint8_t> labels, const NoiseTransition& t,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t truth = labels[i];
    if (truth >= t.classes()) throw std::out_of_range("label is not a valid class index");
    // Inverse-CDF draw down the column; one draw per sample keeps the stream
    // aligned regardless of the matrix.
    const double u = rng.uniform();
    std::size_t obs = 0;
    double cdf = t.at(0, truth);
    while (u >= cdf && obs + 1 < t.classes()) cdf += t.at(++obs, truth);
    // Zero-probability classes are never emitted, even at rounding edges.
    while (t.at(obs, truth) == 0.0) obs = obs == 0 ? t.classes() - 1 : obs - 1;
    out[i] = static_cast<std::uint8_t>(obs);
  }
  return out;
}

void inject_noise(MaskDataset& ds, const NoiseTransition& t, std::uint64_t seed) {
  const auto noisy = apply_noise(ds.clean_labels(), t, seed);
  for (std::size_t i = 0; i < noisy.size(); ++i) ds.masks[i].label = noisy[i];
}

}  // namespace canc

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "canc/data.hpp"

namespace canc {

enum class NoiseType { Symmetric, Antisymmetric };

std::string_view to_string(NoiseType type);
NoiseType parse_noise_type(std::string_view name);

/// Column-stochastic label-noise matrix: at(observed, truth) is
/// P(observed label | true label).
class NoiseTransition {
 public:
  NoiseTransition(std::size_t classes, std::vector<double> entries, NoiseType type, double epsilon);

  std::size_t classes() const noexcept { return classes_; }
  double at(std::size_t observed, std::size_t truth) const { return entries_.at(observed * classes_ + truth); }
  NoiseType type() const noexcept { return type_; }
  double epsilon() const noexcept { return epsilon_; }

 private:
  std::size_t classes_;
  std::vector<double> entries_;  // row-major, row = observed
  NoiseType type_;
  double epsilon_;
};

/// Diagonal 1 - epsilon, every off-diagonal epsilon / (classes - 1).
NoiseTransition symmetric_matrix(double epsilon, std::size_t classes = 2);

/// Binary one-directional noise [[1 - epsilon, 0], [epsilon, 1]]:
/// class 0 becomes 1 with probability epsilon, class 1 never changes.
NoiseTransition antisymmetric_matrix(double epsilon);

NoiseTransition make_transition(NoiseType type, double epsilon);

/// Samples each observed label from the column of its true label.
std::vector<std::uint8_t> apply_noise(std::span<const std::uint8_t> labels, const NoiseTransition& t,
                                      std::uint64_t seed);

/// Replaces the observed labels of ds with noisy draws from the clean labels.
void inject_noise(MaskDataset& ds, const NoiseTransition& t, std::uint64_t seed);

}  // namespace canc

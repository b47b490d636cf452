#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace canc {

/// Binary confusion counts; positive class 1 = "contains building".
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws std::invalid_argument on length mismatch or non-binary entries.
ConfusionCounts confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted);

/// Precision and recall are NaN when their denominators are zero; F1 is NaN
/// when either is NaN or when P + R = 0. Accuracy is always defined for a
/// non-empty tally.
struct Scores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Scores prf1(const ConfusionCounts& c);

enum class IntersectionRule {
  PositiveOverlap,  // |{i : y_i = 1 and yhat_i = 1}|
  Agreement,        // |{i : y_i = yhat_i}|, the literal reading
};

/// Smoothed super-pixel IoU over the mask labels of one scene:
/// (intersection + smooth) / (union + smooth), with
/// union = |y = 1| + |yhat = 1| - intersection.
double sp_iou(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted,
              double smooth = 1.0, IntersectionRule rule = IntersectionRule::PositiveOverlap);

}  // namespace canc

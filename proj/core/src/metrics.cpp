#include "canc/metrics.hpp"

#include <limits>
#include <stdexcept>

namespace canc {

namespace {

void check_pair(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > 1 || b[i] > 1) throw std::invalid_argument("labels must be 0 or 1");
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ConfusionCounts confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted) {
  check_pair(truth, predicted);
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1)
      ++(predicted[i] == 1 ? c.tp : c.fn);
    else
      ++(predicted[i] == 1 ? c.fp : c.tn);
  }
  return c;
}

Scores prf1(const ConfusionCounts& c) {
  Scores s;
  const auto total = static_cast<double>(c.total());
  s.accuracy = total > 0 ? static_cast<double>(c.tp + c.tn) / total : kNaN;
  s.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : kNaN;
  s.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : kNaN;
  const double denom = s.precision + s.recall;  // NaN propagates
  s.f1 = denom > 0 ? 2.0 * s.precision * s.recall / denom : kNaN;
  return s;
}

double sp_iou(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted,
              double smooth, IntersectionRule rule) {
  check_pair(truth, predicted);
  std::size_t pos_truth = 0, pos_pred = 0, inter = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pos_truth += truth[i];
    pos_pred += predicted[i];
    if (rule == IntersectionRule::PositiveOverlap)
      inter += truth[i] & predicted[i];
    else
      inter += truth[i] == predicted[i];
  }
  const double intersection = static_cast<double>(inter);
  const double uni = static_cast<double>(pos_truth) + static_cast<double>(pos_pred) - intersection;
  return (intersection + smooth) / (uni + smooth);
}

}  // namespace canc

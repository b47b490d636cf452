#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace canc {

/// Height x width x channels, stored row-major with channels innermost (HWC).
struct Shape3 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return height * width * channels; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Fully connected layer. Flattens an HWC input; output shape is 1 x 1 x out_dim.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Valid (unpadded) 2-D convolution with a square kernel.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct LeakyReluLayer {
  double slope = 0.01;
  friend bool operator==(const LeakyReluLayer&, const LeakyReluLayer&) = default;
};

using LayerSpec = std::variant<DenseLayer, ConvLayer, LeakyReluLayer>;

enum class InitScheme { HeUniform, Zero };

std::string_view to_string(InitScheme scheme);
InitScheme parse_init_scheme(std::string_view name);

/// Architecture plus initialization recipe. The final layer must emit two logits.
struct NetworkSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
  InitScheme init = InitScheme::HeUniform;
  std::uint64_t seed = 0;

  /// Throws ConfigError on incompatible consecutive dimensions or a
  /// non-binary output.
  void validate() const;

  /// Output shape of every layer, in order. Validates first.
  std::vector<Shape3> output_shapes() const;

  std::size_t parameter_count() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Compact text form used by the config file, e.g.
/// "conv:3:8:4:2,lrelu:0.01,dense:1568:2".
std::string format_layers(std::span<const LayerSpec> layers);
std::vector<LayerSpec> parse_layers(std::string_view text);

/// Parameters are stored flat: for every parameterized layer, weights then
/// biases. Dense weights are [out][in]; conv weights are [out_c][ky][kx][in_c].
class Network {
 public:
  /// All-zero parameters. Use init_network for a seeded draw.
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<Shape3>& shapes() const noexcept { return shapes_; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  /// Offset of layer i's weights inside parameters().
  std::size_t offset(std::size_t layer) const { return offsets_.at(layer); }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  NetworkSpec spec_;
  std::vector<Shape3> shapes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Mini-batch of B samples with their (possibly noisy) labels and their
/// positions in the parent dataset.
class Batch {
 public:
  Batch(Shape3 sample_shape, std::vector<double> samples,
        std::vector<std::uint8_t> labels, std::vector<std::size_t> indices);

  std::size_t size() const noexcept { return labels_.size(); }
  const Shape3& sample_shape() const noexcept { return shape_; }
  std::span<const double> sample(std::size_t i) const;
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::span<const std::size_t> indices() const noexcept { return indices_; }

  /// Samples at the given batch positions, in the given order.
  Batch select(std::span<const std::size_t> positions) const;

  /// Same samples with replacement labels.
  Batch relabeled(std::vector<std::uint8_t> labels) const;

 private:
  Shape3 shape_;
  std::vector<double> samples_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::size_t> indices_;
};

using Logits = std::array<double, 2>;

Network init_network(const NetworkSpec& spec);

/// Softmax cross-entropy of two logits, computed as a stable softplus of the
/// logit margin.
double cross_entropy(const Logits& logits, std::uint8_t label);

/// argmax of two logits; ties go to label 0.
std::uint8_t argmax(const Logits& logits);

std::vector<Logits> forward(const Network& net, const Batch& batch);

/// Unreduced cross-entropy, one entry per sample.
std::vector<double> per_sample_loss(const Network& net, const Batch& batch);

double mean_loss(const Network& net, const Batch& batch);

/// Exact gradient of the mean batch cross-entropy, laid out like parameters().
std::vector<double> loss_gradient(const Network& net, const Batch& batch);

/// One plain SGD step on the mean batch cross-entropy. lr == 0 leaves the
/// parameters bitwise unchanged.
Network sgd_step(Network net, const Batch& batch, double lr);

std::vector<std::uint8_t> predict(const Network& net, const Batch& batch);

}  // namespace canc

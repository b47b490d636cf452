#include "canc/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "canc/errors.hpp"
#include "canc/rng.hpp"

namespace canc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t weight_count(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) { return d.in_dim * d.out_dim; },
                        [](const ConvLayer& c) {
                          return c.out_channels * c.kernel * c.kernel * c.in_channels;
                        },
                        [](const LeakyReluLayer&) -> std::size_t { return 0; },
                    },
                    layer);
}

std::size_t bias_count(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) { return d.out_dim; },
                        [](const ConvLayer& c) { return c.out_channels; },
                        [](const LeakyReluLayer&) -> std::size_t { return 0; },
                    },
                    layer);
}

std::size_t fan_in(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) { return d.in_dim; },
                        [](const ConvLayer& c) { return c.kernel * c.kernel * c.in_channels; },
                        [](const LeakyReluLayer&) -> std::size_t { return 0; },
                    },
                    layer);
}

double parse_double(std::string_view token, std::string_view context) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw ConfigError(fmt::format("bad number '{}' in {}", token, context));
  return value;
}

std::size_t parse_size(std::string_view token, std::string_view context) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw ConfigError(fmt::format("bad integer '{}' in {}", token, context));
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

void check_finite(std::span<const double> values, std::size_t layer) {
  for (double v : values) {
    if (!std::isfinite(v))
      throw NumericError(fmt::format("non-finite activation at layer {}", layer),
                         static_cast<int>(layer));
  }
}

// Per-sample activation buffers: acts[0] is the input, acts[i + 1] the
// output of layer i.
struct Workspace {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> grads;

  explicit Workspace(const Network& net) {
    const auto& in = net.spec().input;
    acts.emplace_back(in.size());
    grads.emplace_back(in.size());
    for (const auto& s : net.shapes()) {
      acts.emplace_back(s.size());
      grads.emplace_back(s.size());
    }
  }
};

void dense_forward(const DenseLayer& d, const double* w, const double* b,
                   std::span<const double> in, std::span<double> out) {
  for (std::size_t o = 0; o < d.out_dim; ++o) {
    const double* row = w + o * d.in_dim;
    double acc = b[o];
    for (std::size_t i = 0; i < d.in_dim; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void conv_forward(const ConvLayer& c, const Shape3& in_shape, const Shape3& out_shape,
                  const double* w, const double* b, std::span<const double> in,
                  std::span<double> out) {
  const std::size_t k = c.kernel;
  const std::size_t ic = c.in_channels;
  for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
    for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
      double* dst = &out[(oy * out_shape.width + ox) * c.out_channels];
      for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
        double acc = b[oc];
        const double* wk = w + oc * k * k * ic;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const double* src =
              &in[((oy * c.stride + ky) * in_shape.width + ox * c.stride) * ic];
          const double* wrow = wk + ky * k * ic;
          for (std::size_t j = 0; j < k * ic; ++j) acc += wrow[j] * src[j];
        }
        dst[oc] = acc;
      }
    }
  }
}

void run_forward(const Network& net, std::span<const double> sample, Workspace& ws) {
  const auto& spec = net.spec();
  const auto params = net.parameters();
  std::copy(sample.begin(), sample.end(), ws.acts[0].begin());
  Shape3 in_shape = spec.input;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& in = ws.acts[l];
    auto& out = ws.acts[l + 1];
    const Shape3& out_shape = net.shapes()[l];
    const double* w = params.data() + net.offset(l);
    std::visit(overloaded{
                   [&](const DenseLayer& d) {
                     dense_forward(d, w, w + weight_count(d), in, out);
                   },
                   [&](const ConvLayer& c) {
                     conv_forward(c, in_shape, out_shape, w, w + weight_count(c), in, out);
                   },
                   [&](const LeakyReluLayer& r) {
                     for (std::size_t i = 0; i < in.size(); ++i)
                       out[i] = in[i] > 0.0 ? in[i] : r.slope * in[i];
                   },
               },
               spec.layers[l]);
    check_finite(out, l);
    in_shape = out_shape;
  }
}

// Back-propagates d(loss)/d(logits) stored in ws.grads.back(), accumulating
// parameter gradients into grad.
void run_backward(const Network& net, Workspace& ws, std::span<double> grad) {
  const auto& spec = net.spec();
  const auto params = net.parameters();
  for (std::size_t l = spec.layers.size(); l-- > 0;) {
    const auto& in = ws.acts[l];
    const auto& dout = ws.grads[l + 1];
    auto& din = ws.grads[l];
    const Shape3& in_shape = l == 0 ? spec.input : net.shapes()[l - 1];
    const Shape3& out_shape = net.shapes()[l];
    const std::size_t off = net.offset(l);
    const double* w = params.data() + off;
    double* gw = grad.data() + off;
    std::visit(
        overloaded{
            [&](const DenseLayer& d) {
              double* gb = gw + weight_count(d);
              std::fill(din.begin(), din.end(), 0.0);
              for (std::size_t o = 0; o < d.out_dim; ++o) {
                const double g = dout[o];
                gb[o] += g;
                const double* row = w + o * d.in_dim;
                double* grow = gw + o * d.in_dim;
                for (std::size_t i = 0; i < d.in_dim; ++i) {
                  grow[i] += g * in[i];
                  din[i] += g * row[i];
                }
              }
            },
            [&](const ConvLayer& c) {
              double* gb = gw + weight_count(c);
              const std::size_t k = c.kernel;
              const std::size_t ic = c.in_channels;
              std::fill(din.begin(), din.end(), 0.0);
              for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
                for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
                  const double* g = &dout[(oy * out_shape.width + ox) * c.out_channels];
                  for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                    const double go = g[oc];
                    gb[oc] += go;
                    const double* wk = w + oc * k * k * ic;
                    double* gwk = gw + oc * k * k * ic;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                      const std::size_t base =
                          ((oy * c.stride + ky) * in_shape.width + ox * c.stride) * ic;
                      for (std::size_t j = 0; j < k * ic; ++j) {
                        gwk[ky * k * ic + j] += go * in[base + j];
                        din[base + j] += go * wk[ky * k * ic + j];
                      }
                    }
                  }
                }
              }
            },
            [&](const LeakyReluLayer& r) {
              for (std::size_t i = 0; i < in.size(); ++i)
                din[i] = in[i] > 0.0 ? dout[i] : r.slope * dout[i];
            },
        },
        spec.layers[l]);
  }
}

Logits output_logits(const Workspace& ws) {
  const auto& out = ws.acts.back();
  return {out[0], out[1]};
}

}  // namespace

std::string_view to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::HeUniform: return "he_uniform";
    case InitScheme::Zero: return "zero";
  }
  return "unknown";
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "he_uniform") return InitScheme::HeUniform;
  if (name == "zero") return InitScheme::Zero;
  throw ConfigError(fmt::format("unknown init scheme '{}'", name));
}

std::vector<Shape3> NetworkSpec::output_shapes() const {
  if (input.size() == 0) throw ConfigError("network input shape has a zero dimension");
  if (layers.empty()) throw ConfigError("network has no layers");
  std::vector<Shape3> shapes;
  Shape3 cur = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cur = std::visit(
        overloaded{
            [&](const DenseLayer& d) {
              if (d.in_dim != cur.size())
                throw ConfigError(fmt::format(
                    "layer {}: dense in_dim {} does not match incoming size {}", l,
                    d.in_dim, cur.size()));
              if (d.out_dim == 0) throw ConfigError(fmt::format("layer {}: dense out_dim is 0", l));
              return Shape3{1, 1, d.out_dim};
            },
            [&](const ConvLayer& c) {
              if (c.in_channels != cur.channels)
                throw ConfigError(fmt::format(
                    "layer {}: conv in_channels {} does not match incoming channels {}", l,
                    c.in_channels, cur.channels));
              if (c.kernel == 0 || c.stride == 0 || c.out_channels == 0)
                throw ConfigError(fmt::format("layer {}: conv has a zero dimension", l));
              if (c.kernel > cur.height || c.kernel > cur.width)
                throw ConfigError(fmt::format("layer {}: kernel {} exceeds input {}x{}", l,
                                              c.kernel, cur.height, cur.width));
              return Shape3{(cur.height - c.kernel) / c.stride + 1,
                            (cur.width - c.kernel) / c.stride + 1, c.out_channels};
            },
            [&](const LeakyReluLayer& r) {
              if (!std::isfinite(r.slope))
                throw ConfigError(fmt::format("layer {}: non-finite leaky slope", l));
              return cur;
            },
        },
        layers[l]);
    shapes.push_back(cur);
  }
  if (cur.size() != 2)
    throw ConfigError(fmt::format("network must emit exactly 2 logits, got {}", cur.size()));
  return shapes;
}

void NetworkSpec::validate() const { (void)output_shapes(); }

std::size_t NetworkSpec::parameter_count() const {
  validate();
  std::size_t n = 0;
  for (const auto& l : layers) n += weight_count(l) + bias_count(l);
  return n;
}

std::string format_layers(std::span<const LayerSpec> layers) {
  std::string out;
  for (const auto& layer : layers) {
    if (!out.empty()) out += ',';
    out += std::visit(
        overloaded{
            [](const DenseLayer& d) { return fmt::format("dense:{}:{}", d.in_dim, d.out_dim); },
            [](const ConvLayer& c) {
              return fmt::format("conv:{}:{}:{}:{}", c.in_channels, c.out_channels, c.kernel,
                                 c.stride);
            },
            [](const LeakyReluLayer& r) { return fmt::format("lrelu:{}", r.slope); },
        },
        layer);
  }
  return out;
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  for (auto item : split(text, ',')) {
    item = trim(item);
    const auto f = split(item, ':');
    if (f[0] == "dense" && f.size() == 3) {
      layers.emplace_back(DenseLayer{parse_size(f[1], item), parse_size(f[2], item)});
    } else if (f[0] == "conv" && f.size() == 5) {
      layers.emplace_back(ConvLayer{parse_size(f[1], item), parse_size(f[2], item),
                                    parse_size(f[3], item), parse_size(f[4], item)});
    } else if (f[0] == "lrelu" && f.size() == 2) {
      layers.emplace_back(LeakyReluLayer{parse_double(f[1], item)});
    } else {
      throw ConfigError(fmt::format("bad layer descriptor '{}'", item));
    }
  }
  return layers;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)), shapes_(spec_.output_shapes()) {
  std::size_t off = 0;
  for (const auto& l : spec_.layers) {
    offsets_.push_back(off);
    off += weight_count(l) + bias_count(l);
  }
  params_.assign(off, 0.0);
}

Batch::Batch(Shape3 sample_shape, std::vector<double> samples,
             std::vector<std::uint8_t> labels, std::vector<std::size_t> indices)
    : shape_(sample_shape),
      samples_(std::move(samples)),
      labels_(std::move(labels)),
      indices_(std::move(indices)) {
  if (labels_.empty()) throw ConfigError("batch must hold at least one sample");
  if (indices_.size() != labels_.size())
    throw std::invalid_argument("batch labels and indices differ in length");
  if (samples_.size() != labels_.size() * shape_.size())
    throw std::invalid_argument("batch sample buffer does not match B x sample shape");
  for (auto y : labels_)
    if (y > 1) throw std::invalid_argument("batch label outside {0,1}");
  for (double v : samples_)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("batch sample value outside [0,1]");
}

std::span<const double> Batch::sample(std::size_t i) const {
  return std::span<const double>(samples_).subspan(i * shape_.size(), shape_.size());
}

Batch Batch::select(std::span<const std::size_t> positions) const {
  std::vector<double> samples;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> indices;
  samples.reserve(positions.size() * shape_.size());
  for (auto p : positions) {
    if (p >= size()) throw std::out_of_range("batch position out of range");
    const auto s = sample(p);
    samples.insert(samples.end(), s.begin(), s.end());
    labels.push_back(labels_[p]);
    indices.push_back(indices_[p]);
  }
  return Batch(shape_, std::move(samples), std::move(labels), std::move(indices));
}

Batch Batch::relabeled(std::vector<std::uint8_t> labels) const {
  return Batch(shape_, samples_, std::move(labels), indices_);
}

Network init_network(const NetworkSpec& spec) {
  Network net(spec);
  if (spec.init == InitScheme::Zero) return net;
  Rng rng(spec.seed);
  auto params = net.parameters();
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const std::size_t nw = weight_count(spec.layers[l]);
    if (nw == 0) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in(spec.layers[l])));
    double* w = params.data() + net.offset(l);
    for (std::size_t i = 0; i < nw; ++i) w[i] = rng.uniform(-limit, limit);
    // biases stay zero
  }
  return net;
}

double cross_entropy(const Logits& logits, std::uint8_t label) {
  // -log softmax_y = log(1 + exp(z_other - z_y))
  const double margin = logits[1 - label] - logits[label];
  if (margin > 0.0) return margin + std::log1p(std::exp(-margin));
  return std::log1p(std::exp(margin));
}

std::uint8_t argmax(const Logits& logits) { return logits[1] > logits[0] ? 1 : 0; }

std::vector<Logits> forward(const Network& net, const Batch& batch) {
  if (!(batch.sample_shape() == net.spec().input))
    throw std::invalid_argument("batch sample shape does not match network input");
  Workspace ws(net);
  std::vector<Logits> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    run_forward(net, batch.sample(i), ws);
    out.push_back(output_logits(ws));
  }
  return out;
}

std::vector<double> per_sample_loss(const Network& net, const Batch& batch) {
  const auto logits = forward(net, batch);
  std::vector<double> losses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    losses[i] = cross_entropy(logits[i], batch.labels()[i]);
  return losses;
}

double mean_loss(const Network& net, const Batch& batch) {
  const auto losses = per_sample_loss(net, batch);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

std::vector<double> loss_gradient(const Network& net, const Batch& batch) {
  if (!(batch.sample_shape() == net.spec().input))
    throw std::invalid_argument("batch sample shape does not match network input");
  Workspace ws(net);
  std::vector<double> grad(net.parameters().size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    run_forward(net, batch.sample(i), ws);
    const Logits z = output_logits(ws);
    const std::uint8_t y = batch.labels()[i];
    // d/dz_other = sigmoid(z_other - z_y), d/dz_y = -that
    const double margin = z[1 - y] - z[y];
    const double p_other =
        margin >= 0.0 ? 1.0 / (1.0 + std::exp(-margin)) : std::exp(margin) / (1.0 + std::exp(margin));
    auto& top = ws.grads.back();
    top[1 - y] = scale * p_other;
    top[y] = -scale * p_other;
    run_backward(net, ws, grad);
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }
  return grad;
}

Network sgd_step(Network net, const Batch& batch, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw ConfigError(fmt::format("learning rate must be a non-negative finite value, got {}", lr));
  if (lr == 0.0) return net;
  const auto grad = loss_gradient(net, batch);
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  return net;
}

std::vector<std::uint8_t> predict(const Network& net, const Batch& batch) {
  const auto logits = forward(net, batch);
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = argmax(logits[i]);
  return out;
}

}  // namespace canc

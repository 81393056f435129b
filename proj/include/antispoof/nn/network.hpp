#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "antispoof/error.hpp"
#include "antispoof/nn/layers.hpp"
#include "antispoof/nn/tensor.hpp"

namespace antispoof::nn {

enum class LayerKind { Conv, ReLU, LRN, MaxPool, FullyConnected, Dropout, Softmax };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::LRN: return "lrn";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv, LayerKind::ReLU, LayerKind::LRN, LayerKind::MaxPool,
                 LayerKind::FullyConnected, LayerKind::Dropout, LayerKind::Softmax}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  // Conv
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t pad = 0;
  // Conv and MaxPool
  std::size_t stride = 1;
  // MaxPool
  std::size_t window = 0;
  // FullyConnected
  std::size_t out_dim = 0;
  // LRN
  LrnParams lrn;
  // Dropout
  double drop_rate = 0.0;

  static LayerSpec conv(std::size_t out_channels, std::size_t kernel,
                        std::size_t stride = 1, std::size_t pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.out_channels = out_channels;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec local_response_norm(LrnParams p = {}) {
    LayerSpec s;
    s.kind = LayerKind::LRN;
    s.lrn = p;
    return s;
  }
  static LayerSpec max_pool(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.window = window;
    s.stride = stride;
    return s;
  }
  static LayerSpec fully_connected(std::size_t out_dim) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.out_dim = out_dim;
    return s;
  }
  static LayerSpec dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.drop_rate = rate;
    return s;
  }
  static LayerSpec softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
  }

  bool has_parameters() const {
    return kind == LayerKind::Conv || kind == LayerKind::FullyConnected;
  }

  friend bool operator==(const LayerSpec& a, const LayerSpec& b) {
    return a.kind == b.kind && a.out_channels == b.out_channels &&
           a.kernel_h == b.kernel_h && a.kernel_w == b.kernel_w && a.pad == b.pad &&
           a.stride == b.stride && a.window == b.window && a.out_dim == b.out_dim &&
           a.lrn.size == b.lrn.size && a.lrn.k == b.lrn.k && a.lrn.alpha == b.lrn.alpha &&
           a.lrn.beta == b.lrn.beta && a.drop_rate == b.drop_rate;
  }
};

struct NetworkSpec {
  std::size_t in_channels = 3;
  std::size_t in_height = 128;
  std::size_t in_width = 128;
  std::vector<LayerSpec> layers;
  std::size_t feature_layer = 0;  // index of the last hidden FC layer

  Shape input_shape() const { return {in_channels, in_height, in_width}; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline constexpr std::size_t kClassCount = 2;
inline constexpr std::size_t kGenuineClass = 1;
inline constexpr std::size_t kAttackClass = 0;

// Architecture knobs. Defaults give a scaled-down AlexNet for 128x128 input.
struct NetworkOptions {
  std::size_t frames = 1;
  std::size_t input_size = 128;
  std::vector<std::size_t> conv_channels{32, 64, 96, 96, 64};
  std::vector<std::size_t> fc_dims{1024, 1024};
  LrnParams lrn{};
  double dropout = 0.5;
};

inline NetworkSpec make_network(const NetworkOptions& o) {
  if (o.conv_channels.size() != 5) throw ConfigError("network: exactly 5 conv widths required");
  if (o.fc_dims.size() != 2) throw ConfigError("network: exactly 2 hidden FC widths required");
  if (o.frames < 1 || o.frames > 3) throw ConfigError("network: frames must be 1..3");
  NetworkSpec s;
  s.in_channels = 3 * o.frames;
  s.in_height = s.in_width = o.input_size;
  auto& L = s.layers;
  L.push_back(LayerSpec::conv(o.conv_channels[0], 7, 2, 0));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::local_response_norm(o.lrn));
  L.push_back(LayerSpec::max_pool(3, 2));
  L.push_back(LayerSpec::conv(o.conv_channels[1], 5, 1, 2));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::local_response_norm(o.lrn));
  L.push_back(LayerSpec::max_pool(3, 2));
  L.push_back(LayerSpec::conv(o.conv_channels[2], 3, 1, 1));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::conv(o.conv_channels[3], 3, 1, 1));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::conv(o.conv_channels[4], 3, 1, 1));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::max_pool(3, 2));
  L.push_back(LayerSpec::fully_connected(o.fc_dims[0]));
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::dropout(o.dropout));
  L.push_back(LayerSpec::fully_connected(o.fc_dims[1]));
  s.feature_layer = L.size() - 1;
  L.push_back(LayerSpec::relu());
  L.push_back(LayerSpec::dropout(o.dropout));
  L.push_back(LayerSpec::fully_connected(kClassCount));
  L.push_back(LayerSpec::softmax());
  return s;
}

inline NetworkSpec default_network(std::size_t frames = 1) {
  NetworkOptions o;
  o.frames = frames;
  return make_network(o);
}

// Validates the stack and returns the per-sample output shape of every layer.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("network: empty layer stack");
  if (spec.layers.back().kind != LayerKind::Softmax)
    throw ConfigError("network: final layer must be softmax");
  if (spec.feature_layer >= spec.layers.size() ||
      spec.layers[spec.feature_layer].kind != LayerKind::FullyConnected)
    throw ConfigError("network: feature layer must be a fully-connected layer");

  std::vector<Shape> shapes;
  Shape cur = spec.input_shape();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.size() != 3) throw ShapeError(where + ": conv needs [C,H,W] input");
        if (l.out_channels < 1) throw ConfigError(where + ": no output channels");
        const auto g = conv_geometry(cur[0], cur[1], cur[2], l.out_channels, l.kernel_h,
                                     l.kernel_w, l.stride, l.pad);
        cur = {l.out_channels, g.out_h, g.out_w};
        break;
      }
      case LayerKind::MaxPool:
        if (cur.size() != 3) throw ShapeError(where + ": pool needs [C,H,W] input");
        cur = {cur[0], pool_extent(cur[1], l.window, l.stride),
               pool_extent(cur[2], l.window, l.stride)};
        break;
      case LayerKind::LRN:
        if (cur.size() != 3) throw ShapeError(where + ": lrn needs [C,H,W] input");
        l.lrn.validate();
        break;
      case LayerKind::FullyConnected:
        if (l.out_dim < 1) throw ConfigError(where + ": no output units");
        cur = {l.out_dim};
        break;
      case LayerKind::Dropout:
        if (!(l.drop_rate >= 0.0 && l.drop_rate < 1.0))
          throw ConfigError(where + ": drop_rate must lie in [0, 1)");
        break;
      case LayerKind::Softmax:
        if (i + 1 != spec.layers.size()) throw ConfigError(where + ": softmax must be last");
        if (cur.size() != 1 || cur[0] != kClassCount)
          throw ShapeError(where + ": softmax must act on 2 logits");
        break;
      case LayerKind::ReLU:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

inline std::size_t feature_width(const NetworkSpec& spec) {
  return infer_shapes(spec)[spec.feature_layer][0];
}

inline nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::Conv:
        j["out_channels"] = l.out_channels;
        j["kernel"] = {l.kernel_h, l.kernel_w};
        j["stride"] = l.stride;
        j["pad"] = l.pad;
        break;
      case LayerKind::MaxPool:
        j["window"] = l.window;
        j["stride"] = l.stride;
        break;
      case LayerKind::LRN:
        j["size"] = l.lrn.size;
        j["k"] = l.lrn.k;
        j["alpha"] = l.lrn.alpha;
        j["beta"] = l.lrn.beta;
        break;
      case LayerKind::FullyConnected:
        j["out_dim"] = l.out_dim;
        break;
      case LayerKind::Dropout:
        j["drop_rate"] = l.drop_rate;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input", {spec.in_channels, spec.in_height, spec.in_width}},
          {"layers", std::move(layers)},
          {"feature_layer", spec.feature_layer}};
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec s;
    const auto& in = j.at("input");
    s.in_channels = in.at(0).get<std::size_t>();
    s.in_height = in.at(1).get<std::size_t>();
    s.in_width = in.at(2).get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      switch (l.kind) {
        case LayerKind::Conv:
          l.out_channels = lj.at("out_channels").get<std::size_t>();
          l.kernel_h = lj.at("kernel").at(0).get<std::size_t>();
          l.kernel_w = lj.at("kernel").at(1).get<std::size_t>();
          l.stride = lj.at("stride").get<std::size_t>();
          l.pad = lj.at("pad").get<std::size_t>();
          break;
        case LayerKind::MaxPool:
          l.window = lj.at("window").get<std::size_t>();
          l.stride = lj.at("stride").get<std::size_t>();
          break;
        case LayerKind::LRN:
          l.lrn.size = lj.at("size").get<std::size_t>();
          l.lrn.k = lj.at("k").get<double>();
          l.lrn.alpha = lj.at("alpha").get<double>();
          l.lrn.beta = lj.at("beta").get<double>();
          break;
        case LayerKind::FullyConnected:
          l.out_dim = lj.at("out_dim").get<std::size_t>();
          break;
        case LayerKind::Dropout:
          l.drop_rate = lj.at("drop_rate").get<double>();
          break;
        default:
          break;
      }
      s.layers.push_back(l);
    }
    s.feature_layer = j.at("feature_layer").get<std::size_t>();
    infer_shapes(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// One entry per layer; parameter-free layers hold empty tensors.
template <typename T>
using Parameters = std::vector<LayerParams<T>>;

enum class InitKind { Gaussian, He };

struct InitConfig {
  InitKind kind = InitKind::Gaussian;
  double std = 0.01;
};

inline std::pair<Shape, Shape> parameter_shapes(const NetworkSpec& spec, std::size_t layer,
                                                const std::vector<Shape>& shapes) {
  const auto& l = spec.layers[layer];
  const Shape& in = layer == 0 ? spec.input_shape() : shapes[layer - 1];
  if (l.kind == LayerKind::Conv) return {{l.out_channels, in[0], l.kernel_h, l.kernel_w}, {l.out_channels}};
  if (l.kind == LayerKind::FullyConnected) return {{l.out_dim, shape_size(in)}, {l.out_dim}};
  return {};
}

template <typename T>
Parameters<T> zero_parameters(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  Parameters<T> p(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!spec.layers[i].has_parameters()) continue;
    auto [ws, bs] = parameter_shapes(spec, i, shapes);
    p[i].weight = Tensor<T>(ws);
    p[i].bias = Tensor<T>(bs);
  }
  return p;
}

template <typename T>
Parameters<T> init_parameters(const NetworkSpec& spec, const InitConfig& init,
                              std::uint64_t seed) {
  Parameters<T> p = zero_parameters<T>(spec);
  Rng rng(seed);
  for (auto& lp : p) {
    if (lp.weight.empty()) continue;
    const std::size_t fan_in = lp.weight.size() / lp.weight.dim(0);
    const double std = init.kind == InitKind::He ? std::sqrt(2.0 / double(fan_in)) : init.std;
    std::normal_distribution<double> normal(0.0, std);
    for (auto& w : lp.weight.values()) w = static_cast<T>(normal(rng));
  }
  return p;
}

template <typename T>
std::size_t parameter_count(const Parameters<T>& p) {
  std::size_t n = 0;
  for (const auto& lp : p) n += lp.weight.size() + lp.bias.size();
  return n;
}

template <typename U, typename T>
Parameters<U> cast_parameters(const Parameters<T>& p) {
  Parameters<U> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].weight.empty()) continue;
    out[i].weight = p[i].weight.template cast<U>();
    out[i].bias = p[i].bias.template cast<U>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward and backward passes over a batch [N,C,H,W].

template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> inputs;                  // input seen by each layer
  std::vector<std::vector<std::size_t>> argmax;   // max-pool routing
  std::vector<Tensor<T>> masks;                   // dropout masks
};

template <typename T>
struct DropoutControl {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;                              // required in train mode unless frozen
  const std::vector<Tensor<T>>* frozen = nullptr;  // reuse masks from an earlier trace
};

namespace detail {

inline void check_batch(const NetworkSpec& spec, const Shape& s) {
  const Shape in = spec.input_shape();
  if (s.size() != 4 || s[1] != in[0] || s[2] != in[1] || s[3] != in[2]) {
    throw ShapeError("network: batch shape " + shape_string(s) +
                     " does not match input [N," + std::to_string(in[0]) + "," +
                     std::to_string(in[1]) + "," + std::to_string(in[2]) + "]");
  }
}

}  // namespace detail

// Runs layers [start, last) on `cur`, the input of layer `start`, and returns
// the [N,2] logits. Trace entries before `start` are left as they are.
template <typename T>
Tensor<T> forward_from(const NetworkSpec& spec, const Parameters<T>& params, std::size_t start,
                       Tensor<T> cur, const DropoutControl<T>& dropout,
                       ForwardTrace<T>* trace = nullptr, Tensor<T>* features = nullptr) {
  if (params.size() != spec.layers.size()) throw ShapeError("network: parameter count mismatch");
  const std::size_t n = cur.dim(0);
  const std::size_t last = spec.layers.size() - 1;
  if (trace && trace->inputs.size() != spec.layers.size()) {
    trace->inputs.resize(spec.layers.size());
    trace->argmax.resize(spec.layers.size());
    trace->masks.resize(spec.layers.size());
  }
  for (std::size_t i = start; i < last; ++i) {
    const auto& l = spec.layers[i];
    Tensor<T> next;
    switch (l.kind) {
      case LayerKind::Conv:
        next = conv2d_forward(cur, params[i].weight, params[i].bias, l.stride, l.pad);
        break;
      case LayerKind::ReLU:
        next = relu(cur);
        break;
      case LayerKind::LRN:
        next = lrn_forward(cur, l.lrn);
        break;
      case LayerKind::MaxPool: {
        auto r = maxpool_forward(cur, l.window, l.stride);
        next = std::move(r.output);
        if (trace) trace->argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::FullyConnected:
        next = fc_forward(cur.rank() == 2 ? cur : cur.reshaped({n, cur.size() / n}),
                          params[i].weight, params[i].bias);
        break;
      case LayerKind::Dropout: {
        if (dropout.mode == Mode::Eval || l.drop_rate == 0.0) {
          next = cur;
          break;
        }
        Tensor<T> mask;
        if (dropout.frozen) {
          mask = dropout.frozen->at(i);
          require_shape(mask, cur.shape(), "frozen dropout mask");
        } else {
          if (!dropout.rng) throw ConfigError("network: train-mode dropout needs an rng");
          mask = dropout_mask<T>(cur.shape(), l.drop_rate, *dropout.rng, Mode::Train);
        }
        next = multiply(cur, mask);
        if (trace) trace->masks[i] = std::move(mask);
        break;
      }
      case LayerKind::Softmax:
        break;
    }
    if (trace) trace->inputs[i] = std::move(cur);
    if (features && i == spec.feature_layer) *features = next;
    cur = std::move(next);
  }
  return cur;
}

// Runs every layer except the final softmax and returns [N,2] logits.
template <typename T>
Tensor<T> forward_logits(const NetworkSpec& spec, const Parameters<T>& params,
                         const Tensor<T>& batch, const DropoutControl<T>& dropout,
                         ForwardTrace<T>* trace = nullptr, Tensor<T>* features = nullptr) {
  detail::check_batch(spec, batch.shape());
  if (trace) {
    trace->inputs.assign(spec.layers.size(), {});
    trace->argmax.assign(spec.layers.size(), {});
    trace->masks.assign(spec.layers.size(), {});
  }
  return forward_from(spec, params, 0, batch, dropout, trace, features);
}

// Gradients of the loss with respect to every parameter, given dLoss/dlogits.
template <typename T>
Parameters<T> backward(const NetworkSpec& spec, const Parameters<T>& params,
                       const ForwardTrace<T>& trace, const Tensor<T>& grad_logits) {
  Parameters<T> grads(spec.layers.size());
  Tensor<T> grad = grad_logits;
  for (std::size_t i = spec.layers.size() - 1; i-- > 0;) {
    const auto& l = spec.layers[i];
    const Tensor<T>& input = trace.inputs[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        auto g = conv2d_backward(grad, input, params[i].weight, l.stride, l.pad, i > 0);
        grads[i].weight = std::move(g.weights);
        grads[i].bias = std::move(g.bias);
        if (i == 0) return grads;
        grad = std::move(g.input);
        break;
      }
      case LayerKind::ReLU:
        grad = relu_backward(grad, input);
        break;
      case LayerKind::LRN:
        grad = lrn_backward(grad, input, l.lrn);
        break;
      case LayerKind::MaxPool:
        grad = maxpool_backward(grad, trace.argmax[i], input.shape());
        break;
      case LayerKind::FullyConnected: {
        auto g = fc_backward(grad, input, params[i].weight);
        grads[i].weight = std::move(g.weights);
        grads[i].bias = std::move(g.bias);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::Dropout:
        if (!trace.masks[i].empty()) grad = multiply(grad, trace.masks[i]);
        break;
      case LayerKind::Softmax:
        break;
    }
  }
  return grads;
}

template <typename T>
struct ForwardResult {
  Tensor<T> probabilities;  // [N,2]
  Tensor<T> features;       // [N,F] taken at the feature layer
};

template <typename T>
ForwardResult<T> network_forward(const NetworkSpec& spec, const Parameters<T>& params,
                                 const Tensor<T>& batch, Mode mode, Rng* rng = nullptr) {
  ForwardResult<T> r;
  DropoutControl<T> control{mode, rng, nullptr};
  Tensor<T> logits = forward_logits(spec, params, batch, control,
                                    static_cast<ForwardTrace<T>*>(nullptr), &r.features);
  r.probabilities = softmax(logits);
  return r;
}

}  // namespace antispoof::nn

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/nn/network.hpp"

namespace antispoof::nn {

// How the "decay" hyperparameter is applied: as an L2 penalty on the
// parameters, or as an inverse-time learning-rate schedule
// lr_t = lr / (1 + decay * t) with no L2 term.
enum class DecayMode { WeightDecay, LearningRate };

struct TrainConfig {
  double learning_rate = 0.001;
  double weight_decay = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t rng_seed = 0;
  DecayMode decay_mode = DecayMode::WeightDecay;
  InitConfig init{};

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (!(init.std > 0)) throw ConfigError("train: init std must be > 0");
  }
};

// v' = momentum * v - lr * (grad + weight_decay * param);  param' = param + v'
template <typename T>
void sgd_update(Parameters<T>& params, const Parameters<T>& grads,
                Parameters<T>& velocity, const TrainConfig& cfg,
                std::size_t iteration = 0) {
  if (grads.size() != params.size() || velocity.size() != params.size())
    throw ShapeError("sgd_update: parameter set sizes differ");
  double lr = cfg.learning_rate;
  double decay = cfg.weight_decay;
  if (cfg.decay_mode == DecayMode::LearningRate) {
    lr = cfg.learning_rate / (1.0 + cfg.weight_decay * double(iteration));
    decay = 0.0;
  }
  const T mu = static_cast<T>(cfg.momentum);
  const T step = static_cast<T>(lr);
  const T wd = static_cast<T>(decay);
  auto update = [&](Tensor<T>& p, const Tensor<T>& g, Tensor<T>& v) {
    if (p.empty()) return;
    require_shape(g, p.shape(), "sgd_update grad");
    require_shape(v, p.shape(), "sgd_update velocity");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu * v[i] - step * (g[i] + wd * p[i]);
      p[i] += v[i];
    }
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, grads[l].weight, velocity[l].weight);
    update(params[l].bias, grads[l].bias, velocity[l].bias);
  }
}

// Copies samples `indices` of a [N,...] tensor into a new batch tensor.
template <typename T>
Tensor<T> gather_batch(const Tensor<T>& all, const std::vector<std::size_t>& indices) {
  Shape s = all.shape();
  const std::size_t stride = all.size() / s[0];
  s[0] = indices.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(all.data() + indices[i] * stride, stride, out.data() + i * stride);
  return out;
}

// Mean cross-entropy over the whole set in evaluation mode.
template <typename T>
double dataset_loss(const NetworkSpec& spec, const Parameters<T>& params,
                    const Tensor<T>& inputs, const std::vector<std::size_t>& labels,
                    std::size_t batch_size = 64) {
  const std::size_t n = inputs.dim(0);
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    std::vector<std::size_t> lab;
    for (auto i : idx) lab.push_back(labels[i]);
    auto logits = forward_logits(spec, params, gather_batch(inputs, idx), DropoutControl<T>{});
    total += softmax_cross_entropy(logits, lab).loss * double(idx.size());
  }
  return total / double(n);
}

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
  double final_loss = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Minibatch SGD with momentum. Sample order is shuffled per epoch from the
// configured seed, so identical inputs give bit-identical parameters.
template <typename T>
TrainReport train_network(const NetworkSpec& spec, Parameters<T>& params,
                          const Tensor<T>& inputs, const std::vector<std::size_t>& labels,
                          const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (inputs.rank() != 4 || inputs.dim(0) != labels.size())
    throw ShapeError("train_network: inputs must be [N,C,H,W] with one label per sample");
  if (labels.empty()) throw EmptyDatasetError("train_network: no samples");
  const std::size_t n = labels.size();

  TrainReport report;
  report.initial_loss = dataset_loss(spec, params, inputs, labels);

  Rng rng(cfg.rng_seed);
  Parameters<T> velocity = zero_parameters<T>(spec);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + count);
      std::vector<std::size_t> lab;
      lab.reserve(count);
      for (auto i : idx) lab.push_back(labels[i]);
      ForwardTrace<T> trace;
      DropoutControl<T> control{Mode::Train, &rng, nullptr};
      auto logits = forward_logits(spec, params, gather_batch(inputs, idx), control, &trace);
      auto loss = softmax_cross_entropy(logits, lab);
      auto grads = backward(spec, params, trace, loss.grad_logits);
      sgd_update(params, grads, velocity, cfg, iteration++);
      epoch_loss += loss.loss * double(count);
    }
    epoch_loss /= double(n);
    report.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  report.final_loss = dataset_loss(spec, params, inputs, labels);
  return report;
}

}  // namespace antispoof::nn

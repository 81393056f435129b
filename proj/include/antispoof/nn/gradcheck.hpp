#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "antispoof/nn/network.hpp"

namespace antispoof::nn {

struct GradCheckOptions {
  double step = 1e-3;
  std::size_t coordinates_per_layer = 100;
  Mode mode = Mode::Eval;     // Train samples dropout masks once and freezes them
  std::uint64_t seed = 0;
  double denominator_floor = 1e-8;
  int kink_retries = 3;  // each retry divides the step by 10
  // Five-point stencil (error O(step^4)) instead of the two-point one
  // (error O(step^2)).
  bool fourth_order = false;
};

// |a - b| / max(|a| + |b|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Perturbations that moved a ReLU sign or a max-pool selection. Central
  // differences across such a kink are meaningless.
  std::size_t kink_retries = 0;
  std::size_t skipped_kinks = 0;  // coordinates still kinked at the smallest step
};

namespace detail {

// Which piece of the piecewise-linear network a forward pass ran in.
struct ActivationPattern {
  std::vector<bool> relu_active;
  std::vector<std::size_t> argmax;
  friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
};

inline ActivationPattern activation_pattern(const NetworkSpec& spec,
                                            const ForwardTrace<double>& trace) {
  ActivationPattern p;
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::ReLU) {
      for (double v : trace.inputs[i].values()) p.relu_active.push_back(v > 0.0);
    } else if (spec.layers[i].kind == LayerKind::MaxPool) {
      p.argmax.insert(p.argmax.end(), trace.argmax[i].begin(), trace.argmax[i].end());
    }
  }
  return p;
}

}  // namespace detail

// Compares analytic parameter gradients with central differences of the mean
// cross-entropy on a random subsample of coordinates per parameterised layer.
// Parameters are restored on return.
inline GradCheckResult finite_difference_report(const NetworkSpec& spec,
                                                Parameters<double>& params,
                                                const Tensor<double>& batch,
                                                const std::vector<std::size_t>& labels,
                                                const GradCheckOptions& opt = {}) {
  Rng rng(opt.seed);
  ForwardTrace<double> trace;
  DropoutControl<double> sample{opt.mode, &rng, nullptr};
  auto logits = forward_logits(spec, params, batch, sample, &trace);
  auto analytic = backward(spec, params, trace, softmax_cross_entropy(logits, labels).grad_logits);
  const auto base = detail::activation_pattern(spec, trace);

  // Every perturbed evaluation reuses the masks drawn above and starts at the
  // perturbed layer, whose input is unchanged.
  const std::vector<Tensor<double>> masks = trace.masks;
  DropoutControl<double> frozen{opt.mode, nullptr, &masks};
  auto loss_at = [&](std::size_t layer, bool& kinked) {
    ForwardTrace<double> t = trace;
    auto z = forward_from(spec, params, layer, trace.inputs[layer], frozen, &t);
    if (!(detail::activation_pattern(spec, t) == base)) kinked = true;
    return softmax_cross_entropy(z, labels).loss;
  };

  GradCheckResult result;
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (params[l].weight.empty()) continue;
    Tensor<double>* tensors[2] = {&params[l].weight, &params[l].bias};
    const Tensor<double>* grads[2] = {&analytic[l].weight, &analytic[l].bias};
    const std::size_t weights = params[l].weight.size();
    std::vector<std::size_t> coords(weights + params[l].bias.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    std::size_t accepted = 0;
    for (std::size_t c : coords) {
      if (accepted == opt.coordinates_per_layer) break;
      const int which = c < weights ? 0 : 1;
      const std::size_t idx = which == 0 ? c : c - weights;
      Tensor<double>& p = *tensors[which];
      const double saved = p[idx];
      // A step that crosses a kink is shrunk until both sides stay on the
      // same linear piece.
      double step = opt.step;
      double numeric = 0.0;
      bool smooth = false;
      for (int attempt = 0; attempt <= opt.kink_retries && !smooth; ++attempt, step *= 0.1) {
        bool kinked = false;
        auto at = [&](double offset) {
          p[idx] = saved + offset;
          const double v = loss_at(l, kinked);
          p[idx] = saved;
          return v;
        };
        const double up = at(step), down = at(-step);
        const double up2 = opt.fourth_order ? at(2 * step) : 0.0;
        const double down2 = opt.fourth_order ? at(-2 * step) : 0.0;
        if (kinked) {
          ++result.kink_retries;
          continue;
        }
        numeric = opt.fourth_order ? (8.0 * (up - down) - (up2 - down2)) / (12.0 * step)
                                   : (up - down) / (2.0 * step);
        smooth = true;
      }
      if (!smooth) {
        ++result.skipped_kinks;
        continue;
      }
      result.max_relative_error =
          std::max(result.max_relative_error,
                   relative_error((*grads[which])[idx], numeric, opt.denominator_floor));
      ++accepted;
    }
    result.checked += accepted;
  }
  return result;
}

// Worst relative error over the checked coordinates.
inline double finite_difference_check(const NetworkSpec& spec, Parameters<double>& params,
                                      const Tensor<double>& batch,
                                      const std::vector<std::size_t>& labels,
                                      const GradCheckOptions& opt = {}) {
  return finite_difference_report(spec, params, batch, labels, opt).max_relative_error;
}

}  // namespace antispoof::nn

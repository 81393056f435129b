#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/eval/roc.hpp"
#include "antispoof/svm/svm.hpp"

namespace antispoof::svm {

inline const std::vector<double> kDefaultCGrid = {0.1, 1, 10, 100};
inline const std::vector<double> kDefaultGammaScales = {0.1, 1, 10};

// 1 / (F * var) of the standardized training features, times each scale.
inline std::vector<double> default_gamma_grid(const LabeledSet& train,
                                              const std::vector<double>& scales = kDefaultGammaScales) {
  if (train.size() == 0) throw EmptyDatasetError("gamma grid: no training samples");
  const Standardizer st = Standardizer::fit(train.x);
  double sum = 0, sq = 0;
  std::size_t count = 0;
  for (const auto& v : train.x) {
    for (double z : st.apply(v)) {
      sum += z;
      sq += z * z;
      ++count;
    }
  }
  const double mean = sum / double(count);
  double var = sq / double(count) - mean * mean;
  if (!(var > 1e-12)) var = 1.0;
  const double base = 1.0 / (double(train.dim()) * var);
  std::vector<double> out;
  for (double s : scales) out.push_back(base * s);
  return out;
}

struct GridCell {
  double C = 0, gamma = 0;
  std::optional<double> dev_eer;  // percent; empty when training failed
  bool converged = true;
  std::string error;
};

struct GridResult {
  double C = 0, gamma = 0, dev_eer = 0;
  std::vector<GridCell> cells;  // in (C, gamma) ascending order
};

// Maps dev decision values (in dev-set order) to an EER in percent.
using DevScorer = std::function<double(const Vector& decision_values)>;

inline DevScorer frame_level_scorer(const LabeledSet& dev) {
  return [&dev](const Vector& f) {
    std::vector<eval::ScoredSample> s;
    for (std::size_t i = 0; i < f.size(); ++i)
      s.push_back({f[i], dev.y[i] == 1 ? eval::Truth::Genuine : eval::Truth::Attack, "", "", ""});
    return eval::eer_threshold(s).eer;
  };
}

// Trains one model per grid point and keeps the lowest dev EER; ties go to
// the smaller C, then the smaller gamma.
inline GridResult grid_search(const LabeledSet& train, const LabeledSet& dev, std::vector<double> C_grid,
                              std::vector<double> gamma_grid, const DevScorer& scorer = {},
                              const SmoOptions& opt = {}) {
  if (C_grid.empty() || gamma_grid.empty()) throw ConfigError("grid_search: empty grid");
  std::sort(C_grid.begin(), C_grid.end());
  std::sort(gamma_grid.begin(), gamma_grid.end());
  const DevScorer score = scorer ? scorer : frame_level_scorer(dev);
  GridResult out;
  const GridCell* best = nullptr;
  for (double C : C_grid) {
    for (double gamma : gamma_grid) {
      GridCell cell{C, gamma, std::nullopt, true, {}};
      try {
        const SmoResult r = train_svm(train, C, gamma, opt);
        Vector f;
        f.reserve(dev.size());
        for (const auto& x : dev.x) f.push_back(svm_decision(r.model, x));
        cell.dev_eer = score(f);
        cell.converged = r.converged;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      out.cells.push_back(cell);
    }
  }
  for (const auto& c : out.cells)
    if (c.dev_eer && (!best || *c.dev_eer < *best->dev_eer)) best = &c;
  if (!best) {
    std::string why = out.cells.empty() ? "" : out.cells.front().error;
    throw SearchError("grid_search: every cell failed (first error: " + why + ")");
  }
  out.C = best->C;
  out.gamma = best->gamma;
  out.dev_eer = *best->dev_eer;
  return out;
}

}  // namespace antispoof::svm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "antispoof/error.hpp"

namespace antispoof::svm {

using Vector = std::vector<double>;

// Labels are +1 (genuine) and -1 (attack).
struct LabeledSet {
  std::vector<Vector> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
  std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("rbf_kernel: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s = std::fma(d, d, s);  // explicit so that K(x, y) == K(y, x) bit for bit
  }
  return s;
}

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  if (!(gamma >= 0)) throw ConfigError("rbf_kernel: gamma must be >= 0");
  return std::exp(-gamma * squared_distance(a, b));
}

// Per-dimension z-score. Constant dimensions keep unit scale.
struct Standardizer {
  Vector mean, stddev;

  static Standardizer fit(const std::vector<Vector>& x) {
    if (x.empty()) throw EmptyDatasetError("standardizer: no samples");
    const std::size_t d = x.front().size();
    Standardizer s{Vector(d, 0.0), Vector(d, 0.0)};
    for (const auto& v : x) {
      if (v.size() != d) throw ShapeError("standardizer: ragged feature vectors");
      for (std::size_t i = 0; i < d; ++i) s.mean[i] += v[i];
    }
    for (double& m : s.mean) m /= double(x.size());
    for (const auto& v : x)
      for (std::size_t i = 0; i < d; ++i) s.stddev[i] += (v[i] - s.mean[i]) * (v[i] - s.mean[i]);
    for (double& sd : s.stddev) {
      sd = std::sqrt(sd / double(x.size()));
      if (!(sd > 1e-12)) sd = 1.0;
    }
    return s;
  }

  static Standardizer identity(std::size_t d) { return {Vector(d, 0.0), Vector(d, 1.0)}; }

  Vector apply(std::span<const double> v) const {
    if (v.size() != mean.size())
      throw ShapeError("feature length " + std::to_string(v.size()) + " != model length " +
                       std::to_string(mean.size()));
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / stddev[i];
    return out;
  }
};

struct SvmModel {
  double gamma = 0;
  double C = 0;
  double bias = 0;
  Standardizer standardizer;
  std::vector<int> labels;     // per support vector
  Vector alphas;               // per support vector, in (0, C]
  std::vector<Vector> support_vectors;  // standardized

  friend bool operator==(const SvmModel& a, const SvmModel& b) {
    return a.gamma == b.gamma && a.C == b.C && a.bias == b.bias &&
           a.standardizer.mean == b.standardizer.mean && a.standardizer.stddev == b.standardizer.stddev &&
           a.labels == b.labels && a.alphas == b.alphas && a.support_vectors == b.support_vectors;
  }
};

struct SmoOptions {
  double tol = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^7, 100 n)
};

struct SmoResult {
  SvmModel model;
  bool converged = true;  // false: iteration cap hit, model is the best so far
  std::size_t iterations = 0;
  Vector alpha;           // full dual vector, one per training sample
};

namespace detail {

inline void check_training_set(const LabeledSet& s) {
  if (s.x.size() != s.y.size()) throw ShapeError("svm: sample and label counts differ");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.x[i].size() != s.dim()) throw ShapeError("svm: ragged feature vectors");
    for (double v : s.x[i])
      if (!std::isfinite(v)) throw ConfigError("svm: non-finite feature value");
    if (s.y[i] == 1) pos = true;
    else if (s.y[i] == -1) neg = true;
    else throw ConfigError("svm: labels must be +1 or -1");
  }
  if (!pos || !neg) throw DegenerateLabelsError("svm: training set has a single class");
}

}  // namespace detail

// Dual coordinate-pair ascent with maximal-violating-pair selection on the
// precomputed kernel matrix. `samples` are used as given (no standardization).
inline SmoResult smo_train(const LabeledSet& samples, double C, double gamma, const SmoOptions& opt = {}) {
  detail::check_training_set(samples);
  if (!(C > 0)) throw ConfigError("svm: C must be > 0");
  if (!(gamma >= 0)) throw ConfigError("svm: gamma must be >= 0");
  const std::size_t n = samples.size();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      K[i * n + j] = K[j * n + i] = rbf_kernel(samples.x[i], samples.x[j], gamma);
  const auto& y = samples.y;
  auto Q = [&](std::size_t i, std::size_t j) { return double(y[i] * y[j]) * K[i * n + j]; };

  Vector alpha(n, 0.0), G(n, -1.0);  // G = Q alpha - e
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0); };
  const std::size_t cap = opt.max_iterations ? opt.max_iterations : std::max<std::size_t>(10'000'000, 100 * n);
  constexpr double kTau = 1e-12;

  SmoResult res;
  double m_up = 0, m_low = 0;
  for (;;) {
    std::size_t i = n, j = n;
    m_up = -std::numeric_limits<double>::infinity();
    m_low = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -double(y[t]) * G[t];
      if (in_up(t) && v > m_up) m_up = v, i = t;
      if (in_low(t) && v < m_low) m_low = v, j = t;
    }
    if (i == n || j == n || m_up - m_low < opt.tol) break;
    if (res.iterations == cap) {
      res.converged = false;
      break;
    }
    ++res.iterations;

    const double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = K[i * n + i] + K[j * n + j] + 2 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = diff;
      } else if (alpha[i] < 0) {
        alpha[i] = 0, alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
      } else if (alpha[j] > C) {
        alpha[j] = C, alpha[i] = C + diff;
      }
    } else {
      double quad = K[i * n + i] + K[j * n + j] - 2 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
        if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
      } else {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = sum;
        if (alpha[i] < 0) alpha[i] = 0, alpha[j] = sum;
      }
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(i, t) * di + Q(j, t) * dj;
  }

  // Bias: mean of -y G over free vectors, else the middle of the final bounds.
  double free_sum = 0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t)
    if (alpha[t] > 0 && alpha[t] < C) free_sum += -double(y[t]) * G[t], ++free;
  double bias = free ? free_sum / double(free) : 0.0;
  if (!free) {
    // m_low/m_up may be infinite when one index set is empty
    if (std::isfinite(m_up) && std::isfinite(m_low)) bias = (m_up + m_low) / 2;
    else if (std::isfinite(m_up)) bias = m_up;
    else if (std::isfinite(m_low)) bias = m_low;
  }

  SvmModel& m = res.model;
  m.gamma = gamma;
  m.C = C;
  m.bias = bias;
  m.standardizer = Standardizer::identity(samples.dim());
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0) continue;
    m.labels.push_back(y[t]);
    m.alphas.push_back(alpha[t]);
    m.support_vectors.push_back(samples.x[t]);
  }
  res.alpha = std::move(alpha);
  return res;
}

// f(x) = sum_i alpha_i y_i K(sv_i, x) + b; positive means genuine.
inline double svm_decision(const SvmModel& m, std::span<const double> x) {
  if (m.support_vectors.empty()) throw ConfigError("svm_decision: model has no support vectors");
  const Vector z = m.standardizer.apply(x);
  double f = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
    f += m.alphas[i] * double(m.labels[i]) * rbf_kernel(m.support_vectors[i], z, m.gamma);
  return f;
}

// Fits standardization on `train`, then runs SMO in the standardized space.
inline SmoResult train_svm(const LabeledSet& train, double C, double gamma, const SmoOptions& opt = {}) {
  detail::check_training_set(train);
  const Standardizer st = Standardizer::fit(train.x);
  LabeledSet z{{}, train.y};
  z.x.reserve(train.size());
  for (const auto& v : train.x) z.x.push_back(st.apply(v));
  SmoResult r = smo_train(z, C, gamma, opt);
  r.model.standardizer = st;
  return r;
}

// ---------------------------------------------------------------------------
// Model file: JSON with every real written at 17 significant digits.

namespace detail {

inline void put_real(std::string& out, double v) {
  if (!std::isfinite(v)) throw ConfigError("svm model: non-finite value");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void put_reals(std::string& out, const Vector& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    put_real(out, v[i]);
  }
  out += ']';
}

}  // namespace detail

inline std::string model_to_json(const SvmModel& m) {
  std::string out = "{\n  \"gamma\": ";
  detail::put_real(out, m.gamma);
  out += ",\n  \"C\": ";
  detail::put_real(out, m.C);
  out += ",\n  \"bias\": ";
  detail::put_real(out, m.bias);
  out += ",\n  \"mean\": ";
  detail::put_reals(out, m.standardizer.mean);
  out += ",\n  \"std\": ";
  detail::put_reals(out, m.standardizer.stddev);
  out += ",\n  \"labels\": [";
  for (std::size_t i = 0; i < m.labels.size(); ++i) out += (i ? "," : "") + std::to_string(m.labels[i]);
  out += "],\n  \"alphas\": ";
  detail::put_reals(out, m.alphas);
  out += ",\n  \"support_vectors\": [";
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
    out += i ? ",\n    " : "\n    ";
    detail::put_reals(out, m.support_vectors[i]);
  }
  out += "\n  ]\n}\n";
  return out;
}

inline SvmModel model_from_json(const std::string& text) {
  SvmModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.gamma = j.at("gamma").get<double>();
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.standardizer.mean = j.at("mean").get<Vector>();
    m.standardizer.stddev = j.at("std").get<Vector>();
    m.labels = j.at("labels").get<std::vector<int>>();
    m.alphas = j.at("alphas").get<Vector>();
    m.support_vectors = j.at("support_vectors").get<std::vector<Vector>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("svm model: ") + e.what());
  }
  const std::size_t n = m.support_vectors.size(), d = m.standardizer.mean.size();
  if (m.labels.size() != n || m.alphas.size() != n || m.standardizer.stddev.size() != d)
    throw ParseError(0, "svm model: inconsistent array lengths");
  for (const auto& sv : m.support_vectors)
    if (sv.size() != d) throw ParseError(0, "svm model: support vector length mismatch");
  return m;
}

inline void save_model(const std::filesystem::path& path, const SvmModel& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << model_to_json(m);
  if (!out) throw IoError("cannot write svm model " + path.string());
}

inline SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open svm model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace antispoof::svm

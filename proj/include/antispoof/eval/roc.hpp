#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "antispoof/error.hpp"

namespace antispoof::eval {

enum class Truth { Attack = 0, Genuine = 1 };

// Higher score means more genuine; a sample is accepted iff score >= threshold.
struct ScoredSample {
  double score = 0;
  Truth truth = Truth::Genuine;
  std::string dataset;
  std::string subject_id;
  std::string sequence_id;
  friend bool operator==(const ScoredSample&, const ScoredSample&) = default;
};

struct RocPoint {
  double threshold = 0;
  double far = 0;  // attacks accepted
  double frr = 0;  // genuines rejected
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct OperatingPoint {
  double threshold = 0;
  double far = 0;
  double frr = 0;
  double hter() const { return (far + frr) / 2.0 * 100.0; }
};

struct EerResult {
  double threshold = 0;
  double eer = 0;  // percent
  double far = 0;
  double frr = 0;
};

namespace detail {

struct SortedScores {
  std::vector<double> genuine, attack;
};

inline SortedScores split_sorted(const std::vector<ScoredSample>& s, const char* what) {
  SortedScores out;
  for (const auto& x : s) {
    if (!std::isfinite(x.score)) throw ConfigError(std::string(what) + ": non-finite score");
    (x.truth == Truth::Genuine ? out.genuine : out.attack).push_back(x.score);
  }
  if (out.genuine.empty() || out.attack.empty())
    throw DegenerateLabelsError(std::string(what) + ": need both genuine and attack scores");
  std::sort(out.genuine.begin(), out.genuine.end());
  std::sort(out.attack.begin(), out.attack.end());
  return out;
}

inline std::size_t count_below(const std::vector<double>& v, double t) {
  return std::size_t(std::lower_bound(v.begin(), v.end(), t) - v.begin());
}

// Rates are ratios of integer counts, so they compare exactly across code paths.
inline RocPoint point_at(const SortedScores& s, double t) {
  const std::size_t accepted = s.attack.size() - count_below(s.attack, t);
  return {t, double(accepted) / double(s.attack.size()),
          double(count_below(s.genuine, t)) / double(s.genuine.size())};
}

}  // namespace detail

// One point per distinct score plus -inf and +inf, ascending by threshold.
inline std::vector<RocPoint> roc_points(const std::vector<ScoredSample>& samples) {
  const auto s = detail::split_sorted(samples, "roc_points");
  std::vector<double> t;
  t.reserve(samples.size() + 2);
  t.push_back(-std::numeric_limits<double>::infinity());
  for (const auto& x : samples) t.push_back(x.score);
  t.push_back(std::numeric_limits<double>::infinity());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::vector<RocPoint> out;
  out.reserve(t.size());
  for (double v : t) out.push_back(detail::point_at(s, v));
  return out;
}

// Midpoint of adjacent distinct scores; nullopt if none lies strictly between.
inline std::optional<double> midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2;
  if (!(m > lo && m < hi)) return std::nullopt;
  return m;
}

// Sweeps the 2n+1 candidates: -inf, every distinct score, every midpoint
// between adjacent distinct scores, and +inf. Picks the one minimising
// |FAR - FRR|; ties go to the smaller (FAR + FRR) / 2, then to the smaller
// threshold, so a zero-error gap yields its midpoint.
inline EerResult eer_threshold(const std::vector<ScoredSample>& dev) {
  const auto s = detail::split_sorted(dev, "eer_threshold");
  std::vector<double> scores;
  scores.reserve(dev.size());
  for (const auto& x : dev) scores.push_back(x.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> t;
  t.reserve(2 * scores.size() + 1);
  t.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i > 0)
      if (auto m = midpoint(scores[i - 1], scores[i])) t.push_back(*m);
    t.push_back(scores[i]);
  }
  t.push_back(std::numeric_limits<double>::infinity());
  RocPoint best = detail::point_at(s, t.front());
  for (double v : t) {
    const RocPoint p = detail::point_at(s, v);
    const double gap = std::abs(p.far - p.frr), best_gap = std::abs(best.far - best.frr);
    const double sum = p.far + p.frr, best_sum = best.far + best.frr;
    if (std::tie(gap, sum) < std::tie(best_gap, best_sum)) best = p;
  }
  return {best.threshold, (best.far + best.frr) / 2.0 * 100.0, best.far, best.frr};
}

inline OperatingPoint operating_point(const std::vector<ScoredSample>& test, double threshold) {
  const auto s = detail::split_sorted(test, "hter_at_threshold");
  const RocPoint p = detail::point_at(s, threshold);
  return {threshold, p.far, p.frr};
}

// (FAR + FRR) / 2 in percent at a threshold fixed elsewhere.
inline double hter_at_threshold(const std::vector<ScoredSample>& test, double threshold) {
  return operating_point(test, threshold).hter();
}

// Mean score per (dataset, subject, sequence), ordered by that key.
inline std::vector<ScoredSample> aggregate_by_sequence(const std::vector<ScoredSample>& frames) {
  struct Acc {
    double sum = 0;
    std::size_t n = 0;
    Truth truth;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Acc> groups;
  for (const auto& f : frames) {
    auto [it, fresh] = groups.try_emplace({f.dataset, f.subject_id, f.sequence_id}, Acc{0, 0, f.truth});
    if (!fresh && it->second.truth != f.truth)
      throw ConfigError("sequence " + f.sequence_id + " mixes genuine and attack frames");
    it->second.sum += f.score;
    ++it->second.n;
  }
  std::vector<ScoredSample> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups)
    out.push_back({acc.sum / double(acc.n), acc.truth, std::get<0>(key), std::get<1>(key), std::get<2>(key)});
  return out;
}

enum class ScoreLevel { Frame, Sequence };

inline std::vector<ScoredSample> at_level(const std::vector<ScoredSample>& frames, ScoreLevel level) {
  return level == ScoreLevel::Sequence ? aggregate_by_sequence(frames) : frames;
}

}  // namespace antispoof::eval

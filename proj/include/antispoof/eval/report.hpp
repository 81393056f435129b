#pragma once

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/eval/roc.hpp"

namespace antispoof::eval {

inline constexpr int kScales = 5;
inline constexpr int kFrameCounts = 3;

struct ScenarioResult {
  int scale_index = 1;
  int frame_count = 1;
  double dev_eer = 0;    // percent
  double test_hter = 0;  // percent
  std::vector<double> thresholds;  // one per fold, never averaged
  std::vector<RocPoint> roc;       // test-set ROC of the first fold
};

// Fold means of dev EER and test HTER.
inline ScenarioResult aggregate_cross_validation(const std::vector<ScenarioResult>& folds) {
  if (folds.empty()) throw ConfigError("aggregate_cross_validation: no fold results");
  ScenarioResult out;
  out.scale_index = folds.front().scale_index;
  out.frame_count = folds.front().frame_count;
  out.roc = folds.front().roc;
  double dev = 0, test = 0;
  for (const auto& f : folds) {
    if (f.scale_index != out.scale_index || f.frame_count != out.frame_count)
      throw ConfigError("aggregate_cross_validation: folds from different cells");
    dev += f.dev_eer;
    test += f.test_hter;
    out.thresholds.insert(out.thresholds.end(), f.thresholds.begin(), f.thresholds.end());
  }
  out.dev_eer = dev / double(folds.size());
  out.test_hter = test / double(folds.size());
  return out;
}

struct CellValue {
  double dev = 0, test = 0;
};

// Rows are frame counts 1..3, columns scale indices 1..5.
struct EvalReport {
  std::array<std::array<std::optional<CellValue>, kScales>, kFrameCounts> cells{};
  std::array<std::optional<CellValue>, kFrameCounts> row_mean{};
  std::array<std::optional<CellValue>, kScales> column_mean{};
  std::optional<CellValue> grand_mean;

  const std::optional<CellValue>& cell(int frames, int scale) const {
    return cells.at(std::size_t(frames - 1)).at(std::size_t(scale - 1));
  }
};

namespace detail {

inline std::optional<CellValue> mean_of(const std::vector<CellValue>& v) {
  if (v.empty()) return std::nullopt;
  CellValue m;
  for (const auto& c : v) {
    m.dev += c.dev;
    m.test += c.test;
  }
  m.dev /= double(v.size());
  m.test /= double(v.size());
  return m;
}

}  // namespace detail

// Means over whichever cells are present.
inline EvalReport build_partial_report(const std::vector<ScenarioResult>& results) {
  EvalReport r;
  for (const auto& s : results) {
    if (s.scale_index < 1 || s.scale_index > kScales || s.frame_count < 1 || s.frame_count > kFrameCounts)
      throw ConfigError("build_report: cell (frames " + std::to_string(s.frame_count) + ", scale " +
                        std::to_string(s.scale_index) + ") is outside the grid");
    auto& slot = r.cells[std::size_t(s.frame_count - 1)][std::size_t(s.scale_index - 1)];
    if (slot) throw ConfigError("build_report: duplicate cell");
    slot = CellValue{s.dev_eer, s.test_hter};
  }
  std::vector<CellValue> all;
  for (int f = 0; f < kFrameCounts; ++f) {
    std::vector<CellValue> row;
    for (int s = 0; s < kScales; ++s)
      if (const auto& c = r.cells[std::size_t(f)][std::size_t(s)]) row.push_back(*c);
    r.row_mean[std::size_t(f)] = detail::mean_of(row);
    all.insert(all.end(), row.begin(), row.end());
  }
  for (int s = 0; s < kScales; ++s) {
    std::vector<CellValue> col;
    for (int f = 0; f < kFrameCounts; ++f)
      if (const auto& c = r.cells[std::size_t(f)][std::size_t(s)]) col.push_back(*c);
    r.column_mean[std::size_t(s)] = detail::mean_of(col);
  }
  r.grand_mean = detail::mean_of(all);
  return r;
}

// Requires the full 5 x 3 grid.
inline EvalReport build_report(const std::vector<ScenarioResult>& results) {
  EvalReport r = build_partial_report(results);
  std::string missing;
  for (int f = 1; f <= kFrameCounts; ++f)
    for (int s = 1; s <= kScales; ++s)
      if (!r.cell(f, s)) missing += " (frames " + std::to_string(f) + ", scale " + std::to_string(s) + ")";
  if (!missing.empty()) throw ConfigError("build_report: missing cells" + missing);
  return r;
}

namespace detail {

inline std::string fmt2(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

inline std::optional<double> dev_of(const std::optional<CellValue>& c) {
  return c ? std::optional<double>(c->dev) : std::nullopt;
}
inline std::optional<double> test_of(const std::optional<CellValue>& c) {
  return c ? std::optional<double>(c->test) : std::nullopt;
}

}  // namespace detail

// Table I layout: one row per frame count plus Mean, dev/test column pairs.
inline std::string report_csv(const EvalReport& r) {
  std::string out = "frames";
  for (int s = 1; s <= kScales; ++s)
    out += ",scale" + std::to_string(s) + "_dev,scale" + std::to_string(s) + "_test";
  out += ",mean_dev,mean_test\n";
  auto row = [&](const std::string& name, auto cell_at, const std::optional<CellValue>& mean) {
    out += name;
    for (int s = 1; s <= kScales; ++s) {
      const auto& c = cell_at(s);
      out += "," + detail::fmt2(detail::dev_of(c)) + "," + detail::fmt2(detail::test_of(c));
    }
    out += "," + detail::fmt2(detail::dev_of(mean)) + "," + detail::fmt2(detail::test_of(mean)) + "\n";
  };
  for (int f = 1; f <= kFrameCounts; ++f)
    row(std::to_string(f), [&](int s) -> const std::optional<CellValue>& { return r.cell(f, s); },
        r.row_mean[std::size_t(f - 1)]);
  row("Mean", [&](int s) -> const std::optional<CellValue>& { return r.column_mean[std::size_t(s - 1)]; },
      r.grand_mean);
  return out;
}

// Table IV layout for one shared model: the dev row is shared, then one test
// row per evaluated dataset. Each report carries the same dev values.
inline std::string combined_report_csv(const std::vector<std::pair<std::string, EvalReport>>& per_dataset) {
  if (per_dataset.empty()) throw ConfigError("combined report needs at least one dataset");
  std::string out = "frames,set";
  for (int s = 1; s <= kScales; ++s) out += ",scale" + std::to_string(s);
  out += ",mean\n";
  auto emit = [&](const std::string& frames, const std::string& set, auto value_at, const std::optional<double>& mean) {
    out += frames + "," + set;
    for (int s = 1; s <= kScales; ++s) out += "," + detail::fmt2(value_at(s));
    out += "," + detail::fmt2(mean) + "\n";
  };
  const EvalReport& first = per_dataset.front().second;
  for (int f = 0; f <= kFrameCounts; ++f) {
    const bool mean_row = f == kFrameCounts;
    const std::string name = mean_row ? "Mean" : std::to_string(f + 1);
    auto cell = [&](const EvalReport& r, int s) -> const std::optional<CellValue>& {
      return mean_row ? r.column_mean[std::size_t(s - 1)] : r.cell(f + 1, s);
    };
    auto agg = [&](const EvalReport& r) -> const std::optional<CellValue>& {
      return mean_row ? r.grand_mean : r.row_mean[std::size_t(f)];
    };
    emit(name, "dev", [&](int s) { return detail::dev_of(cell(first, s)); }, detail::dev_of(agg(first)));
    for (const auto& [dataset, r] : per_dataset)
      emit(name, "test:" + dataset, [&](int s) { return detail::test_of(cell(r, s)); }, detail::test_of(agg(r)));
  }
  return out;
}

}  // namespace antispoof::eval

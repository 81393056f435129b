#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/eval/roc.hpp"

namespace antispoof::eval {

inline constexpr const char* kScoreHeader = "dataset,subject_id,sequence_id,truth,score";
inline constexpr const char* kRocHeader = "threshold,far,frr";

inline std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw ConfigError("score file field contains a separator: " + s);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace detail

inline std::string scores_csv(const std::vector<ScoredSample>& samples) {
  std::string out = std::string(kScoreHeader) + "\n";
  for (const auto& s : samples) {
    for (const auto* f : {&s.dataset, &s.subject_id, &s.sequence_id}) detail::check_field(*f);
    out += s.dataset + "," + s.subject_id + "," + s.sequence_id + "," +
           (s.truth == Truth::Genuine ? "genuine" : "attack") + "," + format_real(s.score) + "\n";
  }
  return out;
}

inline void write_scores(const std::filesystem::path& path, const std::vector<ScoredSample>& samples) {
  detail::write_text(path, scores_csv(samples));
}

inline std::vector<ScoredSample> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kScoreHeader)
    throw ParseError(1, "score file header must be '" + std::string(kScoreHeader) + "'");
  std::vector<ScoredSample> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw ParseError(n, "expected 5 fields");
    ScoredSample s;
    s.dataset = f[0];
    s.subject_id = f[1];
    s.sequence_id = f[2];
    if (f[3] == "genuine") s.truth = Truth::Genuine;
    else if (f[3] == "attack") s.truth = Truth::Attack;
    else throw ParseError(n, "truth must be genuine or attack");
    std::size_t used = 0;
    try {
      s.score = std::stod(f[4], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f[4].size() || !std::isfinite(s.score)) throw ParseError(n, "bad score '" + f[4] + "'");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string roc_csv(const std::vector<RocPoint>& roc) {
  std::string out = std::string(kRocHeader) + "\n";
  for (const auto& p : roc) out += format_real(p.threshold) + "," + format_real(p.far) + "," + format_real(p.frr) + "\n";
  return out;
}

inline void write_roc(const std::filesystem::path& path, const std::vector<RocPoint>& roc) {
  detail::write_text(path, roc_csv(roc));
}

}  // namespace antispoof::eval

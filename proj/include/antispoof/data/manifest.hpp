#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "antispoof/data/geometry.hpp"
#include "antispoof/error.hpp"

namespace antispoof::data {

enum class Dataset { CASIA, REPLAY, SYNTH };
enum class Split { Train, Dev, Test };
enum class Label { Attack = 0, Genuine = 1 };

inline const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::CASIA: return "CASIA";
    case Dataset::REPLAY: return "REPLAY";
    case Dataset::SYNTH: return "SYNTH";
  }
  return "?";
}
inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}
inline const char* to_string(Label l) { return l == Label::Genuine ? "genuine" : "attack"; }

inline std::optional<Dataset> dataset_from_string(const std::string& s) {
  if (s == "CASIA") return Dataset::CASIA;
  if (s == "REPLAY") return Dataset::REPLAY;
  if (s == "SYNTH") return Dataset::SYNTH;
  return std::nullopt;
}
inline std::optional<Split> split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  return std::nullopt;
}
inline std::optional<Label> label_from_string(const std::string& s) {
  if (s == "genuine") return Label::Genuine;
  if (s == "attack") return Label::Attack;
  return std::nullopt;
}

struct FrameRecord {
  Dataset dataset = Dataset::SYNTH;
  Split split = Split::Train;
  std::string subject_id;
  std::string sequence_id;
  std::int64_t frame_index = 0;
  std::string image_path;  // relative to the manifest directory
  Label label = Label::Genuine;
  std::vector<Point> landmarks;
  std::optional<RegionBox> bbox;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

// Landmarks win when both are present; otherwise the given box is the face.
inline RegionBox face_region(const FrameRecord& r) {
  if (!r.landmarks.empty()) return landmarks_bbox(r.landmarks);
  if (r.bbox) return *r.bbox;
  throw DegenerateLandmarksError("record " + r.sequence_id + "/" +
                                 std::to_string(r.frame_index) + " has neither landmarks nor bbox");
}

inline bool record_less(const FrameRecord& a, const FrameRecord& b) {
  return std::tie(a.dataset, a.subject_id, a.sequence_id, a.frame_index) <
         std::tie(b.dataset, b.subject_id, b.sequence_id, b.frame_index);
}

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<FrameRecord> records;

  std::filesystem::path image_file(const FrameRecord& r) const { return base_dir / r.image_path; }
};

inline nlohmann::json record_to_json(const FrameRecord& r) {
  nlohmann::json j;
  j["dataset"] = to_string(r.dataset);
  j["split"] = to_string(r.split);
  j["subject_id"] = r.subject_id;
  j["sequence_id"] = r.sequence_id;
  j["frame_index"] = r.frame_index;
  j["image_path"] = r.image_path;
  j["label"] = to_string(r.label);
  if (!r.landmarks.empty()) {
    auto& lm = j["landmarks"] = nlohmann::json::array();
    for (const Point& p : r.landmarks) lm.push_back({p.x, p.y});
  }
  if (r.bbox) j["bbox"] = {r.bbox->x, r.bbox->y, r.bbox->w, r.bbox->h};
  return j;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, std::string("missing field \"") + key + "\"");
  return *it;
}

inline std::string string_field(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = field(j, key, line);
  if (!v.is_string()) throw ParseError(line, std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

template <typename E>
E enum_field(const nlohmann::json& j, const char* key, std::size_t line,
             std::optional<E> (*parse)(const std::string&)) {
  const std::string s = string_field(j, key, line);
  auto e = parse(s);
  if (!e) throw ParseError(line, std::string("bad value \"") + s + "\" for \"" + key + "\"");
  return *e;
}

inline double number(const nlohmann::json& v, std::size_t line) {
  if (!v.is_number()) throw ParseError(line, "expected a number");
  return v.get<double>();
}

}  // namespace detail

inline FrameRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  FrameRecord r;
  r.dataset = detail::enum_field<Dataset>(j, "dataset", line, dataset_from_string);
  r.split = detail::enum_field<Split>(j, "split", line, split_from_string);
  r.subject_id = detail::string_field(j, "subject_id", line);
  r.sequence_id = detail::string_field(j, "sequence_id", line);
  const auto& fi = detail::field(j, "frame_index", line);
  if (!fi.is_number_integer() || fi.get<std::int64_t>() < 0)
    throw ParseError(line, "\"frame_index\" must be a non-negative integer");
  r.frame_index = fi.get<std::int64_t>();
  r.image_path = detail::string_field(j, "image_path", line);
  r.label = detail::enum_field<Label>(j, "label", line, label_from_string);
  if (auto it = j.find("landmarks"); it != j.end()) {
    if (!it->is_array()) throw ParseError(line, "\"landmarks\" must be an array");
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2) throw ParseError(line, "landmark must be [x, y]");
      r.landmarks.push_back({detail::number(p[0], line), detail::number(p[1], line)});
    }
  }
  if (auto it = j.find("bbox"); it != j.end()) {
    if (!it->is_array() || it->size() != 4) throw ParseError(line, "\"bbox\" must be [x, y, w, h]");
    RegionBox b{detail::number((*it)[0], line), detail::number((*it)[1], line),
                detail::number((*it)[2], line), detail::number((*it)[3], line)};
    if (!(b.w > 0) || !(b.h > 0)) throw ParseError(line, "\"bbox\" extents must be positive");
    r.bbox = b;
  }
  if (r.landmarks.empty() && !r.bbox) throw ParseError(line, "record needs landmarks or bbox");
  return r;
}

inline Manifest parse_manifest(std::istream& in, std::filesystem::path base_dir) {
  Manifest m{std::move(base_dir), {}};
  std::map<std::tuple<Dataset, std::string, std::string>, std::set<std::int64_t>> seen;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    FrameRecord r = record_from_json(j, line);
    if (!seen[{r.dataset, r.subject_id, r.sequence_id}].insert(r.frame_index).second) {
      throw ParseError(line, "duplicate frame_index " + std::to_string(r.frame_index) +
                                 " in sequence " + r.sequence_id);
    }
    m.records.push_back(std::move(r));
  }
  std::stable_sort(m.records.begin(), m.records.end(), record_less);
  return m;
}

// Reads a JSON-Lines manifest and checks that every image exists.
inline Manifest load_manifest(const std::filesystem::path& path, bool check_assets = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m = parse_manifest(in, path.parent_path());
  if (check_assets) {
    for (const auto& r : m.records) {
      if (!std::filesystem::exists(m.image_file(r)))
        throw MissingAssetError("missing image " + m.image_file(r).string());
    }
  }
  return m;
}

inline std::string manifest_text(const std::vector<FrameRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<FrameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_text(records);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace antispoof::data

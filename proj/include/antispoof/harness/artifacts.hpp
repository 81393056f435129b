#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "antispoof/data/samples.hpp"
#include "antispoof/error.hpp"
#include "antispoof/nn/tensor.hpp"

namespace antispoof::harness {

// One row of a prepared or extracted set.
struct SampleMeta {
  data::Label label = data::Label::Genuine;
  data::Provenance source;
  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

// Samples stacked along the first axis: [N, ...].
struct SampleSet {
  std::vector<SampleMeta> meta;
  nn::Tensorf values;

  std::size_t size() const { return meta.size(); }
  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

inline SampleSet to_sample_set(const std::vector<data::SampleTensor>& samples) {
  if (samples.empty()) throw EmptyDatasetError("no samples to stack");
  SampleSet s;
  nn::Shape shape = samples.front().data.shape();
  std::vector<float> v;
  v.reserve(samples.size() * samples.front().data.size());
  for (const auto& t : samples) {
    nn::require_shape(t.data, shape, "sample set");
    v.insert(v.end(), t.data.values().begin(), t.data.values().end());
    s.meta.push_back({t.label, t.source});
  }
  shape.insert(shape.begin(), samples.size());
  s.values = nn::Tensorf(shape, std::move(v));
  return s;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError(source_ + ": truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t u64() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > bytes_.size()) throw IoError(source_ + ": bad string length");
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Little-endian: "ASSS", version, rank, dims, per-row metadata, float32 values.
inline std::string serialize_sample_set(const SampleSet& s) {
  if (s.values.rank() < 1 || s.values.dim(0) != s.meta.size())
    throw ShapeError("sample set: value rows do not match metadata");
  std::string out = "ASSS";
  detail::put_u64(out, 1);
  detail::put_u64(out, s.values.rank());
  for (std::size_t d : s.values.shape()) detail::put_u64(out, d);
  for (const auto& m : s.meta) {
    detail::put_u64(out, m.label == data::Label::Genuine ? 1 : 0);
    detail::put_str(out, m.source.dataset);
    detail::put_str(out, m.source.subject_id);
    detail::put_str(out, m.source.sequence_id);
    detail::put_u64(out, std::bit_cast<std::uint64_t>(m.source.first_frame));
  }
  for (float f : s.values.values()) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
  }
  return out;
}

inline SampleSet deserialize_sample_set(const std::string& bytes, const std::string& source) {
  detail::Reader in(bytes, source);
  if (std::memcmp(in.take(4), "ASSS", 4) != 0) throw IoError(source + ": bad magic");
  if (in.u64() != 1) throw IoError(source + ": unsupported version");
  const std::uint64_t rank = in.u64();
  if (rank < 1 || rank > 8) throw IoError(source + ": bad rank");
  nn::Shape shape;
  std::size_t total = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    shape.push_back(std::size_t(in.u64()));
    total *= shape.back();
  }
  if (total > bytes.size()) throw IoError(source + ": bad shape");
  SampleSet s;
  for (std::size_t i = 0; i < shape[0]; ++i) {
    SampleMeta m;
    m.label = in.u64() ? data::Label::Genuine : data::Label::Attack;
    m.source.dataset = in.str();
    m.source.subject_id = in.str();
    m.source.sequence_id = in.str();
    m.source.first_frame = std::bit_cast<std::int64_t>(in.u64());
    s.meta.push_back(std::move(m));
  }
  std::vector<float> v(total);
  for (auto& f : v) {
    const auto* p = reinterpret_cast<const unsigned char*>(in.take(4));
    f = std::bit_cast<float>(std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                             std::uint32_t(p[3]) << 24);
  }
  if (!in.done()) throw IoError(source + ": trailing bytes");
  s.values = nn::Tensorf(shape, std::move(v));
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw IoError("cannot write " + path.string());
}

inline void save_sample_set(const std::filesystem::path& path, const SampleSet& s) {
  write_file(path, serialize_sample_set(s));
}

inline SampleSet load_sample_set(const std::filesystem::path& path) {
  return deserialize_sample_set(read_file(path), path.string());
}

// 64-bit FNV-1a, used for cache keys and content digests.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view s) {
    for (unsigned char c : s) h_ = (h_ ^ c) * 1099511628211ull;
    h_ = (h_ ^ 0xFFu) * 1099511628211ull;  // field separator
    return *this;
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

}  // namespace antispoof::harness

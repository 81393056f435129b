#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/nn/network.hpp"

namespace antispoof::nn {

// Binary layout:
//   "ASCK" | u32 version | u32 n | n bytes of NetworkSpec JSON
//   | per parameterised layer in order: weight f32[], bias f32[]
//   | training mean f32[C*H*W]
// All integers and floats little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  NetworkSpec spec;
  Parameters<float> parameters;
  Tensor<float> mean;  // [C,H,W]
  std::uint32_t version = kVersion;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_floats(std::string& out, const Tensor<float>& t) {
  for (float f : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError(source_ + ": truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }

  void floats(Tensor<float>& t) {
    for (auto& f : t.values()) f = std::bit_cast<float>(u32());
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto shapes = infer_shapes(ck.spec);
  require_shape(ck.mean, ck.spec.input_shape(), "checkpoint mean");
  std::string out = "ASCK";
  detail::put_u32(out, ck.version);
  const std::string spec_json = to_json(ck.spec).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(spec_json.size()));
  out += spec_json;
  for (std::size_t i = 0; i < ck.spec.layers.size(); ++i) {
    if (!ck.spec.layers[i].has_parameters()) continue;
    auto [ws, bs] = parameter_shapes(ck.spec, i, shapes);
    require_shape(ck.parameters.at(i).weight, ws, "checkpoint weight");
    require_shape(ck.parameters.at(i).bias, bs, "checkpoint bias");
    detail::put_floats(out, ck.parameters[i].weight);
    detail::put_floats(out, ck.parameters[i].bias);
  }
  detail::put_floats(out, ck.mean);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes,
                                         const std::string& source = "checkpoint") {
  detail::ByteReader in(bytes, source);
  if (std::memcmp(in.take(4), "ASCK", 4) != 0) throw IoError(source + ": bad magic");
  Checkpoint ck;
  ck.version = in.u32();
  if (ck.version != Checkpoint::kVersion)
    throw IoError(source + ": unsupported checkpoint version " + std::to_string(ck.version));
  const std::uint32_t n = in.u32();
  const char* text = in.take(n);
  try {
    ck.spec = network_from_json(nlohmann::json::parse(text, text + n));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(source + ": malformed spec block: " + e.what());
  }
  ck.parameters = zero_parameters<float>(ck.spec);
  for (auto& lp : ck.parameters) {
    if (lp.weight.empty()) continue;
    in.floats(lp.weight);
    in.floats(lp.bias);
  }
  ck.mean = Tensor<float>(ck.spec.input_shape());
  in.floats(ck.mean);
  if (!in.done()) throw IoError(source + ": trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

}  // namespace antispoof::nn

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "antispoof/data/geometry.hpp"
#include "antispoof/data/image.hpp"
#include "antispoof/data/manifest.hpp"
#include "antispoof/error.hpp"

namespace antispoof::data {

// Enlargement ratio of the face box for scale indices 1..5.
inline constexpr std::array<double, 5> kScaleRatios = {1.0, 1.4, 1.8, 2.2, 2.6};
inline constexpr std::size_t kMaxFrames = 3;

inline double scale_ratio(int scale_index) {
  if (scale_index < 1 || scale_index > int(kScaleRatios.size()))
    throw ConfigError("scale index must be in 1..5, got " + std::to_string(scale_index));
  return kScaleRatios[std::size_t(scale_index - 1)];
}

inline void check_frame_count(int frames) {
  if (frames < 1 || frames > int(kMaxFrames))
    throw ConfigError("frame count must be in 1..3, got " + std::to_string(frames));
}

struct Provenance {
  std::string dataset;
  std::string subject_id;
  std::string sequence_id;
  std::int64_t first_frame = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// One cropped frame and where it came from.
struct Crop {
  Tensorf pixels;  // [3,128,128]
  Provenance source;
  int scale_index = 1;
};

struct SampleTensor {
  Tensorf data;  // [3F,128,128]
  Label label = Label::Genuine;
  int scale_index = 1;
  int frame_count = 1;
  Provenance source;
};

inline Crop crop_record(const FrameRecord& r, const Image& im, int scale_index) {
  const RegionBox box = expand_region(face_region(r), scale_ratio(scale_index),
                                      double(image_width(im)), double(image_height(im)));
  return {crop_resize(im, box), {to_string(r.dataset), r.subject_id, r.sequence_id, r.frame_index},
          scale_index};
}

// Channel concatenation in temporal order.
inline Tensorf stack_frames(const std::vector<Crop>& crops) {
  if (crops.empty() || crops.size() > kMaxFrames)
    throw TemporalError("stack_frames: need 1..3 frames, got " + std::to_string(crops.size()));
  const Crop& first = crops.front();
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const Crop& c = crops[i];
    nn::require_shape(c.pixels, {3, kCropSize, kCropSize}, "stack_frames");
    if (c.source.dataset != first.source.dataset || c.source.subject_id != first.source.subject_id ||
        c.source.sequence_id != first.source.sequence_id)
      throw TemporalError("stack_frames: frames from different sequences");
    if (c.scale_index != first.scale_index) throw TemporalError("stack_frames: mixed scales");
    if (c.source.first_frame != first.source.first_frame + std::int64_t(i))
      throw TemporalError("stack_frames: frame " + std::to_string(c.source.first_frame) +
                          " does not follow " + std::to_string(first.source.first_frame + std::int64_t(i) - 1));
  }
  std::vector<float> data;
  data.reserve(crops.size() * first.pixels.size());
  for (const Crop& c : crops) data.insert(data.end(), c.pixels.values().begin(), c.pixels.values().end());
  return Tensorf({3 * crops.size(), kCropSize, kCropSize}, std::move(data));
}

enum class WindowMode { Tile, Slide };

// Start offsets of length-F windows in a run of n consecutive frames.
inline std::vector<std::size_t> frame_windows(std::size_t n, std::size_t frames, WindowMode mode) {
  std::vector<std::size_t> starts;
  if (frames == 0 || n < frames) return starts;
  const std::size_t step = mode == WindowMode::Tile ? frames : 1;
  for (std::size_t s = 0; s + frames <= n; s += step) starts.push_back(s);
  return starts;
}

struct SampleRequest {
  Split split = Split::Train;
  int scale_index = 3;
  int frames = 1;
  WindowMode windows = WindowMode::Tile;
};

// Crops and stacks every window of one split. Records must be sorted, as
// load_manifest leaves them; sequences with gaps are cut into consecutive runs.
inline std::vector<SampleTensor> build_samples(const Manifest& m, const SampleRequest& req) {
  check_frame_count(req.frames);
  scale_ratio(req.scale_index);
  std::vector<const FrameRecord*> split;
  for (const auto& r : m.records)
    if (r.split == req.split) split.push_back(&r);

  std::vector<SampleTensor> out;
  std::size_t i = 0;
  while (i < split.size()) {
    std::size_t j = i + 1;
    while (j < split.size() && split[j]->dataset == split[i]->dataset &&
           split[j]->subject_id == split[i]->subject_id &&
           split[j]->sequence_id == split[i]->sequence_id &&
           split[j]->frame_index == split[j - 1]->frame_index + 1)
      ++j;
    std::vector<Crop> run;
    for (std::size_t k = i; k < j; ++k)
      run.push_back(crop_record(*split[k], read_png(m.image_file(*split[k])), req.scale_index));
    for (std::size_t s : frame_windows(run.size(), std::size_t(req.frames), req.windows)) {
      std::vector<Crop> window(run.begin() + std::ptrdiff_t(s),
                               run.begin() + std::ptrdiff_t(s) + req.frames);
      SampleTensor t;
      t.data = stack_frames(window);
      t.label = split[i + s]->label;
      t.scale_index = req.scale_index;
      t.frame_count = req.frames;
      t.source = window.front().source;
      out.push_back(std::move(t));
    }
    i = j;
  }
  return out;
}

struct MeanStats {
  Tensorf mean;
};

inline MeanStats compute_mean(const std::vector<SampleTensor>& samples) {
  if (samples.empty()) throw EmptyDatasetError("compute_mean: no training samples");
  const nn::Shape shape = samples.front().data.shape();
  std::vector<double> acc(samples.front().data.size(), 0.0);
  for (const auto& s : samples) {
    nn::require_shape(s.data, shape, "compute_mean");
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += s.data[k];
  }
  Tensorf mean(shape);
  for (std::size_t k = 0; k < acc.size(); ++k) mean[k] = float(acc[k] / double(samples.size()));
  return {std::move(mean)};
}

inline Tensorf centralize(const Tensorf& sample, const MeanStats& m) {
  nn::require_shape(sample, m.mean.shape(), "centralize");
  Tensorf out = sample;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= m.mean[k];
  return out;
}

// Stacks centred samples into a [N,C,H,W] batch.
inline Tensorf batch_of(const std::vector<SampleTensor>& samples, const MeanStats& m) {
  if (samples.empty()) throw EmptyDatasetError("batch_of: no samples");
  const nn::Shape s = m.mean.shape();
  std::vector<float> data;
  data.reserve(samples.size() * m.mean.size());
  for (const auto& smp : samples) {
    Tensorf c = centralize(smp.data, m);
    data.insert(data.end(), c.values().begin(), c.values().end());
  }
  return Tensorf({samples.size(), s[0], s[1], s[2]}, std::move(data));
}

}  // namespace antispoof::data

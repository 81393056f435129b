#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "antispoof/data/geometry.hpp"
#include "antispoof/data/image.hpp"
#include "antispoof/data/manifest.hpp"
#include "antispoof/error.hpp"

namespace antispoof::data {

// Appearance knobs of one synthetic capture domain. Two domains with
// different knobs give a train/target pair with a controlled gap.
struct SynthDomain {
  // background: base RGB and per-subject jitter
  std::array<float, 3> background{0.55f, 0.45f, 0.35f};
  float background_jitter = 0.12f;
  float sensor_noise = 0.02f;
  // genuine captures get a little defocus too, so faces alone do not separate perfectly
  float genuine_blur_max = 0.9f;
  float attack_blur_min = 0.5f;
  float attack_blur_max = 1.6f;
  float attack_contrast_min = 0.70f;
  float attack_contrast_max = 0.95f;
  int specular_blobs = 2;
  float specular_strength = 0.35f;
  // frame of the printed photo or screen, in multiples of the face box
  float border_probability = 1.0f;
  float border_ratio_min = 1.35f;
  float border_ratio_max = 1.75f;
  int border_thickness_min = 3;
  int border_thickness_max = 4;
  std::array<float, 3> border_color{0.08f, 0.08f, 0.09f};
  float moire_amplitude = 0.0f;
  float moire_period = 5.0f;  // pixels
  float tint = 0.0f;          // added to blue, removed from red
};

inline SynthDomain shifted_domain() {
  SynthDomain d;
  d.background = {0.35f, 0.45f, 0.6f};
  d.sensor_noise = 0.03f;
  d.attack_blur_min = 0.2f;
  d.attack_blur_max = 0.8f;
  d.attack_contrast_min = 0.85f;
  d.attack_contrast_max = 1.0f;
  d.specular_blobs = 0;
  d.border_probability = 0.0f;
  d.moire_amplitude = 0.06f;
  d.tint = 0.05f;
  return d;
}

struct SynthConfig {
  Dataset dataset = Dataset::SYNTH;
  std::string subject_prefix = "s";
  std::size_t train_subjects = 10;
  std::size_t dev_subjects = 5;
  std::size_t test_subjects = 5;
  std::size_t genuine_sequences = 1;  // per subject
  std::size_t attack_sequences = 1;   // per subject
  std::size_t frames_per_sequence = 10;
  std::size_t image_size = 200;
  double face_height = 64;
  SynthDomain domain;
};

// Ground truth the generator knows about a frame, for post-condition checks.
struct SynthFrameTruth {
  RegionBox face;
  std::optional<RegionBox> border;  // outer rectangle of the attack frame
  int border_thickness = 0;
};

struct SynthResult {
  Manifest manifest;
  std::vector<SynthFrameTruth> truth;  // parallel to manifest.records
};

namespace synth_detail {

inline void gaussian_blur(Image& im, float sigma) {
  if (sigma <= 0.05f) return;
  const int r = int(std::ceil(3.0f * sigma));
  std::vector<float> k(std::size_t(2 * r + 1));
  float sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[std::size_t(i + r)] = std::exp(-0.5f * float(i * i) / (sigma * sigma));
  for (float& v : k) v /= sum;
  const long h = long(im.dim(1)), w = long(im.dim(2));
  Image tmp = im;
  for (std::size_t c = 0; c < 3; ++c) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        float s = 0;
        for (int i = -r; i <= r; ++i) s += k[std::size_t(i + r)] * im.at(c, std::size_t(y), std::size_t(std::clamp(x + i, 0L, w - 1)));
        tmp.at(c, std::size_t(y), std::size_t(x)) = s;
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        float s = 0;
        for (int i = -r; i <= r; ++i) s += k[std::size_t(i + r)] * tmp.at(c, std::size_t(std::clamp(y + i, 0L, h - 1)), std::size_t(x));
        im.at(c, std::size_t(y), std::size_t(x)) = s;
      }
  }
}

struct Subject {
  std::array<float, 3> skin;
  std::array<float, 3> background;
  float aspect;  // face width / height
  float eye_gap, eye_height, mouth_width;
  float texture_freq[3], texture_phase[3];
  float stripe_angle;
};

inline Subject make_subject(std::mt19937_64& rng, const SynthDomain& d) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Subject s;
  const float tone = 0.45f + 0.35f * u(rng);
  s.skin = {std::min(1.0f, tone + 0.15f), tone, std::max(0.0f, tone - 0.1f)};
  for (int c = 0; c < 3; ++c)
    s.background[std::size_t(c)] = std::clamp(d.background[std::size_t(c)] + d.background_jitter * (2 * u(rng) - 1), 0.0f, 1.0f);
  s.aspect = 0.74f + 0.1f * u(rng);
  s.eye_gap = 0.34f + 0.08f * u(rng);
  s.eye_height = 0.36f + 0.06f * u(rng);
  s.mouth_width = 0.28f + 0.12f * u(rng);
  for (int i = 0; i < 3; ++i) {
    s.texture_freq[i] = 0.9f + 0.8f * u(rng);
    s.texture_phase[i] = 6.283f * u(rng);
  }
  s.stripe_angle = 3.1416f * u(rng);
  return s;
}

struct Placement {
  double cx, cy, fh, fw;
};

// Background plus face; fine skin texture gives genuine captures their
// high-frequency content.
inline Image render_scene(const Subject& s, const Placement& p, std::size_t size,
                          std::mt19937_64& rng) {
  Image im({3, size, size});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const float g0 = 0.9f + 0.2f * u(rng);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const float shade = 0.85f + 0.15f * float(y) / float(size);
      const float stripes = 0.04f * std::sin(0.08f * (std::cos(s.stripe_angle) * float(x) + std::sin(s.stripe_angle) * float(y)));
      for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) = s.background[c] * shade * g0 + stripes;
    }
  const double ax = p.fw / 2, ay = p.fh / 2;
  auto inside = [&](double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  };
  const double eye_y = p.cy - ay + s.eye_height * p.fh;
  const double eye_dx = s.eye_gap * p.fw;
  const double mouth_y = p.cy + 0.3 * p.fh;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = double(x) + 0.5, fy = double(y) + 0.5;
      if (!inside(fx, fy, p.cx, p.cy, ax, ay)) continue;
      float tex = 0;
      for (int i = 0; i < 3; ++i)
        tex += 0.05f * std::sin(s.texture_freq[i] * float(fx + (i + 1) * fy * 0.7) + s.texture_phase[i]);
      tex += 0.06f * (u(rng) - 0.5f);
      float col[3] = {s.skin[0] + tex, s.skin[1] + tex, s.skin[2] + tex};
      if (inside(fx, fy, p.cx - eye_dx / 2, eye_y, 0.09 * p.fw, 0.045 * p.fh) ||
          inside(fx, fy, p.cx + eye_dx / 2, eye_y, 0.09 * p.fw, 0.045 * p.fh)) {
        col[0] = col[1] = col[2] = 0.12f;
      } else if (inside(fx, fy, p.cx, mouth_y, s.mouth_width * p.fw / 2, 0.035 * p.fh)) {
        col[0] = 0.55f; col[1] = 0.2f; col[2] = 0.22f;
      } else if (std::abs(fx - p.cx) < 0.03 * p.fw && fy > eye_y && fy < mouth_y - 0.1 * p.fh) {
        for (float& c : col) c -= 0.12f;
      }
      for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) = col[c];
    }
  return im;
}

inline std::vector<Point> make_landmarks(const Subject& s, const Placement& p, std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 0.4);
  std::vector<Point> pts;
  const double ax = p.fw / 2, ay = p.fh / 2;
  for (int i = 0; i < 17; ++i) {
    const double t = std::numbers::pi * (double(i) / 16.0);
    pts.push_back({p.cx - ax * std::cos(t) + jitter(rng), p.cy + ay * std::sin(t) + jitter(rng)});
  }
  // brows reach the top of the face box
  const double eye_y = p.cy - ay + s.eye_height * p.fh;
  const double eye_dx = s.eye_gap * p.fw;
  for (int side : {-1, 1}) {
    for (int i = 0; i < 3; ++i)
      pts.push_back({p.cx + side * (eye_dx / 2 + (i - 1) * 0.08 * p.fw) + jitter(rng),
                     p.cy - ay + (i == 1 ? 0.0 : 0.05 * p.fh) + jitter(rng)});
    pts.push_back({p.cx + side * eye_dx / 2 + jitter(rng), eye_y + jitter(rng)});
  }
  pts.push_back({p.cx + jitter(rng), p.cy + jitter(rng)});
  pts.push_back({p.cx - s.mouth_width * p.fw / 2 + jitter(rng), p.cy + 0.3 * p.fh + jitter(rng)});
  pts.push_back({p.cx + s.mouth_width * p.fw / 2 + jitter(rng), p.cy + 0.3 * p.fh + jitter(rng)});
  return pts;
}

struct AttackStyle {
  float blur, contrast;
  std::optional<RegionBox> border;
  int thickness = 0;
  std::vector<std::array<float, 3>> blobs;  // x, y, radius relative to the face box
};

inline void apply_attack(Image& im, const AttackStyle& a, const Placement& p, const SynthDomain& d,
                         float phase) {
  gaussian_blur(im, a.blur);
  const std::size_t h = im.dim(1), w = im.dim(2);
  double mean[3] = {0, 0, 0};
  for (std::size_t c = 0; c < 3; ++c) {
    for (float v : std::span<const float>(im.data() + c * h * w, h * w)) mean[c] += v;
    mean[c] /= double(h * w);
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        float& v = im.at(c, y, x);
        v = float(mean[c]) + a.contrast * (v - float(mean[c]));
        if (d.moire_amplitude > 0)
          v += d.moire_amplitude *
               std::sin(2.0f * std::numbers::pi_v<float> * (float(x) + 0.6f * float(y)) / d.moire_period + phase);
      }
  for (const auto& b : a.blobs) {
    const double bx = p.cx + b[0] * p.fw, by = p.cy + b[1] * p.fh, br = b[2] * p.fh;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double r2 = ((double(x) - bx) * (double(x) - bx) + (double(y) - by) * (double(y) - by)) / (br * br);
        if (r2 > 9) continue;
        const float g = d.specular_strength * float(std::exp(-r2));
        for (std::size_t c = 0; c < 3; ++c) im.at(c, y, x) += g;
      }
  }
  if (a.border) {
    const long x0 = std::lround(a.border->x), y0 = std::lround(a.border->y);
    const long x1 = std::lround(a.border->right()), y1 = std::lround(a.border->bottom());
    for (long y = y0; y < y1; ++y)
      for (long x = x0; x < x1; ++x) {
        if (x < 0 || y < 0 || x >= long(w) || y >= long(h)) continue;
        const bool edge = x < x0 + a.thickness || x >= x1 - a.thickness || y < y0 + a.thickness ||
                          y >= y1 - a.thickness;
        if (!edge) continue;
        for (std::size_t c = 0; c < 3; ++c) im.at(c, std::size_t(y), std::size_t(x)) = d.border_color[c];
      }
  }
}

inline void finish(Image& im, const SynthDomain& d, std::mt19937_64& rng) {
  std::normal_distribution<float> noise(0.0f, d.sensor_noise);
  const std::size_t plane = im.dim(1) * im.dim(2);
  for (std::size_t k = 0; k < plane; ++k) {
    im[k] -= d.tint;
    im[2 * plane + k] += d.tint;
  }
  for (float& v : im.values()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
}

}  // namespace synth_detail

// Writes PNG frames and manifest.jsonl under out_dir. Output depends only on
// (config, seed).
inline SynthResult synth_dataset(const SynthConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  using namespace synth_detail;
  const SynthDomain& d = cfg.domain;
  if (cfg.frames_per_sequence == 0 || cfg.train_subjects + cfg.dev_subjects + cfg.test_subjects == 0)
    throw ConfigError("synth: empty configuration");
  if (cfg.face_height * 2.6 > double(cfg.image_size))
    throw ConfigError("synth: image too small for the largest crop");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("synth: cannot create " + out_dir.string() + ": " + ec.message());

  SynthResult result;
  result.manifest.base_dir = out_dir;
  const std::size_t subjects = cfg.train_subjects + cfg.dev_subjects + cfg.test_subjects;
  for (std::size_t si = 0; si < subjects; ++si) {
    const Split split = si < cfg.train_subjects ? Split::Train
                        : si < cfg.train_subjects + cfg.dev_subjects ? Split::Dev
                                                                      : Split::Test;
    char sid[32];
    std::snprintf(sid, sizeof sid, "%02zu", si + 1);
    const std::string subject_id = cfg.subject_prefix + sid;
    std::seed_seq subject_seed{std::uint64_t(seed), std::uint64_t(si), std::uint64_t(0)};
    std::mt19937_64 subject_rng(subject_seed);
    const Subject subject = make_subject(subject_rng, d);

    const std::size_t sequences = cfg.genuine_sequences + cfg.attack_sequences;
    for (std::size_t q = 0; q < sequences; ++q) {
      const bool attack = q >= cfg.genuine_sequences;
      const std::size_t q_local = attack ? q - cfg.genuine_sequences : q;
      const std::string seq_id = subject_id + (attack ? "_a" : "_g") + std::to_string(q_local);
      std::seed_seq seq_seed{std::uint64_t(seed), std::uint64_t(si), std::uint64_t(q + 1)};
      std::mt19937_64 rng(seq_seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);

      const double fh = cfg.face_height * (0.95 + 0.1 * u(rng));
      const double fw = fh * subject.aspect;
      const double c0 = double(cfg.image_size) / 2;
      const double slack = (double(cfg.image_size) - 2.6 * fh) / 2;
      double cx = c0 + (u(rng) - 0.5) * std::min(8.0, slack);
      double cy = c0 + (u(rng) - 0.5) * std::min(8.0, slack);
      const float genuine_blur = float(u(rng)) * d.genuine_blur_max;

      AttackStyle style{};
      if (attack) {
        style.blur = d.attack_blur_min + float(u(rng)) * (d.attack_blur_max - d.attack_blur_min);
        style.contrast = d.attack_contrast_min + float(u(rng)) * (d.attack_contrast_max - d.attack_contrast_min);
        for (int b = 0; b < d.specular_blobs; ++b)
          style.blobs.push_back({float(u(rng) - 0.5) * 0.6f, float(u(rng) - 0.5) * 0.6f, 0.06f + 0.06f * float(u(rng))});
        if (u(rng) < d.border_probability) {
          style.thickness = d.border_thickness_min +
                            int(u(rng) * double(d.border_thickness_max - d.border_thickness_min + 1));
          style.thickness = std::min(style.thickness, d.border_thickness_max);
          const double ratio = d.border_ratio_min + u(rng) * (d.border_ratio_max - d.border_ratio_min);
          style.border = RegionBox{0, 0, fh * ratio * 0.9, fh * ratio};
        }
      }
      const float moire_phase = float(u(rng)) * 6.283f;

      for (std::size_t f = 0; f < cfg.frames_per_sequence; ++f) {
        cx += (u(rng) - 0.5) * 2.0;
        cy += (u(rng) - 0.5) * 2.0;
        cx = std::clamp(cx, c0 - slack + 1, c0 + slack - 1);
        cy = std::clamp(cy, c0 - slack + 1, c0 + slack - 1);
        const Placement place{cx, cy, fh, fw};
        Image im = render_scene(subject, place, cfg.image_size, rng);
        SynthFrameTruth truth;
        if (attack) {
          if (style.border) {
            style.border->x = std::round(cx - style.border->w / 2);
            style.border->y = std::round(cy - style.border->h / 2);
          }
          apply_attack(im, style, place, d, moire_phase);
          truth.border = style.border;
          truth.border_thickness = style.thickness;
        } else {
          gaussian_blur(im, genuine_blur);
        }
        finish(im, d, rng);

        char name[64];
        std::snprintf(name, sizeof name, "%03zu.png", f);
        const std::filesystem::path rel =
            std::filesystem::path(to_string(split)) / subject_id / seq_id / name;
        std::filesystem::create_directories((out_dir / rel).parent_path(), ec);
        if (ec) throw IoError("synth: cannot create directory for " + rel.string());
        write_png(out_dir / rel, im);

        FrameRecord r;
        r.dataset = cfg.dataset;
        r.split = split;
        r.subject_id = subject_id;
        r.sequence_id = seq_id;
        r.frame_index = std::int64_t(f);
        r.image_path = rel.generic_string();
        r.label = attack ? Label::Attack : Label::Genuine;
        r.landmarks = make_landmarks(subject, place, rng);
        truth.face = landmarks_bbox(r.landmarks);
        result.manifest.records.push_back(std::move(r));
        result.truth.push_back(truth);
      }
    }
  }
  std::vector<std::size_t> order(result.truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& recs = result.manifest.records;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return record_less(recs[a], recs[b]); });
  SynthResult sorted;
  sorted.manifest.base_dir = out_dir;
  for (std::size_t i : order) {
    sorted.manifest.records.push_back(recs[i]);
    sorted.truth.push_back(result.truth[i]);
  }
  result = std::move(sorted);
  write_manifest(out_dir / "manifest.jsonl", result.manifest.records);
  return result;
}

}  // namespace antispoof::data

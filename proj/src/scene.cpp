#include "ddn/scene.hpp"

#include <algorithm>
#include <cmath>

namespace ddn {
namespace scene {

namespace {

constexpr double kBaseLevel = 0.3;
constexpr int kMargin = 4;        // keep targets away from the border
constexpr int kPlacementTries = 40;

struct Target {
  double cy = 0, cx = 0;   // center, pixel coordinates
  double vy = 0, vx = 0;   // px/frame
  double amplitude = 0;    // contrast of the brightest pixel
  double sigma = 1;
};

// One bilinear value-noise octave with the given cell size, values scaled to
// [-0.5, 0.5] * amplitude.
void add_value_noise(std::vector<double>& field, int h, int w, int cell,
                     double amplitude, Rng rng) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> lattice((size_t)gh * gw);
  for (auto& v : lattice) v = rng.uniform() - 0.5;
  for (int y = 0; y < h; ++y) {
    const double fy = (double)y / cell;
    const int iy = (int)fy;
    const double ty = fy - iy;
    for (int x = 0; x < w; ++x) {
      const double fx = (double)x / cell;
      const int ix = (int)fx;
      const double tx = fx - ix;
      const double v00 = lattice[(size_t)iy * gw + ix];
      const double v01 = lattice[(size_t)iy * gw + ix + 1];
      const double v10 = lattice[(size_t)(iy + 1) * gw + ix];
      const double v11 = lattice[(size_t)(iy + 1) * gw + ix + 1];
      const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                       ty * ((1 - tx) * v10 + tx * v11);
      field[(size_t)y * w + x] += amplitude * v;
    }
  }
}

std::vector<double> make_clutter(const SceneSpec& spec, Rng rng) {
  std::vector<double> field((size_t)spec.height * spec.width, 0.0);
  for (int k = 0; k < spec.clutter_octaves; ++k) {
    const int cell = std::max(2, 32 >> k);
    add_value_noise(field, spec.height, spec.width, cell,
                    spec.clutter_amplitude * std::pow(0.55, k), rng.split(k));
  }
  return field;
}

// Peak-anchored Gaussian: the amplitude is the contrast of the brightest
// pixel, whatever the subpixel center position.
void render_target(std::vector<double>& img, int h, int w, double cy,
                   double cx, double amplitude, double sigma) {
  const int ny = (int)std::lround(cy), nx = (int)std::lround(cx);
  const double dnear2 = (ny - cy) * (ny - cy) + (nx - cx) * (nx - cx);
  const double peak = amplitude / std::exp(-dnear2 / (2 * sigma * sigma));
  const int r = (int)std::ceil(4 * sigma);
  for (int y = std::max(0, ny - r); y <= std::min(h - 1, ny + r); ++y)
    for (int x = std::max(0, nx - r); x <= std::min(w - 1, nx + r); ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      img[(size_t)y * w + x] += peak * std::exp(-d2 / (2 * sigma * sigma));
    }
}

// Half-amplitude footprint of the rendered target.
void render_mask(Tensor<uint8_t>& mask, int h, int w, double cy, double cx,
                 double amplitude, double sigma) {
  const int ny = (int)std::lround(cy), nx = (int)std::lround(cx);
  const double dnear2 = (ny - cy) * (ny - cy) + (nx - cx) * (nx - cx);
  const double peak = amplitude / std::exp(-dnear2 / (2 * sigma * sigma));
  const int r = (int)std::ceil(4 * sigma);
  for (int y = std::max(0, ny - r); y <= std::min(h - 1, ny + r); ++y)
    for (int x = std::max(0, nx - r); x <= std::min(w - 1, nx + r); ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      if (peak * std::exp(-d2 / (2 * sigma * sigma)) >= amplitude / 2)
        mask[(size_t)y * w + x] = 1;
    }
}

double sample_at(const std::vector<double>& field, int w, int y, int x) {
  return field[(size_t)y * w + x];
}

// Draws targets that neither overlap each other nor saturate the image.
// Placement failures after a bounded number of tries drop the target.
std::vector<Target> place_targets(const SceneSpec& spec,
                                  const std::vector<double>& clutter, Rng rng,
                                  bool integer_centers) {
  std::vector<Target> targets;
  const int count = Rng(rng).uniform_int(spec.targets_min, spec.targets_max);
  for (int t = 0; t < count; ++t) {
    Rng tr = rng.split(t + 1);
    Target tgt;
    tgt.amplitude = tr.uniform(spec.amplitude_min, spec.amplitude_max);
    tgt.sigma = tr.uniform(spec.sigma_min, spec.sigma_max);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      double cy = tr.uniform(kMargin, spec.height - 1 - kMargin);
      double cx = tr.uniform(kMargin, spec.width - 1 - kMargin);
      if (integer_centers) {
        cy = std::floor(cy);
        cx = std::floor(cx);
      }
      bool ok = true;
      for (const Target& other : targets) {
        const double dy = other.cy - cy, dx = other.cx - cx;
        const double min_sep =
            std::max(10.0, 5 * (tgt.sigma + other.sigma));
        if (dy * dy + dx * dx < min_sep * min_sep) ok = false;
      }
      const double bg = kBaseLevel + sample_at(clutter, spec.width,
                                               (int)std::lround(cy),
                                               (int)std::lround(cx));
      if (bg + 1.7 * tgt.amplitude > 0.98) ok = false;
      if (ok) {
        tgt.cy = cy;
        tgt.cx = cx;
        placed = true;
      }
    }
    if (placed) targets.push_back(tgt);
  }
  return targets;
}

Tensor<float> assemble_image(const SceneSpec& spec,
                             const std::vector<double>& clutter,
                             const std::vector<Target>& targets,
                             double frame_time, Rng noise_rng,
                             const std::vector<double>* flicker) {
  const int h = spec.height, w = spec.width;
  std::vector<double> img((size_t)h * w, kBaseLevel);
  for (size_t i = 0; i < img.size(); ++i) {
    img[i] += clutter[i];
    if (flicker) img[i] += (*flicker)[i];
  }
  for (const Target& t : targets)
    render_target(img, h, w, t.cy + t.vy * frame_time,
                  t.cx + t.vx * frame_time, t.amplitude, t.sigma);
  Tensor<float> out({1, h, w});
  for (size_t i = 0; i < img.size(); ++i) {
    const double v = img[i] + spec.noise_sigma * noise_rng.normal();
    out[i] = (float)std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Tensor<uint8_t> assemble_mask(const SceneSpec& spec,
                              const std::vector<Target>& targets,
                              double frame_time) {
  Tensor<uint8_t> mask({spec.height, spec.width});
  for (const Target& t : targets)
    render_mask(mask, spec.height, spec.width, t.cy + t.vy * frame_time,
                t.cx + t.vx * frame_time, t.amplitude, t.sigma);
  return mask;
}

}  // namespace

void SceneSpec::validate() const {
  require(height % 8 == 0 && width % 8 == 0,
          "scene: H and W must be divisible by 8, got ", height, "x", width);
  require(targets_min >= 0 && targets_max >= targets_min,
          "scene: bad target count range");
  require(amplitude_min > 0 && amplitude_max >= amplitude_min,
          "scene: amplitudes must be positive");
  require(sigma_min > 0 && sigma_max >= sigma_min, "scene: bad sigma range");
  require(clutter_octaves >= 0, "scene: bad clutter octave count");
  require(clutter_amplitude >= 0, "scene: clutter amplitude must be >= 0");
  require(noise_sigma >= 0, "scene: noise sigma must be >= 0");
  require(frames_per_clip >= 2, "scene: frames_per_clip must be >= 2");
  require(velocity_min >= 0 && velocity_max >= velocity_min,
          "scene: bad velocity range");
  require(velocity_max <= 2.0,
          "scene: velocity magnitude must be <= 2 px/frame, got ",
          velocity_max);
  require(flicker_amplitude >= 0, "scene: flicker amplitude must be >= 0");
}

LabeledSample gen_frame(const SceneSpec& spec, const Rng& rng_state) {
  spec.validate();
  std::vector<double> clutter = make_clutter(spec, rng_state.split(1));
  std::vector<Target> targets =
      place_targets(spec, clutter, rng_state.split(2), /*integer_centers=*/true);
  LabeledSample s;
  s.image = assemble_image(spec, clutter, targets, 0.0, rng_state.split(3),
                           nullptr);
  s.mask = assemble_mask(spec, targets, 0.0);
  return s;
}

SequenceSample gen_sequence(const SceneSpec& spec, const Rng& rng_state) {
  spec.validate();
  std::vector<double> clutter = make_clutter(spec, rng_state.split(1));
  std::vector<Target> targets = place_targets(
      spec, clutter, rng_state.split(2), /*integer_centers=*/false);

  // Constant-velocity paths, clamped so every frame stays inside the margin.
  Rng vel_rng = rng_state.split(4);
  const int frames = spec.frames_per_clip;
  for (size_t i = 0; i < targets.size(); ++i) {
    Rng tr = vel_rng.split(i);
    const double speed = tr.uniform(spec.velocity_min, spec.velocity_max);
    const double angle = tr.uniform(0.0, 6.283185307179586);
    double vy = speed * std::sin(angle);
    double vx = speed * std::cos(angle);
    double scale = 1.0;
    const double span = frames - 1;
    if (span > 0) {
      auto axis_scale = [&](double pos, double v, double limit_lo,
                            double limit_hi) {
        if (v > 0) return std::min(1.0, (limit_hi - pos) / (v * span));
        if (v < 0) return std::min(1.0, (pos - limit_lo) / (-v * span));
        return 1.0;
      };
      scale = std::min(
          axis_scale(targets[i].cy, vy, kMargin, spec.height - 1 - kMargin),
          axis_scale(targets[i].cx, vx, kMargin, spec.width - 1 - kMargin));
      scale = std::max(0.0, scale);
    }
    targets[i].vy = vy * scale;
    targets[i].vx = vx * scale;
  }

  SequenceSample out;
  Rng frame_rng = rng_state.split(5);
  for (int f = 0; f < frames; ++f) {
    Rng fr = frame_rng.split(f);
    std::vector<double> flicker((size_t)spec.height * spec.width, 0.0);
    if (spec.flicker_amplitude > 0)
      add_value_noise(flicker, spec.height, spec.width, 8,
                      spec.flicker_amplitude, fr.split(0));
    out.frames.push_back(assemble_image(spec, clutter, targets, (double)f,
                                        fr.split(1), &flicker));
    out.masks.push_back(assemble_mask(spec, targets, (double)f));
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n,
                                                            uint64_t seed) {
  require(n > 0, "split: empty dataset requested");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng(seed).split(0xD5);
  for (int i = n; i > 1; --i) {
    int j = (int)(rng.next_u64() % (uint64_t)i);
    std::swap(idx[i - 1], idx[j]);
  }
  const int train_count = n * 4 / 5;
  std::vector<int> train(idx.begin(), idx.begin() + train_count);
  std::vector<int> test(idx.begin() + train_count, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace scene
}  // namespace ddn

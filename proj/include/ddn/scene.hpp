#pragma once

#include <cstdint>
#include <vector>

#include "ddn/rng.hpp"
#include "ddn/tensor.hpp"

// Synthetic infrared-like scenes: smooth multi-octave value-noise clutter,
// small Gaussian point targets, pixel noise. Sequences add constant-velocity
// target motion and per-frame clutter flicker. Everything is a pure function
// of (spec, rng state).

namespace ddn {
namespace scene {

struct SceneSpec {
  int height = 64;
  int width = 64;
  int targets_min = 1;
  int targets_max = 3;
  double amplitude_min = 0.3;   // contrast above the local background
  double amplitude_max = 0.6;
  double sigma_min = 0.8;       // Gaussian point-spread, px
  double sigma_max = 1.5;
  int clutter_octaves = 3;
  double clutter_amplitude = 0.3;
  double noise_sigma = 0.01;
  // Sequences only.
  int frames_per_clip = 5;
  double velocity_min = 0.5;    // px/frame
  double velocity_max = 2.0;
  double flicker_amplitude = 0.0;

  void validate() const;
};

struct LabeledSample {
  Tensor<float> image;   // [1,H,W], values in [0,1]
  Tensor<uint8_t> mask;  // [H,W], 0/1
};

struct SequenceSample {
  std::vector<Tensor<float>> frames;   // each [1,H,W]
  std::vector<Tensor<uint8_t>> masks;  // each [H,W], per-frame
};

LabeledSample gen_frame(const SceneSpec& spec, const Rng& rng_state);
SequenceSample gen_sequence(const SceneSpec& spec, const Rng& rng_state);

// Deterministic 80/20 split of [0,n): returns (train indices, test indices).
std::pair<std::vector<int>, std::vector<int>> split_indices(int n,
                                                            uint64_t seed);

}  // namespace scene
}  // namespace ddn

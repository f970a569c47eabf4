#pragma once

#include <cstddef>
#include <cstdint>

#include "advkit/dataset.hpp"

namespace advkit {

struct SynthDigitsConfig {
  std::size_t count = 12000;
  std::uint64_t seed = 1;
  std::size_t image_size = 28;
};

/// Procedurally rendered handwritten-style digits 0-9: stroke templates under
/// random affine distortion, per-vertex jitter and stroke width, rendered
/// anti-aliased on a black background. Labels are balanced and shuffled.
/// Output is a function of the config alone.
Dataset synth_digits(const SynthDigitsConfig& config);

}  // namespace advkit

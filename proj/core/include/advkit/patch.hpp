#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/model.hpp"

namespace advkit {

/// Square pixel block [C,s,s] in [0,1] that pushes a classifier toward
/// target_class wherever it is pasted.
struct Patch {
  Tensor pixels;
  int target_class = 0;
  std::string name;
  // Provenance of the training run that produced the patch.
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;

  std::size_t size() const { return pixels.dim(1); }
  std::size_t channels() const { return pixels.dim(0); }
  /// [C,s,s], square, every pixel inside [0,1].
  void validate() const;
};

enum class PlacementPolicy {
  uniform,  // every fully-inside top-left corner equally likely
  center,   // fixed, centred (rounding toward the top-left)
};

std::string to_string(PlacementPolicy policy);
PlacementPolicy placement_from_string(const std::string& text);

struct Placement {
  std::size_t row = 0;
  std::size_t col = 0;
};

struct PatchTrainConfig {
  std::size_t size = 8;
  int target_class = 0;
  std::size_t steps = 500;
  double learning_rate = 0.5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  PlacementPolicy placement = PlacementPolicy::uniform;
  std::string name = "patch";
};

struct PatchTrainResult {
  Patch patch;
  /// Mean log-probability of target_class over each step's minibatch,
  /// measured before that step's update.
  std::vector<double> objective;
};

/// Gradient ascent on the mean target log-probability over random
/// minibatches with a fresh placement per image per step; pixels start
/// uniform in [0,1] and are clamped to [0,1] after every step. The model is
/// not modified. Deterministic per seed for any thread count.
PatchTrainResult train_patch(const Model& model, const Dataset& train_set,
                             const PatchTrainConfig& config);

/// Copy of `image` [C,H,W] with the s x s region at `at` replaced.
Tensor apply_patch(const Tensor& image, const Patch& patch, Placement at);

/// Placement drawn by `policy` for a patch of side `size` on an image of
/// extent `height` x `width`.
template <typename Rng>
Placement draw_placement(Rng& rng, PlacementPolicy policy, std::size_t size, std::size_t height,
                         std::size_t width) {
  if (policy == PlacementPolicy::center) return {(height - size) / 2, (width - size) / 2};
  return {static_cast<std::size_t>(rng.below(height - size + 1)),
          static_cast<std::size_t>(rng.below(width - size + 1))};
}

struct PatchReportRow {
  std::string patch;
  std::size_t size = 0;
  double top1_success = 0.0;  // percent classified as the target at rank 1
  double top5_success = 0.0;  // percent with the target among the top min(5, K)

  friend bool operator==(const PatchReportRow&, const PatchReportRow&) = default;
};

struct PatchReport {
  std::vector<PatchReportRow> rows;

  void validate() const;
  friend bool operator==(const PatchReport&, const PatchReport&) = default;
};

/// Pastes the patch once per image at a placement drawn from `seed` and
/// `policy`, then scores target-class success.
PatchReportRow patch_eval(const Model& model, const Dataset& dataset, const Patch& patch,
                          std::uint64_t seed, PlacementPolicy policy = PlacementPolicy::uniform);

/// Patch container: magic "GSTP1\n", one-line JSON header, float32 blob.
std::string encode_patch(const Patch& patch);
Patch decode_patch(std::string_view bytes, const std::string& source = "patch");
void save_patch(const Patch& patch, const std::filesystem::path& path);
Patch load_patch(const std::filesystem::path& path);

}  // namespace advkit

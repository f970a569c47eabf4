#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/model.hpp"

namespace advkit {

/// Untargeted FGSM step size. epsilon is a fraction of the raw [0,1] pixel
/// range; outputs are clamped to [clamp_lo, clamp_hi].
struct FgsmConfig {
  double epsilon = 0.0;
  float clamp_lo = 0.0f;
  float clamp_hi = 1.0f;

  void validate() const;
};

/// Loss gradient with respect to raw pixels: the model's normalisation is
/// applied, the gradient is taken in normalised space, and the chain rule
/// through (x - mean) / std divides each channel by its std.
/// Accepts [C,H,W] with one label or [N,C,H,W] with one label per row.
Tensor raw_input_gradient(const Model& model, const Tensor& raw, std::span<const int> labels);

/// clamp(x + epsilon * sign(g), lo, hi) with sign(0) = 0.
Tensor fgsm_step(const Tensor& raw, const Tensor& raw_gradient, const FgsmConfig& config);

/// adv = clamp(x + epsilon * sign(grad_x J(theta, x, y))) for a raw image
/// [C,H,W] and its true label.
Tensor fgsm(const Model& model, const Tensor& image, int label, const FgsmConfig& config);
/// Same for a raw batch [N,C,H,W]; rows are attacked independently.
Tensor fgsm_batch(const Model& model, const Tensor& batch, std::span<const int> labels,
                  const FgsmConfig& config);

struct SweepRow {
  double epsilon = 0.0;
  double top1_error = 0.0;  // percent
  double top5_error = 0.0;  // percent

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Rows ascending in epsilon; errors in [0,100]; top1 >= top5 per row.
struct SweepTable {
  std::vector<SweepRow> rows;

  void validate() const;
  friend bool operator==(const SweepTable&, const SweepTable&) = default;
};

/// Attacks every image with its true label at each epsilon and scores top-1
/// and top-5 error of the adversarial images. Top-5 uses min(5, K) classes.
SweepTable epsilon_sweep(const Model& model, const Dataset& dataset, std::span<const double> eps_list);

}  // namespace advkit

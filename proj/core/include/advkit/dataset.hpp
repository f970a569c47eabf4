#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advkit/tensor.hpp"

namespace advkit {

/// Per-channel affine preprocessing: (x - mean) / std.
class NormalizationSpec {
 public:
  NormalizationSpec() = default;
  /// Throws invalid_argument unless both vectors have the same nonzero
  /// length and every std is positive and finite.
  NormalizationSpec(std::vector<float> mean, std::vector<float> stddev);

  static NormalizationSpec identity(std::size_t channels);

  std::size_t channels() const noexcept { return mean_.size(); }
  const std::vector<float>& mean() const noexcept { return mean_; }
  const std::vector<float>& stddev() const noexcept { return std_; }

  friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;

 private:
  std::vector<float> mean_;
  std::vector<float> std_;
};

/// Images in raw pixel space [0,1], each shaped [C,H,W], with labels and
/// class names. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  /// Validates: equal counts, one shared image shape, labels below
  /// class_names.size(), pixels finite and inside [0,1].
  Dataset(std::vector<Tensor> images, std::vector<int> labels, std::vector<std::string> class_names,
          NormalizationSpec normalization = {});

  std::size_t size() const noexcept { return images_.size(); }
  bool empty() const noexcept { return images_.empty(); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<Tensor>& images() const noexcept { return images_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const NormalizationSpec& normalization() const noexcept { return normalization_; }

  /// [C,H,W] of every image. Throws on an empty dataset.
  const Shape& image_shape() const;

  /// Rows at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Copy with a different normalization attached.
  Dataset with_normalization(NormalizationSpec spec) const;
  /// Stacks images at `indices` into [n,C,H,W].
  Tensor batch(std::span<const std::size_t> indices) const;

 private:
  std::vector<Tensor> images_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
  NormalizationSpec normalization_;
};

/// Works on [C,H,W] or [N,C,H,W] tensors.
Tensor normalize(const Tensor& image, const NormalizationSpec& spec);
Tensor denormalize(const Tensor& normalized, const NormalizationSpec& spec);

/// Per-channel mean and population standard deviation over every pixel of
/// every image. A channel with zero spread gets std 1.
NormalizationSpec compute_normalization(const Dataset& dataset);

/// Seeded shuffle, then the first round(n * test_fraction) rows become the
/// test half. Both halves are nonempty.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

/// Rows whose label differs from `label`.
Dataset without_label(const Dataset& dataset, int label);

/// One class name per line; line number is the class index.
std::vector<std::string> load_class_names(const std::filesystem::path& path);
void save_class_names(const std::filesystem::path& path, std::span<const std::string> names);

/// Big-endian IDX: images 0x00000803 (count, rows, cols), labels 0x00000801.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::vector<std::string> class_names);
/// Writes single-channel datasets; pixels are quantised to round(255 * x).
void save_idx(const Dataset& dataset, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

/// Directory with labels.csv ("filename,label_index") and 8-bit gray or RGB
/// PNGs. Class names come from classes.txt in the same directory when
/// present, otherwise "0".."max label".
Dataset load_image_dir(const std::filesystem::path& root);
/// Writes an 8-bit PNG of a [C,H,W] image in [0,1], C in {1,3}.
void save_png(const Tensor& image, const std::filesystem::path& path);

}  // namespace advkit

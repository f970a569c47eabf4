#include "advkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "advkit/error.hpp"
#include "advkit/io.hpp"
#include "advkit/rng.hpp"

namespace advkit {

NormalizationSpec::NormalizationSpec(std::vector<float> mean, std::vector<float> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.empty() || mean_.size() != std_.size())
    fail(Errc::invalid_argument, "normalization needs equal nonzero mean/std lengths, got " +
                                     std::to_string(mean_.size()) + " and " +
                                     std::to_string(std_.size()));
  for (std::size_t c = 0; c < std_.size(); ++c) {
    if (!std::isfinite(mean_[c])) fail(Errc::invalid_argument, "non-finite normalization mean");
    if (!(std_[c] > 0.0f) || !std::isfinite(std_[c]))
      fail(Errc::invalid_argument, "normalization std for channel " + std::to_string(c) +
                                       " must be positive, got " + std::to_string(std_[c]));
  }
}

NormalizationSpec NormalizationSpec::identity(std::size_t channels) {
  return NormalizationSpec(std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f));
}

Dataset::Dataset(std::vector<Tensor> images, std::vector<int> labels,
                 std::vector<std::string> class_names, NormalizationSpec normalization)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      normalization_(std::move(normalization)) {
  if (images_.size() != labels_.size())
    fail(Errc::dimension_mismatch, std::to_string(images_.size()) + " images but " +
                                       std::to_string(labels_.size()) + " labels");
  if (class_names_.empty()) fail(Errc::invalid_argument, "dataset needs at least one class");
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const Tensor& img = images_[i];
    if (img.rank() != 3)
      fail(Errc::shape_mismatch, "image " + std::to_string(i) + " has shape " +
                                     img.shape().str() + ", expected [C,H,W]");
    if (!(img.shape() == images_.front().shape()))
      fail(Errc::dimension_mismatch, "image " + std::to_string(i) + " has shape " +
                                         img.shape().str() + " but image 0 has " +
                                         images_.front().shape().str());
    for (float v : img.data())
      if (!(v >= 0.0f && v <= 1.0f))
        fail(Errc::out_of_range, "image " + std::to_string(i) + " has pixel outside [0,1]");
    if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= class_names_.size())
      fail(Errc::out_of_range, "label " + std::to_string(labels_[i]) + " at row " +
                                   std::to_string(i) + " outside [0, " +
                                   std::to_string(class_names_.size()) + ")");
  }
  if (normalization_.channels() == 0 && !images_.empty())
    normalization_ = NormalizationSpec::identity(images_.front().dim(0));
  if (!images_.empty() && normalization_.channels() != images_.front().dim(0))
    fail(Errc::shape_mismatch, "normalization has " + std::to_string(normalization_.channels()) +
                                   " channels, images have " +
                                   std::to_string(images_.front().dim(0)));
}

const Shape& Dataset::image_shape() const {
  if (images_.empty()) fail(Errc::invalid_argument, "empty dataset has no image shape");
  return images_.front().shape();
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Tensor> images;
  std::vector<int> labels;
  images.reserve(indices.size());
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    images.push_back(images_.at(i));
    labels.push_back(labels_.at(i));
  }
  return Dataset(std::move(images), std::move(labels), class_names_, normalization_);
}

Dataset Dataset::with_normalization(NormalizationSpec spec) const {
  return Dataset(images_, labels_, class_names_, std::move(spec));
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) fail(Errc::invalid_argument, "empty batch");
  const Shape& s = image_shape();
  Tensor out(Shape{indices.size(), s[0], s[1], s[2]});
  const std::size_t stride = s.numel();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor& img = images_.at(indices[b]);
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + b * stride);
  }
  return out;
}

namespace {

template <typename Op>
Tensor per_channel(const Tensor& t, const NormalizationSpec& spec, Op op) {
  if (t.rank() != 3 && t.rank() != 4)
    fail(Errc::shape_mismatch, "normalization expects [C,H,W] or [N,C,H,W], got " +
                                   t.shape().str());
  const std::size_t caxis = t.rank() - 3;
  const std::size_t channels = t.dim(caxis);
  if (channels != spec.channels())
    fail(Errc::shape_mismatch, "normalization has " + std::to_string(spec.channels()) +
                                   " channels, tensor " + t.shape().str());
  const std::size_t plane = t.dim(caxis + 1) * t.dim(caxis + 2);
  const std::size_t outer = caxis == 1 ? t.dim(0) : 1;
  Tensor out(t.shape());
  for (std::size_t n = 0; n < outer; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p)
        out[base + p] = op(t[base + p], spec.mean()[c], spec.stddev()[c]);
    }
  return out;
}

}  // namespace

Tensor normalize(const Tensor& image, const NormalizationSpec& spec) {
  return per_channel(image, spec, [](float x, float m, float s) { return (x - m) / s; });
}

Tensor denormalize(const Tensor& normalized, const NormalizationSpec& spec) {
  return per_channel(normalized, spec, [](float z, float m, float s) { return z * s + m; });
}

NormalizationSpec compute_normalization(const Dataset& dataset) {
  const Shape& s = dataset.image_shape();
  const std::size_t channels = s[0], plane = s[1] * s[2];
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  for (const Tensor& img : dataset.images())
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = img[c * plane + p];
        sum[c] += v;
        sq[c] += v * v;
      }
  const double count = static_cast<double>(dataset.size() * plane);
  std::vector<float> mean(channels), stddev(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double m = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - m * m);
    mean[c] = static_cast<float>(m);
    stddev[c] = var > 0.0 ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
  return NormalizationSpec(std::move(mean), std::move(stddev));
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    fail(Errc::out_of_range, "test fraction must lie in (0, 1), got " +
                                 std::to_string(test_fraction));
  const std::size_t n = dataset.size();
  if (n < 2) fail(Errc::invalid_argument, "split needs at least two rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  auto test_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  test_count = std::clamp<std::size_t>(test_count, 1, n - 1);
  std::span<const std::size_t> all(order);
  Dataset test = dataset.subset(all.first(test_count));
  Dataset train = dataset.subset(all.subspan(test_count));
  return {std::move(train), std::move(test)};
}

Dataset without_label(const Dataset& dataset, int label) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (dataset.label(i) != label) keep.push_back(i);
  return dataset.subset(keep);
}

std::vector<std::string> load_class_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_failure, "cannot open class-names file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  if (names.empty()) fail(Errc::invalid_argument, "no class names in " + path.string());
  return names;
}

void save_class_names(const std::filesystem::path& path, std::span<const std::string> names) {
  std::string text;
  for (const auto& n : names) text += n + "\n";
  write_file_atomic(path, text);
}

}  // namespace advkit

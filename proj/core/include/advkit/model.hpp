#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

enum class LayerKind { conv, relu, maxpool2, flatten, dense };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& text);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv, square
  std::size_t stride = 1;        // conv
  std::size_t pad = 0;           // conv
  std::size_t units = 0;         // dense

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchitectureSpec {
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;
  Shape input_shape;  // [C,H,W]

  /// conv(C->16,3x3,pad 1) relu pool conv(16->32,3x3,pad 1) relu pool
  /// flatten dense(128) relu dense(num_classes).
  static ArchitectureSpec default_victim(Shape input_shape, std::size_t num_classes);

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Per-layer output shapes without the batch axis. Throws shape_mismatch or
/// invalid_argument naming the first layer that does not chain.
std::vector<Shape> infer_shapes(const ArchitectureSpec& spec);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Architecture plus parameters, class names and the input normalisation
/// the parameters were trained under.
class Model {
 public:
  Model() = default;
  /// Validates parameter names, shapes and finiteness against the spec.
  Model(ArchitectureSpec spec, std::vector<NamedTensor> params, std::vector<std::string> class_names,
        NormalizationSpec normalization);

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::span<const NamedTensor> params() const noexcept { return params_; }
  const Tensor& param(const std::string& name) const;
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  const NormalizationSpec& normalization() const noexcept { return normalization_; }
  std::size_t parameter_count() const noexcept;

  /// Copy with the parameter values swapped for `values`, in params() order.
  Model with_values(std::vector<Tensor> values) const;
  Model with_normalization(NormalizationSpec spec) const;

 private:
  ArchitectureSpec spec_;
  std::vector<NamedTensor> params_;
  std::vector<std::string> class_names_;
  NormalizationSpec normalization_;
};

/// Parameter shapes implied by a spec, as (name, shape) in layer order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchitectureSpec& spec);

/// Weights ~ normal(0, 1/sqrt(fan_in)), biases zero. Class names default to
/// "0".."K-1"; normalisation defaults to identity.
Model build_model(const ArchitectureSpec& spec, std::uint64_t seed,
                  std::vector<std::string> class_names = {}, NormalizationSpec normalization = {});

/// Logits [N, num_classes] for an already-normalised batch [N,C,H,W].
Tensor forward(const Model& model, const Tensor& batch);

struct ClassScore {
  int index = 0;
  std::string name;
  float probability = 0.0f;
};

/// Indices of the k largest entries, descending; ties go to the lower index.
std::vector<int> top_indices(std::span<const float> scores, std::size_t k);

/// Top-k classes for one raw-pixel image [C,H,W]; the model's normalisation
/// is applied first.
std::vector<ClassScore> predict_topk(const Model& model, const Tensor& image, std::size_t k);

/// Softmax probabilities [N, K] for a raw-pixel batch [N,C,H,W].
Tensor predict_proba(const Model& model, const Tensor& raw_batch);

struct LossAndGradient {
  double loss = 0.0;
  Tensor gradient;
};

/// Gradient of the cross-entropy loss with respect to a normalised input
/// image [C,H,W] (or batch [N,C,H,W] with one label per row). For batches
/// the loss is summed, so each row equals its single-image gradient.
Tensor input_gradient(const Model& model, const Tensor& image, int label);
LossAndGradient input_gradient_batch(const Model& model, const Tensor& batch,
                                     std::span<const int> labels);

struct ParameterGradients {
  double loss = 0.0;          // mean over the batch
  Tensor logits;              // forward output the gradients were taken at
  std::vector<Tensor> params; // params() order
};

/// Mean cross-entropy and its gradient with respect to every parameter.
ParameterGradients parameter_gradients(const Model& model, const Tensor& batch,
                                       std::span<const int> labels);

}  // namespace advkit

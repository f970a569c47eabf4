#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/model.hpp"

namespace advkit {

struct EvalReport {
  std::string dataset_id;
  std::string model_id;
  double top1_error = 0.0;  // percent
  double top5_error = 0.0;  // percent, over min(5, K) classes
  std::size_t num_images = 0;

  void validate() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// 100 * (1 - fraction of images whose true label is in the model's top k).
double topk_error(const Model& model, const Dataset& dataset, std::size_t k);

/// Top-1 and top-min(5, K) error in one pass over the raw-pixel dataset.
EvalReport evaluate(const Model& model, const Dataset& dataset, std::string dataset_id,
                    std::string model_id);

struct ConfidenceEntry {
  int class_index = 0;
  std::string class_name;
  double confidence = 0.0;

  friend bool operator==(const ConfidenceEntry&, const ConfidenceEntry&) = default;
};

struct ConfidenceBreakdown {
  std::string image_id;
  int true_class = 0;
  std::string true_name;
  std::vector<ConfidenceEntry> top;  // descending, ties by class index
  bool true_class_first = false;

  void validate() const;
  friend bool operator==(const ConfidenceBreakdown&, const ConfidenceBreakdown&) = default;
};

ConfidenceBreakdown confidence_breakdown(const Model& model, const Tensor& image, int true_class,
                                         std::size_t k = 5, std::string image_id = {});

}  // namespace advkit

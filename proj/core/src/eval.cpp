#include "advkit/eval.hpp"

#include <algorithm>

#include "advkit/error.hpp"
#include "advkit/parallel.hpp"
#include "batching.hpp"

namespace advkit {

void EvalReport::validate() const {
  for (double e : {top1_error, top5_error})
    if (!(e >= 0.0 && e <= 100.0)) fail(Errc::out_of_range, "error outside [0, 100]");
  if (top1_error < top5_error)
    fail(Errc::invalid_argument, "top-1 error below top-5 error in report for " + dataset_id);
}

namespace {

// hits[j] = number of images whose label is within the top (j + 1).
std::vector<std::size_t> rank_hits(const Model& model, const Dataset& dataset, std::size_t max_k) {
  if (dataset.empty()) fail(Errc::invalid_argument, "evaluation on an empty dataset");
  if (max_k == 0 || max_k > model.num_classes())
    fail(Errc::out_of_range, "k = " + std::to_string(max_k) + " outside [1, " +
                                 std::to_string(model.num_classes()) + "]");
  const std::size_t k = model.num_classes();
  const auto chunks = detail::make_chunks(dataset.size());
  std::vector<std::vector<std::size_t>> per_chunk(chunks.size(), std::vector<std::size_t>(max_k));
  parallel_for(chunks.size(), [&](std::size_t ci) {
    const auto idx = chunks[ci].indices();
    const Tensor probs = predict_proba(model, dataset.batch(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto top = top_indices(probs.data().subspan(r * k, k), max_k);
      const auto it = std::find(top.begin(), top.end(), dataset.label(idx[r]));
      if (it == top.end()) continue;
      for (auto j = static_cast<std::size_t>(it - top.begin()); j < max_k; ++j) ++per_chunk[ci][j];
    }
  });
  std::vector<std::size_t> hits(max_k, 0);
  for (const auto& c : per_chunk)
    for (std::size_t j = 0; j < max_k; ++j) hits[j] += c[j];
  return hits;
}

}  // namespace

double topk_error(const Model& model, const Dataset& dataset, std::size_t k) {
  const auto hits = rank_hits(model, dataset, k);
  return detail::error_percent(hits[k - 1], dataset.size());
}

EvalReport evaluate(const Model& model, const Dataset& dataset, std::string dataset_id,
                    std::string model_id) {
  const std::size_t k5 = std::min<std::size_t>(5, model.num_classes());
  const auto hits = rank_hits(model, dataset, k5);
  EvalReport r{std::move(dataset_id), std::move(model_id),
               detail::error_percent(hits[0], dataset.size()),
               detail::error_percent(hits[k5 - 1], dataset.size()), dataset.size()};
  r.validate();
  return r;
}

void ConfidenceBreakdown::validate() const {
  for (std::size_t i = 0; i < top.size(); ++i) {
    const auto& e = top[i];
    if (!(e.confidence >= 0.0 && e.confidence <= 1.0))
      fail(Errc::out_of_range, "confidence outside [0, 1] for image " + image_id);
    if (i > 0) {
      const auto& prev = top[i - 1];
      const bool ordered = prev.confidence > e.confidence ||
                           (prev.confidence == e.confidence && prev.class_index < e.class_index);
      if (!ordered) fail(Errc::invalid_argument, "confidences not descending for image " + image_id);
    }
  }
}

ConfidenceBreakdown confidence_breakdown(const Model& model, const Tensor& image, int true_class,
                                         std::size_t k, std::string image_id) {
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= model.num_classes())
    fail(Errc::out_of_range, "true class " + std::to_string(true_class) + " outside [0, " +
                                 std::to_string(model.num_classes()) + ")");
  ConfidenceBreakdown out;
  out.image_id = std::move(image_id);
  out.true_class = true_class;
  out.true_name = model.class_names()[static_cast<std::size_t>(true_class)];
  for (const ClassScore& s : predict_topk(model, image, k))
    out.top.push_back({s.index, s.name, s.probability});
  out.true_class_first = out.top.front().class_index == true_class;
  out.validate();
  return out;
}

}  // namespace advkit

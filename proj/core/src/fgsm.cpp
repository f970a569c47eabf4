#include <algorithm>
#include <cmath>
#include <string>

#include "advkit/attacks.hpp"
#include "advkit/error.hpp"
#include "advkit/parallel.hpp"
#include "batching.hpp"

namespace advkit {

void FgsmConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    fail(Errc::out_of_range, "epsilon must lie in [0, 1], got " + std::to_string(epsilon));
  if (!(clamp_lo < clamp_hi)) fail(Errc::invalid_argument, "clamp range is empty");
}

Tensor raw_input_gradient(const Model& model, const Tensor& raw, std::span<const int> labels) {
  if (raw.rank() == 3) {
    if (labels.size() != 1)
      fail(Errc::shape_mismatch, "one image needs exactly one label, got " +
                                     std::to_string(labels.size()));
    const Shape s = raw.shape();
    return raw_input_gradient(model, raw.reshaped(Shape{1, s[0], s[1], s[2]}), labels).reshaped(s);
  }
  if (raw.rank() != 4)
    fail(Errc::shape_mismatch, "expected [C,H,W] or [N,C,H,W], got " + raw.shape().str());
  const NormalizationSpec& norm = model.normalization();
  Tensor grad = detail::chunked_input_gradient(model, normalize(raw, norm), labels).gradient;
  const std::size_t n = raw.dim(0), c = raw.dim(1), plane = raw.dim(2) * raw.dim(3);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float sd = norm.stddev()[ch];
      float* p = grad.data().data() + (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] /= sd;
    }
  return grad;
}

Tensor fgsm_step(const Tensor& raw, const Tensor& raw_gradient, const FgsmConfig& config) {
  config.validate();
  if (!(raw.shape() == raw_gradient.shape()))
    fail(Errc::shape_mismatch, "image " + raw.shape().str() + " vs gradient " +
                                   raw_gradient.shape().str());
  if (config.epsilon == 0.0) return raw;
  const auto eps = static_cast<float>(config.epsilon);
  Tensor adv(raw.shape());
  auto out = adv.data();
  auto x = raw.data();
  auto g = raw_gradient.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float step = g[i] > 0.0f ? eps : (g[i] < 0.0f ? -eps : 0.0f);
    out[i] = std::clamp(x[i] + step, config.clamp_lo, config.clamp_hi);
  }
  return adv;
}

Tensor fgsm(const Model& model, const Tensor& image, int label, const FgsmConfig& config) {
  config.validate();
  const int labels[1] = {label};
  return fgsm_step(image, raw_input_gradient(model, image, labels), config);
}

Tensor fgsm_batch(const Model& model, const Tensor& batch, std::span<const int> labels,
                  const FgsmConfig& config) {
  config.validate();
  return fgsm_step(batch, raw_input_gradient(model, batch, labels), config);
}

void SweepTable::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    if (i > 0 && !(r.epsilon > rows[i - 1].epsilon))
      fail(Errc::invalid_argument, "sweep rows must ascend strictly in epsilon");
    for (double e : {r.top1_error, r.top5_error})
      if (!(e >= 0.0 && e <= 100.0)) fail(Errc::out_of_range, "sweep error outside [0, 100]");
    if (r.top1_error < r.top5_error)
      fail(Errc::invalid_argument, "sweep row at epsilon " + std::to_string(r.epsilon) +
                                       " has top-1 error below top-5 error");
  }
}

SweepTable epsilon_sweep(const Model& model, const Dataset& dataset,
                         std::span<const double> eps_list) {
  if (dataset.empty()) fail(Errc::invalid_argument, "epsilon_sweep: empty dataset");
  if (eps_list.empty()) fail(Errc::invalid_argument, "epsilon_sweep: empty epsilon list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    FgsmConfig{eps_list[i]}.validate();
    if (i > 0 && !(eps_list[i] > eps_list[i - 1]))
      fail(Errc::invalid_argument, "epsilon list must be strictly ascending");
  }
  const std::size_t k5 = std::min<std::size_t>(5, model.num_classes());
  const auto chunks = detail::make_chunks(dataset.size());
  // hits[chunk][eps] = (top-1 hits, top-5 hits)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> hits(
      chunks.size(), std::vector<std::pair<std::size_t, std::size_t>>(eps_list.size()));
  parallel_for(chunks.size(), [&](std::size_t ci) {
    const auto idx = chunks[ci].indices();
    const Tensor raw = dataset.batch(idx);
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(dataset.label(i));
    const Tensor grad = raw_input_gradient(model, raw, labels);
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      const Tensor probs = predict_proba(model, fgsm_step(raw, grad, FgsmConfig{eps_list[e]}));
      const std::size_t k = model.num_classes();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto top = top_indices(probs.data().subspan(r * k, k), k5);
        if (top[0] == labels[r]) ++hits[ci][e].first;
        if (std::find(top.begin(), top.end(), labels[r]) != top.end()) ++hits[ci][e].second;
      }
    }
  });
  SweepTable table;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    std::size_t h1 = 0, h5 = 0;
    for (const auto& chunk : hits) {
      h1 += chunk[e].first;
      h5 += chunk[e].second;
    }
    table.rows.push_back({eps_list[e], detail::error_percent(h1, dataset.size()),
                          detail::error_percent(h5, dataset.size())});
  }
  table.validate();
  return table;
}

}  // namespace advkit

#include "batching.hpp"

#include <algorithm>
#include <cstring>

#include "advkit/error.hpp"
#include "advkit/parallel.hpp"

namespace advkit::detail {

std::vector<Chunk> make_chunks(std::size_t count, std::size_t chunk_rows) {
  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < count; start += chunk_rows) {
    Chunk c;
    const std::size_t end = std::min(count, start + chunk_rows);
    c.rows.resize(end - start);
    std::iota(c.rows.begin(), c.rows.end(), start);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

LossAndGradient chunked_input_gradient(const Model& model, const Tensor& normalized_batch,
                                       std::span<const int> labels) {
  if (normalized_batch.rank() != 4)
    fail(Errc::shape_mismatch, "expected a batch [N,C,H,W], got " + normalized_batch.shape().str());
  const std::size_t n = normalized_batch.dim(0);
  if (labels.size() != n)
    fail(Errc::shape_mismatch, std::to_string(labels.size()) + " labels for a batch of " +
                                   std::to_string(n));
  if (n <= kChunkRows) return input_gradient_batch(model, normalized_batch, labels);

  const std::size_t row = normalized_batch.numel() / n;
  const Shape& s = normalized_batch.shape();
  const auto chunks = make_chunks(n);
  std::vector<LossAndGradient> parts(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t ci) {
    const auto& rows = chunks[ci].rows;
    Tensor sub(Shape{rows.size(), s[1], s[2], s[3]});
    std::memcpy(sub.data().data(), normalized_batch.data().data() + rows.front() * row,
                rows.size() * row * sizeof(float));
    parts[ci] = input_gradient_batch(model, sub, labels.subspan(rows.front(), rows.size()));
  });
  LossAndGradient out{0.0, Tensor(s)};
  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    out.loss += parts[ci].loss;
    std::memcpy(out.gradient.data().data() + chunks[ci].rows.front() * row,
                parts[ci].gradient.data().data(), parts[ci].gradient.numel() * sizeof(float));
  }
  return out;
}

double error_percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(total - hits) / static_cast<double>(total);
}

}  // namespace advkit::detail

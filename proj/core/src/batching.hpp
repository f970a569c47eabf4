#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "advkit/model.hpp"

namespace advkit::detail {

// Fixed-size row ranges. Chunk boundaries depend only on the row count, so
// per-chunk results reduced in chunk order are independent of thread count.
inline constexpr std::size_t kChunkRows = 32;

struct Chunk {
  std::vector<std::size_t> rows;
  std::span<const std::size_t> indices() const { return rows; }
};

std::vector<Chunk> make_chunks(std::size_t count, std::size_t chunk_rows = kChunkRows);

/// input_gradient_batch split into row chunks evaluated in parallel. Rows of
/// a summed-loss gradient are independent, so the result is bit-identical
/// to one unsplit call.
LossAndGradient chunked_input_gradient(const Model& model, const Tensor& normalized_batch,
                                       std::span<const int> labels);

/// 100 * misses / total, written so equal counts give equal doubles.
double error_percent(std::size_t hits, std::size_t total);

}  // namespace advkit::detail

#pragma once

#include <cstddef>

// Row-major single-precision matrix products. Loop order is fixed so results
// are bit-reproducible for a given shape.
namespace advkit::detail {

// C[MxN] (+)= A[MxK] * B[KxN]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

// C[MxN] (+)= A[KxM]^T * B[KxN]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

// C[MxN] (+)= A[MxK] * B[NxK]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

}  // namespace advkit::detail

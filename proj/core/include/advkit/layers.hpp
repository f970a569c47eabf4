#pragma once

// Differentiable layer primitives. Every forward returns its output together
// with a single-use context; the matching backward consumes that context and
// returns gradients with respect to the layer input as well as its
// parameters. A context that has already been consumed, or that was never
// produced by a forward call, is rejected with Errc::stale_context.

#include <cstddef>
#include <span>
#include <vector>

#include "advkit/tensor.hpp"

namespace advkit {

struct Conv2dForward;
struct Conv2dGrads;
struct ReluForward;
struct MaxPoolForward;
struct DenseForward;
struct DenseGrads;

class Conv2dContext {
 public:
  Conv2dContext() = default;
  bool live() const noexcept { return live_; }

 private:
  friend Conv2dForward conv2d(const Tensor&, const Tensor&, const Tensor&, std::size_t,
                              std::size_t);
  friend Conv2dGrads conv2d_backward(Conv2dContext&, const Tensor&);
  Tensor input_;
  Tensor kernel_;
  Shape output_shape_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
  bool live_ = false;
};

class ReluContext {
 public:
  ReluContext() = default;
  bool live() const noexcept { return live_; }

 private:
  friend ReluForward relu(const Tensor&);
  friend Tensor relu_backward(ReluContext&, const Tensor&);
  std::vector<unsigned char> active_;
  Shape shape_;
  bool live_ = false;
};

class MaxPoolContext {
 public:
  MaxPoolContext() = default;
  bool live() const noexcept { return live_; }

 private:
  friend MaxPoolForward maxpool2(const Tensor&);
  friend Tensor maxpool2_backward(MaxPoolContext&, const Tensor&);
  std::vector<std::size_t> argmax_;
  Shape input_shape_;
  Shape output_shape_;
  bool live_ = false;
};

class DenseContext {
 public:
  DenseContext() = default;
  bool live() const noexcept { return live_; }

 private:
  friend DenseForward dense(const Tensor&, const Tensor&, const Tensor&);
  friend DenseGrads dense_backward(DenseContext&, const Tensor&);
  Tensor input_;
  Tensor weights_;
  bool live_ = false;
};

struct Conv2dForward {
  Tensor output;
  Conv2dContext context;
};

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

struct ReluForward {
  Tensor output;
  ReluContext context;
};

struct MaxPoolForward {
  Tensor output;
  MaxPoolContext context;
};

struct DenseForward {
  Tensor output;
  DenseContext context;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

/// Cross-correlation with zero padding. input [N,Cin,H,W], kernel
/// [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'] with
/// H' = (H + 2*pad - kh) / stride + 1, which must divide exactly.
Conv2dForward conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride = 1, std::size_t pad = 0);
Conv2dGrads conv2d_backward(Conv2dContext& context, const Tensor& upstream);

/// Output spatial extent of a convolution, or throws shape_mismatch.
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

/// max(0, x). The backward subgradient at exactly zero is zero.
ReluForward relu(const Tensor& input);
Tensor relu_backward(ReluContext& context, const Tensor& upstream);

/// 2x2 window, stride 2. Ties route to the first element in row-major order.
MaxPoolForward maxpool2(const Tensor& input);
Tensor maxpool2_backward(MaxPoolContext& context, const Tensor& upstream);

/// input [N,F] * weights [F,K] + bias [K].
DenseForward dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
DenseGrads dense_backward(DenseContext& context, const Tensor& upstream);

enum class Reduction { mean, sum };

struct SoftmaxXent {
  double loss = 0.0;
  Tensor probs;
  Tensor dlogits;
};

/// Cross-entropy of softmax(logits) against class indices, stabilised by
/// subtracting each row maximum. With Reduction::mean the loss and
/// dlogits = (probs - onehot) / N are averaged over the batch; with
/// Reduction::sum the 1/N factor is dropped, which makes every row of
/// dlogits independent of the batch it was computed in.
SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels,
                         Reduction reduction = Reduction::mean);

/// Row-wise softmax without a loss.
Tensor softmax(const Tensor& logits);

}  // namespace advkit

#include "advkit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advkit/error.hpp"
#include "gemm.hpp"

namespace advkit {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank)
    fail(Errc::shape_mismatch, std::string(op) + ": " + arg + " must have rank " +
                                   std::to_string(rank) + ", got " + t.shape().str());
}

void require_upstream(bool live, const Shape& expected, const Tensor& upstream, const char* op) {
  if (!live) fail(Errc::stale_context, std::string(op) + ": context already consumed or empty");
  if (!(upstream.shape() == expected))
    fail(Errc::shape_mismatch, std::string(op) + ": upstream " + upstream.shape().str() +
                                   " does not match forward output " + expected.str());
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

ConvGeometry geometry(const Tensor& input, const Tensor& kernel, std::size_t stride,
                      std::size_t pad) {
  ConvGeometry g{};
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = pad;
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);
  return g;
}

// col[(c*kh + i)*kw + j][oy*ow + ox] = padded input at (c, oy*s + i - pad, ox*s + j - pad)
void im2col(const ConvGeometry& g, const float* image, float* col) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        float* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(g.h) &&
                                x < static_cast<long>(g.w);
            row[oy * g.ow + ox] = inside ? image[(c * g.h + y) * g.w + x] : 0.0f;
          }
        }
      }
}

void col2im(const ConvGeometry& g, const float* col, float* image) {
  std::fill(image, image + g.cin * g.h * g.w, 0.0f);
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const float* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long x = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (x < 0 || x >= static_cast<long>(g.w)) continue;
            image[(c * g.h + y) * g.w + x] += row[oy * g.ow + ox];
          }
        }
      }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) fail(Errc::invalid_argument, "conv2d: stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (k > padded)
    fail(Errc::shape_mismatch, "conv2d: kernel extent " + std::to_string(k) +
                                   " exceeds padded input extent " + std::to_string(padded));
  if ((padded - k) % stride != 0)
    fail(Errc::shape_mismatch, "conv2d: (" + std::to_string(padded) + " - " +
                                   std::to_string(k) + ") is not divisible by stride " +
                                   std::to_string(stride));
  return (padded - k) / stride + 1;
}

Conv2dForward conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  if (kernel.dim(1) != input.dim(1))
    fail(Errc::shape_mismatch, "conv2d: input " + input.shape().str() +
                                   " has different channel count than kernel " +
                                   kernel.shape().str());
  if (bias.dim(0) != kernel.dim(0))
    fail(Errc::shape_mismatch, "conv2d: bias " + bias.shape().str() + " vs kernel " +
                                   kernel.shape().str());
  ConvGeometry g{};
  try {
    g = geometry(input, kernel, stride, pad);
  } catch (const Error& e) {
    fail(e.code(), std::string(e.what()) + " (input " + input.shape().str() + ", kernel " +
                       kernel.shape().str() + ")");
  }
  const std::size_t n = input.dim(0);
  Tensor out(Shape{n, g.cout, g.oh, g.ow});
  std::vector<float> col(g.patch() * g.pixels());
  for (std::size_t b = 0; b < n; ++b) {
    im2col(g, input.data().data() + b * g.cin * g.h * g.w, col.data());
    float* dst = out.data().data() + b * g.cout * g.pixels();
    for (std::size_t co = 0; co < g.cout; ++co)
      std::fill(dst + co * g.pixels(), dst + (co + 1) * g.pixels(), bias[co]);
    detail::gemm_nn(g.cout, g.pixels(), g.patch(), kernel.data().data(), col.data(), dst, true);
  }
  out.require_finite("conv2d output");
  Conv2dForward result{std::move(out), {}};
  Conv2dContext& ctx = result.context;
  ctx.input_ = input;
  ctx.kernel_ = kernel;
  ctx.output_shape_ = result.output.shape();
  ctx.stride_ = stride;
  ctx.pad_ = pad;
  ctx.live_ = true;
  return result;
}

Conv2dGrads conv2d_backward(Conv2dContext& context, const Tensor& upstream) {
  require_upstream(context.live_, context.output_shape_, upstream, "conv2d_backward");
  context.live_ = false;
  const Tensor input = std::move(context.input_);
  const Tensor kernel = std::move(context.kernel_);
  const ConvGeometry g = geometry(input, kernel, context.stride_, context.pad_);
  const std::size_t n = input.dim(0);

  Conv2dGrads grads{Tensor(input.shape()), Tensor(kernel.shape()), Tensor(Shape{g.cout})};
  std::vector<float> col(g.patch() * g.pixels());
  std::vector<float> dcol(col.size());
  for (std::size_t b = 0; b < n; ++b) {
    const float* up = upstream.data().data() + b * g.cout * g.pixels();
    for (std::size_t co = 0; co < g.cout; ++co) {
      float s = 0.0f;
      for (std::size_t p = 0; p < g.pixels(); ++p) s += up[co * g.pixels() + p];
      grads.bias[co] += s;
    }
    im2col(g, input.data().data() + b * g.cin * g.h * g.w, col.data());
    detail::gemm_nt(g.cout, g.patch(), g.pixels(), up, col.data(), grads.kernel.data().data(),
                    true);
    detail::gemm_tn(g.patch(), g.pixels(), g.cout, kernel.data().data(), up, dcol.data(), false);
    col2im(g, dcol.data(), grads.input.data().data() + b * g.cin * g.h * g.w);
  }
  return grads;
}

ReluForward relu(const Tensor& input) {
  if (input.empty()) fail(Errc::invalid_argument, "relu: empty input");
  ReluForward result{Tensor(input.shape()), {}};
  ReluContext& ctx = result.context;
  ctx.active_.resize(input.numel());
  auto out = result.output.data();
  auto in = input.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const bool on = in[i] > 0.0f;
    ctx.active_[i] = on;
    out[i] = on ? in[i] : 0.0f;
  }
  ctx.shape_ = input.shape();
  ctx.live_ = true;
  return result;
}

Tensor relu_backward(ReluContext& context, const Tensor& upstream) {
  require_upstream(context.live_, context.shape_, upstream, "relu_backward");
  context.live_ = false;
  Tensor grad(upstream.shape());
  auto g = grad.data();
  auto up = upstream.data();
  for (std::size_t i = 0; i < up.size(); ++i) g[i] = context.active_[i] ? up[i] : 0.0f;
  context.active_.clear();
  return grad;
}

MaxPoolForward maxpool2(const Tensor& input) {
  require_rank(input, 4, "maxpool2", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    fail(Errc::shape_mismatch, "maxpool2: spatial extent of " + input.shape().str() +
                                   " must be even");
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolForward result{Tensor(Shape{n, c, oh, ow}), {}};
  MaxPoolContext& ctx = result.context;
  ctx.argmax_.resize(result.output.numel());
  auto in = input.data();
  auto out = result.output.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        const std::size_t candidates[4] = {
            base + (2 * y) * w + 2 * x, base + (2 * y) * w + 2 * x + 1,
            base + (2 * y + 1) * w + 2 * x, base + (2 * y + 1) * w + 2 * x + 1};
        std::size_t best = candidates[0];
        for (std::size_t k = 1; k < 4; ++k)
          if (in[candidates[k]] > in[best]) best = candidates[k];
        out[o] = in[best];
        ctx.argmax_[o] = best;
      }
  }
  ctx.input_shape_ = input.shape();
  ctx.output_shape_ = result.output.shape();
  ctx.live_ = true;
  return result;
}

Tensor maxpool2_backward(MaxPoolContext& context, const Tensor& upstream) {
  require_upstream(context.live_, context.output_shape_, upstream, "maxpool2_backward");
  context.live_ = false;
  Tensor grad(context.input_shape_);
  auto g = grad.data();
  auto up = upstream.data();
  for (std::size_t o = 0; o < up.size(); ++o) g[context.argmax_[o]] += up[o];
  context.argmax_.clear();
  return grad;
}

DenseForward dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weights, 2, "dense", "weights");
  require_rank(bias, 1, "dense", "bias");
  if (input.dim(1) != weights.dim(0))
    fail(Errc::shape_mismatch, "dense: input " + input.shape().str() +
                                   " inner dimension differs from weights " +
                                   weights.shape().str());
  if (bias.dim(0) != weights.dim(1))
    fail(Errc::shape_mismatch, "dense: bias " + bias.shape().str() + " vs weights " +
                                   weights.shape().str());
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  DenseForward result{Tensor(Shape{n, k}), {}};
  float* out = result.output.data().data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy(bias.data().begin(), bias.data().end(), out + i * k);
  detail::gemm_nn(n, k, f, input.data().data(), weights.data().data(), out, true);
  result.output.require_finite("dense output");
  result.context.input_ = input;
  result.context.weights_ = weights;
  result.context.live_ = true;
  return result;
}

DenseGrads dense_backward(DenseContext& context, const Tensor& upstream) {
  if (!context.live_) fail(Errc::stale_context, "dense_backward: context already consumed or empty");
  const Shape expected{context.input_.dim(0), context.weights_.dim(1)};
  require_upstream(true, expected, upstream, "dense_backward");
  context.live_ = false;
  const Tensor input = std::move(context.input_);
  const Tensor weights = std::move(context.weights_);
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  DenseGrads grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor(Shape{k})};
  detail::gemm_nt(n, f, k, upstream.data().data(), weights.data().data(),
                  grads.input.data().data(), false);
  detail::gemm_tn(f, k, n, input.data().data(), upstream.data().data(),
                  grads.weights.data().data(), false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) grads.bias[j] += upstream.at(i, j);
  return grads;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels,
                         Reduction reduction) {
  require_rank(logits, 2, "softmax_xent", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    fail(Errc::shape_mismatch, "softmax_xent: " + std::to_string(labels.size()) +
                                   " labels for logits " + logits.shape().str());
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      fail(Errc::out_of_range, "softmax_xent: label " + std::to_string(labels[i]) + " at row " +
                                   std::to_string(i) + " outside [0, " + std::to_string(k) + ")");

  SoftmaxXent result{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  std::vector<double> shifted(k);
  for (std::size_t i = 0; i < n; ++i) {
    double top = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) top = std::max(top, static_cast<double>(logits.at(i, j)));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      shifted[j] = static_cast<double>(logits.at(i, j)) - top;
      total += std::exp(shifted[j]);
    }
    const double log_total = std::log(total);
    const auto y = static_cast<std::size_t>(labels[i]);
    // When the label holds the row maximum, -log p_y = log1p(sum of the other
    // terms), which stays accurate for saturated logits.
    double nll = log_total - shifted[y];
    if (shifted[y] == 0.0) {
      double rest = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        if (j != y) rest += std::exp(shifted[j]);
      nll = std::log1p(rest);
    }
    result.loss += scale * nll;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(shifted[j] - log_total);
      result.probs.at(i, j) = static_cast<float>(p);
      result.dlogits.at(i, j) = static_cast<float>(scale * (p - (j == y ? 1.0 : 0.0)));
    }
  }
  return result;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double top = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) top = std::max(top, static_cast<double>(logits.at(i, j)));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(logits.at(i, j)) - top);
    for (std::size_t j = 0; j < k; ++j)
      probs.at(i, j) =
          static_cast<float>(std::exp(static_cast<double>(logits.at(i, j)) - top) / total);
  }
  return probs;
}

}  // namespace advkit

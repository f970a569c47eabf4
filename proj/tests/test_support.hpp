#pragma once

// Independent oracles and fixtures shared by the unit and acceptance suites.
// Nothing here calls into the code paths it is used to check.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "advkit/error.hpp"
#include "advkit/layers.hpp"
#include "advkit/model.hpp"
#include "advkit/rng.hpp"
#include "advkit/tensor.hpp"

namespace advkit::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Rng rng(seed);
  Tensor t(shape);
  for (float& v : t.data()) v = lo + static_cast<float>(rng.uniform()) * (hi - lo);
  return t;
}

// Direct cross-correlation in double: out[n,co,i,j] = b[co] + sum x * k.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k, const Tensor& b,
                                        std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * cout * oh * ow);
  for (std::size_t b_ = 0; b_ < n; ++b_)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long z = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (y < 0 || z < 0 || y >= static_cast<long>(h) || z >= static_cast<long>(w)) continue;
                acc += static_cast<double>(x.at(b_, ci, static_cast<std::size_t>(y), static_cast<std::size_t>(z))) *
                       k.at(co, ci, u, v);
              }
          out[((b_ * cout + co) * oh + i) * ow + j] = acc;
        }
  return out;
}

// Runs f and reports whether it raised advkit::Error, with code and text.
struct Raised {
  bool thrown = false;
  Errc code = Errc::io_failure;
  std::string message;
};

inline Raised raised(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return {true, e.code(), e.what()};
  }
  return {};
}

inline std::filesystem::path fixture(const std::string& name) {
  const char* root = std::getenv("ADVKIT_FIXTURES");
  return std::filesystem::path(root ? root : "tests/fixtures") / name;
}

// A fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() / ("advkit-" + tag + "-" + std::to_string(rng.next()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// sum(weights * t) in double; the scalar whose gradient w.r.t. t is weights.
inline double weighted_sum(const Tensor& t, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]) * weights[i];
  return s;
}

// Logits of a normalized batch composed layer by layer from the public
// diffcore ops. When `signature` is given it receives the ReLU on/off pattern
// and every max-pool window's winning position, which changes exactly when an
// input crosses a non-differentiable point.
inline Tensor compose_layers(const Model& model, const Tensor& batch, std::vector<int>* signature = nullptr) {
  Tensor x = batch;
  for (const LayerSpec& layer : model.spec().layers) {
    switch (layer.kind) {
      case LayerKind::conv:
        x = conv2d(x, model.param(layer.name + ".weight"), model.param(layer.name + ".bias"), layer.stride,
                   layer.pad)
                .output;
        break;
      case LayerKind::relu:
        if (signature)
          for (float v : x.data()) signature->push_back(v > 0.0f);
        x = relu(x).output;
        break;
      case LayerKind::maxpool2:
        if (signature) {
          const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < h; i += 2)
                for (std::size_t j = 0; j < w; j += 2) {
                  int best = 0;
                  float best_v = x.at(b, ch, i, j);
                  for (int q = 1; q < 4; ++q) {
                    const float v = x.at(b, ch, i + static_cast<std::size_t>(q / 2), j + static_cast<std::size_t>(q % 2));
                    if (v > best_v) best_v = v, best = q;
                  }
                  signature->push_back(best);
                }
        }
        x = maxpool2(x).output;
        break;
      case LayerKind::flatten:
        x = x.reshaped(Shape{x.dim(0), x.numel() / x.dim(0)});
        break;
      case LayerKind::dense:
        x = dense(x, model.param(layer.name + ".weight"), model.param(layer.name + ".bias")).output;
        break;
    }
  }
  return x;
}

}  // namespace advkit::testing

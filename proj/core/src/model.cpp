#include "advkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

#include "advkit/error.hpp"
#include "advkit/layers.hpp"
#include "advkit/rng.hpp"

namespace advkit {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& text) {
  for (LayerKind k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool2, LayerKind::flatten,
                      LayerKind::dense})
    if (to_string(k) == text) return k;
  fail(Errc::invalid_argument, "unknown layer kind \"" + text + "\"");
}

ArchitectureSpec ArchitectureSpec::default_victim(Shape input_shape, std::size_t num_classes) {
  ArchitectureSpec spec;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  spec.layers = {
      {LayerKind::conv, "conv1", 16, 3, 1, 1, 0},
      {LayerKind::relu, "relu1"},
      {LayerKind::maxpool2, "pool1"},
      {LayerKind::conv, "conv2", 32, 3, 1, 1, 0},
      {LayerKind::relu, "relu2"},
      {LayerKind::maxpool2, "pool2"},
      {LayerKind::flatten, "flatten"},
      {LayerKind::dense, "fc1", 0, 0, 1, 0, 128},
      {LayerKind::relu, "relu3"},
      {LayerKind::dense, "fc2", 0, 0, 1, 0, num_classes},
  };
  return spec;
}

std::vector<Shape> infer_shapes(const ArchitectureSpec& spec) {
  if (spec.input_shape.rank() != 3)
    fail(Errc::invalid_argument, "input shape must be (C,H,W), got " + spec.input_shape.str());
  if (spec.num_classes == 0) fail(Errc::invalid_argument, "num_classes must be positive");
  if (spec.layers.empty()) fail(Errc::invalid_argument, "architecture has no layers");
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " \"" + l.name + "\" (" +
                              to_string(l.kind) + ")";
    if (l.name.empty()) fail(Errc::invalid_argument, where + ": empty name");
    for (std::size_t j = 0; j < i; ++j)
      if (spec.layers[j].name == l.name) fail(Errc::invalid_argument, where + ": duplicate name");
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.rank() != 3) fail(Errc::shape_mismatch, where + ": needs (C,H,W) input, got " + cur.str());
        if (l.out_channels == 0 || l.kernel == 0)
          fail(Errc::invalid_argument, where + ": out_channels and kernel must be positive");
        try {
          const std::size_t h = conv_output_extent(cur[1], l.kernel, l.stride, l.pad);
          const std::size_t w = conv_output_extent(cur[2], l.kernel, l.stride, l.pad);
          cur = Shape{l.out_channels, h, w};
        } catch (const Error& e) {
          fail(e.code(), where + ": " + e.what());
        }
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool2:
        if (cur.rank() != 3 || cur[1] % 2 || cur[2] % 2)
          fail(Errc::shape_mismatch, where + ": needs even (C,H,W) input, got " + cur.str());
        cur = Shape{cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::flatten:
        cur = Shape{cur.numel()};
        break;
      case LayerKind::dense:
        if (cur.rank() != 1) fail(Errc::shape_mismatch, where + ": needs flat input, got " + cur.str());
        if (l.units == 0) fail(Errc::invalid_argument, where + ": units must be positive");
        cur = Shape{l.units};
        break;
    }
    shapes.push_back(cur);
  }
  if (!(cur == Shape{spec.num_classes}))
    fail(Errc::shape_mismatch, "final layer \"" + spec.layers.back().name + "\" produces " +
                                   cur.str() + ", expected [" + std::to_string(spec.num_classes) +
                                   "]");
  return shapes;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchitectureSpec& spec) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  std::vector<std::pair<std::string, Shape>> layout;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::conv) {
      layout.emplace_back(l.name + ".weight", Shape{l.out_channels, in[0], l.kernel, l.kernel});
      layout.emplace_back(l.name + ".bias", Shape{l.out_channels});
    } else if (l.kind == LayerKind::dense) {
      layout.emplace_back(l.name + ".weight", Shape{in[0], l.units});
      layout.emplace_back(l.name + ".bias", Shape{l.units});
    }
    in = shapes[i];
  }
  return layout;
}

Model::Model(ArchitectureSpec spec, std::vector<NamedTensor> params,
             std::vector<std::string> class_names, NormalizationSpec normalization)
    : spec_(std::move(spec)),
      params_(std::move(params)),
      class_names_(std::move(class_names)),
      normalization_(std::move(normalization)) {
  const auto layout = parameter_layout(spec_);
  if (layout.size() != params_.size())
    fail(Errc::shape_mismatch, "model expects " + std::to_string(layout.size()) +
                                   " parameter tensors, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first)
      fail(Errc::invalid_argument, "parameter " + std::to_string(i) + " is \"" + params_[i].name +
                                       "\", expected \"" + layout[i].first + "\"");
    if (!(params_[i].value.shape() == layout[i].second))
      fail(Errc::shape_mismatch, "parameter " + layout[i].first + " has shape " +
                                     params_[i].value.shape().str() + ", expected " +
                                     layout[i].second.str());
    params_[i].value.require_finite(layout[i].first.c_str());
  }
  if (class_names_.empty())
    for (std::size_t c = 0; c < spec_.num_classes; ++c) class_names_.push_back(std::to_string(c));
  if (class_names_.size() != spec_.num_classes)
    fail(Errc::dimension_mismatch, std::to_string(class_names_.size()) + " class names for " +
                                       std::to_string(spec_.num_classes) + " classes");
  if (normalization_.channels() == 0)
    normalization_ = NormalizationSpec::identity(spec_.input_shape[0]);
  if (normalization_.channels() != spec_.input_shape[0])
    fail(Errc::shape_mismatch, "normalization has " + std::to_string(normalization_.channels()) +
                                   " channels, input has " + std::to_string(spec_.input_shape[0]));
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.value;
  fail(Errc::invalid_argument, "no parameter named \"" + name + "\"");
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

Model Model::with_values(std::vector<Tensor> values) const {
  if (values.size() != params_.size())
    fail(Errc::shape_mismatch, "expected " + std::to_string(params_.size()) + " tensors, got " +
                                   std::to_string(values.size()));
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < values.size(); ++i)
    params.push_back({params_[i].name, std::move(values[i])});
  return Model(spec_, std::move(params), class_names_, normalization_);
}

Model Model::with_normalization(NormalizationSpec spec) const {
  return Model(spec_, params_, class_names_, std::move(spec));
}

Model build_model(const ArchitectureSpec& spec, std::uint64_t seed,
                  std::vector<std::string> class_names, NormalizationSpec normalization) {
  const auto layout = parameter_layout(spec);
  Rng rng(seed);
  std::vector<NamedTensor> params;
  for (const auto& [name, shape] : layout) {
    Tensor t(shape);
    if (shape.rank() > 1) {
      // conv [Cout,Cin,k,k] fans in over Cin*k*k; dense [F,K] over F.
      const std::size_t fan_in = shape.rank() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (float& v : t.data()) v = static_cast<float>(rng.normal() * scale);
    }
    params.push_back({name, std::move(t)});
  }
  return Model(spec, std::move(params), std::move(class_names), std::move(normalization));
}

namespace {

struct FlattenContext {
  Shape input_shape;
};

using Context = std::variant<std::monostate, Conv2dContext, ReluContext, MaxPoolContext,
                             FlattenContext, DenseContext>;

struct Tape {
  std::vector<Context> contexts;
  Tensor output;
};

void require_batch(const Model& model, const Tensor& batch) {
  const Shape& in = model.spec().input_shape;
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2])
    fail(Errc::shape_mismatch, "batch " + batch.shape().str() + " does not match model input [N," +
                                   std::to_string(in[0]) + "," + std::to_string(in[1]) + "," +
                                   std::to_string(in[2]) + "]");
}

Tape run_forward(const Model& model, const Tensor& batch, bool record) {
  require_batch(model, batch);
  Tape tape;
  Tensor x = batch;
  std::size_t p = 0;
  const auto params = model.params();
  for (const LayerSpec& l : model.spec().layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        auto r = conv2d(x, params[p].value, params[p + 1].value, l.stride, l.pad);
        p += 2;
        x = std::move(r.output);
        tape.contexts.emplace_back(record ? Context(std::move(r.context)) : Context());
        break;
      }
      case LayerKind::relu: {
        auto r = relu(x);
        x = std::move(r.output);
        tape.contexts.emplace_back(record ? Context(std::move(r.context)) : Context());
        break;
      }
      case LayerKind::maxpool2: {
        auto r = maxpool2(x);
        x = std::move(r.output);
        tape.contexts.emplace_back(record ? Context(std::move(r.context)) : Context());
        break;
      }
      case LayerKind::flatten: {
        const Shape s = x.shape();
        x = std::move(x).reshaped(Shape{s[0], s.numel() / s[0]});
        tape.contexts.emplace_back(FlattenContext{s});
        break;
      }
      case LayerKind::dense: {
        auto r = dense(x, params[p].value, params[p + 1].value);
        p += 2;
        x = std::move(r.output);
        tape.contexts.emplace_back(record ? Context(std::move(r.context)) : Context());
        break;
      }
    }
  }
  x.require_finite("logits");
  tape.output = std::move(x);
  return tape;
}

// Walks the tape backwards. When `param_grads` is non-null it receives one
// gradient per parameter in params() order.
Tensor run_backward(const Model& model, Tape& tape, Tensor upstream,
                    std::vector<Tensor>* param_grads) {
  const auto& layers = model.spec().layers;
  std::size_t p = model.params().size();
  if (param_grads) param_grads->assign(p, Tensor());
  for (std::size_t i = layers.size(); i-- > 0;) {
    Context& ctx = tape.contexts[i];
    switch (layers[i].kind) {
      case LayerKind::conv: {
        auto g = conv2d_backward(std::get<Conv2dContext>(ctx), upstream);
        p -= 2;
        if (param_grads) {
          (*param_grads)[p] = std::move(g.kernel);
          (*param_grads)[p + 1] = std::move(g.bias);
        }
        upstream = std::move(g.input);
        break;
      }
      case LayerKind::relu:
        upstream = relu_backward(std::get<ReluContext>(ctx), upstream);
        break;
      case LayerKind::maxpool2:
        upstream = maxpool2_backward(std::get<MaxPoolContext>(ctx), upstream);
        break;
      case LayerKind::flatten:
        upstream = std::move(upstream).reshaped(std::get<FlattenContext>(ctx).input_shape);
        break;
      case LayerKind::dense: {
        auto g = dense_backward(std::get<DenseContext>(ctx), upstream);
        p -= 2;
        if (param_grads) {
          (*param_grads)[p] = std::move(g.weights);
          (*param_grads)[p + 1] = std::move(g.bias);
        }
        upstream = std::move(g.input);
        break;
      }
    }
  }
  return upstream;
}

void require_labels(const Model& model, std::span<const int> labels, std::size_t n) {
  if (labels.size() != n)
    fail(Errc::shape_mismatch, std::to_string(labels.size()) + " labels for a batch of " +
                                   std::to_string(n));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes())
      fail(Errc::out_of_range, "label " + std::to_string(y) + " outside [0, " +
                                   std::to_string(model.num_classes()) + ")");
}

}  // namespace

Tensor forward(const Model& model, const Tensor& batch) {
  return run_forward(model, batch, false).output;
}

std::vector<int> top_indices(std::span<const float> scores, std::size_t k) {
  if (k == 0 || k > scores.size())
    fail(Errc::out_of_range, "k = " + std::to_string(k) + " outside [1, " +
                                 std::to_string(scores.size()) + "]");
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                    [&](int a, int b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

Tensor predict_proba(const Model& model, const Tensor& raw_batch) {
  return softmax(forward(model, normalize(raw_batch, model.normalization())));
}

std::vector<ClassScore> predict_topk(const Model& model, const Tensor& image, std::size_t k) {
  if (k == 0 || k > model.num_classes())
    fail(Errc::out_of_range, "k = " + std::to_string(k) + " outside [1, " +
                                 std::to_string(model.num_classes()) + "]");
  if (image.rank() != 3)
    fail(Errc::shape_mismatch, "predict_topk expects one [C,H,W] image, got " + image.shape().str());
  const Tensor probs = predict_proba(model, image.reshaped(Shape{1, image.dim(0), image.dim(1), image.dim(2)}));
  std::vector<ClassScore> out;
  for (int c : top_indices(probs.data(), k))
    out.push_back({c, model.class_names()[static_cast<std::size_t>(c)], probs[static_cast<std::size_t>(c)]});
  return out;
}

LossAndGradient input_gradient_batch(const Model& model, const Tensor& batch,
                                     std::span<const int> labels) {
  require_batch(model, batch);
  require_labels(model, labels, batch.dim(0));
  Tape tape = run_forward(model, batch, true);
  SoftmaxXent x = softmax_xent(tape.output, labels, Reduction::sum);
  Tensor grad = run_backward(model, tape, std::move(x.dlogits), nullptr);
  return {x.loss, std::move(grad)};
}

Tensor input_gradient(const Model& model, const Tensor& image, int label) {
  if (image.rank() == 4) {
    std::vector<int> labels(image.dim(0), label);
    return input_gradient_batch(model, image, labels).gradient;
  }
  if (image.rank() != 3)
    fail(Errc::shape_mismatch, "input_gradient expects [C,H,W], got " + image.shape().str());
  const int labels[1] = {label};
  const Shape s = image.shape();
  return input_gradient_batch(model, image.reshaped(Shape{1, s[0], s[1], s[2]}), labels)
      .gradient.reshaped(s);
}

ParameterGradients parameter_gradients(const Model& model, const Tensor& batch,
                                       std::span<const int> labels) {
  require_batch(model, batch);
  require_labels(model, labels, batch.dim(0));
  Tape tape = run_forward(model, batch, true);
  SoftmaxXent x = softmax_xent(tape.output, labels, Reduction::mean);
  ParameterGradients out;
  out.loss = x.loss;
  out.logits = tape.output;
  run_backward(model, tape, std::move(x.dlogits), &out.params);
  return out;
}

}  // namespace advkit

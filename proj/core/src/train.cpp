#include "advkit/train.hpp"

#include <numeric>

#include "advkit/error.hpp"
#include "advkit/layers.hpp"
#include "advkit/rng.hpp"

namespace advkit {

void TrainConfig::validate() const {
  if (epochs == 0) fail(Errc::invalid_argument, "epochs must be positive");
  if (batch_size == 0) fail(Errc::invalid_argument, "batch_size must be positive");
  if (!(learning_rate > 0.0)) fail(Errc::invalid_argument, "learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    fail(Errc::invalid_argument, "momentum must lie in [0, 1)");
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : learning_rate_(static_cast<float>(learning_rate)), momentum_(static_cast<float>(momentum)) {}

void SgdMomentum::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size())
    fail(Errc::shape_mismatch, "optimizer got " + std::to_string(grads.size()) +
                                   " gradients for " + std::to_string(params.size()) + " tensors");
  if (velocity_.empty())
    for (const Tensor& p : params) velocity_.emplace_back(p.shape());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(grads[i].shape() == params[i].shape()))
      fail(Errc::shape_mismatch, "gradient " + grads[i].shape().str() + " for parameter " +
                                     params[i].shape().str());
    auto v = velocity_[i].data();
    auto p = params[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      p[j] -= learning_rate_ * v[j];
    }
    params[i].require_finite("parameters after SGD step");
  }
}

TrainResult train(const Model& model, const Dataset& train_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) fail(Errc::invalid_argument, "training set is empty");
  if (train_set.num_classes() != model.num_classes())
    fail(Errc::dimension_mismatch, "dataset has " + std::to_string(train_set.num_classes()) +
                                       " classes, model has " +
                                       std::to_string(model.num_classes()));

  std::vector<Tensor> values;
  for (const auto& p : model.params()) values.push_back(p.value);
  SgdMomentum optimizer(config.learning_rate, config.momentum);
  const NormalizationSpec& norm = model.normalization();
  Model current = model;

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0, wrong = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = normalize(train_set.batch(idx), norm);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.label(i));

      ParameterGradients g = parameter_gradients(current, batch, labels);
      // Count mistakes on the pre-update logits of this batch.
      const Tensor& logits = g.logits;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto row = logits.data().subspan(r * model.num_classes(), model.num_classes());
        if (top_indices(row, 1)[0] != labels[r]) ++wrong;
      }
      loss_sum += g.loss;
      ++batches;
      optimizer.step(values, g.params);
      current = current.with_values(values);
    }
    EpochStats stats{loss_sum / static_cast<double>(batches),
                     100.0 * static_cast<double>(wrong) / static_cast<double>(order.size())};
    result.history.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats);
  }
  result.model = std::move(current);
  return result;
}

}  // namespace advkit

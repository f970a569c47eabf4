#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/model.hpp"

namespace advkit {

struct TrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 1;

  /// Throws invalid_argument unless epochs, batch_size and learning_rate are
  /// positive and momentum lies in [0, 1).
  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;           // mean minibatch loss over the epoch
  double train_error_percent = 0.0;  // misclassified before each update
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

/// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(std::span<Tensor> params, std::span<const Tensor> grads);

 private:
  float learning_rate_;
  float momentum_;
  std::vector<Tensor> velocity_;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&)>;

/// Minibatch SGD with momentum on the model's own normalisation. Each epoch
/// visits the data in an order shuffled from (seed, epoch). Deterministic
/// for a given (model, dataset, config). The final partial batch is kept.
TrainResult train(const Model& model, const Dataset& train_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace advkit

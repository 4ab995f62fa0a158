#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sscae/data.hpp"
#include "sscae/metrics.hpp"
#include "sscae/model.hpp"

namespace sscae {

struct OptimConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t shuffle_seed = 1;
  /// Energy-concentration cutoff for the delta_filter_count column of the reports.
  double delta_threshold = kDeltaThreshold;

  void validate(std::size_t dataset_size) const;
};

/// Momentum buffers shaped like the parameters.
template <typename T>
using Velocity = ModelState<T>;

template <typename T>
Velocity<T> zero_velocity(const ModelState<T>& params);

/// v <- momentum * v - lr * g; p <- p + v. Bumps params.version.
template <typename T>
void sgd_step(ModelState<T>& params, const Gradients<T>& grads, Velocity<T>& velocity,
              const OptimConfig& cfg);

template <typename T>
struct TrainResult {
  ModelState<T> model;
  std::vector<TrainReport> reports;
};

using EpochCallback = std::function<void(const TrainReport&)>;

/// Minibatch SGD over `data` for cfg.epochs epochs. Each epoch visits every
/// image once in an order drawn from cfg.shuffle_seed; the last partial
/// batch is kept. A non-finite loss raises NonFiniteError naming the first
/// offending stage.
template <typename T>
TrainResult<T> train(ModelState<T> model, const Dataset& data, const OptimConfig& optim_cfg,
                     const ModelConfig& model_cfg, const EpochCallback& on_epoch = {});

struct Evaluation {
  LossBreakdown loss;  // means over the dataset
  std::size_t delta_filter_count = 0;
  std::optional<double> mean_hoyer;
  std::optional<double> population_sparsity;
  std::optional<double> activity_uniformity;
};

/// Forward-only pass over the whole dataset with fixed parameters.
template <typename T>
Evaluation evaluate(const ModelState<T>& model, const Dataset& data, const ModelConfig& model_cfg,
                    std::size_t batch_size = 64);

/// Epoch permutations: Fisher-Yates driven by rng.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace sscae

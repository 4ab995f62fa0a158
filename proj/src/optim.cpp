#include "sscae/optim.hpp"

#include <chrono>
#include <cmath>

namespace sscae {

void OptimConfig::validate(std::size_t dataset_size) const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(delta_threshold > 0.0 && delta_threshold <= 1.0))
    throw ConfigError("delta threshold must lie in (0, 1]");
  if (batch_size > dataset_size)
    throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                      std::to_string(dataset_size));
}

template <typename T>
Velocity<T> zero_velocity(const ModelState<T>& p) {
  Velocity<T> v;
  v.encoder.weights = Tensor<T>(p.encoder.weights.shape());
  v.encoder.bias.assign(p.encoder.bias.size(), T(0));
  v.decoder.weights = Tensor<T>(p.decoder.weights.shape());
  v.decoder.bias.assign(p.decoder.bias.size(), T(0));
  return v;
}

namespace {

template <typename T>
void momentum_update(std::span<T> p, std::span<const T> g, std::span<T> v, T momentum, T lr,
                     const char* name) {
  if (p.size() != g.size() || p.size() != v.size())
    throw ShapeError(std::string("sgd_step: size mismatch in ") + name);
  for (std::size_t q = 0; q < p.size(); ++q) {
    v[q] = momentum * v[q] - lr * g[q];
    p[q] += v[q];
  }
}

}  // namespace

template <typename T>
void sgd_step(ModelState<T>& params, const Gradients<T>& grads, Velocity<T>& velocity,
              const OptimConfig& cfg) {
  const T m = static_cast<T>(cfg.momentum);
  const T lr = static_cast<T>(cfg.learning_rate);
  if (params.encoder.weights.shape() != grads.encoder.weights.shape() ||
      params.decoder.weights.shape() != grads.decoder.weights.shape() ||
      params.encoder.weights.shape() != velocity.encoder.weights.shape() ||
      params.decoder.weights.shape() != velocity.decoder.weights.shape())
    throw ShapeError("sgd_step: parameter, gradient and velocity shapes disagree");
  momentum_update<T>(params.encoder.weights.data(), grads.encoder.weights.data(),
                     velocity.encoder.weights.data(), m, lr, "encoder.weights");
  momentum_update<T>(params.encoder.bias, grads.encoder.bias, velocity.encoder.bias, m, lr,
                     "encoder.bias");
  momentum_update<T>(params.decoder.weights.data(), grads.decoder.weights.data(),
                     velocity.decoder.weights.data(), m, lr, "decoder.weights");
  momentum_update<T>(params.decoder.bias, grads.decoder.bias, velocity.decoder.bias, m, lr,
                     "decoder.bias");
  ++params.version;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

namespace {

template <typename T>
bool grads_finite(const Gradients<T>& g) {
  auto ok = [](std::span<const T> s) {
    for (T v : s)
      if (!std::isfinite(v)) return false;
    return true;
  };
  return ok(g.encoder.weights.data()) && ok(g.encoder.bias) && ok(g.decoder.weights.data()) &&
         ok(g.decoder.bias);
}

/// Re-runs the batch with per-stage checks to name where values first blew up.
template <typename T>
[[noreturn]] void diagnose_divergence(const ModelState<T>& model, const Tensor<T>& x,
                                      const ModelConfig& cfg, std::size_t epoch,
                                      std::size_t iteration, const char* fallback_stage) {
  std::string stage = fallback_stage;
  require_finite(x, "input");
  try {
    forward(model, x, cfg, /*check_finite=*/true);
  } catch (const NonFiniteError& e) {
    stage = e.stage();
  }
  throw NonFiniteError(stage, "training diverged at epoch " + std::to_string(epoch) +
                                  ", iteration " + std::to_string(iteration) +
                                  ": first non-finite stage is " + stage);
}

}  // namespace

template <typename T>
TrainResult<T> train(ModelState<T> model, const Dataset& data, const OptimConfig& optim_cfg,
                     const ModelConfig& model_cfg, const EpochCallback& on_epoch) {
  model_cfg.validate();
  optim_cfg.validate(data.size());
  if (data.shape.c != model_cfg.in_channels || data.shape.h != model_cfg.input_h ||
      data.shape.w != model_cfg.input_w)
    throw ShapeError("train: dataset images " + data.shape.str() + " do not match model input " +
                     model_cfg.input_shape(data.size()).str());

  TrainResult<T> result;
  Velocity<T> velocity = zero_velocity(model);
  Rng shuffle_rng(optim_cfg.shuffle_seed);
  std::size_t iteration = 0;

  for (std::size_t epoch = 1; epoch <= optim_cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled_indices(data.size(), shuffle_rng);
    MapStatistics stats(model_cfg.eps);
    double rec_sum = 0.0, sp_sum = 0.0, total_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += optim_cfg.batch_size) {
      const std::size_t count = std::min(optim_cfg.batch_size, order.size() - start);
      const Tensor<T> x = data.batch<T>(std::span(order).subspan(start, count));
      auto fwd = forward(model, x, model_cfg);
      auto bwd = backward(model, x, fwd.stages, model_cfg);
      ++iteration;
      if (!std::isfinite(bwd.loss.total))
        diagnose_divergence(model, x, model_cfg, epoch, iteration, "loss");
      if (!grads_finite(bwd.grads))
        diagnose_divergence(model, x, model_cfg, epoch, iteration, "backward");
      const double w = static_cast<double>(count);
      rec_sum += bwd.loss.l2rec * w;
      sp_sum += bwd.loss.l1sp * w;
      total_sum += bwd.loss.total * w;
      stats.add(fwd.maps);
      sgd_step(model, bwd.grads, velocity, optim_cfg);
    }

    const double n = static_cast<double>(data.size());
    TrainReport r;
    r.epoch = epoch;
    r.iterations = iteration;
    r.l2rec = rec_sum / n;
    r.l1sp = sp_sum / n;
    r.total = total_sum / n;
    r.delta_filter_count = delta_filter_count(model.encoder.weights, optim_cfg.delta_threshold);
    r.mean_hoyer = stats.mean_hoyer();
    r.population_sparsity = stats.population_sparsity();
    r.activity_uniformity = stats.activity_uniformity();
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(r);
    if (on_epoch) on_epoch(r);
  }
  result.model = std::move(model);
  return result;
}

template <typename T>
Evaluation evaluate(const ModelState<T>& model, const Dataset& data, const ModelConfig& cfg,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  Evaluation ev;
  MapStatistics stats(cfg.eps);
  double rec = 0.0, sp = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    idx.resize(count);
    for (std::size_t q = 0; q < count; ++q) idx[q] = start + q;
    const Tensor<T> x = data.batch<T>(idx);
    auto fwd = forward(model, x, cfg);
    const LossBreakdown l = evaluate_loss(x, fwd, cfg);
    rec += l.l2rec * static_cast<double>(count);
    sp += l.l1sp * static_cast<double>(count);
    stats.add(fwd.maps);
  }
  const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  ev.loss.l2rec = rec / n;
  ev.loss.l1sp = sp / n;
  ev.loss.lambda = cfg.effective_lambda();
  ev.loss.total = total_loss(ev.loss.l2rec, ev.loss.l1sp, ev.loss.lambda);
  ev.delta_filter_count = delta_filter_count(model.encoder.weights);
  ev.mean_hoyer = stats.mean_hoyer();
  ev.population_sparsity = stats.population_sparsity();
  ev.activity_uniformity = stats.activity_uniformity();
  return ev;
}

#define SSCAE_INSTANTIATE_OPTIM(T)                                                            \
  template Velocity<T> zero_velocity(const ModelState<T>&);                                   \
  template void sgd_step(ModelState<T>&, const Gradients<T>&, Velocity<T>&, const OptimConfig&); \
  template TrainResult<T> train(ModelState<T>, const Dataset&, const OptimConfig&,            \
                                const ModelConfig&, const EpochCallback&);                    \
  template Evaluation evaluate(const ModelState<T>&, const Dataset&, const ModelConfig&,      \
                               std::size_t);

SSCAE_INSTANTIATE_OPTIM(float)
SSCAE_INSTANTIATE_OPTIM(double)

}  // namespace sscae

#include "sscae/model.hpp"

#include <algorithm>
#include <cmath>

namespace sscae {

std::string to_string(Variant v) { return v == Variant::cae ? "cae" : "sscae"; }

Variant variant_from_string(const std::string& s) {
  if (s == "cae") return Variant::cae;
  if (s == "sscae") return Variant::sscae;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(NormOrder o) {
  return o == NormOrder::across_then_per ? "across_then_per" : "per_then_across";
}

NormOrder norm_order_from_string(const std::string& s) {
  if (s == "across_then_per") return NormOrder::across_then_per;
  if (s == "per_then_across") return NormOrder::per_then_across;
  throw ConfigError("unknown normalization order '" + s + "'");
}

std::string to_string(ReconNorm r) { return r == ReconNorm::l2 ? "l2" : "squared_l2"; }

ReconNorm recon_norm_from_string(const std::string& s) {
  if (s == "l2") return ReconNorm::l2;
  if (s == "squared_l2") return ReconNorm::squared_l2;
  throw ConfigError("unknown reconstruction norm '" + s + "'");
}

void ModelConfig::validate() const {
  if (n_filters == 0) throw ConfigError("n_filters must be positive");
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (kernel_h == 0 || kernel_w == 0) throw ConfigError("kernel dims must be positive");
  if (kernel_h > input_h || kernel_w > input_w)
    throw ConfigError("kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                      " exceeds input " + std::to_string(input_h) + "x" + std::to_string(input_w));
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (pooling) {
    const std::size_t ch = input_h - kernel_h + 1;
    const std::size_t cw = input_w - kernel_w + 1;
    if (pooling->h == 0 || pooling->w == 0) throw ConfigError("pooling window must be positive");
    if (ch % pooling->h != 0 || cw % pooling->w != 0)
      throw ConfigError("featuremaps " + std::to_string(ch) + "x" + std::to_string(cw) +
                        " not divisible by pooling window " + std::to_string(pooling->h) + "x" +
                        std::to_string(pooling->w));
  }
}

Shape ModelConfig::feature_shape(std::size_t batch) const noexcept {
  std::size_t h = input_h - kernel_h + 1;
  std::size_t w = input_w - kernel_w + 1;
  if (pooling) {
    h /= pooling->h;
    w /= pooling->w;
  }
  return Shape{batch, n_filters, h, w};
}

template <typename T>
ModelState<T> build(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Shape ws{config.n_filters, config.in_channels, config.kernel_h, config.kernel_w};
  const double enc_fan_in = static_cast<double>(config.in_channels * config.kernel_h * config.kernel_w);
  const double dec_fan_in = static_cast<double>(config.n_filters * config.kernel_h * config.kernel_w);
  ModelState<T> s;
  s.encoder.weights = rand_uniform<T>(ws, 1.0 / std::sqrt(enc_fan_in), rng);
  s.encoder.bias.assign(config.n_filters, T(0));
  s.decoder.weights = rand_uniform<T>(ws, 1.0 / std::sqrt(dec_fan_in), rng);
  s.decoder.bias.assign(config.in_channels, T(0));
  return s;
}

namespace {

template <typename T>
void stage_check(bool enabled, const Tensor<T>& t, const char* stage) {
  if (enabled)
    require_finite(t, stage);
  else
    SSCAE_DEBUG_FINITE(t, stage);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const ModelState<T>& state, const Tensor<T>& x, const ModelConfig& config,
                         bool check_finite) {
  const Shape expect = config.input_shape(x.shape().n);
  if (x.shape() != expect)
    throw ShapeError("forward: input " + x.shape().str() + " does not match config " +
                     expect.str());
  ForwardResult<T> out;
  Stages<T>& st = out.stages;
  st.version = state.version;

  st.conv_out = conv_valid_forward(x, state.encoder, st.encoder);
  stage_check(check_finite, st.conv_out, "encoder convolution");

  if (config.pooling) {
    Pooled<T> pooled = maxpool_forward(st.conv_out, *config.pooling);
    st.pre_activation = std::move(pooled.values);
    st.switches = std::move(pooled.switches);
  } else {
    st.pre_activation = st.conv_out;
  }

  Tensor<T> h = activation_forward(st.pre_activation, config.nonlinearity, st.activation);
  stage_check(check_finite, h, "encoder nonlinearity");

  if (config.normalization_enabled()) {
    const T eps = static_cast<T>(config.eps);
    if (config.norm_order == NormOrder::across_then_per) {
      Tensor<T> a = normalize_across_maps(h, eps, st.first_norm);
      stage_check(check_finite, a, "across-map normalization");
      st.maps = normalize_per_map(a, eps, st.second_norm);
      stage_check(check_finite, st.maps, "per-map normalization");
    } else {
      Tensor<T> a = normalize_per_map(h, eps, st.first_norm);
      stage_check(check_finite, a, "per-map normalization");
      st.maps = normalize_across_maps(a, eps, st.second_norm);
      stage_check(check_finite, st.maps, "across-map normalization");
    }
  } else {
    st.maps = std::move(h);
  }

  Tensor<T> decoder_in = st.switches ? unpool_forward(st.maps, *st.switches) : st.maps;
  Tensor<T> r = conv_full_forward(decoder_in, state.decoder, st.decoder);
  stage_check(check_finite, r, "decoder convolution");
  if (r.shape() != x.shape())
    throw ShapeError("forward: decoder output " + r.shape().str() + " does not restore input " +
                     x.shape().str());
  st.reconstruction = activation_forward(r, config.output_activation(), st.output_activation);
  stage_check(check_finite, st.reconstruction, "decoder nonlinearity");

  st.live = true;
  out.reconstruction = st.reconstruction;
  out.maps = st.maps;
  return out;
}

template <typename T>
LossBreakdown evaluate_loss(const Tensor<T>& x, const ForwardResult<T>& fwd,
                            const ModelConfig& config) {
  LossBreakdown loss;
  loss.l2rec = recon_loss(x, fwd.reconstruction, config.recon).value;
  loss.l1sp = sparsity_loss(fwd.maps).value;
  loss.lambda = config.effective_lambda();
  loss.total = total_loss(loss.l2rec, loss.l1sp, loss.lambda);
  return loss;
}

template <typename T>
BackwardResult<T> backward(const ModelState<T>& state, const Tensor<T>& x, Stages<T>& st,
                           const ModelConfig& config) {
  if (!st.live) throw StaleTapeError("backward: stages already consumed or never filled");
  if (st.version != state.version)
    throw StaleTapeError("backward: stages from parameter version " + std::to_string(st.version) +
                         ", model is at " + std::to_string(state.version));
  st.live = false;

  BackwardResult<T> out;
  LossValue<T> rec = recon_loss(x, st.reconstruction, config.recon);
  LossValue<T> sp = sparsity_loss(st.maps);
  out.loss.l2rec = rec.value;
  out.loss.l1sp = sp.value;
  out.loss.lambda = config.effective_lambda();
  out.loss.total = total_loss(rec.value, sp.value, out.loss.lambda);

  Tensor<T> g = activation_backward(rec.grad, st.output_activation);
  ConvGrads<T> dec = conv_full_backward(g, st.decoder);
  out.grads.decoder.weights = std::move(dec.weights);
  out.grads.decoder.bias = std::move(dec.bias);

  Tensor<T> g_maps = st.switches ? unpool_backward(dec.input, *st.switches) : std::move(dec.input);
  const T lambda = static_cast<T>(out.loss.lambda);
  for (std::size_t q = 0; q < g_maps.size(); ++q) g_maps[q] += lambda * sp.grad[q];

  if (config.normalization_enabled()) {
    g_maps = normalize_backward(g_maps, st.second_norm);
    g_maps = normalize_backward(g_maps, st.first_norm);
  }
  Tensor<T> g_pre = activation_backward(g_maps, st.activation);
  Tensor<T> g_conv = st.switches ? maxpool_backward(g_pre, *st.switches) : std::move(g_pre);
  ConvGrads<T> enc = conv_valid_backward(g_conv, st.encoder);
  out.grads.encoder.weights = std::move(enc.weights);
  out.grads.encoder.bias = std::move(enc.bias);
  out.grads.version = state.version;
  return out;
}

// ---------------------------------------------------------------------------
// gradient check

double GradCheckReport::worst() const noexcept {
  double w = 0.0;
  for (const auto& g : groups) w = std::max(w, g.max_rel_error);
  return w;
}

namespace {

bool near_kink(const Stages<double>& st, const ModelConfig& config, double margin) {
  if (config.nonlinearity == Activation::relu) {
    for (double z : st.pre_activation.data())
      if (std::abs(z) < margin) return true;
  }
  if (config.pooling) {
    const Shape& s = st.conv_out.shape();
    const Window win = *config.pooling;
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < s.h; i += win.h)
          for (std::size_t j = 0; j < s.w; j += win.w) {
            double best = -INFINITY, second = -INFINITY;
            for (std::size_t u = 0; u < win.h; ++u)
              for (std::size_t v = 0; v < win.w; ++v) {
                const double z = st.conv_out.at(b, c, i + u, j + v);
                if (z > best) {
                  second = best;
                  best = z;
                } else if (z > second) {
                  second = z;
                }
              }
            if (win.h * win.w > 1 && best - second < margin) return true;
          }
  }
  return false;
}

double loss_at(const ModelState<double>& s, const Tensor<double>& x, const ModelConfig& config) {
  return evaluate_loss(x, forward(s, x, config), config).total;
}

}  // namespace

GradCheckReport grad_check(const ModelConfig& config_in, std::size_t n_trials, double tol,
                           const GradCheckOptions& options) {
  ModelConfig config = config_in;
  config.precision = Precision::fp64;
  config.validate();

  GradCheckReport report;
  report.trials = n_trials;
  report.tol = tol;
  report.groups = {{"encoder.weights"}, {"encoder.bias"}, {"decoder.weights"}, {"decoder.bias"}};

  Rng rng(config.seed ^ 0x5eedc0deULL);
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    ModelState<double> state;
    Tensor<double> x;
    for (int attempt = 0;; ++attempt) {
      ModelConfig c = config;
      c.seed = rng.next_u64();
      state = build<double>(c);
      for (auto& b : state.encoder.bias) b = rng.uniform(-0.1, 0.1);
      for (auto& b : state.decoder.bias) b = rng.uniform(-0.1, 0.1);
      x = rand_uniform<double>(config.input_shape(options.batch), 0.5, rng);
      for (double& v : x.data()) v += 0.5;
      auto probe = forward(state, x, config);
      if (!near_kink(probe.stages, config, options.kink_margin) || attempt >= 200) break;
    }

    auto fwd = forward(state, x, config);
    const Gradients<double> grads = backward(state, x, fwd.stages, config).grads;

    bool trial_failed = false;
    auto check_group = [&](GradCheckGroup& group, std::span<double> params,
                           std::span<const double> analytic) {
      for (std::size_t q = 0; q < params.size(); ++q) {
        const double saved = params[q];
        params[q] = saved + options.step;
        const double up = loss_at(state, x, config);
        params[q] = saved - options.step;
        const double down = loss_at(state, x, config);
        params[q] = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        const double a = analytic[q];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
        const double rel = std::abs(a - numeric) / denom;
        if (!(rel < tol)) trial_failed = true;
        if (rel > group.max_rel_error || std::isnan(rel)) {
          group.max_rel_error = std::isnan(rel) ? INFINITY : rel;
          group.worst_trial = trial;
          group.worst_index = q;
          group.analytic = a;
          group.numeric = numeric;
        }
      }
    };
    check_group(report.groups[0], state.encoder.weights.data(), grads.encoder.weights.data());
    check_group(report.groups[1], state.encoder.bias, grads.encoder.bias);
    check_group(report.groups[2], state.decoder.weights.data(), grads.decoder.weights.data());
    check_group(report.groups[3], state.decoder.bias, grads.decoder.bias);
    if (trial_failed) report.failing_trials.push_back(trial);
  }
  return report;
}

#define SSCAE_INSTANTIATE_MODEL(T)                                                             \
  template ModelState<T> build<T>(const ModelConfig&);                                         \
  template ForwardResult<T> forward(const ModelState<T>&, const Tensor<T>&, const ModelConfig&, \
                                    bool);                                                     \
  template BackwardResult<T> backward(const ModelState<T>&, const Tensor<T>&, Stages<T>&,      \
                                      const ModelConfig&);                                     \
  template LossBreakdown evaluate_loss(const Tensor<T>&, const ForwardResult<T>&,              \
                                       const ModelConfig&);

SSCAE_INSTANTIATE_MODEL(float)
SSCAE_INSTANTIATE_MODEL(double)

}  // namespace sscae

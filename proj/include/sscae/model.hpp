#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sscae/layers.hpp"
#include "sscae/loss.hpp"
#include "sscae/tensor.hpp"

namespace sscae {

enum class Variant { cae, sscae };
enum class NormOrder { across_then_per, per_then_across };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(NormOrder o);
NormOrder norm_order_from_string(const std::string& s);
std::string to_string(ReconNorm r);
ReconNorm recon_norm_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::sscae;
  std::size_t n_filters = 16;
  std::size_t kernel_h = 5;
  std::size_t kernel_w = 5;
  std::size_t in_channels = 1;
  std::size_t input_h = 28;
  std::size_t input_w = 28;
  Activation nonlinearity = Activation::sigmoid;
  std::optional<Window> pooling;
  double lambda = 0.1;
  NormOrder norm_order = NormOrder::across_then_per;
  /// sscae only; false bypasses both l2 steps (used to compare against cae).
  bool normalize = true;
  double eps = 1e-8;
  ReconNorm recon = ReconNorm::l2;
  Precision precision = Precision::fp64;
  std::uint64_t seed = 1;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  bool normalization_enabled() const noexcept { return variant == Variant::sscae && normalize; }
  /// cae ignores lambda.
  double effective_lambda() const noexcept { return variant == Variant::sscae ? lambda : 0.0; }
  /// relu decoding ends in identity so mid-gray stays reachable.
  Activation output_activation() const noexcept {
    return nonlinearity == Activation::sigmoid ? Activation::sigmoid : Activation::identity;
  }

  Shape input_shape(std::size_t batch) const noexcept {
    return Shape{batch, in_channels, input_h, input_w};
  }
  /// Shape of the featuremaps that reach the decoder (after pooling, if any).
  Shape feature_shape(std::size_t batch) const noexcept;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelState {
  ConvParams<T> encoder;  // [K, C, k_h, k_w], K biases
  ConvParams<T> decoder;  // [K, C, k_h, k_w], C biases
  /// Bumped on every parameter update; stages from an older version are stale.
  std::uint64_t version = 0;

  bool operator==(const ModelState&) const = default;
};

template <typename T>
using Gradients = ModelState<T>;

template <typename T>
struct Stages {
  ConvTape<T> encoder;
  ConvTape<T> decoder;
  ActivationTape<T> activation;
  ActivationTape<T> output_activation;
  NormTape<T> first_norm;
  NormTape<T> second_norm;
  std::optional<SwitchMap> switches;
  Tensor<T> conv_out;        // encoder convolution output, before pooling
  Tensor<T> pre_activation;  // input of the encoder nonlinearity
  Tensor<T> reconstruction;
  Tensor<T> maps;            // featuremaps passed to the decoder
  std::uint64_t version = 0;
  bool live = false;
};

template <typename T>
struct ForwardResult {
  Tensor<T> reconstruction;
  Tensor<T> maps;
  Stages<T> stages;
};

template <typename T>
struct BackwardResult {
  Gradients<T> grads;
  LossBreakdown loss;
};

/// Weights uniform on +-1/sqrt(fan_in), biases zero; deterministic in config.seed.
template <typename T>
ModelState<T> build(const ModelConfig& config);

/// Encode, optionally pool, apply the nonlinearity, normalize (sscae), unpool
/// with the encoder's switches and decode. With check_finite every stage is
/// checked and the first non-finite one raises NonFiniteError.
template <typename T>
ForwardResult<T> forward(const ModelState<T>& state, const Tensor<T>& x, const ModelConfig& config,
                         bool check_finite = false);

/// Loss of the forward pass plus gradients of rec + lambda * sparsity.
/// Consumes the stages.
template <typename T>
BackwardResult<T> backward(const ModelState<T>& state, const Tensor<T>& x, Stages<T>& stages,
                           const ModelConfig& config);

/// Loss only (no gradients).
template <typename T>
LossBreakdown evaluate_loss(const Tensor<T>& x, const ForwardResult<T>& fwd,
                            const ModelConfig& config);

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_trial = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;  // encoder.weights, encoder.bias, decoder.weights, decoder.bias
  std::size_t trials = 0;
  double tol = 0.0;
  std::vector<std::size_t> failing_trials;

  bool passed() const noexcept { return failing_trials.empty() && trials > 0; }
  double worst() const noexcept;
};

struct GradCheckOptions {
  std::size_t batch = 2;
  double step = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-5;
  /// Instances whose pre-activations or pooling margins fall below this are resampled.
  double kink_margin = 1e-4;
};

/// Central finite differences against backward() over random fp64 instances.
/// Failures are reported in the result, never thrown.
GradCheckReport grad_check(const ModelConfig& config, std::size_t n_trials, double tol,
                           const GradCheckOptions& options = {});

}  // namespace sscae

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sscae/tensor.hpp"

namespace sscae {

enum class Activation { sigmoid, relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Filters [n_filters, in_channels, k_h, k_w] and one bias per output channel.
template <typename T>
struct ConvParams {
  Tensor<T> weights;
  std::vector<T> bias;

  bool operator==(const ConvParams&) const = default;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

struct Window {
  std::size_t h = 2;
  std::size_t w = 2;
  bool operator==(const Window&) const = default;
};

/// Argmax offsets recorded by max-pooling, one (row, col) pair per pooled cell,
/// relative to the top-left corner of that cell's window.
struct SwitchMap {
  Shape shape;  // pooled shape
  Window window;
  std::vector<std::uint16_t> rows;
  std::vector<std::uint16_t> cols;

  Shape input_shape() const noexcept {
    return Shape{shape.n, shape.c, shape.h * window.h, shape.w * window.w};
  }
  /// Throws ShapeError when any offset falls outside its window.
  void validate() const;

  bool operator==(const SwitchMap&) const = default;
};

// Tapes hold what one backward call needs. Backward consumes the tape; a
// second backward (or a default-constructed tape) raises StaleTapeError.

template <typename T>
struct ConvTape {
  Tensor<T> input;
  Tensor<T> weights;
  bool live = false;
};

template <typename T>
struct ActivationTape {
  Tensor<T> output;
  Activation kind = Activation::identity;
  bool live = false;
};

enum class NormAxis { across_maps, per_map };

template <typename T>
struct NormTape {
  Tensor<T> input;
  std::vector<T> norms;  // one per normalized group
  NormAxis axis = NormAxis::per_map;
  T eps = T(0);
  bool live = false;
};

// ---- convolution primitives (no bias, no tape) ----

/// y[b,k,i,j] = sum_{c,u,v} x[b,c,i+u,j+v] * w[k,c,u,v]
template <typename T>
Tensor<T> correlate_valid(const Tensor<T>& x, const Tensor<T>& w);

/// Adjoint of correlate_valid in x: scatters y through w into a
/// [n, C, H+k_h-1, W+k_w-1] tensor. This is the full convolution.
template <typename T>
Tensor<T> correlate_valid_transpose(const Tensor<T>& y, const Tensor<T>& w);

/// Adjoint of correlate_valid in w: dw[k,c,u,v] = sum_{b,i,j} gy[b,k,i,j] * x[b,c,i+u,j+v]
template <typename T>
Tensor<T> correlate_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, std::size_t k_h,
                                std::size_t k_w);

// ---- encoder convolution ----

template <typename T>
Tensor<T> conv_valid_forward(const Tensor<T>& x, const ConvParams<T>& p, ConvTape<T>& tape);
template <typename T>
Tensor<T> conv_valid_forward(const Tensor<T>& x, const ConvParams<T>& p);
template <typename T>
ConvGrads<T> conv_valid_backward(const Tensor<T>& grad_out, ConvTape<T>& tape);

// ---- decoder convolution ----

/// h: [n, K, H', W'], p.weights: [K, C, k_h, k_w], p.bias: C entries.
template <typename T>
Tensor<T> conv_full_forward(const Tensor<T>& h, const ConvParams<T>& p, ConvTape<T>& tape);
template <typename T>
Tensor<T> conv_full_forward(const Tensor<T>& h, const ConvParams<T>& p);
template <typename T>
ConvGrads<T> conv_full_backward(const Tensor<T>& grad_out, ConvTape<T>& tape);

// ---- pooling ----

template <typename T>
struct Pooled {
  Tensor<T> values;
  SwitchMap switches;
};

/// Non-overlapping max-pooling; ties go to the first element in row-major order.
template <typename T>
Pooled<T> maxpool_forward(const Tensor<T>& x, Window window);

/// Zero tensor of the pre-pooled shape with y placed at each switch position.
template <typename T>
Tensor<T> unpool_forward(const Tensor<T>& y, const SwitchMap& switches);
template <typename T>
Tensor<T> unpool_forward(const Tensor<T>& y, const SwitchMap& switches, const Shape& out_shape);

/// Gradient of maxpool w.r.t. its input (routes grad to the argmax).
template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_pooled, const SwitchMap& switches) {
  return unpool_forward(grad_pooled, switches);
}

/// Gradient of unpool w.r.t. its input (gathers grad at the switch positions).
template <typename T>
Tensor<T> unpool_backward(const Tensor<T>& grad_out, const SwitchMap& switches);

// ---- nonlinearity ----

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& z, Activation kind, ActivationTape<T>& tape);
template <typename T>
Tensor<T> activation_forward(const Tensor<T>& z, Activation kind);
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& grad_out, ActivationTape<T>& tape);

// ---- l2 normalization ----

/// Divides each feature vector h[b,:,i,j] by max(||h[b,:,i,j]||_2, eps).
template <typename T>
Tensor<T> normalize_across_maps(const Tensor<T>& h, T eps, NormTape<T>& tape);

/// Divides each featuremap h[b,k,:,:] by max(||h[b,k,:,:]||_2, eps).
template <typename T>
Tensor<T> normalize_per_map(const Tensor<T>& h, T eps, NormTape<T>& tape);

/// For a group v with r = ||v|| > eps: (g - v_hat (v_hat . g)) / r.
/// Below eps the group was scaled by 1/eps, so the gradient is g / eps.
template <typename T>
Tensor<T> normalize_backward(const Tensor<T>& grad_out, NormTape<T>& tape);

}  // namespace sscae

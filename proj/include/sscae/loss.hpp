#pragma once

#include "sscae/tensor.hpp"

namespace sscae {

/// Reconstruction, sparsity and combined objectives of one batch.
struct LossBreakdown {
  double l2rec = 0.0;
  double l1sp = 0.0;
  double total = 0.0;
  double lambda = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

enum class ReconNorm {
  l2,          // ||x - x~||_2 per item
  squared_l2,  // ||x - x~||_2^2 per item
};

template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> grad;
};

inline constexpr double kReconEps = 1e-12;

/// Mean over batch items of ||x - x~||_2 (or its square), with the gradient
/// w.r.t. x~. The unsquared gradient divides by max(norm, kReconEps).
template <typename T>
LossValue<T> recon_loss(const Tensor<T>& x, const Tensor<T>& recon, ReconNorm norm = ReconNorm::l2);

/// (1/m)(1/n) sum over items and maps of the map's l1 norm; the gradient is
/// sign(h)/(m*n) with sign(0) = 0.
template <typename T>
LossValue<T> sparsity_loss(const Tensor<T>& maps);

inline double total_loss(double rec, double sp, double lambda) { return rec + lambda * sp; }

}  // namespace sscae

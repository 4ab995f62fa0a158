#include "sscae/loss.hpp"

#include <cmath>

namespace sscae {

template <typename T>
LossValue<T> recon_loss(const Tensor<T>& x, const Tensor<T>& recon, ReconNorm norm) {
  if (x.shape() != recon.shape())
    throw ShapeError("recon_loss: input " + x.shape().str() + " vs reconstruction " +
                     recon.shape().str());
  const Shape& s = x.shape();
  LossValue<T> out;
  out.grad = Tensor<T>(s);
  if (s.n == 0) return out;
  const std::size_t per_item = s.c * s.h * s.w;
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t b = 0; b < s.n; ++b) {
    const std::size_t base = b * per_item;
    double sq = 0.0;
    for (std::size_t q = 0; q < per_item; ++q) {
      const double d = static_cast<double>(recon[base + q]) - x[base + q];
      sq += d * d;
    }
    double scale;
    if (norm == ReconNorm::l2) {
      const double r = std::sqrt(sq);
      out.value += r * inv_n;
      scale = inv_n / std::max(r, kReconEps);
    } else {
      out.value += sq * inv_n;
      scale = 2.0 * inv_n;
    }
    for (std::size_t q = 0; q < per_item; ++q)
      out.grad[base + q] = static_cast<T>(scale * (static_cast<double>(recon[base + q]) - x[base + q]));
  }
  return out;
}

template <typename T>
LossValue<T> sparsity_loss(const Tensor<T>& maps) {
  const Shape& s = maps.shape();
  LossValue<T> out;
  out.grad = Tensor<T>(s);
  if (s.n == 0 || s.c == 0) return out;
  const double inv_mn = 1.0 / (static_cast<double>(s.n) * static_cast<double>(s.c));
  const T g = static_cast<T>(inv_mn);
  double acc = 0.0;
  for (std::size_t q = 0; q < maps.size(); ++q) {
    const T v = maps[q];
    acc += std::abs(static_cast<double>(v));
    out.grad[q] = v > T(0) ? g : (v < T(0) ? -g : T(0));
  }
  out.value = acc * inv_mn;
  return out;
}

template LossValue<float> recon_loss(const Tensor<float>&, const Tensor<float>&, ReconNorm);
template LossValue<double> recon_loss(const Tensor<double>&, const Tensor<double>&, ReconNorm);
template LossValue<float> sparsity_loss(const Tensor<float>&);
template LossValue<double> sparsity_loss(const Tensor<double>&);

}  // namespace sscae

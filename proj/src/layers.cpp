#include "sscae/layers.hpp"

#include <cmath>
#include <limits>

namespace sscae {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown nonlinearity '" + s + "'");
}

void SwitchMap::validate() const {
  const std::size_t cells = shape.size();
  if (rows.size() != cells || cols.size() != cells)
    throw ShapeError("switch map: " + std::to_string(rows.size()) + " entries for pooled shape " +
                     shape.str());
  for (std::size_t k = 0; k < cells; ++k) {
    if (rows[k] >= window.h || cols[k] >= window.w)
      throw ShapeError("switch map: coordinate (" + std::to_string(rows[k]) + "," +
                       std::to_string(cols[k]) + ") of cell " + std::to_string(k) +
                       " lies outside its window");
  }
}

namespace {

void take_tape(bool& live, const char* layer) {
  if (!live) throw StaleTapeError(std::string(layer) + ": backward without a matching forward");
  live = false;
}

void require_weights(const Shape& w, std::size_t in_channels, const char* what) {
  if (w.c != in_channels)
    throw ShapeError(std::string(what) + ": kernel expects " + std::to_string(w.c) +
                     " input channels, got " + std::to_string(in_channels));
  if (w.h == 0 || w.w == 0) throw ShapeError(std::string(what) + ": empty kernel");
}

}  // namespace

// ---------------------------------------------------------------------------
// convolution primitives

template <typename T>
Tensor<T> correlate_valid(const Tensor<T>& x, const Tensor<T>& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require_weights(ws, xs.c, "correlate_valid");
  if (xs.h < ws.h || xs.w < ws.w)
    throw ShapeError("correlate_valid: input " + xs.str() + " smaller than kernel " + ws.str());
  const std::size_t oh = xs.h - ws.h + 1;
  const std::size_t ow = xs.w - ws.w + 1;
  Tensor<T> y(xs.n, ws.n, oh, ow);
  for (std::size_t b = 0; b < xs.n; ++b)
    for (std::size_t k = 0; k < ws.n; ++k)
      for (std::size_t c = 0; c < xs.c; ++c)
        for (std::size_t u = 0; u < ws.h; ++u)
          for (std::size_t v = 0; v < ws.w; ++v) {
            const T wt = w.at(k, c, u, v);
            for (std::size_t i = 0; i < oh; ++i) {
              T* yr = &y.at(b, k, i, 0);
              const T* xr = &x.at(b, c, i + u, v);
              for (std::size_t j = 0; j < ow; ++j) yr[j] += wt * xr[j];
            }
          }
  return y;
}

template <typename T>
Tensor<T> correlate_valid_transpose(const Tensor<T>& y, const Tensor<T>& w) {
  const Shape& ys = y.shape();
  const Shape& ws = w.shape();
  if (ys.c != ws.n)
    throw ShapeError("full convolution: " + std::to_string(ys.c) + " maps for " +
                     std::to_string(ws.n) + " filters");
  if (ws.h == 0 || ws.w == 0) throw ShapeError("full convolution: empty kernel");
  const std::size_t oh = ys.h + ws.h - 1;
  const std::size_t ow = ys.w + ws.w - 1;
  Tensor<T> x(ys.n, ws.c, oh, ow);
  for (std::size_t b = 0; b < ys.n; ++b)
    for (std::size_t k = 0; k < ws.n; ++k)
      for (std::size_t c = 0; c < ws.c; ++c)
        for (std::size_t u = 0; u < ws.h; ++u)
          for (std::size_t v = 0; v < ws.w; ++v) {
            const T wt = w.at(k, c, u, v);
            for (std::size_t i = 0; i < ys.h; ++i) {
              const T* yr = &y.at(b, k, i, 0);
              T* xr = &x.at(b, c, i + u, v);
              for (std::size_t j = 0; j < ys.w; ++j) xr[j] += wt * yr[j];
            }
          }
  return x;
}

template <typename T>
Tensor<T> correlate_weight_grad(const Tensor<T>& x, const Tensor<T>& gy, std::size_t k_h,
                                std::size_t k_w) {
  const Shape& xs = x.shape();
  const Shape& gs = gy.shape();
  if (xs.n != gs.n || xs.h + 1 != gs.h + k_h || xs.w + 1 != gs.w + k_w)
    throw ShapeError("weight gradient: input " + xs.str() + " vs output grad " + gs.str());
  Tensor<T> dw(gs.c, xs.c, k_h, k_w);
  for (std::size_t b = 0; b < xs.n; ++b)
    for (std::size_t k = 0; k < gs.c; ++k)
      for (std::size_t c = 0; c < xs.c; ++c)
        for (std::size_t u = 0; u < k_h; ++u)
          for (std::size_t v = 0; v < k_w; ++v) {
            T acc = T(0);
            for (std::size_t i = 0; i < gs.h; ++i) {
              const T* gr = &gy.at(b, k, i, 0);
              const T* xr = &x.at(b, c, i + u, v);
              for (std::size_t j = 0; j < gs.w; ++j) acc += gr[j] * xr[j];
            }
            dw.at(k, c, u, v) += acc;
          }
  return dw;
}

namespace {

template <typename T>
void add_channel_bias(Tensor<T>& t, const std::vector<T>& bias, const char* what) {
  const Shape& s = t.shape();
  if (bias.size() != s.c)
    throw ShapeError(std::string(what) + ": " + std::to_string(bias.size()) + " biases for " +
                     std::to_string(s.c) + " channels");
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (T& v : t.map(b, c)) v += bias[c];
}

template <typename T>
std::vector<T> channel_sums(const Tensor<T>& g) {
  const Shape& s = g.shape();
  std::vector<T> out(s.c, T(0));
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (T v : g.map(b, c)) out[c] += v;
  return out;
}

}  // namespace

template <typename T>
Tensor<T> conv_valid_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  Tensor<T> y = correlate_valid(x, p.weights);
  add_channel_bias(y, p.bias, "conv_valid");
  SSCAE_DEBUG_FINITE(y, "encoder convolution");
  return y;
}

template <typename T>
Tensor<T> conv_valid_forward(const Tensor<T>& x, const ConvParams<T>& p, ConvTape<T>& tape) {
  Tensor<T> y = conv_valid_forward(x, p);
  tape.input = x;
  tape.weights = p.weights;
  tape.live = true;
  return y;
}

template <typename T>
ConvGrads<T> conv_valid_backward(const Tensor<T>& grad_out, ConvTape<T>& tape) {
  take_tape(tape.live, "conv_valid");
  const Shape& ws = tape.weights.shape();
  const Shape& xs = tape.input.shape();
  const Shape expect{xs.n, ws.n, xs.h - ws.h + 1, xs.w - ws.w + 1};
  if (grad_out.shape() != expect)
    throw ShapeError("conv_valid backward: grad " + grad_out.shape().str() + ", expected " +
                     expect.str());
  ConvGrads<T> g;
  g.input = correlate_valid_transpose(grad_out, tape.weights);
  g.weights = correlate_weight_grad(tape.input, grad_out, ws.h, ws.w);
  g.bias = channel_sums(grad_out);
  return g;
}

template <typename T>
Tensor<T> conv_full_forward(const Tensor<T>& h, const ConvParams<T>& p) {
  Tensor<T> y = correlate_valid_transpose(h, p.weights);
  add_channel_bias(y, p.bias, "conv_full");
  SSCAE_DEBUG_FINITE(y, "decoder convolution");
  return y;
}

template <typename T>
Tensor<T> conv_full_forward(const Tensor<T>& h, const ConvParams<T>& p, ConvTape<T>& tape) {
  Tensor<T> y = conv_full_forward(h, p);
  tape.input = h;
  tape.weights = p.weights;
  tape.live = true;
  return y;
}

template <typename T>
ConvGrads<T> conv_full_backward(const Tensor<T>& grad_out, ConvTape<T>& tape) {
  take_tape(tape.live, "conv_full");
  const Shape& ws = tape.weights.shape();
  const Shape& hs = tape.input.shape();
  const Shape expect{hs.n, ws.c, hs.h + ws.h - 1, hs.w + ws.w - 1};
  if (grad_out.shape() != expect)
    throw ShapeError("conv_full backward: grad " + grad_out.shape().str() + ", expected " +
                     expect.str());
  ConvGrads<T> g;
  // decoder weights [K, C, ...] read as a K-output, C-input encoder kernel
  g.input = correlate_valid(grad_out, tape.weights);
  g.weights = correlate_weight_grad(grad_out, tape.input, ws.h, ws.w);
  g.bias = channel_sums(grad_out);
  return g;
}

// ---------------------------------------------------------------------------
// pooling

template <typename T>
Pooled<T> maxpool_forward(const Tensor<T>& x, Window window) {
  const Shape& s = x.shape();
  if (window.h == 0 || window.w == 0) throw ShapeError("maxpool: empty window");
  if (window.h > std::numeric_limits<std::uint16_t>::max() ||
      window.w > std::numeric_limits<std::uint16_t>::max())
    throw ShapeError("maxpool: window too large");
  if (s.h % window.h != 0 || s.w % window.w != 0)
    throw ShapeError("maxpool: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by window " + std::to_string(window.h) + "x" +
                     std::to_string(window.w));
  Pooled<T> out;
  const Shape ps{s.n, s.c, s.h / window.h, s.w / window.w};
  out.values = Tensor<T>(ps);
  out.switches.shape = ps;
  out.switches.window = window;
  out.switches.rows.resize(ps.size());
  out.switches.cols.resize(ps.size());
  std::size_t cell = 0;
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < ps.h; ++i)
        for (std::size_t j = 0; j < ps.w; ++j, ++cell) {
          std::size_t br = 0, bc = 0;
          T best = x.at(b, c, i * window.h, j * window.w);
          for (std::size_t u = 0; u < window.h; ++u)
            for (std::size_t v = 0; v < window.w; ++v) {
              const T val = x.at(b, c, i * window.h + u, j * window.w + v);
              if (val > best) {
                best = val;
                br = u;
                bc = v;
              }
            }
          out.values[cell] = best;
          out.switches.rows[cell] = static_cast<std::uint16_t>(br);
          out.switches.cols[cell] = static_cast<std::uint16_t>(bc);
        }
  return out;
}

template <typename T>
Tensor<T> unpool_forward(const Tensor<T>& y, const SwitchMap& switches, const Shape& out_shape) {
  if (y.shape() != switches.shape)
    throw ShapeError("unpool: values " + y.shape().str() + " vs switches " +
                     switches.shape.str());
  if (out_shape != switches.input_shape())
    throw ShapeError("unpool: output shape " + out_shape.str() + " inconsistent with window, expected " +
                     switches.input_shape().str());
  switches.validate();
  const Shape& ps = switches.shape;
  const Window win = switches.window;
  Tensor<T> out(out_shape);
  std::size_t cell = 0;
  for (std::size_t b = 0; b < ps.n; ++b)
    for (std::size_t c = 0; c < ps.c; ++c)
      for (std::size_t i = 0; i < ps.h; ++i)
        for (std::size_t j = 0; j < ps.w; ++j, ++cell)
          out.at(b, c, i * win.h + switches.rows[cell], j * win.w + switches.cols[cell]) = y[cell];
  return out;
}

template <typename T>
Tensor<T> unpool_forward(const Tensor<T>& y, const SwitchMap& switches) {
  return unpool_forward(y, switches, switches.input_shape());
}

template <typename T>
Tensor<T> unpool_backward(const Tensor<T>& grad_out, const SwitchMap& switches) {
  if (grad_out.shape() != switches.input_shape())
    throw ShapeError("unpool backward: grad " + grad_out.shape().str() + ", expected " +
                     switches.input_shape().str());
  switches.validate();
  const Shape& ps = switches.shape;
  const Window win = switches.window;
  Tensor<T> g(ps);
  std::size_t cell = 0;
  for (std::size_t b = 0; b < ps.n; ++b)
    for (std::size_t c = 0; c < ps.c; ++c)
      for (std::size_t i = 0; i < ps.h; ++i)
        for (std::size_t j = 0; j < ps.w; ++j, ++cell)
          g[cell] = grad_out.at(b, c, i * win.h + switches.rows[cell], j * win.w + switches.cols[cell]);
  return g;
}

// ---------------------------------------------------------------------------
// nonlinearity

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& z, Activation kind) {
  Tensor<T> out = z;
  switch (kind) {
    case Activation::sigmoid:
      for (T& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
      break;
    case Activation::relu:
      for (T& v : out.data()) v = v > T(0) ? v : T(0);
      break;
    case Activation::identity:
      break;
  }
  return out;
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& z, Activation kind, ActivationTape<T>& tape) {
  Tensor<T> out = activation_forward(z, kind);
  tape.output = out;
  tape.kind = kind;
  tape.live = true;
  return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& grad_out, ActivationTape<T>& tape) {
  take_tape(tape.live, "activation");
  if (grad_out.shape() != tape.output.shape())
    throw ShapeError("activation backward: grad " + grad_out.shape().str() + " vs " +
                     tape.output.shape().str());
  Tensor<T> g = grad_out;
  auto y = tape.output.data();
  auto gd = g.data();
  switch (tape.kind) {
    case Activation::sigmoid:
      for (std::size_t k = 0; k < gd.size(); ++k) gd[k] *= y[k] * (T(1) - y[k]);
      break;
    case Activation::relu:
      for (std::size_t k = 0; k < gd.size(); ++k)
        if (!(y[k] > T(0))) gd[k] = T(0);
      break;
    case Activation::identity:
      break;
  }
  return g;
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
Tensor<T> normalize_across_maps(const Tensor<T>& h, T eps, NormTape<T>& tape) {
  const Shape& s = h.shape();
  if (s.c < 1) throw ShapeError("normalize_across_maps: no featuremaps");
  const std::size_t sites = s.map_size();
  Tensor<T> out(s);
  tape.norms.assign(s.n * sites, T(0));
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t site = 0; site < sites; ++site) {
      const std::size_t base = h.offset(b, 0, 0, 0) + site;
      T sq = T(0);
      for (std::size_t k = 0; k < s.c; ++k) sq += h[base + k * sites] * h[base + k * sites];
      const T r = std::sqrt(sq);
      tape.norms[b * sites + site] = r;
      const T denom = r > eps ? r : eps;
      for (std::size_t k = 0; k < s.c; ++k) out[base + k * sites] = h[base + k * sites] / denom;
    }
  SSCAE_DEBUG_FINITE(out, "across-map normalization");
  tape.input = h;
  tape.axis = NormAxis::across_maps;
  tape.eps = eps;
  tape.live = true;
  return out;
}

template <typename T>
Tensor<T> normalize_per_map(const Tensor<T>& h, T eps, NormTape<T>& tape) {
  const Shape& s = h.shape();
  Tensor<T> out(s);
  tape.norms.assign(s.n * s.c, T(0));
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t k = 0; k < s.c; ++k) {
      auto in = h.map(b, k);
      auto o = out.map(b, k);
      T sq = T(0);
      for (T v : in) sq += v * v;
      const T r = std::sqrt(sq);
      tape.norms[b * s.c + k] = r;
      const T denom = r > eps ? r : eps;
      for (std::size_t q = 0; q < in.size(); ++q) o[q] = in[q] / denom;
    }
  SSCAE_DEBUG_FINITE(out, "per-map normalization");
  tape.input = h;
  tape.axis = NormAxis::per_map;
  tape.eps = eps;
  tape.live = true;
  return out;
}

namespace {

// One group: `count` elements of input/grad at base + q*stride.
template <typename T>
void normalize_group_backward(const T* v, const T* g, T* out, std::size_t count,
                              std::size_t stride, T r, T eps) {
  if (!(r > eps)) {
    for (std::size_t q = 0; q < count; ++q) out[q * stride] = g[q * stride] / eps;
    return;
  }
  T dot = T(0);
  for (std::size_t q = 0; q < count; ++q) dot += v[q * stride] * g[q * stride];
  // v_hat . g = dot / r; grad = (g - v (dot / r^2)) / r
  const T radial = dot / (r * r);
  for (std::size_t q = 0; q < count; ++q)
    out[q * stride] = (g[q * stride] - v[q * stride] * radial) / r;
}

}  // namespace

template <typename T>
Tensor<T> normalize_backward(const Tensor<T>& grad_out, NormTape<T>& tape) {
  take_tape(tape.live, "normalize");
  const Shape& s = tape.input.shape();
  if (grad_out.shape() != s)
    throw ShapeError("normalize backward: grad " + grad_out.shape().str() + " vs " + s.str());
  Tensor<T> g(s);
  const std::size_t sites = s.map_size();
  if (tape.axis == NormAxis::across_maps) {
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t site = 0; site < sites; ++site) {
        const std::size_t base = tape.input.offset(b, 0, 0, 0) + site;
        normalize_group_backward(&tape.input[base], &grad_out[base], &g[base], s.c, sites,
                                 tape.norms[b * sites + site], tape.eps);
      }
  } else {
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t k = 0; k < s.c; ++k) {
        const std::size_t base = tape.input.offset(b, k, 0, 0);
        normalize_group_backward(&tape.input[base], &grad_out[base], &g[base], sites,
                                 std::size_t{1}, tape.norms[b * s.c + k], tape.eps);
      }
  }
  return g;
}

#define SSCAE_INSTANTIATE_LAYERS(T)                                                           \
  template Tensor<T> correlate_valid(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> correlate_valid_transpose(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> correlate_weight_grad(const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                                           std::size_t);                                      \
  template Tensor<T> conv_valid_forward(const Tensor<T>&, const ConvParams<T>&, ConvTape<T>&); \
  template Tensor<T> conv_valid_forward(const Tensor<T>&, const ConvParams<T>&);              \
  template ConvGrads<T> conv_valid_backward(const Tensor<T>&, ConvTape<T>&);                  \
  template Tensor<T> conv_full_forward(const Tensor<T>&, const ConvParams<T>&, ConvTape<T>&); \
  template Tensor<T> conv_full_forward(const Tensor<T>&, const ConvParams<T>&);               \
  template ConvGrads<T> conv_full_backward(const Tensor<T>&, ConvTape<T>&);                   \
  template Pooled<T> maxpool_forward(const Tensor<T>&, Window);                               \
  template Tensor<T> unpool_forward(const Tensor<T>&, const SwitchMap&, const Shape&);        \
  template Tensor<T> unpool_forward(const Tensor<T>&, const SwitchMap&);                      \
  template Tensor<T> unpool_backward(const Tensor<T>&, const SwitchMap&);                     \
  template Tensor<T> activation_forward(const Tensor<T>&, Activation, ActivationTape<T>&);    \
  template Tensor<T> activation_forward(const Tensor<T>&, Activation);                        \
  template Tensor<T> activation_backward(const Tensor<T>&, ActivationTape<T>&);               \
  template Tensor<T> normalize_across_maps(const Tensor<T>&, T, NormTape<T>&);                \
  template Tensor<T> normalize_per_map(const Tensor<T>&, T, NormTape<T>&);                    \
  template Tensor<T> normalize_backward(const Tensor<T>&, NormTape<T>&);

SSCAE_INSTANTIATE_LAYERS(float)
SSCAE_INSTANTIATE_LAYERS(double)

}  // namespace sscae

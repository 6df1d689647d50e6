#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "firmnet/io.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

enum class ActivationKind : std::uint8_t { Identity = 0, LeakyRectifier = 1, SortPairs = 2 };

// All supported activations are 1-Lipschitz, averaged, and piecewise linear.
// `alpha` is the averagedness constant used by the Lipschitz bounds: the
// identity is 0-averaged, the leaky rectifier 1/2-averaged, and pairwise
// sorting is averaged with constant above 1/2 (3/4 recorded; only membership
// in [0,1] is used).
struct ActivationSpec {
  ActivationKind kind = ActivationKind::Identity;
  double slope = 0.2;  // leaky rectifier only
  double alpha = 0.0;

  static ActivationSpec identity() { return {ActivationKind::Identity, 0.0, 0.0}; }
  static ActivationSpec leaky(double slope) {
    return {ActivationKind::LeakyRectifier, slope, 0.5};
  }
  static ActivationSpec sort_pairs() { return {ActivationKind::SortPairs, 0.0, 0.75}; }

  bool separable() const { return kind != ActivationKind::SortPairs; }
};

namespace act {

inline void forward(const ActivationSpec& spec, Tensor& z) {
  switch (spec.kind) {
    case ActivationKind::Identity:
      return;
    case ActivationKind::LeakyRectifier:
      for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i] < 0.0) z[i] *= spec.slope;
      return;
    case ActivationKind::SortPairs:
      // Ascending sort within consecutive disjoint pairs; an odd trailing
      // element passes through.
      for (std::size_t i = 0; i + 1 < z.size(); i += 2)
        if (z[i] > z[i + 1]) std::swap(z[i], z[i + 1]);
      return;
  }
}

// Applies the activation derivative at pre-activation z to vector v. The
// Jacobian is diagonal for separable kinds and a symmetric per-pair
// permutation for sort-pairs, so the same routine serves JVP and VJP.
inline void deriv_apply(const ActivationSpec& spec, const Tensor& z, Tensor& v) {
  switch (spec.kind) {
    case ActivationKind::Identity:
      return;
    case ActivationKind::LeakyRectifier:
      for (std::size_t i = 0; i < v.size(); ++i)
        if (z[i] < 0.0) v[i] *= spec.slope;
      return;
    case ActivationKind::SortPairs:
      for (std::size_t i = 0; i + 1 < v.size(); i += 2)
        if (z[i] > z[i + 1]) std::swap(v[i], v[i + 1]);
      return;
  }
}

}  // namespace act

// One affine-then-activation stage. The linear part is either a dense matrix
// or a bank of 2D convolution kernels with circular padding and odd extents.
struct Layer {
  enum class Kind : std::uint8_t { Dense = 0, Conv = 1 };

  Kind kind = Kind::Dense;
  std::size_t out_ch = 0;  // dense: rows
  std::size_t in_ch = 0;   // dense: cols
  std::size_t kh = 1, kw = 1;
  std::vector<double> weight;  // dense: out*in; conv: out*in*kh*kw
  std::vector<double> bias;    // per output channel / row
  ActivationSpec activation;

  static Layer dense(std::size_t rows, std::size_t cols, ActivationSpec act) {
    Layer l;
    l.kind = Kind::Dense;
    l.out_ch = rows;
    l.in_ch = cols;
    l.weight.assign(rows * cols, 0.0);
    l.bias.assign(rows, 0.0);
    l.activation = act;
    return l;
  }

  static Layer conv(std::size_t out_ch, std::size_t in_ch, std::size_t k, ActivationSpec act) {
    if (k % 2 == 0) throw DimensionError("conv kernel extents must be odd");
    Layer l;
    l.kind = Kind::Conv;
    l.out_ch = out_ch;
    l.in_ch = in_ch;
    l.kh = l.kw = k;
    l.weight.assign(out_ch * in_ch * k * k, 0.0);
    l.bias.assign(out_ch, 0.0);
    l.activation = act;
    return l;
  }

  std::size_t fan_in() const { return kind == Kind::Dense ? in_ch : in_ch * kh * kw; }
  std::size_t param_count() const { return weight.size() + bias.size(); }

  double& w(std::size_t o, std::size_t i, std::size_t qy, std::size_t qx) {
    return weight[((o * in_ch + i) * kh + qy) * kw + qx];
  }
  double w(std::size_t o, std::size_t i, std::size_t qy, std::size_t qx) const {
    return weight[((o * in_ch + i) * kh + qy) * kw + qx];
  }
};

namespace detail {

inline std::size_t wrap(std::ptrdiff_t v, std::size_t n) {
  std::ptrdiff_t m = v % std::ptrdiff_t(n);
  if (m < 0) m += std::ptrdiff_t(n);
  return std::size_t(m);
}

// out[xc] += wv * src[(xc + shift) mod w]: the wrapped row splits into two
// contiguous runs so the compiler can vectorize them.
inline void row_axpy_shift(double wv, const double* src, double* out, std::size_t w,
                           std::size_t shift) {
  const std::size_t head = w - shift;
  const double* s1 = src + shift;
  for (std::size_t xc = 0; xc < head; ++xc) out[xc] += wv * s1[xc];
  for (std::size_t xc = 0; xc < shift; ++xc) out[head + xc] += wv * src[xc];
}

inline double row_dot_shift(const double* a, const double* src, std::size_t w,
                            std::size_t shift) {
  const std::size_t head = w - shift;
  const double* s1 = src + shift;
  double acc = 0.0;
  for (std::size_t xc = 0; xc < head; ++xc) acc += a[xc] * s1[xc];
  for (std::size_t xc = 0; xc < shift; ++xc) acc += a[head + xc] * src[xc];
  return acc;
}

// z[o,p] = bias[o] + sum_{i,q} W[o,i,q] * x[i, p - (q - center)], periodic.
inline Tensor conv_forward(const Layer& l, const Tensor& x, bool with_bias) {
  if (x.rank() != 3 || x.extent(0) != l.in_ch)
    throw DimensionError("conv layer input channel mismatch");
  const std::size_t h = x.extent(1), w = x.extent(2);
  if (l.kh > h || l.kw > w) throw DimensionError("conv kernel larger than input");
  Tensor z({l.out_ch, h, w});
  const std::ptrdiff_t cy = std::ptrdiff_t(l.kh / 2), cx = std::ptrdiff_t(l.kw / 2);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    double* zp = z.data() + o * h * w;
    if (with_bias) {
      const double b = l.bias[o];
      for (std::size_t p = 0; p < h * w; ++p) zp[p] = b;
    }
    for (std::size_t i = 0; i < l.in_ch; ++i) {
      const double* xp = x.data() + i * h * w;
      for (std::size_t qy = 0; qy < l.kh; ++qy) {
        const std::ptrdiff_t oy = std::ptrdiff_t(qy) - cy;
        for (std::size_t qx = 0; qx < l.kw; ++qx) {
          const double wv = l.w(o, i, qy, qx);
          if (wv == 0.0) continue;
          const std::size_t shift = wrap(-(std::ptrdiff_t(qx) - cx), w);
          for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = wrap(std::ptrdiff_t(y) - oy, h);
            row_axpy_shift(wv, xp + sy * w, zp + y * w, w, shift);
          }
        }
      }
    }
  }
  return z;
}

// Adjoint of the linear part: gin[i,s] = sum_{o,q} W[o,i,q] * g[o, s + (q - center)].
inline Tensor conv_adjoint(const Layer& l, const Tensor& g, std::size_t h, std::size_t w) {
  Tensor gin({l.in_ch, h, w});
  const std::ptrdiff_t cy = std::ptrdiff_t(l.kh / 2), cx = std::ptrdiff_t(l.kw / 2);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    const double* gp = g.data() + o * h * w;
    for (std::size_t i = 0; i < l.in_ch; ++i) {
      double* ip = gin.data() + i * h * w;
      for (std::size_t qy = 0; qy < l.kh; ++qy) {
        const std::ptrdiff_t oy = std::ptrdiff_t(qy) - cy;
        for (std::size_t qx = 0; qx < l.kw; ++qx) {
          const double wv = l.w(o, i, qy, qx);
          if (wv == 0.0) continue;
          const std::size_t shift = wrap(std::ptrdiff_t(qx) - cx, w);
          for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = wrap(std::ptrdiff_t(y) + oy, h);
            row_axpy_shift(wv, gp + sy * w, ip + y * w, w, shift);
          }
        }
      }
    }
  }
  return gin;
}

// gW[o,i,q] += sum_p g[o,p] * x[i, p - (q - center)]
inline void conv_weight_grad(const Layer& l, const Tensor& x, const Tensor& g, double* gw) {
  const std::size_t h = x.extent(1), w = x.extent(2);
  const std::ptrdiff_t cy = std::ptrdiff_t(l.kh / 2), cx = std::ptrdiff_t(l.kw / 2);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    const double* gp = g.data() + o * h * w;
    for (std::size_t i = 0; i < l.in_ch; ++i) {
      const double* xp = x.data() + i * h * w;
      for (std::size_t qy = 0; qy < l.kh; ++qy) {
        const std::ptrdiff_t oy = std::ptrdiff_t(qy) - cy;
        for (std::size_t qx = 0; qx < l.kw; ++qx) {
          const std::size_t shift = wrap(-(std::ptrdiff_t(qx) - cx), w);
          double acc = 0.0;
          for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = wrap(std::ptrdiff_t(y) - oy, h);
            acc += row_dot_shift(gp + y * w, xp + sy * w, w, shift);
          }
          gw[((o * l.in_ch + i) * l.kh + qy) * l.kw + qx] += acc;
        }
      }
    }
  }
}

inline Tensor dense_forward(const Layer& l, const Tensor& x, bool with_bias) {
  if (x.size() != l.in_ch) throw DimensionError("dense layer input size mismatch");
  Tensor z({l.out_ch});
  for (std::size_t r = 0; r < l.out_ch; ++r) {
    double s = with_bias ? l.bias[r] : 0.0;
    const double* wr = l.weight.data() + r * l.in_ch;
    for (std::size_t c = 0; c < l.in_ch; ++c) s += wr[c] * x[c];
    z[r] = s;
  }
  return z;
}

inline Tensor dense_adjoint(const Layer& l, const Tensor& g) {
  Tensor gin({l.in_ch});
  for (std::size_t r = 0; r < l.out_ch; ++r) {
    const double gr = g[r];
    const double* wr = l.weight.data() + r * l.in_ch;
    for (std::size_t c = 0; c < l.in_ch; ++c) gin[c] += wr[c] * gr;
  }
  return gin;
}

inline void dense_weight_grad(const Layer& l, const Tensor& x, const Tensor& g, double* gw) {
  for (std::size_t r = 0; r < l.out_ch; ++r) {
    const double gr = g[r];
    double* row = gw + r * l.in_ch;
    for (std::size_t c = 0; c < l.in_ch; ++c) row[c] += gr * x[c];
  }
}

inline Tensor layer_linear(const Layer& l, const Tensor& x, bool with_bias) {
  return l.kind == Layer::Kind::Conv ? conv_forward(l, x, with_bias)
                                     : dense_forward(l, x, with_bias);
}

inline Tensor layer_adjoint(const Layer& l, const Tensor& g, const Tensor& like_input) {
  if (l.kind == Layer::Kind::Conv)
    return conv_adjoint(l, g, like_input.extent(1), like_input.extent(2));
  return dense_adjoint(l, g);
}

inline void layer_weight_grad(const Layer& l, const Tensor& x, const Tensor& g, double* gw) {
  if (l.kind == Layer::Kind::Conv)
    conv_weight_grad(l, x, g, gw);
  else
    dense_weight_grad(l, x, g, gw);
}

inline void layer_bias_grad(const Layer& l, const Tensor& g, double* gb) {
  if (l.kind == Layer::Kind::Conv) {
    const std::size_t plane = g.extent(1) * g.extent(2);
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      double s = 0.0;
      const double* gp = g.data() + o * plane;
      for (std::size_t p = 0; p < plane; ++p) s += gp[p];
      gb[o] += s;
    }
  } else {
    for (std::size_t o = 0; o < l.out_ch; ++o) gb[o] += g[o];
  }
}

}  // namespace detail

// Feedforward chain T_M ... T_1 with an optional residual skip: with the
// flag set the network computes x + chain(x), which is the denoiser form
// used throughout training and solving.
struct Network {
  std::vector<Layer> layers;
  bool residual = false;
  std::size_t channels_in = 1;
  std::size_t channels_out = 1;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.param_count();
    return n;
  }
};

// Scaled-down denoiser: depth 3x3 convolutions with leaky-rectifier hidden
// activations, a linear final layer, and a residual skip.
inline Network make_conv_denoiser(std::size_t channels, std::size_t hidden, std::size_t depth,
                                  double slope = 0.2) {
  if (depth < 2) throw DimensionError("denoiser needs depth >= 2");
  Network net;
  net.residual = true;
  net.channels_in = net.channels_out = channels;
  net.layers.push_back(Layer::conv(hidden, channels, 3, ActivationSpec::leaky(slope)));
  for (std::size_t m = 2; m <= depth - 1; ++m)
    net.layers.push_back(Layer::conv(hidden, hidden, 3, ActivationSpec::leaky(slope)));
  net.layers.push_back(Layer::conv(channels, hidden, 3, ActivationSpec::identity()));
  return net;
}

inline Network make_dense_net(const std::vector<std::size_t>& widths,
                              const ActivationSpec& hidden_act, bool residual) {
  if (widths.size() < 2) throw DimensionError("dense net needs >= 2 widths");
  Network net;
  net.residual = residual;
  net.channels_in = widths.front();
  net.channels_out = widths.back();
  for (std::size_t m = 1; m < widths.size(); ++m) {
    const bool last = m + 1 == widths.size();
    net.layers.push_back(
        Layer::dense(widths[m], widths[m - 1], last ? ActivationSpec::identity() : hidden_act));
  }
  return net;
}

// He-style seeded initialization: Gaussian weights with std sqrt(2/fan-in),
// zero biases.
inline void init_he(Network& net, Rng& rng) {
  for (Layer& l : net.layers) {
    const double std_dev = std::sqrt(2.0 / double(l.fan_in()));
    for (double& v : l.weight) v = std_dev * rng.normal();
    for (double& v : l.bias) v = 0.0;
  }
}

inline Tensor flatten_params(const Network& net) {
  if (net.param_count() == 0) return Tensor();
  Tensor theta({net.param_count()});
  std::size_t at = 0;
  for (const Layer& l : net.layers) {
    for (double v : l.weight) theta[at++] = v;
    for (double v : l.bias) theta[at++] = v;
  }
  return theta;
}

inline void unflatten_params(Network& net, const Tensor& theta) {
  if (theta.size() != net.param_count()) throw DimensionError("parameter vector length mismatch");
  std::size_t at = 0;
  for (Layer& l : net.layers) {
    for (double& v : l.weight) v = theta[at++];
    for (double& v : l.bias) v = theta[at++];
  }
}

// Intermediate values of one evaluation, kept for the backward passes.
struct ForwardTrace {
  std::vector<Tensor> inputs;    // a_0 .. a_{M-1}
  std::vector<Tensor> preacts;   // z_1 .. z_M
  Tensor output;                 // network output (residual applied)
};

inline ForwardTrace forward_trace(const Network& net, const Tensor& x) {
  ForwardTrace tr;
  tr.inputs.reserve(net.layers.size());
  tr.preacts.reserve(net.layers.size());
  Tensor a = x;
  for (const Layer& l : net.layers) {
    tr.inputs.push_back(a);
    Tensor z = detail::layer_linear(l, a, true);
    tr.preacts.push_back(z);
    act::forward(l.activation, z);
    a = std::move(z);
  }
  if (net.residual) {
    if (!a.same_shape(x)) throw DimensionError("residual skip requires matching shapes");
    a += x;
  }
  tr.output = std::move(a);
  return tr;
}

inline Tensor forward(const Network& net, const Tensor& x) {
  Tensor a = x;
  for (const Layer& l : net.layers) {
    Tensor z = detail::layer_linear(l, a, true);
    act::forward(l.activation, z);
    a = std::move(z);
  }
  if (net.residual) {
    if (!a.same_shape(x)) throw DimensionError("residual skip requires matching shapes");
    a += x;
  }
  return a;
}

struct VjpResult {
  Tensor param_grad;  // flattened, same layout as flatten_params
  Tensor input_grad;
};

// Reverse-mode pullback of a cotangent through the network at x. Returns both
// u^T d(out)/d(theta) and u^T d(out)/d(x).
inline VjpResult vjp(const Network& net, const Tensor& x, const Tensor& cotangent,
                     const ForwardTrace* trace = nullptr) {
  ForwardTrace local;
  if (!trace) {
    local = forward_trace(net, x);
    trace = &local;
  }
  if (!cotangent.same_shape(trace->output)) throw DimensionError("cotangent shape mismatch");
  VjpResult res;
  res.param_grad = net.param_count() == 0 ? Tensor() : Tensor({net.param_count()});
  Tensor g = cotangent;  // gradient wrt current activation output
  std::size_t offset = net.param_count();
  for (std::size_t m = net.layers.size(); m-- > 0;) {
    const Layer& l = net.layers[m];
    offset -= l.param_count();
    act::deriv_apply(l.activation, trace->preacts[m], g);  // now grad wrt z_m
    detail::layer_weight_grad(l, trace->inputs[m], g, res.param_grad.data() + offset);
    detail::layer_bias_grad(l, g, res.param_grad.data() + offset + l.weight.size());
    g = detail::layer_adjoint(l, g, trace->inputs[m]);
  }
  if (net.residual) g += cotangent;
  res.input_grad = std::move(g);
  return res;
}

// Reverse-mode pullback to the input only; skips the parameter gradients,
// which the power iteration never needs.
inline Tensor vjp_input(const Network& net, const Tensor& x, const Tensor& cotangent,
                        const ForwardTrace* trace = nullptr) {
  ForwardTrace local;
  if (!trace) {
    local = forward_trace(net, x);
    trace = &local;
  }
  if (!cotangent.same_shape(trace->output)) throw DimensionError("cotangent shape mismatch");
  Tensor g = cotangent;
  for (std::size_t m = net.layers.size(); m-- > 0;) {
    const Layer& l = net.layers[m];
    act::deriv_apply(l.activation, trace->preacts[m], g);
    g = detail::layer_adjoint(l, g, trace->inputs[m]);
  }
  if (net.residual) g += cotangent;
  return g;
}

// Forward-mode directional derivative d(out)/dx . tangent.
inline Tensor jvp(const Network& net, const Tensor& x, const Tensor& tangent,
                  const ForwardTrace* trace = nullptr) {
  ForwardTrace local;
  if (!trace) {
    local = forward_trace(net, x);
    trace = &local;
  }
  if (!tangent.same_shape(x)) throw DimensionError("tangent shape mismatch");
  Tensor t = tangent;
  for (std::size_t m = 0; m < net.layers.size(); ++m) {
    const Layer& l = net.layers[m];
    Tensor s = detail::layer_linear(l, t, false);
    act::deriv_apply(l.activation, trace->preacts[m], s);
    t = std::move(s);
  }
  if (net.residual) t += tangent;
  return t;
}

// NNC1 checkpoint: magic, layer count, residual flag, per-layer shape and
// activation header, then all parameters as f64 little-endian. Round-trips
// bit-exactly.
inline void save_checkpoint(std::ostream& os, const Network& net) {
  os.write("NNC1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  os.put(net.residual ? 1 : 0);
  detail::put_u32(os, static_cast<std::uint32_t>(net.channels_in));
  detail::put_u32(os, static_cast<std::uint32_t>(net.channels_out));
  for (const Layer& l : net.layers) {
    os.put(static_cast<char>(l.kind));
    detail::put_u32(os, static_cast<std::uint32_t>(l.out_ch));
    detail::put_u32(os, static_cast<std::uint32_t>(l.in_ch));
    detail::put_u32(os, static_cast<std::uint32_t>(l.kh));
    detail::put_u32(os, static_cast<std::uint32_t>(l.kw));
    os.put(static_cast<char>(l.activation.kind));
    detail::put_f64(os, l.activation.slope);
    detail::put_f64(os, l.activation.alpha);
  }
  for (const Layer& l : net.layers) {
    for (double v : l.weight) detail::put_f64(os, v);
    for (double v : l.bias) detail::put_f64(os, v);
  }
}

inline void save_checkpoint(const std::string& path, const Network& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  save_checkpoint(os, net);
}

inline Network load_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NNC1", 4) != 0) throw IoError("not an NNC1 stream");
  Network net;
  const std::uint32_t count = detail::get_u32(is);
  if (count > 1024) throw IoError("NNC1 layer count out of range");
  net.residual = is.get() != 0;
  net.channels_in = detail::get_u32(is);
  net.channels_out = detail::get_u32(is);
  for (std::uint32_t m = 0; m < count; ++m) {
    const int kind = is.get();
    const std::uint32_t out_ch = detail::get_u32(is);
    const std::uint32_t in_ch = detail::get_u32(is);
    const std::uint32_t kh = detail::get_u32(is);
    const std::uint32_t kw = detail::get_u32(is);
    const int act_kind = is.get();
    if (!is) throw IoError("truncated NNC1 header");
    ActivationSpec spec;
    spec.kind = static_cast<ActivationKind>(act_kind);
    spec.slope = detail::get_f64(is);
    spec.alpha = detail::get_f64(is);
    Layer l;
    l.kind = static_cast<Layer::Kind>(kind);
    l.out_ch = out_ch;
    l.in_ch = in_ch;
    l.kh = kh;
    l.kw = kw;
    l.weight.assign(std::size_t(out_ch) * in_ch * kh * kw, 0.0);
    l.bias.assign(out_ch, 0.0);
    l.activation = spec;
    net.layers.push_back(std::move(l));
  }
  for (Layer& l : net.layers) {
    for (double& v : l.weight) v = detail::get_f64(is);
    for (double& v : l.bias) v = detail::get_f64(is);
  }
  return net;
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return load_checkpoint(is);
}

}  // namespace firmnet

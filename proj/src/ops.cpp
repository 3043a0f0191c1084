#include "apn/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "apn/parallel.hpp"
#include "apn/random.hpp"

namespace apn {

int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("APN_THREADS");
    if (env == nullptr) return 1;
    const int v = std::atoi(env);
    return v > 0 ? v : 1;
  }();
  return n;
}

}  // namespace apn

namespace apn::ops {
namespace {

void require_rank(const Shape& s, int rank, const char* op) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
  }
}

template <typename T>
Variable<T>* raw(const Var<T>& v) {
  return v.get();
}

// One spatial axis of a convolution: for kernel tap k, output positions
// [lo, hi] read input o * stride + k - pad directly; `edges` holds the
// (out, in) pairs that fall into the border and are clamped (replicate mode).
struct AxisMap {
  int lo = 0;
  int hi = -1;
  int offset = 0;
  std::vector<std::pair<int, int>> edges;
};

std::vector<AxisMap> make_axis_maps(int in, int out, int k, int stride, int pad, Padding padding) {
  std::vector<AxisMap> maps(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    AxisMap& m = maps[static_cast<std::size_t>(t)];
    m.offset = t - pad;
    m.lo = out;
    m.hi = -1;
    for (int o = 0; o < out; ++o) {
      const int i = o * stride + m.offset;
      if (i >= 0 && i < in) {
        m.lo = std::min(m.lo, o);
        m.hi = std::max(m.hi, o);
      } else if (padding == Padding::replicate) {
        m.edges.emplace_back(o, std::clamp(i, 0, in - 1));
      }
    }
  }
  return maps;
}

struct ConvGeom {
  int n, cin, h, w, cout, k, ho, wo, stride, pad;
  Padding padding;
  std::vector<AxisMap> rows, cols;

  ConvGeom(int n_, int cin_, int h_, int w_, int cout_, int k_, int ho_, int wo_, int stride_, int pad_,
           Padding padding_)
      : n(n_), cin(cin_), h(h_), w(w_), cout(cout_), k(k_), ho(ho_), wo(wo_), stride(stride_), pad(pad_),
        padding(padding_),
        rows(make_axis_maps(h_, ho_, k_, stride_, pad_, padding_)),
        cols(make_axis_maps(w_, wo_, k_, stride_, pad_, padding_)) {}
};

// Visits every (output row, input row) pair of kernel row `kh`.
template <typename Fn>
void for_rows(const AxisMap& m, int stride, Fn&& fn) {
  for (int o = m.lo; o <= m.hi; ++o) fn(o, o * stride + m.offset);
  for (const auto& [o, i] : m.edges) fn(o, i);
}

// y[oh, :] += wv * x[ih, :] along one row pair, honoring the column map.
template <typename T>
inline void row_gather(T* y, const T* x, T wv, const AxisMap& c, int stride) {
  if (stride == 1) {
    const T* xs = x + c.offset;
    for (int o = c.lo; o <= c.hi; ++o) y[o] += wv * xs[o];
  } else {
    for (int o = c.lo; o <= c.hi; ++o) y[o] += wv * x[o * stride + c.offset];
  }
  for (const auto& [o, i] : c.edges) y[o] += wv * x[i];
}

template <typename T>
inline void row_scatter(T* x, const T* y, T wv, const AxisMap& c, int stride) {
  if (stride == 1) {
    T* xs = x + c.offset;
    for (int o = c.lo; o <= c.hi; ++o) xs[o] += wv * y[o];
  } else {
    for (int o = c.lo; o <= c.hi; ++o) x[o * stride + c.offset] += wv * y[o];
  }
  for (const auto& [o, i] : c.edges) x[i] += wv * y[o];
}

template <typename T>
inline T row_dot(const T* y, const T* x, const AxisMap& c, int stride) {
  T acc = T(0);
  if (stride == 1) {
    const T* xs = x + c.offset;
    for (int o = c.lo; o <= c.hi; ++o) acc += y[o] * xs[o];
  } else {
    for (int o = c.lo; o <= c.hi; ++o) acc += y[o] * x[o * stride + c.offset];
  }
  for (const auto& [o, i] : c.edges) acc += y[o] * x[i];
  return acc;
}

// y (N x cout x ho x wo) += conv(x, w)
template <typename T>
void conv_forward_raw(const ConvGeom& g, const T* x, const T* w, T* y) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  parallel_for(g.n, [&](int n) {
    for (int co = 0; co < g.cout; ++co) {
      T* yp = y + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      for (int ci = 0; ci < g.cin; ++ci) {
        const T* xp = x + (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        const T* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          for (int kw = 0; kw < g.k; ++kw) {
            const T wv = wp[kh * g.k + kw];
            const AxisMap& cm = g.cols[static_cast<std::size_t>(kw)];
            for_rows(g.rows[static_cast<std::size_t>(kh)], g.stride, [&](int oh, int ih) {
              row_gather(yp + static_cast<std::size_t>(oh) * g.wo, xp + static_cast<std::size_t>(ih) * g.w, wv, cm,
                         g.stride);
            });
          }
        }
      }
    }
  });
}

// gx (N x cin x h x w) += conv^T(gy, w)
template <typename T>
void conv_backward_input_raw(const ConvGeom& g, const T* gy, const T* w, T* gx) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  parallel_for(g.n, [&](int n) {
    for (int ci = 0; ci < g.cin; ++ci) {
      T* xp = gx + (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
      for (int co = 0; co < g.cout; ++co) {
        const T* yp = gy + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
        const T* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          for (int kw = 0; kw < g.k; ++kw) {
            const T wv = wp[kh * g.k + kw];
            const AxisMap& cm = g.cols[static_cast<std::size_t>(kw)];
            for_rows(g.rows[static_cast<std::size_t>(kh)], g.stride, [&](int oh, int ih) {
              row_scatter(xp + static_cast<std::size_t>(ih) * g.w, yp + static_cast<std::size_t>(oh) * g.wo, wv, cm,
                          g.stride);
            });
          }
        }
      }
    }
  });
}

// gw (cout x cin x k x k) += sum_n gy * x
template <typename T>
void conv_backward_weight_raw(const ConvGeom& g, const T* gy, const T* x, T* gw) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  parallel_for(g.cout, [&](int co) {
    for (int ci = 0; ci < g.cin; ++ci) {
      T* wp = gw + (static_cast<std::size_t>(co) * g.cin + ci) * g.k * g.k;
      for (int n = 0; n < g.n; ++n) {
        const T* yp = gy + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
        const T* xp = x + (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        for (int kh = 0; kh < g.k; ++kh) {
          for (int kw = 0; kw < g.k; ++kw) {
            const AxisMap& cm = g.cols[static_cast<std::size_t>(kw)];
            T acc = T(0);
            for_rows(g.rows[static_cast<std::size_t>(kh)], g.stride, [&](int oh, int ih) {
              acc += row_dot(yp + static_cast<std::size_t>(oh) * g.wo, xp + static_cast<std::size_t>(ih) * g.w, cm,
                             g.stride);
            });
            wp[kh * g.k + kw] += acc;
          }
        }
      }
    }
  });
}

template <typename T>
void add_channel_bias(T* y, const T* b, int n, int c, std::size_t plane) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      T* p = y + (static_cast<std::size_t>(i) * c + j) * plane;
      std::fill(p, p + plane, b[j]);
    }
  }
}

template <typename T>
Tensor<T> channel_bias_grad(const Tensor<T>& gy) {
  const int n = gy.dim(0), c = gy.dim(1);
  const std::size_t plane = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
  Tensor<T> gb(Shape{c});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const T* p = gy.ptr() + (static_cast<std::size_t>(i) * c + j) * plane;
      T acc = T(0);
      for (std::size_t q = 0; q < plane; ++q) acc += p[q];
      gb[static_cast<std::size_t>(j)] += acc;
    }
  }
  return gb;
}

std::uint64_t hash_bits(const std::vector<bool>& bits) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  std::uint64_t word = 0;
  int fill = 0;
  for (bool b : bits) {
    word = (word << 1) | static_cast<std::uint64_t>(b);
    if (++fill == 64) {
      h = Rng::mix(h ^ word);
      word = 0;
      fill = 0;
    }
  }
  return Rng::mix(h ^ word ^ static_cast<std::uint64_t>(bits.size()));
}

// Broadcast layout of a binary op: shapes padded to rank 4, zero stride on
// broadcast axes.
struct Broadcast {
  std::array<int, 4> out{};
  std::array<std::size_t, 4> sa{}, sb{};
  Shape shape;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.rank() != b.rank()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + a.str() + " vs " + b.str());
  }
  const int r = a.rank();
  Broadcast bc;
  std::array<int, 4> da{1, 1, 1, 1}, db{1, 1, 1, 1};
  for (int i = 0; i < r; ++i) {
    da[static_cast<std::size_t>(4 - r + i)] = a[i];
    db[static_cast<std::size_t>(4 - r + i)] = b[i];
  }
  std::vector<int> dims;
  for (std::size_t i = 0; i < 4; ++i) {
    if (da[i] != db[i] && da[i] != 1 && db[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
    }
    bc.out[i] = std::max(da[i], db[i]);
    if (static_cast<int>(i) >= 4 - r) dims.push_back(bc.out[i]);
  }
  std::size_t stride_a = 1, stride_b = 1;
  for (int i = 3; i >= 0; --i) {
    const auto u = static_cast<std::size_t>(i);
    bc.sa[u] = (da[u] == 1 && bc.out[u] > 1) ? 0 : stride_a;
    bc.sb[u] = (db[u] == 1 && bc.out[u] > 1) ? 0 : stride_b;
    stride_a *= static_cast<std::size_t>(da[u]);
    stride_b *= static_cast<std::size_t>(db[u]);
  }
  bc.shape = Shape(dims);
  return bc;
}

// fn(output index, a index, b index) over the broadcast output.
template <typename Fn>
void broadcast_loop(const Broadcast& bc, Fn&& fn) {
  std::size_t o = 0;
  for (int i0 = 0; i0 < bc.out[0]; ++i0) {
    for (int i1 = 0; i1 < bc.out[1]; ++i1) {
      for (int i2 = 0; i2 < bc.out[2]; ++i2) {
        const std::size_t a2 = i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
        const std::size_t b2 = i0 * bc.sb[0] + i1 * bc.sb[1] + i2 * bc.sb[2];
        for (int i3 = 0; i3 < bc.out[3]; ++i3, ++o) {
          fn(o, a2 + i3 * bc.sa[3], b2 + i3 * bc.sb[3]);
        }
      }
    }
  }
}

// Bilinear interpolation weights along one axis.
struct Lerp {
  int i0, i1;
  double frac;
};

std::vector<Lerp> lerp_table(int in, int out) {
  std::vector<Lerp> table(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    table[static_cast<std::size_t>(d)] = Lerp{i0, i1, s - i0};
  }
  return table;
}

}  // namespace

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad,
              Padding padding) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d weight");
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws[1]) + " input channels, input " + xs.str() +
                     " has " + std::to_string(xs[1]));
  }
  if (ws[2] != ws[3]) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  const int k = ws[2];
  if (xs[2] + 2 * pad < k || xs[3] + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + xs.str());
  }
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != ws[0])) {
    throw ShapeError("conv2d: bias " + bias->value.shape().str() + " does not match " + std::to_string(ws[0]) +
                     " output channels");
  }
  const int ho = (xs[2] + 2 * pad - k) / stride + 1;
  const int wo = (xs[3] + 2 * pad - k) / stride + 1;
  auto geom = std::make_shared<ConvGeom>(xs[0], xs[1], xs[2], xs[3], ws[0], k, ho, wo, stride, pad, padding);
  Tensor<T> y(Shape{xs[0], ws[0], ho, wo});
  if (bias) add_channel_bias(y.ptr(), bias->value.ptr(), xs[0], ws[0], static_cast<std::size_t>(ho) * wo);
  conv_forward_raw(*geom, x->value.ptr(), weight->value.ptr(), y.ptr());
  tape.add_macs(static_cast<std::uint64_t>(xs[0]) * ws[0] * ho * wo * xs[1] * k * k);

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  Variable<T>* px = raw(x);
  Variable<T>* pw = raw(weight);
  Variable<T>* pb = bias ? raw(bias) : nullptr;
  return tape.record("conv2d", std::move(y), std::move(inputs), [geom, px, pw, pb](const Tensor<T>& gy) {
    if (px->requires_grad) {
      Tensor<T> gx(px->value.shape());
      conv_backward_input_raw(*geom, gy.ptr(), pw->value.ptr(), gx.ptr());
      accumulate_grad(*px, gx);
    }
    if (pw->requires_grad) {
      Tensor<T> gw(pw->value.shape());
      conv_backward_weight_raw(*geom, gy.ptr(), px->value.ptr(), gw.ptr());
      accumulate_grad(*pw, gw);
    }
    if (pb && pb->requires_grad) accumulate_grad(*pb, channel_bias_grad(gy));
  });
}

template <typename T>
Var<T> conv_transpose2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad_h, int output_pad_w) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  require_rank(xs, 4, "conv_transpose2d input");
  require_rank(ws, 4, "conv_transpose2d weight");
  if (ws[0] != xs[1]) {
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(ws[0]) + " input channels, input " +
                     xs.str() + " has " + std::to_string(xs[1]));
  }
  if (ws[2] != ws[3]) throw ShapeError("conv_transpose2d: kernel must be square, got " + ws.str());
  if (stride < 1 || pad < 0) throw ShapeError("conv_transpose2d: stride must be >= 1 and pad >= 0");
  if (output_pad_h < 0 || output_pad_w < 0 || output_pad_h >= stride || output_pad_w >= stride) {
    throw ShapeError("conv_transpose2d: output_pad (" + std::to_string(output_pad_h) + "," +
                     std::to_string(output_pad_w) + ") must lie in [0, stride)");
  }
  const int k = ws[2];
  const int ho = (xs[2] - 1) * stride - 2 * pad + k + output_pad_h;
  const int wo = (xs[3] - 1) * stride - 2 * pad + k + output_pad_w;
  if (ho < 1 || wo < 1) throw ShapeError("conv_transpose2d: empty output for input " + xs.str());
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != ws[1])) {
    throw ShapeError("conv_transpose2d: bias " + bias->value.shape().str() + " does not match output channels");
  }
  // Geometry of the forward conv this op is the adjoint of.
  auto geom = std::make_shared<ConvGeom>(xs[0], ws[1], ho, wo, ws[0], k, xs[2], xs[3], stride, pad, Padding::zeros);
  Tensor<T> y(Shape{xs[0], ws[1], ho, wo});
  if (bias) add_channel_bias(y.ptr(), bias->value.ptr(), xs[0], ws[1], static_cast<std::size_t>(ho) * wo);
  conv_backward_input_raw(*geom, x->value.ptr(), weight->value.ptr(), y.ptr());
  tape.add_macs(static_cast<std::uint64_t>(xs[0]) * xs[1] * xs[2] * xs[3] * ws[1] * k * k);

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  Variable<T>* px = raw(x);
  Variable<T>* pw = raw(weight);
  Variable<T>* pb = bias ? raw(bias) : nullptr;
  return tape.record("conv_transpose2d", std::move(y), std::move(inputs), [geom, px, pw, pb](const Tensor<T>& gy) {
    if (px->requires_grad) {
      Tensor<T> gx(px->value.shape());
      conv_forward_raw(*geom, gy.ptr(), pw->value.ptr(), gx.ptr());
      accumulate_grad(*px, gx);
    }
    if (pw->requires_grad) {
      Tensor<T> gw(pw->value.shape());
      conv_backward_weight_raw(*geom, px->value.ptr(), gy.ptr(), gw.ptr());
      accumulate_grad(*pw, gw);
    }
    if (pb && pb->requires_grad) accumulate_grad(*pb, channel_bias_grad(gy));
  });
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  const T* xp = x->value.ptr();
  T* yp = y.ptr();
  for (std::size_t i = 0; i < y.size(); ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
  if (tape.tracking_kinks()) {
    std::vector<bool> bits(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) bits[i] = xp[i] > T(0);
    tape.note_kink(hash_bits(bits));
  }
  Variable<T>* px = raw(x);
  return tape.record("relu", std::move(y), {x}, [px](const Tensor<T>& gy) {
    Tensor<T> gx(px->value.shape());
    const T* v = px->value.ptr();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = v[i] > T(0) ? gy[i] : T(0);
    accumulate_grad(*px, gx);
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  const T* xp = x->value.ptr();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = xp[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  Variable<T>* px = raw(x);
  Tensor<T> saved = y;
  return tape.record("sigmoid", std::move(y), {x}, [px, saved = std::move(saved)](const Tensor<T>& gy) {
    Tensor<T> gx(saved.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * saved[i] * (T(1) - saved[i]);
    accumulate_grad(*px, gx);
  });
}

template <typename T>
Var<T> batch_norm2d(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    BatchNormStats<T>& stats, bool training, double eps, double momentum) {
  const Shape& xs = x->value.shape();
  require_rank(xs, 4, "batch_norm2d");
  const int n = xs[0], c = xs[1];
  const std::size_t plane = static_cast<std::size_t>(xs[2]) * xs[3];
  if (gamma->value.size() != static_cast<std::size_t>(c) || beta->value.size() != static_cast<std::size_t>(c) ||
      stats.mean.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm2d: affine/statistics sized for a different channel count than " + xs.str());
  }
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  if (training && count < 2) {
    throw DomainError("batch_norm2d: training mode needs at least 2 values per channel, input " + xs.str());
  }
  // Per-channel normalized values and inverse std, saved for backward.
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  const T* xp = x->value.ptr();
  for (int ch = 0; ch < c; ++ch) {
    T mean, var;
    if (training) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = xp + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t q = 0; q < plane; ++q) s += p[q];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = xp + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t q = 0; q < plane; ++q) ss += (p[q] - m) * (p[q] - m);
      }
      const double v = ss / static_cast<double>(count);
      mean = static_cast<T>(m);
      var = static_cast<T>(v);
      const double unbiased = ss / static_cast<double>(count - 1);
      T& rm = stats.mean[static_cast<std::size_t>(ch)];
      T& rv = stats.var[static_cast<std::size_t>(ch)];
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * m);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * unbiased);
    } else {
      mean = stats.mean[static_cast<std::size_t>(ch)];
      var = stats.var[static_cast<std::size_t>(ch)];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    inv_std[static_cast<std::size_t>(ch)] = is;
    for (int i = 0; i < n; ++i) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t q = 0; q < plane; ++q) xhat[base + q] = (xp[base + q] - mean) * is;
    }
  }
  Tensor<T> y(xs);
  for (int ch = 0; ch < c; ++ch) {
    const T g = gamma->value[static_cast<std::size_t>(ch)];
    const T b = beta->value[static_cast<std::size_t>(ch)];
    for (int i = 0; i < n; ++i) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t q = 0; q < plane; ++q) y[base + q] = g * xhat[base + q] + b;
    }
  }
  Variable<T>* px = raw(x);
  Variable<T>* pg = raw(gamma);
  Variable<T>* pb = raw(beta);
  return tape.record(
      "batch_norm2d", std::move(y), {x, gamma, beta},
      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane, count,
       training](const Tensor<T>& gy) {
        Tensor<T> gg(Shape{c}), gb(Shape{c});
        Tensor<T> gx(px->value.shape());
        for (int ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int i = 0; i < n; ++i) {
            const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) {
              sum_dy += gy[base + q];
              sum_dy_xhat += gy[base + q] * xhat[base + q];
            }
          }
          gg[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy_xhat);
          gb[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy);
          if (!px->requires_grad) continue;
          const T g = pg->value[static_cast<std::size_t>(ch)];
          const T is = inv_std[static_cast<std::size_t>(ch)];
          if (training) {
            // dx = g * is / M * (M dy - sum(dy) - xhat * sum(dy * xhat))
            const double m = static_cast<double>(count);
            for (int i = 0; i < n; ++i) {
              const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
              for (std::size_t q = 0; q < plane; ++q) {
                gx[base + q] = static_cast<T>(g * is / m * (m * gy[base + q] - sum_dy - xhat[base + q] * sum_dy_xhat));
              }
            }
          } else {
            for (int i = 0; i < n; ++i) {
              const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
              for (std::size_t q = 0; q < plane; ++q) gx[base + q] = g * is * gy[base + q];
            }
          }
        }
        accumulate_grad(*px, gx);
        accumulate_grad(*pg, gg);
        accumulate_grad(*pb, gb);
      });
}

template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& x) {
  const Shape& xs = x->value.shape();
  require_rank(xs, 4, "global_avg_pool");
  const std::size_t plane = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t maps = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y(Shape{xs[0], xs[1], 1, 1});
  for (std::size_t m = 0; m < maps; ++m) {
    const T* p = x->value.ptr() + m * plane;
    T acc = T(0);
    for (std::size_t q = 0; q < plane; ++q) acc += p[q];
    y[m] = acc / static_cast<T>(plane);
  }
  Variable<T>* px = raw(x);
  return tape.record("global_avg_pool", std::move(y), {x}, [px, plane, maps](const Tensor<T>& gy) {
    Tensor<T> gx(px->value.shape());
    for (std::size_t m = 0; m < maps; ++m) {
      const T g = gy[m] / static_cast<T>(plane);
      std::fill(gx.ptr() + m * plane, gx.ptr() + (m + 1) * plane, g);
    }
    accumulate_grad(*px, gx);
  });
}

template <typename T>
Var<T> channel_avg_pool(Tape<T>& tape, const Var<T>& x) {
  const Shape& xs = x->value.shape();
  require_rank(xs, 4, "channel_avg_pool");
  const int n = xs[0], c = xs[1];
  const std::size_t plane = static_cast<std::size_t>(xs[2]) * xs[3];
  Tensor<T> y(Shape{n, 1, xs[2], xs[3]});
  for (int i = 0; i < n; ++i) {
    T* yp = y.ptr() + static_cast<std::size_t>(i) * plane;
    for (int ch = 0; ch < c; ++ch) {
      const T* p = x->value.ptr() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t q = 0; q < plane; ++q) yp[q] += p[q];
    }
    for (std::size_t q = 0; q < plane; ++q) yp[q] /= static_cast<T>(c);
  }
  Variable<T>* px = raw(x);
  return tape.record("channel_avg_pool", std::move(y), {x}, [px, n, c, plane](const Tensor<T>& gy) {
    Tensor<T> gx(px->value.shape());
    for (int i = 0; i < n; ++i) {
      const T* g = gy.ptr() + static_cast<std::size_t>(i) * plane;
      for (int ch = 0; ch < c; ++ch) {
        T* p = gx.ptr() + (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t q = 0; q < plane; ++q) p[q] = g[q] / static_cast<T>(c);
      }
    }
    accumulate_grad(*px, gx);
  });
}

template <typename T>
Var<T> max_pool2d(Tape<T>& tape, const Var<T>& x, int kernel, int stride, int pad) {
  const Shape& xs = x->value.shape();
  require_rank(xs, 4, "max_pool2d");
  if (kernel < 1 || stride < 1 || pad < 0 || 2 * pad > kernel) {
    throw ShapeError("max_pool2d: invalid kernel/stride/pad");
  }
  if (xs[2] + 2 * pad < kernel || xs[3] + 2 * pad < kernel) {
    throw ShapeError("max_pool2d: window larger than padded input " + xs.str());
  }
  const int h = xs[2], w = xs[3];
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  const std::size_t maps = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y(Shape{xs[0], xs[1], ho, wo});
  std::vector<std::uint32_t> argmax(y.size());
  for (std::size_t m = 0; m < maps; ++m) {
    const T* p = x->value.ptr() + m * h * w;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t arg = 0;
        for (int kh = 0; kh < kernel; ++kh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          for (int kw = 0; kw < kernel; ++kw) {
            const int iw = ow * stride - pad + kw;
            if (iw < 0 || iw >= w) continue;
            const T v = p[ih * w + iw];
            if (v > best) {
              best = v;
              arg = static_cast<std::uint32_t>(ih * w + iw);
            }
          }
        }
        const std::size_t o = (m * ho + oh) * wo + ow;
        y[o] = best;
        argmax[o] = arg;
      }
    }
  }
  if (tape.tracking_kinks()) {
    std::uint64_t hsh = 0;
    for (auto a : argmax) hsh = Rng::mix(hsh ^ a);
    tape.note_kink(hsh);
  }
  Variable<T>* px = raw(x);
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  return tape.record("max_pool2d", std::move(y), {x},
                     [px, argmax = std::move(argmax), maps, out_plane, in_plane](const Tensor<T>& gy) {
                       Tensor<T> gx(px->value.shape());
                       for (std::size_t m = 0; m < maps; ++m) {
                         for (std::size_t q = 0; q < out_plane; ++q) {
                           gx[m * in_plane + argmax[m * out_plane + q]] += gy[m * out_plane + q];
                         }
                       }
                       accumulate_grad(*px, gx);
                     });
}

template <typename T>
Var<T> bilinear_resize(Tape<T>& tape, const Var<T>& x, int target_h, int target_w) {
  const Shape& xs = x->value.shape();
  require_rank(xs, 4, "bilinear_resize");
  if (target_h < 1 || target_w < 1) throw ShapeError("bilinear_resize: target dims must be >= 1");
  const int h = xs[2], w = xs[3];
  auto rows = std::make_shared<std::vector<Lerp>>(lerp_table(h, target_h));
  auto cols = std::make_shared<std::vector<Lerp>>(lerp_table(w, target_w));
  const std::size_t maps = static_cast<std::size_t>(xs[0]) * xs[1];
  Tensor<T> y(Shape{xs[0], xs[1], target_h, target_w});
  for (std::size_t m = 0; m < maps; ++m) {
    const T* p = x->value.ptr() + m * h * w;
    T* q = y.ptr() + m * target_h * target_w;
    for (int oh = 0; oh < target_h; ++oh) {
      const Lerp& r = (*rows)[static_cast<std::size_t>(oh)];
      const T fy = static_cast<T>(r.frac);
      for (int ow = 0; ow < target_w; ++ow) {
        const Lerp& c = (*cols)[static_cast<std::size_t>(ow)];
        const T fx = static_cast<T>(c.frac);
        const T top = (T(1) - fx) * p[r.i0 * w + c.i0] + fx * p[r.i0 * w + c.i1];
        const T bot = (T(1) - fx) * p[r.i1 * w + c.i0] + fx * p[r.i1 * w + c.i1];
        q[oh * target_w + ow] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  Variable<T>* px = raw(x);
  return tape.record("bilinear_resize", std::move(y), {x},
                     [px, rows, cols, maps, h, w, target_h, target_w](const Tensor<T>& gy) {
                       Tensor<T> gx(px->value.shape());
                       for (std::size_t m = 0; m < maps; ++m) {
                         T* p = gx.ptr() + m * h * w;
                         const T* q = gy.ptr() + m * target_h * target_w;
                         for (int oh = 0; oh < target_h; ++oh) {
                           const Lerp& r = (*rows)[static_cast<std::size_t>(oh)];
                           const T fy = static_cast<T>(r.frac);
                           for (int ow = 0; ow < target_w; ++ow) {
                             const Lerp& c = (*cols)[static_cast<std::size_t>(ow)];
                             const T fx = static_cast<T>(c.frac);
                             const T g = q[oh * target_w + ow];
                             p[r.i0 * w + c.i0] += (T(1) - fy) * (T(1) - fx) * g;
                             p[r.i0 * w + c.i1] += (T(1) - fy) * fx * g;
                             p[r.i1 * w + c.i0] += fy * (T(1) - fx) * g;
                             p[r.i1 * w + c.i1] += fy * fx * g;
                           }
                         }
                       }
                       accumulate_grad(*px, gx);
                     });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  auto bc = std::make_shared<Broadcast>(broadcast(a->value.shape(), b->value.shape(), "add"));
  Tensor<T> y(bc->shape);
  const T* ap = a->value.ptr();
  const T* bp = b->value.ptr();
  T* yp = y.ptr();
  broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { yp[o] = ap[ia] + bp[ib]; });
  Variable<T>* pa = raw(a);
  Variable<T>* pb = raw(b);
  return tape.record("add", std::move(y), {a, b}, [pa, pb, bc](const Tensor<T>& gy) {
    Tensor<T> ga(pa->value.shape()), gb(pb->value.shape());
    broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      ga[ia] += gy[o];
      gb[ib] += gy[o];
    });
    accumulate_grad(*pa, ga);
    accumulate_grad(*pb, gb);
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  auto bc = std::make_shared<Broadcast>(broadcast(a->value.shape(), b->value.shape(), "mul"));
  Tensor<T> y(bc->shape);
  const T* ap = a->value.ptr();
  const T* bp = b->value.ptr();
  T* yp = y.ptr();
  broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { yp[o] = ap[ia] * bp[ib]; });
  Variable<T>* pa = raw(a);
  Variable<T>* pb = raw(b);
  return tape.record("mul", std::move(y), {a, b}, [pa, pb, bc](const Tensor<T>& gy) {
    Tensor<T> ga(pa->value.shape()), gb(pb->value.shape());
    const T* av = pa->value.ptr();
    const T* bv = pb->value.ptr();
    broadcast_loop(*bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      ga[ia] += gy[o] * bv[ib];
      gb[ib] += gy[o] * av[ia];
    });
    accumulate_grad(*pa, ga);
    accumulate_grad(*pb, gb);
  });
}

template <typename T>
Var<T> concat(Tape<T>& tape, std::span<const Var<T>> xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0]->value.shape();
  if (axis < 0 || axis >= s0.rank()) throw ShapeError("concat: axis out of range for " + s0.str());
  std::vector<int> dims = s0.dims();
  dims[static_cast<std::size_t>(axis)] = 0;
  for (const auto& v : xs) {
    const Shape& s = v->value.shape();
    bool ok = s.rank() == s0.rank();
    for (int i = 0; ok && i < s.rank(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) throw ShapeError("concat: " + s.str() + " incompatible with " + s0.str() + " along axis " + std::to_string(axis));
    dims[static_cast<std::size_t>(axis)] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s0[i]);
  for (int i = axis + 1; i < s0.rank(); ++i) inner *= static_cast<std::size_t>(s0[i]);
  Shape out_shape(dims);
  const std::size_t out_chunk = static_cast<std::size_t>(out_shape[axis]) * inner;
  Tensor<T> y(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& v : xs) {
    const std::size_t chunk = static_cast<std::size_t>(v->value.dim(axis)) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v->value.ptr() + o * chunk, chunk, y.ptr() + o * out_chunk + off);
    }
    offsets.push_back(off);
    off += chunk;
  }
  std::vector<Var<T>> inputs(xs.begin(), xs.end());
  std::vector<Variable<T>*> ptrs;
  for (const auto& v : xs) ptrs.push_back(v.get());
  return tape.record("concat", std::move(y), std::move(inputs),
                     [ptrs, offsets, outer, inner, out_chunk, axis](const Tensor<T>& gy) {
                       for (std::size_t i = 0; i < ptrs.size(); ++i) {
                         Variable<T>* p = ptrs[i];
                         if (!p->requires_grad) continue;
                         const std::size_t chunk = static_cast<std::size_t>(p->value.dim(axis)) * inner;
                         Tensor<T> g(p->value.shape());
                         for (std::size_t o = 0; o < outer; ++o) {
                           std::copy_n(gy.ptr() + o * out_chunk + offsets[i], chunk, g.ptr() + o * chunk);
                         }
                         accumulate_grad(*p, g);
                       }
                     });
}

template <typename T>
Var<T> slice(Tape<T>& tape, const Var<T>& x, int axis, int start, int length) {
  const Shape& s = x->value.shape();
  if (axis < 0 || axis >= s.rank() || start < 0 || length < 1 || start + length > s[axis]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range on axis " + std::to_string(axis) + " of " + s.str());
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);
  for (int i = axis + 1; i < s.rank(); ++i) inner *= static_cast<std::size_t>(s[i]);
  std::vector<int> dims = s.dims();
  dims[static_cast<std::size_t>(axis)] = length;
  Tensor<T> y{Shape(dims)};
  const std::size_t in_chunk = static_cast<std::size_t>(s[axis]) * inner;
  const std::size_t out_chunk = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x->value.ptr() + o * in_chunk + off, out_chunk, y.ptr() + o * out_chunk);
  }
  Variable<T>* px = raw(x);
  return tape.record("slice", std::move(y), {x}, [px, outer, in_chunk, out_chunk, off](const Tensor<T>& gy) {
    Tensor<T> gx(px->value.shape());
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(gy.ptr() + o * out_chunk, out_chunk, gx.ptr() + o * in_chunk + off);
    }
    accumulate_grad(*px, gx);
  });
}

template <typename T>
Var<T> reshape(Tape<T>& tape, const Var<T>& x, Shape shape) {
  Tensor<T> y = x->value.reshaped(std::move(shape));
  Variable<T>* px = raw(x);
  return tape.record("reshape", std::move(y), {x}, [px](const Tensor<T>& gy) {
    accumulate_grad(*px, gy.reshaped(px->value.shape()));
  });
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  require_rank(xs, 2, "linear input");
  require_rank(ws, 2, "linear weight");
  if (ws[1] != xs[1]) {
    throw ShapeError("linear: weight " + ws.str() + " expects " + std::to_string(ws[1]) + " features, input " +
                     xs.str());
  }
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != ws[0])) {
    throw ShapeError("linear: bias " + bias->value.shape().str() + " does not match weight " + ws.str());
  }
  const int n = xs[0], d = xs[1], dout = ws[0];
  Tensor<T> y(Shape{n, dout});
  const T* xp = x->value.ptr();
  const T* wp = weight->value.ptr();
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < dout; ++o) {
      T acc = bias ? bias->value[static_cast<std::size_t>(o)] : T(0);
      const T* xr = xp + static_cast<std::size_t>(i) * d;
      const T* wr = wp + static_cast<std::size_t>(o) * d;
      for (int j = 0; j < d; ++j) acc += xr[j] * wr[j];
      y[static_cast<std::size_t>(i) * dout + o] = acc;
    }
  }
  tape.add_macs(static_cast<std::uint64_t>(n) * d * dout);
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  Variable<T>* px = raw(x);
  Variable<T>* pw = raw(weight);
  Variable<T>* pb = bias ? raw(bias) : nullptr;
  return tape.record("linear", std::move(y), std::move(inputs), [px, pw, pb, n, d, dout](const Tensor<T>& gy) {
    const T* xv = px->value.ptr();
    const T* wv = pw->value.ptr();
    if (px->requires_grad) {
      Tensor<T> gx(px->value.shape());
      for (int i = 0; i < n; ++i) {
        T* gr = gx.ptr() + static_cast<std::size_t>(i) * d;
        for (int o = 0; o < dout; ++o) {
          const T g = gy[static_cast<std::size_t>(i) * dout + o];
          const T* wr = wv + static_cast<std::size_t>(o) * d;
          for (int j = 0; j < d; ++j) gr[j] += g * wr[j];
        }
      }
      accumulate_grad(*px, gx);
    }
    if (pw->requires_grad) {
      Tensor<T> gw(pw->value.shape());
      for (int i = 0; i < n; ++i) {
        const T* xr = xv + static_cast<std::size_t>(i) * d;
        for (int o = 0; o < dout; ++o) {
          const T g = gy[static_cast<std::size_t>(i) * dout + o];
          T* gr = gw.ptr() + static_cast<std::size_t>(o) * d;
          for (int j = 0; j < d; ++j) gr[j] += g * xr[j];
        }
      }
      accumulate_grad(*pw, gw);
    }
    if (pb && pb->requires_grad) {
      Tensor<T> gb(pb->value.shape());
      for (int i = 0; i < n; ++i) {
        for (int o = 0; o < dout; ++o) gb[static_cast<std::size_t>(o)] += gy[static_cast<std::size_t>(i) * dout + o];
      }
      accumulate_grad(*pb, gb);
    }
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Tape<T>& tape, const Var<T>& logits, std::span<const int> labels) {
  const Shape& s = logits->value.shape();
  require_rank(s, 2, "softmax_cross_entropy");
  const int n = s[0], k = s[1];
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  Tensor<T> probs(s);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) {
      throw DomainError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(k) + ")");
    }
    const T* row = logits->value.ptr() + static_cast<std::size_t>(i) * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < k; ++j) {
      probs[static_cast<std::size_t>(i) * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / z);
    }
    loss += std::log(z) - static_cast<double>(row[label] - mx);
  }
  Tensor<T> y(Shape{1}, static_cast<T>(loss / n));
  Variable<T>* pl = raw(logits);
  std::vector<int> lab(labels.begin(), labels.end());
  return tape.record("softmax_cross_entropy", std::move(y), {logits},
                     [pl, probs = std::move(probs), lab = std::move(lab), n, k](const Tensor<T>& gy) {
                       Tensor<T> g = probs;
                       for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i) * k + lab[static_cast<std::size_t>(i)]] -= T(1);
                       const T scale = gy[0] / static_cast<T>(n);
                       for (auto& v : g.data()) v *= scale;
                       accumulate_grad(*pl, g);
                     });
}

template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  double acc = 0.0;
  for (T v : x->value.data()) acc += v;
  Variable<T>* px = raw(x);
  return tape.record("sum", Tensor<T>(Shape{1}, static_cast<T>(acc)), {x}, [px](const Tensor<T>& gy) {
    accumulate_grad(*px, Tensor<T>(px->value.shape(), gy[0]));
  });
}

#define APN_INSTANTIATE_OPS(T)                                                                                    \
  template Var<T> conv2d<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int, Padding);           \
  template Var<T> conv_transpose2d<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int, int, int, int); \
  template Var<T> relu<T>(Tape<T>&, const Var<T>&);                                                               \
  template Var<T> sigmoid<T>(Tape<T>&, const Var<T>&);                                                            \
  template Var<T> batch_norm2d<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&,      \
                                  bool, double, double);                                                          \
  template Var<T> global_avg_pool<T>(Tape<T>&, const Var<T>&);                                                    \
  template Var<T> channel_avg_pool<T>(Tape<T>&, const Var<T>&);                                                   \
  template Var<T> max_pool2d<T>(Tape<T>&, const Var<T>&, int, int, int);                                          \
  template Var<T> bilinear_resize<T>(Tape<T>&, const Var<T>&, int, int);                                          \
  template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul<T>(Tape<T>&, const Var<T>&, const Var<T>&);                                                 \
  template Var<T> concat<T>(Tape<T>&, std::span<const Var<T>>, int);                                              \
  template Var<T> slice<T>(Tape<T>&, const Var<T>&, int, int, int);                                               \
  template Var<T> reshape<T>(Tape<T>&, const Var<T>&, Shape);                                                     \
  template Var<T> linear<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> softmax_cross_entropy<T>(Tape<T>&, const Var<T>&, std::span<const int>);                        \
  template Var<T> sum<T>(Tape<T>&, const Var<T>&);

APN_INSTANTIATE_OPS(float)
APN_INSTANTIATE_OPS(double)

}  // namespace apn::ops

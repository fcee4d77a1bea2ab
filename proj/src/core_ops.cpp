#include "zsm/core_ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace zsm {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

[[noreturn]] void bad(const std::string& msg) { throw std::invalid_argument(msg); }

template <typename T>
Tensor<T>* grad_of(Node<T>& self, std::size_t i) {
  auto& in = self.inputs[i];
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

template <typename T>
const Tensor<T>& value_of(Node<T>& self, std::size_t i) {
  return self.inputs[i]->value;
}

// Corner geometry of one bilinear read. Out-of-grid corners carry valid=false.
struct Bilinear {
  int y0, x0;
  double ly, lx;
  bool v00, v01, v10, v11;
};

inline Bilinear bilinear_at(double y, double x, int h, int w) {
  Bilinear b{};
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  b.y0 = static_cast<int>(fy);
  b.x0 = static_cast<int>(fx);
  b.ly = y - fy;
  b.lx = x - fx;
  const bool y0in = b.y0 >= 0 && b.y0 < h;
  const bool y1in = b.y0 + 1 >= 0 && b.y0 + 1 < h;
  const bool x0in = b.x0 >= 0 && b.x0 < w;
  const bool x1in = b.x0 + 1 >= 0 && b.x0 + 1 < w;
  b.v00 = y0in && x0in;
  b.v01 = y0in && x1in;
  b.v10 = y1in && x0in;
  b.v11 = y1in && x1in;
  return b;
}

template <typename T>
inline T read_bilinear(const T* plane, int w, const Bilinear& b) {
  const T ly = static_cast<T>(b.ly), lx = static_cast<T>(b.lx);
  const T hy = T(1) - ly, hx = T(1) - lx;
  T v = 0;
  const std::size_t base = static_cast<std::size_t>(b.y0) * w + b.x0;
  if (b.v00) v += hy * hx * plane[base];
  if (b.v01) v += hy * lx * plane[base + 1];
  if (b.v10) v += ly * hx * plane[base + w];
  if (b.v11) v += ly * lx * plane[base + w + 1];
  return v;
}

void check_odd_kernel(int kh, int kw, const char* what) {
  if (kh % 2 == 0 || kw % 2 == 0)
    bad(std::string(what) + ": kernel dims must be odd, got " + std::to_string(kh) + "x" +
        std::to_string(kw));
}

// cols is (C*kh*kw) x (H*W); row (c*kh + ki)*kw + kj holds the input shifted by
// (ki - kh/2, kj - kw/2) with zero fill.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, T* cols) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const T* src = x + c * hw;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * hw;
        const int dy = ki - ph, dx = kj - pw;
        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H || x_lo >= x_hi) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          std::fill(dst, dst + x_lo, T(0));
          std::memcpy(dst + x_lo, src + static_cast<std::size_t>(sy) * W + x_lo + dx,
                      sizeof(T) * static_cast<std::size_t>(x_hi - x_lo));
          std::fill(dst + x_hi, dst + W, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int C, int H, int W, int kh, int kw, T* x) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    T* dst = x + c * hw;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * hw;
        const int dy = ki - ph, dx = kj - pw;
        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* s = row + static_cast<std::size_t>(y) * W;
          T* d = dst + static_cast<std::size_t>(sy) * W + dx;
          for (int xx = x_lo; xx < x_hi; ++xx) d[xx] += s[xx];
        }
      }
    }
  }
}

// Per-batch deformable column buffer: cols[(c*K + k), p].
template <typename T>
void deform_im2col(const Tensor<T>& input, const Tensor<T>& offsets, int b, int kh, int kw,
                   int groups, T* cols) {
  const int C = input.c(), H = input.h(), W = input.w();
  const int K = kh * kw, ph = kh / 2, pw = kw / 2;
  const int cpg = C / groups;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int g = 0; g < groups; ++g) {
    for (int k = 0; k < K; ++k) {
      const int ki = k / kw, kj = k % kw;
      const T* off_y = offsets.plane(b, 2 * (g * K + k));
      const T* off_x = offsets.plane(b, 2 * (g * K + k) + 1);
      for (int oy = 0; oy < H; ++oy) {
        for (int ox = 0; ox < W; ++ox) {
          const std::size_t p = static_cast<std::size_t>(oy) * W + ox;
          const Bilinear geo = bilinear_at(oy + ki - ph + static_cast<double>(off_y[p]),
                                           ox + kj - pw + static_cast<double>(off_x[p]), H, W);
          for (int c = g * cpg; c < (g + 1) * cpg; ++c)
            cols[(static_cast<std::size_t>(c) * K + k) * hw + p] =
                read_bilinear(input.plane(b, c), W, geo);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
T bilinear_sample(const Tensor<T>& feature, T y, T x, int channel, int batch) {
  if (batch < 0 || batch >= feature.n() || channel < 0 || channel >= feature.c())
    bad("bilinear_sample: batch/channel out of range");
  const Bilinear geo = bilinear_at(static_cast<double>(y), static_cast<double>(x), feature.h(),
                                   feature.w());
  return read_bilinear(feature.plane(batch, channel), feature.w(), geo);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (auto* g = grad_of(self, i)) *g += self.grad;
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) *g += self.grad;
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v *= s;
  return Var<T>::make(std::move(out), {a}, [s](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v = T(1) / (T(1) + std::exp(-v));
  auto result = Var<T>::make(std::move(out), {a}, nullptr);
  if (!result.requires_grad()) return result;
  // The closure reads the output through the node it is attached to.
  result.node()->backward_fn = [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T y = self.value[i];
        (*g)[i] += self.grad[i] * y * (T(1) - y);
      }
  };
  return result;
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v = std::tanh(v);
  auto result = Var<T>::make(std::move(out), {a}, nullptr);
  if (!result.requires_grad()) return result;
  result.node()->backward_fn = [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T y = self.value[i];
        (*g)[i] += self.grad[i] * (T(1) - y * y);
      }
  };
  return result;
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.value();
  for (auto& v : out.span())
    if (v < T(0)) v *= slope;
  return Var<T>::make(std::move(out), {a}, [slope](Node<T>& self) {
    const auto& x = value_of(self, 0);
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += x[i] < T(0) ? self.grad[i] * slope : self.grad[i];
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) bad("concat_channels: no inputs");
  const Shape s0 = parts[0].shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      bad("concat_channels: spatial/batch mismatch " + s0.str() + " vs " + s.str());
    channels += s.c;
  }
  Tensor<T> out(s0.n, channels, s0.h, s0.w);
  const std::size_t hw = s0.plane();
  std::vector<int> starts;
  int c0 = 0;
  for (const auto& p : parts) {
    starts.push_back(c0);
    for (int b = 0; b < s0.n; ++b)
      std::memcpy(out.plane(b, c0), p.value().plane(b, 0), sizeof(T) * hw * p.shape().c);
    c0 += p.shape().c;
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return Var<T>::make(std::move(out), std::move(inputs), [starts, hw](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      auto* g = grad_of(self, i);
      if (!g) continue;
      const int cn = g->c();
      for (int b = 0; b < g->n(); ++b) {
        const T* src = self.grad.plane(b, starts[i]);
        T* dst = g->plane(b, 0);
        for (std::size_t j = 0; j < hw * cn; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int count) {
  const Shape s = a.shape();
  if (begin < 0 || count < 0 || begin + count > s.c)
    bad("slice_channels: range out of bounds for " + s.str());
  Tensor<T> out(s.n, count, s.h, s.w);
  const std::size_t hw = s.plane();
  for (int b = 0; b < s.n; ++b)
    std::memcpy(out.plane(b, 0), a.value().plane(b, begin), sizeof(T) * hw * count);
  return Var<T>::make(std::move(out), {a}, [begin, count, hw](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int b = 0; b < g->n(); ++b) {
      const T* src = self.grad.plane(b, 0);
      T* dst = g->plane(b, begin);
      for (std::size_t j = 0; j < hw * count; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const ConvWeights<T>& w) {
  const Shape xs = input.shape();
  const int cout = w.out_channels(), kh = w.kernel_h(), kw = w.kernel_w();
  check_odd_kernel(kh, kw, "conv2d");
  if (w.in_channels() != xs.c)
    bad("conv2d: weight expects " + std::to_string(w.in_channels()) + " input channels, got " +
        std::to_string(xs.c));
  const bool has_bias = w.bias.defined();
  if (has_bias && w.bias.shape() != Shape{1, cout, 1, 1}) bad("conv2d: bias shape mismatch");

  const int K = kh * kw;
  const int rows = xs.c * K;
  const auto hw = static_cast<Eigen::Index>(xs.plane());
  Tensor<T> out(xs.n, cout, xs.h, xs.w);
  CMatMap<T> wm(w.weight.value().data(), cout, rows);
  RowMat<T> cols;
  if (K > 1) cols.resize(rows, hw);
  for (int b = 0; b < xs.n; ++b) {
    MatMap<T> om(out.plane(b, 0), cout, hw);
    if (K == 1) {
      om.noalias() = wm * CMatMap<T>(input.value().plane(b, 0), rows, hw);
    } else {
      im2col(input.value().plane(b, 0), xs.c, xs.h, xs.w, kh, kw, cols.data());
      om.noalias() = wm * cols;
    }
    if (has_bias)
      for (int o = 0; o < cout; ++o) om.row(o).array() += w.bias.value()[o];
  }

  std::vector<Var<T>> inputs{input, w.weight};
  if (has_bias) inputs.push_back(w.bias);
  return Var<T>::make(std::move(out), std::move(inputs), [=](Node<T>& self) {
    const Tensor<T>& x = value_of(self, 0);
    const Tensor<T>& wt = value_of(self, 1);
    Tensor<T>* gx = grad_of(self, 0);
    Tensor<T>* gw = grad_of(self, 1);
    Tensor<T>* gb = has_bias ? grad_of(self, 2) : nullptr;
    CMatMap<T> wmat(wt.data(), cout, rows);
    RowMat<T> buf;
    if (K > 1 || gx) buf.resize(rows, hw);
    for (int b = 0; b < xs.n; ++b) {
      CMatMap<T> dout(self.grad.plane(b, 0), cout, hw);
      if (gw) {
        MatMap<T> gwm(gw->data(), cout, rows);
        if (K == 1) {
          gwm.noalias() += dout * CMatMap<T>(x.plane(b, 0), rows, hw).transpose();
        } else {
          im2col(x.plane(b, 0), xs.c, xs.h, xs.w, kh, kw, buf.data());
          gwm.noalias() += dout * buf.transpose();
        }
      }
      if (gb)
        for (int o = 0; o < cout; ++o) (*gb)[o] += dout.row(o).sum();
      if (gx) {
        if (K == 1) {
          MatMap<T>(gx->plane(b, 0), rows, hw).noalias() += wmat.transpose() * dout;
        } else {
          buf.noalias() = wmat.transpose() * dout;
          col2im(buf.data(), xs.c, xs.h, xs.w, kh, kw, gx->plane(b, 0));
        }
      }
    }
  });
}

template <typename T>
Var<T> deformable_conv(const Var<T>& input, const Var<T>& offsets, const ConvWeights<T>& w,
                       int groups) {
  const Shape xs = input.shape();
  const Shape os = offsets.shape();
  const int cout = w.out_channels(), kh = w.kernel_h(), kw = w.kernel_w();
  const int K = kh * kw;
  check_odd_kernel(kh, kw, "deformable_conv");
  if (groups < 1 || xs.c % groups != 0)
    bad("deformable_conv: input channels " + std::to_string(xs.c) +
        " not divisible by groups " + std::to_string(groups));
  if (w.in_channels() != xs.c) bad("deformable_conv: weight/input channel mismatch");
  if (os.c != 2 * K * groups)
    bad("deformable_conv: offsets carry " + std::to_string(os.c) + " channels, kernel needs " +
        std::to_string(2 * K * groups));
  if (os.n != xs.n || os.h != xs.h || os.w != xs.w)
    bad("deformable_conv: offsets " + os.str() + " not aligned with input " + xs.str());
  const bool has_bias = w.bias.defined();
  if (has_bias && w.bias.shape() != Shape{1, cout, 1, 1})
    bad("deformable_conv: bias shape mismatch");

  const int rows = xs.c * K;
  const auto hw = static_cast<Eigen::Index>(xs.plane());
  Tensor<T> out(xs.n, cout, xs.h, xs.w);
  CMatMap<T> wm(w.weight.value().data(), cout, rows);
  RowMat<T> cols(rows, hw);
  for (int b = 0; b < xs.n; ++b) {
    deform_im2col(input.value(), offsets.value(), b, kh, kw, groups, cols.data());
    MatMap<T> om(out.plane(b, 0), cout, hw);
    om.noalias() = wm * cols;
    if (has_bias)
      for (int o = 0; o < cout; ++o) om.row(o).array() += w.bias.value()[o];
  }

  std::vector<Var<T>> inputs{input, offsets, w.weight};
  if (has_bias) inputs.push_back(w.bias);
  return Var<T>::make(std::move(out), std::move(inputs), [=](Node<T>& self) {
    const Tensor<T>& x = value_of(self, 0);
    const Tensor<T>& off = value_of(self, 1);
    const Tensor<T>& wt = value_of(self, 2);
    Tensor<T>* gx = grad_of(self, 0);
    Tensor<T>* goff = grad_of(self, 1);
    Tensor<T>* gw = grad_of(self, 2);
    Tensor<T>* gb = has_bias ? grad_of(self, 3) : nullptr;
    CMatMap<T> wmat(wt.data(), cout, rows);
    const int H = xs.h, W = xs.w, C = xs.c;
    const int cpg = C / groups, ph = kh / 2, pw = kw / 2;
    RowMat<T> buf(rows, hw);
    for (int b = 0; b < xs.n; ++b) {
      CMatMap<T> dout(self.grad.plane(b, 0), cout, hw);
      if (gw) {
        deform_im2col(x, off, b, kh, kw, groups, buf.data());
        MatMap<T>(gw->data(), cout, rows).noalias() += dout * buf.transpose();
      }
      if (gb)
        for (int o = 0; o < cout; ++o) (*gb)[o] += dout.row(o).sum();
      if (!gx && !goff) continue;
      buf.noalias() = wmat.transpose() * dout;
      for (int g = 0; g < groups; ++g) {
        for (int k = 0; k < K; ++k) {
          const int ki = k / kw, kj = k % kw;
          const T* off_y = off.plane(b, 2 * (g * K + k));
          const T* off_x = off.plane(b, 2 * (g * K + k) + 1);
          for (int oy = 0; oy < H; ++oy) {
            for (int ox = 0; ox < W; ++ox) {
              const std::size_t p = static_cast<std::size_t>(oy) * W + ox;
              const Bilinear geo = bilinear_at(oy + ki - ph + static_cast<double>(off_y[p]),
                                               ox + kj - pw + static_cast<double>(off_x[p]), H, W);
              const T ly = static_cast<T>(geo.ly), lx = static_cast<T>(geo.lx);
              const T hy = T(1) - ly, hx = T(1) - lx;
              const std::size_t base = static_cast<std::size_t>(geo.y0) * W + geo.x0;
              T dy_acc = 0, dx_acc = 0;
              for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
                const T gv = buf(static_cast<Eigen::Index>(c) * K + k, static_cast<Eigen::Index>(p));
                if (gv == T(0)) continue;
                const T* src = x.plane(b, c);
                const T v00 = geo.v00 ? src[base] : T(0);
                const T v01 = geo.v01 ? src[base + 1] : T(0);
                const T v10 = geo.v10 ? src[base + W] : T(0);
                const T v11 = geo.v11 ? src[base + W + 1] : T(0);
                if (goff) {
                  dy_acc += gv * ((v10 - v00) * hx + (v11 - v01) * lx);
                  dx_acc += gv * ((v01 - v00) * hy + (v11 - v10) * ly);
                }
                if (gx) {
                  T* dst = gx->plane(b, c);
                  if (geo.v00) dst[base] += gv * hy * hx;
                  if (geo.v01) dst[base + 1] += gv * hy * lx;
                  if (geo.v10) dst[base + W] += gv * ly * hx;
                  if (geo.v11) dst[base + W + 1] += gv * ly * lx;
                }
              }
              if (goff) {
                goff->plane(b, 2 * (g * K + k))[p] += dy_acc;
                goff->plane(b, 2 * (g * K + k) + 1)[p] += dx_acc;
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, int r) {
  const Shape s = input.shape();
  if (r < 1 || s.c % (r * r) != 0)
    bad("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2 = " +
        std::to_string(r * r));
  const int oc = s.c / (r * r);
  Tensor<T> out(s.n, oc, s.h * r, s.w * r);
  const Tensor<T>& x = input.value();
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < oc; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          const T* src = x.plane(b, c * r * r + dy * r + dx);
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx)
              out.at(b, c, y * r + dy, xx * r + dx) = src[y * s.w + xx];
        }
  return Var<T>::make(std::move(out), {input}, [s, r, oc](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < oc; ++c)
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx) {
            T* dst = g->plane(b, c * r * r + dy * r + dx);
            for (int y = 0; y < s.h; ++y)
              for (int xx = 0; xx < s.w; ++xx)
                dst[y * s.w + xx] += self.grad.at(b, c, y * r + dy, xx * r + dx);
          }
  });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0)
    bad("pixel_unshuffle: spatial dims not divisible by " + std::to_string(r));
  Tensor<T> out(s.n, s.c * r * r, s.h / r, s.w / r);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          for (int y = 0; y < s.h / r; ++y)
            for (int xx = 0; xx < s.w / r; ++xx)
              out.at(b, c * r * r + dy * r + dx, y, xx) = x.at(b, c, y * r + dy, xx * r + dx);
  return out;
}

template <typename T>
Var<T> avg_pool2(const Var<T>& input) {
  const Shape s = input.shape();
  const int oh = s.h / 2, ow = s.w / 2;
  if (oh < 1 || ow < 1) bad("avg_pool2: input too small " + s.str());
  Tensor<T> out(s.n, s.c, oh, ow);
  const Tensor<T>& x = input.value();
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          out.at(b, c, y, xx) = T(0.25) * (x.at(b, c, 2 * y, 2 * xx) + x.at(b, c, 2 * y, 2 * xx + 1) +
                                           x.at(b, c, 2 * y + 1, 2 * xx) +
                                           x.at(b, c, 2 * y + 1, 2 * xx + 1));
  return Var<T>::make(std::move(out), {input}, [s, oh, ow](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            const T v = T(0.25) * self.grad.at(b, c, y, xx);
            g->at(b, c, 2 * y, 2 * xx) += v;
            g->at(b, c, 2 * y, 2 * xx + 1) += v;
            g->at(b, c, 2 * y + 1, 2 * xx) += v;
            g->at(b, c, 2 * y + 1, 2 * xx + 1) += v;
          }
  });
}

namespace {
struct Lerp1D {
  int i0, i1;
  double t;
};
std::vector<Lerp1D> lerp_table(int in, int out) {
  std::vector<Lerp1D> tab(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    tab[o] = {i0, i1, src - i0};
  }
  return tab;
}
}  // namespace

template <typename T>
Var<T> resize_bilinear(const Var<T>& input, int out_h, int out_w) {
  const Shape s = input.shape();
  if (out_h < 1 || out_w < 1) bad("resize_bilinear: bad target size");
  const auto ty = lerp_table(s.h, out_h);
  const auto tx = lerp_table(s.w, out_w);
  Tensor<T> out(s.n, s.c, out_h, out_w);
  const Tensor<T>& x = input.value();
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.plane(b, c);
      T* dst = out.plane(b, c);
      for (int y = 0; y < out_h; ++y) {
        const T wy = static_cast<T>(ty[y].t);
        for (int xx = 0; xx < out_w; ++xx) {
          const T wx = static_cast<T>(tx[xx].t);
          const T top = src[ty[y].i0 * s.w + tx[xx].i0] * (T(1) - wx) + src[ty[y].i0 * s.w + tx[xx].i1] * wx;
          const T bot = src[ty[y].i1 * s.w + tx[xx].i0] * (T(1) - wx) + src[ty[y].i1 * s.w + tx[xx].i1] * wx;
          dst[y * out_w + xx] = top * (T(1) - wy) + bot * wy;
        }
      }
    }
  return Var<T>::make(std::move(out), {input}, [s, ty, tx, out_h, out_w](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c) {
        const T* src = self.grad.plane(b, c);
        T* dst = g->plane(b, c);
        for (int y = 0; y < out_h; ++y) {
          const T wy = static_cast<T>(ty[y].t);
          for (int xx = 0; xx < out_w; ++xx) {
            const T wx = static_cast<T>(tx[xx].t);
            const T v = src[y * out_w + xx];
            dst[ty[y].i0 * s.w + tx[xx].i0] += v * (T(1) - wy) * (T(1) - wx);
            dst[ty[y].i0 * s.w + tx[xx].i1] += v * (T(1) - wy) * wx;
            dst[ty[y].i1 * s.w + tx[xx].i0] += v * wy * (T(1) - wx);
            dst[ty[y].i1 * s.w + tx[xx].i1] += v * wy * wx;
          }
        }
      }
  });
}

template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps) {
  pred.value().check_same(target.value(), "charbonnier");
  if (!(eps > T(0))) bad("charbonnier: eps must be positive");
  const std::size_t n = pred.value().size();
  if (n == 0) bad("charbonnier: empty input");
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.value()[i]) - static_cast<double>(target.value()[i]);
    acc += std::sqrt(d * d + static_cast<double>(eps) * eps);
  }
  Tensor<T> out(1, 1, 1, 1, static_cast<T>(acc / static_cast<double>(n)));
  return Var<T>::make(std::move(out), {pred, target}, [eps, n](Node<T>& self) {
    const auto& p = value_of(self, 0);
    const auto& t = value_of(self, 1);
    auto* gp = grad_of(self, 0);
    auto* gt = grad_of(self, 1);
    const T up = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = p[i] - t[i];
      const T dd = up * d / std::sqrt(d * d + eps * eps);
      if (gp) (*gp)[i] += dd;
      if (gt) (*gt)[i] -= dd;
    }
  });
}

template <typename T>
Var<T> residual_block(const Var<T>& input, const ConvWeights<T>& w1, const ConvWeights<T>& w2) {
  const int c = input.shape().c;
  if (w1.in_channels() != c || w1.out_channels() != c || w2.in_channels() != c ||
      w2.out_channels() != c)
    bad("residual_block: weights must preserve the " + std::to_string(c) + "-channel width");
  return add(input, conv2d(leaky_relu(conv2d(input, w1)), w2));
}

template <typename T>
Var<T> mean_of(std::span<const Var<T>> scalars) {
  if (scalars.empty()) bad("mean_of: empty");
  Tensor<T> out(1, 1, 1, 1);
  for (const auto& s : scalars) {
    if (s.value().size() != 1) bad("mean_of: inputs must be scalars");
    out[0] += s.item();
  }
  const T inv = T(1) / static_cast<T>(scalars.size());
  out[0] *= inv;
  std::vector<Var<T>> inputs(scalars.begin(), scalars.end());
  return Var<T>::make(std::move(out), std::move(inputs), [inv](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (auto* g = grad_of(self, i)) (*g)[0] += self.grad[0] * inv;
  });
}

#define ZSM_INSTANTIATE(T)                                                                    \
  template T bilinear_sample<T>(const Tensor<T>&, T, T, int, int);                            \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, T);                                                 \
  template Var<T> sigmoid<T>(const Var<T>&);                                                  \
  template Var<T> tanh<T>(const Var<T>&);                                                     \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                            \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                                \
  template Var<T> slice_channels<T>(const Var<T>&, int, int);                                 \
  template Var<T> conv2d<T>(const Var<T>&, const ConvWeights<T>&);                            \
  template Var<T> deformable_conv<T>(const Var<T>&, const Var<T>&, const ConvWeights<T>&, int); \
  template Var<T> pixel_shuffle<T>(const Var<T>&, int);                                       \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                               \
  template Var<T> avg_pool2<T>(const Var<T>&);                                                \
  template Var<T> resize_bilinear<T>(const Var<T>&, int, int);                                \
  template Var<T> charbonnier<T>(const Var<T>&, const Var<T>&, T);                            \
  template Var<T> residual_block<T>(const Var<T>&, const ConvWeights<T>&, const ConvWeights<T>&); \
  template Var<T> mean_of<T>(std::span<const Var<T>>);

ZSM_INSTANTIATE(float)
ZSM_INSTANTIATE(double)

#undef ZSM_INSTANTIATE

}  // namespace zsm

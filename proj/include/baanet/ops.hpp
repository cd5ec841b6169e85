#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

enum class Activation { sigmoid, relu, softmax_lastdim };

enum class CombineKind { add, mul_elementwise, mul_channelwise, mul_spatialwise, concat_channels };

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                     t.shape().str());
  }
}

/// Logistic function kept strictly inside (0,1): in double precision it
/// would round to exactly 1 for x above ~37 and underflow to 0 far below.
inline double sigmoid(double x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  if (x >= 0.0) return std::min(1.0 / (1.0 + std::exp(-x)), hi);
  const double e = std::exp(x);
  return std::max(e / (1.0 + e), lo);
}

/// Unfolds one batch item into a (Cin*kh*kw) x (Ho*Wo) column matrix.
inline void im2col(const double* in, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                   std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* cols) {
  const std::size_t p_count = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols + ((c * kh + ky) * kw + kx) * p_count;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = in + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                       std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
                       double* out) {
  const std::size_t p_count = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols + ((c * kh + ky) * kw + kx) * p_count;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = out + (c * h + static_cast<std::size_t>(iy)) * w;
          const double* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Output spatial extent of a convolution; floor division on the stride.
inline std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(k) + " exceeds padded input extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

/// 2-D cross-correlation over NCHW input with an [Cout,Cin,kh,kw] kernel.
inline Var conv2d(Var input, Var weight, Var bias, std::size_t stride = 1, std::size_t pad = 0) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  detail::require_rank(x, 4, "conv2d", "input");
  detail::require_rank(w, 4, "conv2d", "weight");
  detail::require_rank(b, 1, "conv2d", "bias");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d: weight input channels " + std::to_string(w.dim(1)) + " != input channels " +
                     std::to_string(cin));
  }
  if (b.dim(0) != cout) {
    throw ShapeError("conv2d: bias length " + std::to_string(b.dim(0)) + " != output channels " +
                     std::to_string(cout));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d: kernel dims must be odd, got " + std::to_string(kh) + "x" + std::to_string(kw));
  }
  const std::size_t ho = conv_output_extent(h, kh, stride, pad);
  const std::size_t wo = conv_output_extent(wd, kw, stride, pad);
  const std::size_t k_count = cin * kh * kw, p_count = ho * wo;

  auto cols = std::make_shared<std::vector<double>>(n * k_count * p_count);
  Tensor out(Shape{n, cout, ho, wo});
  for (std::size_t i = 0; i < n; ++i) {
    double* col = cols->data() + i * k_count * p_count;
    detail::im2col(x.raw() + i * cin * h * wd, cin, h, wd, kh, kw, stride, pad, ho, wo, col);
    double* o = out.raw() + i * cout * p_count;
    for (std::size_t co = 0; co < cout; ++co) {
      double* orow = o + co * p_count;
      std::fill(orow, orow + p_count, b[co]);
      const double* wrow = w.raw() + co * k_count;
      for (std::size_t k = 0; k < k_count; ++k) {
        const double wk = wrow[k];
        const double* crow = col + k * p_count;
        for (std::size_t p = 0; p < p_count; ++p) orow[p] += wk * crow[p];
      }
    }
  }

  return input.graph()->record(
      std::move(out), {input, weight, bias},
      [=](const Tensor& gout, GradSlots gin) {
        const Tensor& wv = weight.value();
        std::vector<double> dcols(gin[0] ? k_count * p_count : 0);
        for (std::size_t i = 0; i < n; ++i) {
          const double* col = cols->data() + i * k_count * p_count;
          const double* g = gout.raw() + i * cout * p_count;
          if (gin[1]) {
            double* dw = gin[1]->raw();
            for (std::size_t co = 0; co < cout; ++co) {
              const double* grow = g + co * p_count;
              for (std::size_t k = 0; k < k_count; ++k) {
                const double* crow = col + k * p_count;
                double acc = 0.0;
                for (std::size_t p = 0; p < p_count; ++p) acc += grow[p] * crow[p];
                dw[co * k_count + k] += acc;
              }
            }
          }
          if (gin[2]) {
            for (std::size_t co = 0; co < cout; ++co) {
              const double* grow = g + co * p_count;
              double acc = 0.0;
              for (std::size_t p = 0; p < p_count; ++p) acc += grow[p];
              (*gin[2])[co] += acc;
            }
          }
          if (gin[0]) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            for (std::size_t co = 0; co < cout; ++co) {
              const double* grow = g + co * p_count;
              const double* wrow = wv.raw() + co * k_count;
              for (std::size_t k = 0; k < k_count; ++k) {
                const double wk = wrow[k];
                double* drow = dcols.data() + k * p_count;
                for (std::size_t p = 0; p < p_count; ++p) drow[p] += wk * grow[p];
              }
            }
            detail::col2im_add(dcols.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                               gin[0]->raw() + i * cin * h * wd);
          }
        }
      });
}

/// Mean over each HxW plane: [N,C,H,W] -> [N,C,1,1].
inline Var global_avg_pool(Var input) {
  const Tensor& x = input.value();
  detail::require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), 1, 1});
  for (std::size_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += x[i * hw + p];
    out[i] = acc / static_cast<double>(hw);
  }
  return input.graph()->record(std::move(out), {input}, [=](const Tensor& gout, GradSlots gin) {
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < nc; ++i) {
      const double g = gout[i] * inv;
      for (std::size_t p = 0; p < hw; ++p) (*gin[0])[i * hw + p] += g;
    }
  });
}

/// Affine map [N,Din] x [Dout,Din]^T + [Dout] -> [N,Dout].
inline Var fully_connected(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  detail::require_rank(x, 2, "fully_connected", "input");
  detail::require_rank(w, 2, "fully_connected", "weight");
  detail::require_rank(b, 1, "fully_connected", "bias");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (w.dim(1) != din) {
    throw ShapeError("fully_connected: weight inner dim " + std::to_string(w.dim(1)) + " != input dim " +
                     std::to_string(din));
  }
  if (b.dim(0) != dout) {
    throw ShapeError("fully_connected: bias length " + std::to_string(b.dim(0)) + " != output dim " +
                     std::to_string(dout));
  }
  Tensor out(Shape{n, dout});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b[o];
      const double* wrow = w.raw() + o * din;
      const double* xrow = x.raw() + i * din;
      for (std::size_t k = 0; k < din; ++k) acc += wrow[k] * xrow[k];
      out[i * dout + o] = acc;
    }
  }
  return input.graph()->record(std::move(out), {input, weight, bias}, [=](const Tensor& gout, GradSlots gin) {
    const Tensor& xv = input.value();
    const Tensor& wv = weight.value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < dout; ++o) {
        const double g = gout[i * dout + o];
        if (g == 0.0) continue;
        if (gin[0]) {
          double* dx = gin[0]->raw() + i * din;
          const double* wrow = wv.raw() + o * din;
          for (std::size_t k = 0; k < din; ++k) dx[k] += g * wrow[k];
        }
        if (gin[1]) {
          double* dw = gin[1]->raw() + o * din;
          const double* xrow = xv.raw() + i * din;
          for (std::size_t k = 0; k < din; ++k) dw[k] += g * xrow[k];
        }
        if (gin[2]) (*gin[2])[o] += g;
      }
    }
  });
}

inline Var activate(Var input, Activation kind) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  switch (kind) {
    case Activation::sigmoid: {
      for (std::size_t i = 0; i < x.numel(); ++i) out[i] = detail::sigmoid(x[i]);
      auto y = std::make_shared<Tensor>(out);
      return input.graph()->record(std::move(out), {input}, [y](const Tensor& gout, GradSlots gin) {
        for (std::size_t i = 0; i < gout.numel(); ++i) {
          const double s = (*y)[i];
          (*gin[0])[i] += gout[i] * s * (1.0 - s);
        }
      });
    }
    case Activation::relu: {
      for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      return input.graph()->record(std::move(out), {input}, [input](const Tensor& gout, GradSlots gin) {
        const Tensor& xv = input.value();
        for (std::size_t i = 0; i < gout.numel(); ++i)
          if (xv[i] > 0.0) (*gin[0])[i] += gout[i];
      });
    }
    case Activation::softmax_lastdim: {
      const std::size_t last = x.dim(x.rank() - 1);
      const std::size_t rows = x.numel() / last;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.raw() + r * last;
        double* yr = out.raw() + r * last;
        const double mx = *std::max_element(xr, xr + last);
        double z = 0.0;
        for (std::size_t j = 0; j < last; ++j) z += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < last; ++j) yr[j] /= z;
      }
      auto y = std::make_shared<Tensor>(out);
      return input.graph()->record(std::move(out), {input}, [y, rows, last](const Tensor& gout, GradSlots gin) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yr = y->raw() + r * last;
          const double* gr = gout.raw() + r * last;
          double dot = 0.0;
          for (std::size_t j = 0; j < last; ++j) dot += gr[j] * yr[j];
          double* dx = gin[0]->raw() + r * last;
          for (std::size_t j = 0; j < last; ++j) dx[j] += yr[j] * (gr[j] - dot);
        }
      });
    }
  }
  throw std::logic_error("unknown activation");
}

inline Var sigmoid(Var x) { return activate(x, Activation::sigmoid); }
inline Var relu(Var x) { return activate(x, Activation::relu); }
inline Var softmax(Var x) { return activate(x, Activation::softmax_lastdim); }

namespace detail {

inline Var concat_channels(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 4, "concat_channels", "a");
  require_rank(bv, 4, "concat_channels", "b");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw ShapeError("concat_channels: N,H,W must agree, got " + av.shape().str() + " and " + bv.shape().str());
  }
  const std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor out(Shape{n, ca + cb, av.dim(2), av.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.raw() + i * ca * hw, ca * hw, out.raw() + i * (ca + cb) * hw);
    std::copy_n(bv.raw() + i * cb * hw, cb * hw, out.raw() + i * (ca + cb) * hw + ca * hw);
  }
  return a.graph()->record(std::move(out), {a, b}, [=](const Tensor& gout, GradSlots gin) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = gout.raw() + i * (ca + cb) * hw;
      if (gin[0]) {
        double* d = gin[0]->raw() + i * ca * hw;
        for (std::size_t k = 0; k < ca * hw; ++k) d[k] += g[k];
      }
      if (gin[1]) {
        double* d = gin[1]->raw() + i * cb * hw;
        for (std::size_t k = 0; k < cb * hw; ++k) d[k] += g[ca * hw + k];
      }
    }
  });
}

/// gate [N,C,1,1] (channel) or [N,1,H,W] (spatial) broadcast over x [N,C,H,W].
inline Var broadcast_mul(Var gate, Var x, bool channelwise) {
  const Tensor& gv = gate.value();
  const Tensor& xv = x.value();
  const char* op = channelwise ? "mul_channelwise" : "mul_spatialwise";
  require_rank(gv, 4, op, "gate");
  require_rank(xv, 4, op, "tensor");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  const bool ok = channelwise ? (gv.dim(0) == n && gv.dim(1) == c && gv.dim(2) == 1 && gv.dim(3) == 1)
                              : (gv.dim(0) == n && gv.dim(1) == 1 && gv.dim(2) == xv.dim(2) && gv.dim(3) == xv.dim(3));
  if (!ok) {
    throw ShapeError(std::string(op) + ": gate " + gv.shape().str() + " must be " +
                     (channelwise ? "[N,C,1,1]" : "[N,1,H,W]") + " for tensor " + xv.shape().str());
  }
  auto gate_at = [=](std::size_t i, std::size_t ch, std::size_t p) {
    return channelwise ? i * c + ch : i * hw + p;
  };
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t k = (i * c + ch) * hw + p;
        out[k] = gv[gate_at(i, ch, p)] * xv[k];
      }
  return gate.graph()->record(std::move(out), {gate, x}, [=](const Tensor& gout, GradSlots gin) {
    const Tensor& gvv = gate.value();
    const Tensor& xvv = x.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
          const std::size_t k = (i * c + ch) * hw + p;
          const std::size_t gk = gate_at(i, ch, p);
          if (gin[0]) (*gin[0])[gk] += gout[k] * xvv[k];
          if (gin[1]) (*gin[1])[k] += gout[k] * gvv[gk];
        }
  });
}

}  // namespace detail

/// Binary tensor combinations. For the broadcast multiplies `a` is the gate.
inline Var combine(Var a, Var b, CombineKind kind) {
  switch (kind) {
    case CombineKind::add:
    case CombineKind::mul_elementwise: {
      const Tensor& av = a.value();
      const Tensor& bv = b.value();
      const bool is_add = kind == CombineKind::add;
      if (!(av.shape() == bv.shape())) {
        throw ShapeError(std::string(is_add ? "add" : "mul_elementwise") + ": shapes must match, got " +
                         av.shape().str() + " and " + bv.shape().str());
      }
      Tensor out(av.shape());
      for (std::size_t i = 0; i < av.numel(); ++i) out[i] = is_add ? av[i] + bv[i] : av[i] * bv[i];
      return a.graph()->record(std::move(out), {a, b}, [=](const Tensor& gout, GradSlots gin) {
        if (is_add) {
          for (std::size_t k = 0; k < 2; ++k)
            if (gin[k])
              for (std::size_t i = 0; i < gout.numel(); ++i) (*gin[k])[i] += gout[i];
          return;
        }
        const Tensor& avv = a.value();
        const Tensor& bvv = b.value();
        for (std::size_t i = 0; i < gout.numel(); ++i) {
          if (gin[0]) (*gin[0])[i] += gout[i] * bvv[i];
          if (gin[1]) (*gin[1])[i] += gout[i] * avv[i];
        }
      });
    }
    case CombineKind::mul_channelwise:
      return detail::broadcast_mul(a, b, true);
    case CombineKind::mul_spatialwise:
      return detail::broadcast_mul(a, b, false);
    case CombineKind::concat_channels:
      return detail::concat_channels(a, b);
  }
  throw std::logic_error("unknown combine kind");
}

inline Var add(Var a, Var b) { return combine(a, b, CombineKind::add); }
inline Var concat_channels(Var a, Var b) { return combine(a, b, CombineKind::concat_channels); }

/// Multiplication by a constant scalar.
inline Var scale(Var x, double s) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = s * xv[i];
  return x.graph()->record(std::move(out), {x}, [s](const Tensor& gout, GradSlots gin) {
    for (std::size_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += s * gout[i];
  });
}

inline Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(shape);
  return x.graph()->record(std::move(out), {x}, [](const Tensor& gout, GradSlots gin) {
    for (std::size_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i];
  });
}

/// Sum of all elements -> shape [1].
inline Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.graph()->record(Tensor::scalar(acc), {x}, [](const Tensor& gout, GradSlots gin) {
    for (std::size_t i = 0; i < gin[0]->numel(); ++i) (*gin[0])[i] += gout[0];
  });
}

}  // namespace baanet

#include "bnl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "gemm.hpp"

namespace bnl {

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace bnl

namespace bnl::ops {

namespace {

template <typename T>
using Parents = std::span<const typename Node<T>::Ptr>;

struct Spatial {
  std::size_t n, h, w, c;
  bool batched;
};

Spatial spatial_of(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + " expects H×W×C or N×H×W×C, got " + shape_str(s));
}

Shape spatial_shape(const Spatial& sp, std::size_t h, std::size_t w, std::size_t c) {
  if (sp.batched) return {sp.n, h, w, c};
  return {h, w, c};
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out({m, n});
  kernels::gemm<T>(false, false, m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  return make_result<T>(
      std::move(out), {a, b},
      [m, k, n](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        if (p[0]->requires_grad) {
          kernels::gemm<T>(false, true, m, k, n, g.data().data(), p[1]->value.data().data(),
                           p[0]->grad_buffer().data().data(), true);
        }
        if (p[1]->requires_grad) {
          kernels::gemm<T>(true, false, k, n, m, p[0]->value.data().data(), g.data().data(),
                           p[1]->grad_buffer().data().data(), true);
        }
      },
      "matmul");
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1]) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  }
  const std::size_t batch = as[0], m = as[1], k = as[2], n = bs[2];
  Tensor<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm<T>(false, false, m, n, k, a.value().data().data() + i * m * k,
                     b.value().data().data() + i * k * n, out.data().data() + i * m * n, false);
  }
  return make_result<T>(
      std::move(out), {a, b},
      [batch, m, k, n](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g.data().data() + i * m * n;
          if (p[0]->requires_grad) {
            kernels::gemm<T>(false, true, m, k, n, gi, p[1]->value.data().data() + i * k * n,
                             p[0]->grad_buffer().data().data() + i * m * k, true);
          }
          if (p[1]->requires_grad) {
            kernels::gemm<T>(true, false, k, n, m, p[0]->value.data().data() + i * m * k, gi,
                             p[1]->grad_buffer().data().data() + i * k * n, true);
          }
        }
      },
      "bmm");
}

template <typename T>
Var<T> transpose_last2(const Var<T>& a) {
  const auto& s = a.shape();
  if (s.size() != 3) throw ShapeError("transpose_last2 expects rank 3, got " + shape_str(s));
  const std::size_t batch = s[0], r = s[1], c = s[2];
  Tensor<T> out({batch, c, r});
  const auto src = a.value().data();
  auto dst = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[b * r * c + j * r + i] = src[b * r * c + i * c + j];
  return make_result<T>(
      std::move(out), {a},
      [batch, r, c](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dx[b * r * c + i * c + j] += gd[b * r * c + j * r + i];
      },
      "transpose_last2");
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return make_result<T>(
      std::move(out), {a, b},
      [](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        if (p[0]->requires_grad) p[0]->accumulate(g.data());
        if (p[1]->requires_grad) p[1]->accumulate(g.data());
      },
      "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto bd = b.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return make_result<T>(
      std::move(out), {a, b},
      [](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        if (p[0]->requires_grad) p[0]->accumulate(g.data());
        if (p[1]->requires_grad) {
          auto dx = p[1]->grad_buffer().data();
          const auto gd = g.data();
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] -= gd[i];
        }
      },
      "sub");
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v *= factor;
  return make_result<T>(
      std::move(out), {a},
      [factor](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * gd[i];
      },
      "scale");
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const auto& xs = x.shape();
  if (xs.empty() || bias.shape().size() != 1 || bias.shape()[0] != xs.back()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match trailing axis of " +
                     shape_str(xs));
  }
  const std::size_t n = xs.back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> out = x.value();
  auto od = out.data();
  const auto bd = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) od[r * n + j] += bd[j];
  return make_result<T>(
      std::move(out), {x, bias},
      [rows, n](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        if (p[0]->requires_grad) p[0]->accumulate(g.data());
        if (p[1]->requires_grad) {
          auto db = p[1]->grad_buffer().data();
          const auto gd = g.data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) db[j] += gd[r * n + j];
        }
      },
      "add_bias");
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return make_result<T>(
      std::move(out), {x},
      [](const Tensor<T>& g, const Tensor<T>& y, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        const auto yd = y.data();
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (yd[i] > T{0}) dx[i] += gd[i];
        }
      },
      "relu");
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  const std::size_t len = s[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Tensor<T> out(s);
  const auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      T total{0};
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xd[base + j * inner] - mx);
        od[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) od[base + j * inner] /= total;
    }
  }
  return make_result<T>(
      std::move(out), {x},
      [outer, inner, len](const Tensor<T>& g, const Tensor<T>& y, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        const auto yd = y.data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T dot{0};
            for (std::size_t j = 0; j < len; ++j) dot += gd[base + j * inner] * yd[base + j * inner];
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + j * inner;
              dx[idx] += yd[idx] * (gd[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

template <typename T>
Var<T> mean(const Var<T>& x, std::vector<std::size_t> axes) {
  const auto& s = x.shape();
  if (axes.empty()) throw ShapeError("mean: empty reduction axis list");
  std::vector<bool> reduced(s.size(), false);
  for (std::size_t a : axes) {
    if (a >= s.size() || reduced[a]) throw ShapeError("mean: invalid axis for " + shape_str(s));
    reduced[a] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (reduced[i]) {
      count *= s[i];
    } else {
      out_shape.push_back(s[i]);
    }
  }
  // Map each input position to its output slot.
  auto out_index = std::make_shared<std::vector<std::size_t>>(x.value().size());
  {
    std::vector<std::size_t> idx(s.size(), 0);
    for (std::size_t flat = 0; flat < x.value().size(); ++flat) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < s.size(); ++d) {
        if (!reduced[d]) o = o * s[d] + idx[d];
      }
      (*out_index)[flat] = o;
      for (std::size_t d = s.size(); d-- > 0;) {
        if (++idx[d] < s[d]) break;
        idx[d] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  const auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[(*out_index)[i]] += xd[i];
  const T inv = T{1} / static_cast<T>(count);
  for (T& v : od) v *= inv;
  return make_result<T>(
      std::move(out), {x},
      [out_index, inv](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gd[(*out_index)[i]] * inv;
      },
      "mean");
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  return make_result<T>(
      Tensor<T>::scalar(total), {x},
      [](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        const T gv = g[0];
        for (T& v : p[0]->grad_buffer().data()) v += gv;
      },
      "sum_all");
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(
      std::move(out), {x}, [](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) { p[0]->accumulate(g.data()); },
      "reshape");
}

namespace {

struct ConvGeometry {
  Spatial in;
  std::size_t kh, kw, cout, stride;
  std::size_t oh, ow;
  std::size_t pad_top, pad_left;
  std::size_t patch() const { return kh * kw * in.c; }
  std::size_t rows() const { return in.n * oh * ow; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ks, std::size_t stride, Padding padding) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const Spatial in = spatial_of(xs, "conv2d");
  if (ks.size() != 4 || ks[2] != in.c) {
    throw ShapeError("conv2d: kernel " + shape_str(ks) + " incompatible with input " + shape_str(xs));
  }
  ConvGeometry g{in, ks[0], ks[1], ks[3], stride, 0, 0, 0, 0};
  if (padding == Padding::kSame) {
    g.oh = (in.h + stride - 1) / stride;
    g.ow = (in.w + stride - 1) / stride;
    const std::size_t need_h = (g.oh - 1) * stride + g.kh;
    const std::size_t need_w = (g.ow - 1) * stride + g.kw;
    g.pad_top = need_h > in.h ? (need_h - in.h) / 2 : 0;
    g.pad_left = need_w > in.w ? (need_w - in.w) / 2 : 0;
  } else {
    if (g.kh > in.h || g.kw > in.w) {
      throw ShapeError("conv2d: kernel larger than input " + shape_str(xs) + " under valid padding");
    }
    g.oh = (in.h - g.kh) / stride + 1;
    g.ow = (in.w - g.kw) / stride + 1;
  }
  return g;
}

// Visits (row, patch column, input offset) for every in-bounds tap.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  const auto& in = g.in;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const std::size_t row = (n * g.oh + oy) * g.ow + ox;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const std::size_t src = ((n * in.h + static_cast<std::size_t>(iy)) * in.w + static_cast<std::size_t>(ix)) * in.c;
            const std::size_t col = (ky * g.kw + kx) * in.c;
            f(row, col, src);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel.shape(), stride, padding);
  const std::size_t patch = g.patch();
  const std::size_t rows = g.rows();
  const std::size_t cin = g.in.c;
  auto cols = std::make_shared<std::vector<T>>(rows * patch, T{0});
  const T* xd = x.value().data().data();
  for_each_tap(g, [&](std::size_t row, std::size_t col, std::size_t src) {
    std::copy_n(xd + src, cin, cols->data() + row * patch + col);
  });
  Tensor<T> out(spatial_shape(g.in, g.oh, g.ow, g.cout));
  kernels::gemm<T>(false, false, rows, g.cout, patch, cols->data(), kernel.value().data().data(), out.data().data(),
                   false);
  return make_result<T>(
      std::move(out), {x, kernel},
      [g, cols](const Tensor<T>& grad, const Tensor<T>&, Parents<T> p) {
        const std::size_t patch = g.patch();
        const std::size_t rows = g.rows();
        if (p[1]->requires_grad) {
          kernels::gemm<T>(true, false, patch, g.cout, rows, cols->data(), grad.data().data(),
                           p[1]->grad_buffer().data().data(), true);
        }
        if (p[0]->requires_grad) {
          std::vector<T> dcols(rows * patch);
          kernels::gemm<T>(false, true, rows, patch, g.cout, grad.data().data(), p[1]->value.data().data(),
                           dcols.data(), false);
          T* dx = p[0]->grad_buffer().data().data();
          const std::size_t cin = g.in.c;
          for_each_tap(g, [&](std::size_t row, std::size_t col, std::size_t src) {
            const T* s = dcols.data() + row * patch + col;
            for (std::size_t c = 0; c < cin; ++c) dx[src + c] += s[c];
          });
        }
      },
      "conv2d");
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: window and stride must be >= 1");
  const Spatial in = spatial_of(x.shape(), "maxpool2d");
  const std::size_t oh = (in.h + stride - 1) / stride;
  const std::size_t ow = (in.w + stride - 1) / stride;
  Tensor<T> out(spatial_shape(in, oh, ow, in.c));
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::size_t y0 = oy * stride, y1 = std::min(y0 + window, in.h);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t x0 = ox * stride, x1 = std::min(x0 + window, in.w);
        for (std::size_t c = 0; c < in.c; ++c) {
          std::size_t best = ((n * in.h + y0) * in.w + x0) * in.c + c;
          for (std::size_t iy = y0; iy < y1; ++iy) {
            for (std::size_t ix = x0; ix < x1; ++ix) {
              const std::size_t idx = ((n * in.h + iy) * in.w + ix) * in.c + c;
              if (xd[idx] > xd[best]) best = idx;
            }
          }
          const std::size_t o = ((n * oh + oy) * ow + ox) * in.c + c;
          od[o] = xd[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  return make_result<T>(
      std::move(out), {x},
      [argmax](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t o = 0; o < gd.size(); ++o) dx[(*argmax)[o]] += gd[o];
      },
      "maxpool2d");
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Spatial in = spatial_of(x.shape(), "global_avg_pool");
  const std::size_t hw = in.h * in.w;
  Tensor<T> out(in.batched ? Shape{in.n, in.c} : Shape{in.c});
  const auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t pos = 0; pos < hw; ++pos) {
      const T* src = xd.data() + (n * hw + pos) * in.c;
      for (std::size_t c = 0; c < in.c; ++c) od[n * in.c + c] += src[c];
    }
  }
  // divide rather than multiply by a rounded reciprocal: one rounding per mean
  const T count = static_cast<T>(hw);
  for (T& v : od) v /= count;
  return make_result<T>(
      std::move(out), {x},
      [in, hw, count](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t n = 0; n < in.n; ++n)
          for (std::size_t pos = 0; pos < hw; ++pos)
            for (std::size_t c = 0; c < in.c; ++c) dx[(n * hw + pos) * in.c + c] += gd[n * in.c + c] / count;
      },
      "global_avg_pool");
}

template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
  const Spatial in = spatial_of(x.shape(), "global_max_pool");
  const std::size_t hw = in.h * in.w;
  Tensor<T> out(in.batched ? Shape{in.n, in.c} : Shape{in.c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto xd = x.value().data();
  auto od = out.data();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      std::size_t best = n * hw * in.c + c;
      for (std::size_t pos = 1; pos < hw; ++pos) {
        const std::size_t idx = (n * hw + pos) * in.c + c;
        if (xd[idx] > xd[best]) best = idx;
      }
      od[n * in.c + c] = xd[best];
      (*argmax)[n * in.c + c] = best;
    }
  }
  return make_result<T>(
      std::move(out), {x},
      [argmax](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        const auto gd = g.data();
        for (std::size_t o = 0; o < gd.size(); ++o) dx[(*argmax)[o]] += gd[o];
      },
      "global_max_pool");
}

template <typename T>
Var<T> huber_loss(const Var<T>& pred, const Var<T>& target, T delta) {
  if (!(delta > T{0})) throw std::invalid_argument("huber_loss: delta must be positive");
  require_same_shape(pred.shape(), target.shape(), "huber_loss");
  const auto pd = pred.value().data();
  const auto td = target.value().data();
  const std::size_t count = pd.size();
  T total{0};
  for (std::size_t i = 0; i < count; ++i) {
    const T e = std::abs(pd[i] - td[i]);
    total += e <= delta ? T{0.5} * e * e : delta * (e - T{0.5} * delta);
  }
  return make_result<T>(
      Tensor<T>::scalar(total / static_cast<T>(count)), {pred, target},
      [delta, count](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        const T scale_factor = g[0] / static_cast<T>(count);
        const auto pd = p[0]->value.data();
        const auto td = p[1]->value.data();
        for (std::size_t i = 0; i < count; ++i) {
          const T e = pd[i] - td[i];
          const T d = (std::abs(e) <= delta ? e : (e > T{0} ? delta : -delta)) * scale_factor;
          if (p[0]->requires_grad) p[0]->grad_buffer()[i] += d;
          if (p[1]->requires_grad) p[1]->grad_buffer()[i] -= d;
        }
      },
      "huber_loss");
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index) {
  const auto& s = x.shape();
  if (s.size() != 2 || index.size() != s[0]) {
    throw ShapeError("gather_rows: expected N×A input with N indices, got " + shape_str(s));
  }
  const std::size_t cols = s[1];
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  Tensor<T> out({s[0]});
  for (std::size_t i = 0; i < s[0]; ++i) {
    if ((*idx)[i] >= cols) throw std::out_of_range("gather_rows: index out of range");
    out[i] = x.value()[i * cols + (*idx)[i]];
  }
  return make_result<T>(
      std::move(out), {x},
      [idx, cols](const Tensor<T>& g, const Tensor<T>&, Parents<T> p) {
        auto dx = p[0]->grad_buffer().data();
        for (std::size_t i = 0; i < idx->size(); ++i) dx[i * cols + (*idx)[i]] += g[i];
      },
      "gather_rows");
}

#define BNL_INSTANTIATE_OPS(T)                                                             \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> transpose_last2<T>(const Var<T>&);                                       \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> scale<T>(const Var<T>&, T);                                              \
  template Var<T> add_bias<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> relu<T>(const Var<T>&);                                                  \
  template Var<T> softmax<T>(const Var<T>&, std::size_t);                                  \
  template Var<T> mean<T>(const Var<T>&, std::vector<std::size_t>);                        \
  template Var<T> sum_all<T>(const Var<T>&);                                               \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                        \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, std::size_t, Padding);           \
  template Var<T> maxpool2d<T>(const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                       \
  template Var<T> global_max_pool<T>(const Var<T>&);                                       \
  template Var<T> huber_loss<T>(const Var<T>&, const Var<T>&, T);                          \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);

BNL_INSTANTIATE_OPS(float)
BNL_INSTANTIATE_OPS(double)

#undef BNL_INSTANTIATE_OPS

}  // namespace bnl::ops

#include "ocpi/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ocpi/errors.hpp"
#include "ocpi/parallel.hpp"

namespace ocpi::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// cols is (C*k*k) x (H*W); out-of-image taps are zero.
void im2col(const double* x, int C, int H, int W, int k, RowMat& cols) {
  const int pad = k / 2;
  const auto P = static_cast<Eigen::Index>(H) * W;
  cols.resize(static_cast<Eigen::Index>(C) * k * k, P);
  for (int c = 0; c < C; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int x_lo = std::max(0, pad - kx), x_hi = std::min(W, W + pad - kx);
        for (int y = 0; y < H; ++y) {
          double* dst = row + static_cast<std::size_t>(y) * W;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H) {
            std::fill(dst, dst + W, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * W + (kx - pad);
          std::fill(dst, dst + x_lo, 0.0);
          std::copy(src + x_lo, src + x_hi, dst + x_lo);
          std::fill(dst + x_hi, dst + W, 0.0);
        }
      }
  }
}

void col2im_add(const RowMat& cols, int C, int H, int W, int k, double* dx) {
  const int pad = k / 2;
  for (int c = 0; c < C; ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int x_lo = std::max(0, pad - kx), x_hi = std::min(W, W + pad - kx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          const double* src = row + static_cast<std::size_t>(y) * W;
          double* dst = plane + static_cast<std::size_t>(sy) * W + (kx - pad);
          for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] += src[xx];
        }
      }
  }
}

struct ConvDims {
  int n, cin, cout, h, w, k;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) throw ShapeError("conv2d needs an odd square kernel, got " + ws.str());
  if (ws.c != xs.c) throw ShapeError("conv2d channel mismatch: input " + xs.str() + ", weights " + ws.str());
  require_shape(b, Shape{1, ws.n, 1, 1}, "conv2d bias");
  return {xs.n, xs.c, ws.n, xs.h, xs.w, ws.h};
}

void conv_forward_item(const double* x, const Tensor& w, const Tensor& b, const ConvDims& d, double* y) {
  const auto P = static_cast<Eigen::Index>(d.h) * d.w;
  const auto K = static_cast<Eigen::Index>(d.cin) * d.k * d.k;
  ConstMap W(w.data().data(), d.cout, K);
  MutMap Y(y, d.cout, P);
  if (d.k == 1) {
    Y.noalias() = W * ConstMap(x, d.cin, P);
  } else {
    RowMat cols;
    im2col(x, d.cin, d.h, d.w, d.k, cols);
    Y.noalias() = W * cols;
  }
  for (int co = 0; co < d.cout; ++co) Y.row(co).array() += b[static_cast<std::size_t>(co)];
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto d = conv_dims(x, w, b);
  Tensor y(Shape{d.n, d.cout, d.h, d.w});
  parallel_for(static_cast<std::size_t>(d.n), [&](std::size_t n) {
    conv_forward_item(x.item(static_cast<int>(n)), w, b, d, y.item(static_cast<int>(n)));
  });
  return y;
}

Var conv2d(Tape& t, Var x, Var w, Var b) {
  const auto d = conv_dims(t.value(x), t.value(w), t.value(b));
  Tensor y = conv2d_forward(t.value(x), t.value(w), t.value(b));
  return t.record(std::move(y), {x, w, b}, [x, w, b, d](Tape& tp, const Tensor& gy) {
    const auto P = static_cast<Eigen::Index>(d.h) * d.w;
    const auto K = static_cast<Eigen::Index>(d.cin) * d.k * d.k;
    const bool need_x = tp.requires_grad(x), need_w = tp.requires_grad(w), need_b = tp.requires_grad(b);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    ConstMap W(wv.data().data(), d.cout, K);
    double* gx = need_x ? tp.grad(x).data().data() : nullptr;
    const std::size_t in_item = xv.shape().item_size();

    // Per-item weight gradients, summed in item order afterwards so the
    // result does not depend on the worker count.
    std::vector<RowMat> gw_parts(need_w ? static_cast<std::size_t>(d.n) : 0);
    parallel_for(static_cast<std::size_t>(d.n), [&](std::size_t n) {
      const double* xn = xv.item(static_cast<int>(n));
      ConstMap GY(gy.item(static_cast<int>(n)), d.cout, P);
      if (d.k == 1) {
        if (need_w) gw_parts[n].noalias() = GY * ConstMap(xn, d.cin, P).transpose();
        if (need_x) MutMap(gx + n * in_item, d.cin, P).noalias() += W.transpose() * GY;
        return;
      }
      RowMat cols;
      if (need_w) {
        im2col(xn, d.cin, d.h, d.w, d.k, cols);
        gw_parts[n].noalias() = GY * cols.transpose();
      }
      if (need_x) {
        RowMat gcols = W.transpose() * GY;
        col2im_add(gcols, d.cin, d.h, d.w, d.k, gx + n * in_item);
      }
    });
    if (need_w) {
      MutMap GW(tp.grad(w).data().data(), d.cout, K);
      for (const auto& part : gw_parts) GW += part;
    }
    if (need_b) {
      auto gb = tp.grad(b).data();
      for (int n = 0; n < d.n; ++n) {
        ConstMap GY(gy.item(n), d.cout, P);
        for (int co = 0; co < d.cout; ++co) gb[static_cast<std::size_t>(co)] += GY.row(co).sum();
      }
    }
  });
}

Var relu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return t.record(std::move(y), {x}, [x](Tape& tp, const Tensor& gy) {
    const Tensor& xv = tp.value(x);
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > 0.0) gx[i] += gy[i];
  });
}

Var maxpool2x2(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const auto s = xv.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("maxpool2x2 needs even spatial dims, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor y(os);
  std::vector<std::uint32_t> arg(os.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j, ++o) {
          const std::size_t base = ((static_cast<std::size_t>(n) * s.c + c) * s.h + 2 * i) * s.w + 2 * j;
          const std::size_t window[4] = {base, base + 1, base + s.w, base + s.w + 1};
          std::size_t best_idx = window[0];
          double best = xv[best_idx];
          for (int q = 1; q < 4; ++q)
            if (xv[window[q]] > best) {
              best = xv[window[q]];
              best_idx = window[q];
            }
          y[o] = best;
          arg[o] = static_cast<std::uint32_t>(best_idx);
        }
  return t.record(std::move(y), {x}, [x, arg = std::move(arg)](Tape& tp, const Tensor& gy) {
    Tensor& gx = tp.grad(x);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[arg[o]] += gy[o];
  });
}

Var upsample_nearest2x(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const auto s = xv.shape();
  Tensor y(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < 2 * s.h; ++i)
        for (int j = 0; j < 2 * s.w; ++j) y.at(n, c, i, j) = xv.at(n, c, i / 2, j / 2);
  return t.record(std::move(y), {x}, [x](Tape& tp, const Tensor& gy) {
    Tensor& gx = tp.grad(x);
    const auto s = gx.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < 2 * s.h; ++i)
          for (int j = 0; j < 2 * s.w; ++j) gx.at(n, c, i / 2, j / 2) += gy.at(n, c, i, j);
  });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const auto sa = av.shape(), sb = bv.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels mismatch: " + sa.str() + " vs " + sb.str());
  Tensor y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy(av.item(n), av.item(n) + sa.item_size(), y.item(n));
    std::copy(bv.item(n), bv.item(n) + sb.item_size(), y.item(n) + sa.item_size());
  }
  return t.record(std::move(y), {a, b}, [a, b, sa, sb](Tape& tp, const Tensor& gy) {
    for (int n = 0; n < sa.n; ++n) {
      const double* g = gy.item(n);
      if (tp.requires_grad(a)) {
        double* ga = tp.grad(a).item(n);
        for (std::size_t i = 0; i < sa.item_size(); ++i) ga[i] += g[i];
      }
      if (tp.requires_grad(b)) {
        double* gb = tp.grad(b).item(n);
        for (std::size_t i = 0; i < sb.item_size(); ++i) gb[i] += g[sa.item_size() + i];
      }
    }
  });
}

Var dense(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const auto in = static_cast<Eigen::Index>(xv.shape().item_size());
  const auto out = static_cast<Eigen::Index>(wv.shape().n);
  require_shape(wv, Shape{static_cast<int>(out), static_cast<int>(in), 1, 1}, "dense weights");
  require_shape(t.value(b), Shape{1, static_cast<int>(out), 1, 1}, "dense bias");
  const int n = xv.shape().n;
  Tensor y(Shape{n, static_cast<int>(out), 1, 1});
  ConstMap X(xv.data().data(), n, in);
  ConstMap W(wv.data().data(), out, in);
  MutMap Y(y.data().data(), n, out);
  Y.noalias() = X * W.transpose();
  for (int r = 0; r < n; ++r) Y.row(r) += ConstMap(t.value(b).data().data(), 1, out);
  return t.record(std::move(y), {x, w, b}, [x, w, b, n, in, out](Tape& tp, const Tensor& gy) {
    ConstMap GY(gy.data().data(), n, out);
    if (tp.requires_grad(x)) {
      MutMap(tp.grad(x).data().data(), n, in).noalias() += GY * ConstMap(tp.value(w).data().data(), out, in);
    }
    if (tp.requires_grad(w)) {
      MutMap(tp.grad(w).data().data(), out, in).noalias() += GY.transpose() * ConstMap(tp.value(x).data().data(), n, in);
    }
    if (tp.requires_grad(b)) {
      auto gb = tp.grad(b).data();
      for (Eigen::Index o = 0; o < out; ++o)
        for (int r = 0; r < n; ++r) gb[static_cast<std::size_t>(o)] += GY(r, o);
    }
  });
}

Var reshape(Tape& t, Var x, const Shape& s) {
  const Tensor& xv = t.value(x);
  if (s.size() != xv.size()) throw ShapeError("reshape " + xv.shape().str() + " -> " + s.str());
  Tensor y(s, std::vector<double>(xv.data().begin(), xv.data().end()));
  return t.record(std::move(y), {x}, [x](Tape& tp, const Tensor& gy) {
    auto gx = tp.grad(x).data();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

Tensor softmax(const Tensor& logits) {
  const auto s = logits.shape();
  Tensor p(s);
  for (int n = 0; n < s.n; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < s.c; ++c) m = std::max(m, logits.at(n, c, i, j));
        double z = 0.0;
        for (int c = 0; c < s.c; ++c) z += std::exp(logits.at(n, c, i, j) - m);
        for (int c = 0; c < s.c; ++c) p.at(n, c, i, j) = std::exp(logits.at(n, c, i, j) - m) / z;
      }
  return p;
}

std::vector<std::uint8_t> argmax_classes(const Tensor& logits) {
  const auto s = logits.shape();
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(s.n) * s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        int best = 0;
        for (int c = 1; c < s.c; ++c)
          if (logits.at(n, c, i, j) > logits.at(n, best, i, j)) best = c;
        out.push_back(static_cast<std::uint8_t>(best));
      }
  return out;
}

Var softmax_cross_entropy(Tape& t, Var logits, std::span<const std::uint8_t> classes) {
  const Tensor& lv = t.value(logits);
  const auto s = lv.shape();
  const std::size_t pixels = static_cast<std::size_t>(s.n) * s.plane();
  if (classes.size() != pixels) throw ShapeError("class map does not match logits " + s.str());
  for (auto c : classes)
    if (c >= s.c) throw RangeError("class id outside the logit channels");
  Tensor p = softmax(lv);
  double loss = 0.0;
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j, ++k) {
        // log-sum-exp form for the chosen class
        double m = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < s.c; ++c) m = std::max(m, lv.at(n, c, i, j));
        double z = 0.0;
        for (int c = 0; c < s.c; ++c) z += std::exp(lv.at(n, c, i, j) - m);
        loss += m + std::log(z) - lv.at(n, classes[k], i, j);
      }
  const double scale = 1.0 / static_cast<double>(pixels);
  std::vector<std::uint8_t> cls(classes.begin(), classes.end());
  return t.record(Tensor(Shape{1, 1, 1, 1}, loss * scale), {logits},
                  [logits, p = std::move(p), cls = std::move(cls), scale](Tape& tp, const Tensor& gy) {
                    Tensor& g = tp.grad(logits);
                    const auto s = g.shape();
                    const double up = gy[0] * scale;
                    std::size_t k = 0;
                    for (int n = 0; n < s.n; ++n)
                      for (int i = 0; i < s.h; ++i)
                        for (int j = 0; j < s.w; ++j, ++k)
                          for (int c = 0; c < s.c; ++c)
                            g.at(n, c, i, j) += up * (p.at(n, c, i, j) - (c == cls[k] ? 1.0 : 0.0));
                  });
}

}  // namespace ocpi::nn

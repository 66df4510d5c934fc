#include "delaynet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace delaynet {

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::isnan(v[i]))
      throw numeric_error(std::string(op) + ": NaN at flat index " +
                          std::to_string(i));
}

// dfdx receives (x, y) so cheap derivatives can reuse the forward value.
template <class F, class D>
Tensor unary_op(const char* name, const Tensor& x, F f, D dfdx) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  check_finite(name, out);
  return Tensor::make_node(
      x.shape(), std::move(out), {x.impl()}, [dfdx](TensorImpl& self) {
        TensorImpl& p = *self.parents[0];
        if (p.g.empty()) return;
        for (std::size_t i = 0; i < p.v.size(); ++i)
          p.g[i] += self.g[i] * dfdx(p.v[i], self.v[i]);
      });
}

// dfa/dfb receive (a, b, y).
template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f,
                 DA dfa, DB dfb) {
  const bool sa = a.numel() == 1;
  const bool sb = b.numel() == 1;
  if (!sa && !sb && a.shape() != b.shape())
    throw config_error(std::string(name) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       " (only scalar broadcast is supported)");
  const Shape& out_shape = (sa && !sb) ? b.shape() : a.shape();
  const std::size_t n = static_cast<std::size_t>(std::max(a.numel(), b.numel()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  check_finite(name, out);
  return Tensor::make_node(
      out_shape, std::move(out), {a.impl(), b.impl()},
      [sa, sb, dfa, dfb](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        const bool wa = !pa.g.empty();
        const bool wb = !pb.g.empty();
        for (std::size_t i = 0; i < self.v.size(); ++i) {
          const double x = pa.v[sa ? 0 : i];
          const double y = pb.v[sb ? 0 : i];
          const double gi = self.g[i];
          if (wa) pa.g[sa ? 0 : i] += gi * dfa(x, y, self.v[i]);
          if (wb) pb.g[sb ? 0 : i] += gi * dfb(x, y, self.v[i]);
        }
      });
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank)
    throw config_error(std::string(op) + ": expected rank " +
                       std::to_string(rank) + " tensor, got shape " +
                       shape_str(t.shape()));
}

}  // namespace

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& x) {
  return unary_op(
      "sin", x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_op(
      "cos", x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor leaky_relu(const Tensor& x) {
  return unary_op(
      "leaky_relu", x, [](double v) { return v > 0.0 ? v : 0.01 * v; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.01; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  return binary_op(
      "atan2", y, x, [](double a, double b) { return std::atan2(a, b); },
      [](double a, double b, double) {
        const double d = a * a + b * b;
        return d == 0.0 ? 0.0 : b / d;
      },
      [](double a, double b, double) {
        const double d = a * a + b * b;
        return d == 0.0 ? 0.0 : -a / d;
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw config_error("matmul: inner dimensions disagree, " +
                       shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* crow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return Tensor::make_node(
      {m, n}, std::move(out), {a.impl(), b.impl()},
      [m, k, n](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        if (!pa.g.empty())
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t p = 0; p < k; ++p) {
              const double* grow = self.g.data() + i * n;
              const double* brow = pb.v.data() + p * n;
              double acc = 0.0;
              for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              pa.g[static_cast<std::size_t>(i * k + p)] += acc;
            }
        if (!pb.g.empty())
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t p = 0; p < k; ++p) {
              const double av = pa.v[static_cast<std::size_t>(i * k + p)];
              if (av == 0.0) continue;
              const double* grow = self.g.data() + i * n;
              double* brow = pb.g.data() + p * n;
              for (std::int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
      });
}

Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernels,
                        Padding padding) {
  require_rank("conv1d_depthwise", x, 3);
  require_rank("conv1d_depthwise", kernels, 2);
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), s = x.dim(2);
  const std::int64_t kk = kernels.dim(1);
  if (kernels.dim(0) != ch)
    throw config_error("conv1d_depthwise: kernel rows " +
                       std::to_string(kernels.dim(0)) + " != channels " +
                       std::to_string(ch));
  if (kk < 1) throw config_error("conv1d_depthwise: empty kernel");
  if (kk > 2 * s)
    throw config_error("conv1d_depthwise: kernel length " + std::to_string(kk) +
                       " exceeds twice the signal length " + std::to_string(s));
  const std::int64_t pad_left =
      padding == Padding::same_zero ? (kk - 1) / 2 : kk - 1;
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * s), 0.0);
  const double* px = x.data();
  const double* pk = kernels.data();
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* xrow = px + (b * ch + c) * s;
      const double* krow = pk + c * kk;
      double* orow = out.data() + (b * ch + c) * s;
      for (std::int64_t t = 0; t < s; ++t) {
        const std::int64_t j0 = std::max<std::int64_t>(0, pad_left - t);
        const std::int64_t j1 = std::min(kk, pad_left - t + s);
        double acc = 0.0;
        for (std::int64_t j = j0; j < j1; ++j)
          acc += krow[j] * xrow[t + j - pad_left];
        orow[t] = acc;
      }
    }
  return Tensor::make_node(
      x.shape(), std::move(out), {x.impl(), kernels.impl()},
      [bsz, ch, s, kk, pad_left](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pk = *self.parents[1];
        const bool wx = !px.g.empty();
        const bool wk = !pk.g.empty();
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            const double* xrow = px.v.data() + (b * ch + c) * s;
            const double* krow = pk.v.data() + c * kk;
            const double* grow = self.g.data() + (b * ch + c) * s;
            double* dxrow = wx ? px.g.data() + (b * ch + c) * s : nullptr;
            double* dkrow = wk ? pk.g.data() + c * kk : nullptr;
            for (std::int64_t t = 0; t < s; ++t) {
              const double gv = grow[t];
              if (gv == 0.0) continue;
              const std::int64_t j0 = std::max<std::int64_t>(0, pad_left - t);
              const std::int64_t j1 = std::min(kk, pad_left - t + s);
              for (std::int64_t j = j0; j < j1; ++j) {
                const std::int64_t u = t + j - pad_left;
                if (wx) dxrow[u] += krow[j] * gv;
                if (wk) dkrow[j] += xrow[u] * gv;
              }
            }
          }
      });
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w) {
  require_rank("conv1d_causal", x, 3);
  require_rank("conv1d_causal", w, 3);
  const std::int64_t bsz = x.dim(0), cin = x.dim(1), s = x.dim(2);
  const std::int64_t cout = w.dim(0), kk = w.dim(2);
  if (w.dim(1) != cin)
    throw config_error("conv1d_causal: weight in-channels " +
                       std::to_string(w.dim(1)) + " != input channels " +
                       std::to_string(cin));
  if (kk < 1) throw config_error("conv1d_causal: empty kernel");
  std::vector<double> out(static_cast<std::size_t>(bsz * cout * s), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t o = 0; o < cout; ++o) {
      double* orow = out.data() + (b * cout + o) * s;
      for (std::int64_t i = 0; i < cin; ++i) {
        const double* xrow = px + (b * cin + i) * s;
        const double* wrow = pw + (o * cin + i) * kk;
        for (std::int64_t j = 0; j < kk; ++j) {
          const double wv = wrow[j];
          if (wv == 0.0) continue;
          const std::int64_t off = j - (kk - 1);  // <= 0: past samples only
          for (std::int64_t t = -off; t < s; ++t) orow[t] += wv * xrow[t + off];
        }
      }
    }
  return Tensor::make_node(
      {bsz, cout, s}, std::move(out), {x.impl(), w.impl()},
      [bsz, cin, cout, s, kk](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pw = *self.parents[1];
        const bool wx = !px.g.empty();
        const bool wgw = !pw.g.empty();
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t o = 0; o < cout; ++o) {
            const double* grow = self.g.data() + (b * cout + o) * s;
            for (std::int64_t i = 0; i < cin; ++i) {
              const double* xrow = px.v.data() + (b * cin + i) * s;
              const double* wrow = pw.v.data() + (o * cin + i) * kk;
              double* dxrow = wx ? px.g.data() + (b * cin + i) * s : nullptr;
              double* dwrow = wgw ? pw.g.data() + (o * cin + i) * kk : nullptr;
              for (std::int64_t j = 0; j < kk; ++j) {
                const std::int64_t off = j - (kk - 1);
                if (wx) {
                  const double wv = wrow[j];
                  if (wv != 0.0)
                    for (std::int64_t t = -off; t < s; ++t)
                      dxrow[t + off] += wv * grow[t];
                }
                if (wgw) {
                  double acc = 0.0;
                  for (std::int64_t t = -off; t < s; ++t)
                    acc += grow[t] * xrow[t + off];
                  dwrow[j] += acc;
                }
              }
            }
          }
      });
}

Tensor linear_ct(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("linear_ct", x, 3);
  require_rank("linear_ct", w, 2);
  require_rank("linear_ct", bias, 1);
  const std::int64_t bsz = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::int64_t cout = w.dim(0);
  if (w.dim(1) != cin)
    throw config_error("linear_ct: weight columns " + std::to_string(w.dim(1)) +
                       " != input channels " + std::to_string(cin));
  if (bias.dim(0) != cout)
    throw config_error("linear_ct: bias length " + std::to_string(bias.dim(0)) +
                       " != output channels " + std::to_string(cout));
  std::vector<double> out(static_cast<std::size_t>(bsz * cout * len));
  const double* px = x.data();
  const double* pw = w.data();
  const double* pbv = bias.data();
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t o = 0; o < cout; ++o) {
      double* orow = out.data() + (b * cout + o) * len;
      std::fill(orow, orow + len, pbv[o]);
      for (std::int64_t i = 0; i < cin; ++i) {
        const double wv = pw[o * cin + i];
        if (wv == 0.0) continue;
        const double* xrow = px + (b * cin + i) * len;
        for (std::int64_t t = 0; t < len; ++t) orow[t] += wv * xrow[t];
      }
    }
  return Tensor::make_node(
      {bsz, cout, len}, std::move(out), {x.impl(), w.impl(), bias.impl()},
      [bsz, cin, cout, len](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pw = *self.parents[1];
        TensorImpl& pb = *self.parents[2];
        const bool wx = !px.g.empty();
        const bool ww = !pw.g.empty();
        const bool wb = !pb.g.empty();
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t o = 0; o < cout; ++o) {
            const double* grow = self.g.data() + (b * cout + o) * len;
            if (wb) {
              double acc = 0.0;
              for (std::int64_t t = 0; t < len; ++t) acc += grow[t];
              pb.g[static_cast<std::size_t>(o)] += acc;
            }
            for (std::int64_t i = 0; i < cin; ++i) {
              const double* xrow = px.v.data() + (b * cin + i) * len;
              if (wx) {
                const double wv = pw.v[static_cast<std::size_t>(o * cin + i)];
                if (wv != 0.0) {
                  double* dxrow = px.g.data() + (b * cin + i) * len;
                  for (std::int64_t t = 0; t < len; ++t)
                    dxrow[t] += wv * grow[t];
                }
              }
              if (ww) {
                double acc = 0.0;
                for (std::int64_t t = 0; t < len; ++t) acc += grow[t] * xrow[t];
                pw.g[static_cast<std::size_t>(o * cin + i)] += acc;
              }
            }
          }
      });
}

Tensor mean_all(const Tensor& x) {
  const std::size_t n = x.values().size();
  if (n == 0) throw config_error("mean_all: empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return Tensor::make_node({1}, {acc / static_cast<double>(n)}, {x.impl()},
                           [n](TensorImpl& self) {
                             TensorImpl& p = *self.parents[0];
                             if (p.g.empty()) return;
                             const double gv =
                                 self.g[0] / static_cast<double>(n);
                             for (std::size_t i = 0; i < n; ++i) p.g[i] += gv;
                           });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank("concat_channels", a, 3);
  require_rank("concat_channels", b, 3);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw config_error("concat_channels: incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t bsz = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  std::vector<double> out(static_cast<std::size_t>(bsz * (ca + cb) * len));
  for (std::int64_t i = 0; i < bsz; ++i) {
    std::copy_n(a.data() + i * ca * len, ca * len,
                out.data() + i * (ca + cb) * len);
    std::copy_n(b.data() + i * cb * len, cb * len,
                out.data() + (i * (ca + cb) + ca) * len);
  }
  return Tensor::make_node(
      {bsz, ca + cb, len}, std::move(out), {a.impl(), b.impl()},
      [bsz, ca, cb, len](TensorImpl& self) {
        TensorImpl& pa = *self.parents[0];
        TensorImpl& pb = *self.parents[1];
        for (std::int64_t i = 0; i < bsz; ++i) {
          if (!pa.g.empty()) {
            const double* src = self.g.data() + i * (ca + cb) * len;
            double* dst = pa.g.data() + i * ca * len;
            for (std::int64_t j = 0; j < ca * len; ++j) dst[j] += src[j];
          }
          if (!pb.g.empty()) {
            const double* src = self.g.data() + (i * (ca + cb) + ca) * len;
            double* dst = pb.g.data() + i * cb * len;
            for (std::int64_t j = 0; j < cb * len; ++j) dst[j] += src[j];
          }
        }
      });
}

Tensor repeat_channels(const Tensor& x, int n) {
  require_rank("repeat_channels", x, 3);
  if (n < 1) throw config_error("repeat_channels: repeat count must be >= 1");
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), len = x.dim(2);
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * n * len));
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* src = x.data() + (b * ch + c) * len;
      for (int r = 0; r < n; ++r)
        std::copy_n(src, len, out.data() + ((b * ch + c) * n + r) * len);
    }
  return Tensor::make_node(
      {bsz, ch * n, len}, std::move(out), {x.impl()},
      [bsz, ch, n, len](TensorImpl& self) {
        TensorImpl& p = *self.parents[0];
        if (p.g.empty()) return;
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            double* dst = p.g.data() + (b * ch + c) * len;
            for (int r = 0; r < n; ++r) {
              const double* src = self.g.data() + ((b * ch + c) * n + r) * len;
              for (std::int64_t t = 0; t < len; ++t) dst[t] += src[t];
            }
          }
      });
}

Tensor crop_time(const Tensor& x, std::int64_t keep_last) {
  require_rank("crop_time", x, 3);
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), s = x.dim(2);
  if (keep_last < 1 || keep_last > s)
    throw config_error("crop_time: cannot keep " + std::to_string(keep_last) +
                       " of " + std::to_string(s) + " time steps");
  const std::int64_t drop = s - keep_last;
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * keep_last));
  for (std::int64_t r = 0; r < bsz * ch; ++r)
    std::copy_n(x.data() + r * s + drop, keep_last, out.data() + r * keep_last);
  return Tensor::make_node(
      {bsz, ch, keep_last}, std::move(out), {x.impl()},
      [bsz, ch, s, keep_last, drop](TensorImpl& self) {
        TensorImpl& p = *self.parents[0];
        if (p.g.empty()) return;
        for (std::int64_t r = 0; r < bsz * ch; ++r) {
          const double* src = self.g.data() + r * keep_last;
          double* dst = p.g.data() + r * s + drop;
          for (std::int64_t t = 0; t < keep_last; ++t) dst[t] += src[t];
        }
      });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw config_error("stack_rows: no rows given");
  const std::int64_t k = rows[0].numel();
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k) * rows.size());
  for (const auto& r : rows) {
    require_rank("stack_rows", r, 1);
    if (r.numel() != k)
      throw config_error("stack_rows: row lengths differ (" +
                         std::to_string(r.numel()) + " vs " +
                         std::to_string(k) + ")");
    out.insert(out.end(), r.values().begin(), r.values().end());
    parents.push_back(r.impl());
  }
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  return Tensor::make_node({n, k}, std::move(out), std::move(parents),
                           [n, k](TensorImpl& self) {
                             for (std::int64_t i = 0; i < n; ++i) {
                               TensorImpl& p = *self.parents[static_cast<std::size_t>(i)];
                               if (p.g.empty()) continue;
                               const double* src = self.g.data() + i * k;
                               for (std::int64_t j = 0; j < k; ++j)
                                 p.g[static_cast<std::size_t>(j)] += src[j];
                             }
                           });
}

Tensor concat_all(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw config_error("concat_all: nothing to join");
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::vector<double> out;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.impl());
  }
  const std::int64_t total = static_cast<std::int64_t>(out.size());
  return Tensor::make_node({total}, std::move(out), std::move(parents),
                           [](TensorImpl& self) {
                             std::size_t at = 0;
                             for (auto& p : self.parents) {
                               const std::size_t n = p->v.size();
                               if (!p->g.empty())
                                 for (std::size_t j = 0; j < n; ++j)
                                   p->g[j] += self.g[at + j];
                               at += n;
                             }
                           });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw config_error("reshape: cannot view " + shape_str(x.shape()) +
                       " as " + shape_str(shape));
  return Tensor::make_node(std::move(shape), x.values(), {x.impl()},
                           [](TensorImpl& self) {
                             TensorImpl& p = *self.parents[0];
                             if (p.g.empty()) return;
                             for (std::size_t i = 0; i < p.v.size(); ++i)
                               p.g[i] += self.g[i];
                           });
}

Tensor expand_last(const Tensor& x, std::int64_t s) {
  if (s < 1) throw config_error("expand_last: length must be >= 1");
  const std::int64_t n = x.numel();
  Shape shape = x.shape();
  shape.push_back(s);
  std::vector<double> out(static_cast<std::size_t>(n * s));
  for (std::int64_t i = 0; i < n; ++i)
    std::fill_n(out.data() + i * s, s, x.values()[static_cast<std::size_t>(i)]);
  return Tensor::make_node(std::move(shape), std::move(out), {x.impl()},
                           [n, s](TensorImpl& self) {
                             TensorImpl& p = *self.parents[0];
                             if (p.g.empty()) return;
                             for (std::int64_t i = 0; i < n; ++i) {
                               const double* src = self.g.data() + i * s;
                               double acc = 0.0;
                               for (std::int64_t j = 0; j < s; ++j) acc += src[j];
                               p.g[static_cast<std::size_t>(i)] += acc;
                             }
                           });
}

namespace {

// Shared linear-interpolation kernel for warp_time / interp_table. Values
// outside [0, len-1] read 0; the coordinate derivative is the slope of the
// active segment (right-sided at interior knots, 0 outside and at the ends).
struct LerpSample {
  std::int64_t i0 = 0, i1 = 0;
  double w0 = 0.0, w1 = 0.0;
  bool inside = false;
};

LerpSample lerp_at(double p, std::int64_t len) {
  LerpSample s;
  if (!(p >= 0.0) || p > static_cast<double>(len - 1)) return s;  // NaN -> outside
  const double fl = std::floor(p);
  s.i0 = static_cast<std::int64_t>(fl);
  if (s.i0 > len - 1) s.i0 = len - 1;
  s.i1 = std::min<std::int64_t>(s.i0 + 1, len - 1);
  const double f = p - static_cast<double>(s.i0);
  s.w0 = 1.0 - f;
  s.w1 = f;
  s.inside = true;
  return s;
}

}  // namespace

Tensor warp_time(const Tensor& x, const Tensor& coords) {
  require_rank("warp_time", x, 3);
  require_rank("warp_time", coords, 2);
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), li = x.dim(2);
  const std::int64_t cc = coords.dim(0), lo = coords.dim(1);
  if (cc != ch && cc != 1)
    throw config_error("warp_time: coords rows " + std::to_string(cc) +
                       " must be 1 or match channels " + std::to_string(ch));
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * lo), 0.0);
  const double* pc = coords.data();
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* xrow = x.data() + (b * ch + c) * li;
      const double* crow = pc + (cc == 1 ? 0 : c) * lo;
      double* orow = out.data() + (b * ch + c) * lo;
      for (std::int64_t o = 0; o < lo; ++o) {
        const LerpSample ls = lerp_at(crow[o], li);
        if (ls.inside) orow[o] = ls.w0 * xrow[ls.i0] + ls.w1 * xrow[ls.i1];
      }
    }
  return Tensor::make_node(
      {bsz, ch, lo}, std::move(out), {x.impl(), coords.impl()},
      [bsz, ch, li, cc, lo](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pcrd = *self.parents[1];
        const bool wx = !px.g.empty();
        const bool wc = !pcrd.g.empty();
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            const double* xrow = px.v.data() + (b * ch + c) * li;
            const double* crow = pcrd.v.data() + (cc == 1 ? 0 : c) * lo;
            const double* grow = self.g.data() + (b * ch + c) * lo;
            double* dxrow = wx ? px.g.data() + (b * ch + c) * li : nullptr;
            double* dcrow =
                wc ? pcrd.g.data() + (cc == 1 ? 0 : c) * lo : nullptr;
            for (std::int64_t o = 0; o < lo; ++o) {
              const double gv = grow[o];
              if (gv == 0.0) continue;
              const LerpSample ls = lerp_at(crow[o], li);
              if (!ls.inside) continue;
              if (wx) {
                dxrow[ls.i0] += gv * ls.w0;
                dxrow[ls.i1] += gv * ls.w1;
              }
              if (wc) dcrow[o] += gv * (xrow[ls.i1] - xrow[ls.i0]);
            }
          }
      });
}

Tensor interp_table(std::vector<double> table, const Tensor& coords) {
  if (table.empty()) throw config_error("interp_table: empty table");
  const std::int64_t len = static_cast<std::int64_t>(table.size());
  const auto& cv = coords.values();
  std::vector<double> out(cv.size(), 0.0);
  for (std::size_t i = 0; i < cv.size(); ++i) {
    const LerpSample ls = lerp_at(cv[i], len);
    if (ls.inside)
      out[i] = ls.w0 * table[static_cast<std::size_t>(ls.i0)] +
               ls.w1 * table[static_cast<std::size_t>(ls.i1)];
  }
  return Tensor::make_node(
      coords.shape(), std::move(out), {coords.impl()},
      [table = std::move(table), len](TensorImpl& self) {
        TensorImpl& p = *self.parents[0];
        if (p.g.empty()) return;
        for (std::size_t i = 0; i < p.v.size(); ++i) {
          const double gv = self.g[i];
          if (gv == 0.0) continue;
          const LerpSample ls = lerp_at(p.v[i], len);
          if (!ls.inside) continue;
          p.g[i] += gv * (table[static_cast<std::size_t>(ls.i1)] -
                          table[static_cast<std::size_t>(ls.i0)]);
        }
      });
}

Tensor per_cell_dot(const Tensor& x, const Tensor& kernels) {
  require_rank("per_cell_dot", x, 3);
  require_rank("per_cell_dot", kernels, 3);
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), s = x.dim(2);
  const std::int64_t tt = kernels.dim(1);
  if (kernels.dim(0) != ch || kernels.dim(2) != s)
    throw config_error("per_cell_dot: kernels " + shape_str(kernels.shape()) +
                       " incompatible with input " + shape_str(x.shape()));
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * tt));
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* xrow = x.data() + (b * ch + c) * s;
      double* orow = out.data() + (b * ch + c) * tt;
      for (std::int64_t t = 0; t < tt; ++t) {
        const double* krow = kernels.data() + (c * tt + t) * s;
        double acc = 0.0;
        for (std::int64_t i = 0; i < s; ++i) acc += krow[i] * xrow[i];
        orow[t] = acc;
      }
    }
  return Tensor::make_node(
      {bsz, ch, tt}, std::move(out), {x.impl(), kernels.impl()},
      [bsz, ch, s, tt](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pk = *self.parents[1];
        const bool wx = !px.g.empty();
        const bool wk = !pk.g.empty();
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            const double* xrow = px.v.data() + (b * ch + c) * s;
            const double* grow = self.g.data() + (b * ch + c) * tt;
            double* dxrow = wx ? px.g.data() + (b * ch + c) * s : nullptr;
            for (std::int64_t t = 0; t < tt; ++t) {
              const double gv = grow[t];
              if (gv == 0.0) continue;
              if (wk) {
                double* dkrow = pk.g.data() + (c * tt + t) * s;
                for (std::int64_t i = 0; i < s; ++i) dkrow[i] += gv * xrow[i];
              }
              if (wx) {
                const double* krow = pk.v.data() + (c * tt + t) * s;
                for (std::int64_t i = 0; i < s; ++i) dxrow[i] += gv * krow[i];
              }
            }
          }
      });
}

}  // namespace delaynet

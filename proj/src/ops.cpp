#include "lwta/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lwta/error.hpp"
#include "lwta/parallel.hpp"

namespace lwta {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  const int rank = static_cast<int>(shape.size());
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) throw DimensionError("axis " + std::to_string(axis) + " invalid for rank " +
                                                 std::to_string(rank));
  AxisSplit s{1, shape[ax], 1};
  for (int i = 0; i < ax; ++i) s.outer *= shape[i];
  for (int i = ax + 1; i < rank; ++i) s.inner *= shape[i];
  return s;
}

template <typename F>
Tensor unary(const Tensor& a, F&& value_and_slope) {
  const auto n = a.size();
  std::vector<double> out(n);
  std::vector<double> slope(n);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) value_and_slope(x[i], out[i], slope[i]);
  return record_op(a.shape(), std::move(out), {a},
                   [slope = std::move(slope)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0]) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * slope[i];
                     }
                   });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  parallel_for(m, [&](std::size_t i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  });
  return record_op({m, n}, std::move(out), {a, b},
                   [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     const double* pa = a.data().data();
                     const double* pb = b.data().data();
                     if (auto* ga = gi[0]) {
                       // dA = G * B^T
                       parallel_for(m, [&](std::size_t i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           const double* brow = pb + p * n;
                           for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
                           (*ga)[i * k + p] += acc;
                         }
                       });
                     }
                     if (auto* gb = gi[1]) {
                       // dB = A^T * G
                       parallel_for(k, [&](std::size_t p) {
                         double* dst = gb->data() + p * n;
                         for (std::size_t i = 0; i < m; ++i) {
                           const double av = pa[i * k + p];
                           const double* grow = g.data() + i * n;
                           for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
                         }
                       });
                     }
                   });
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4) throw DimensionError("conv2d: expected NHWC input and hlCF kernel");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t batch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2), channels = x.dim(3);
  const std::size_t kh = w.dim(0), kw = w.dim(1), filters = w.dim(3);
  if (w.dim(2) != channels) {
    throw DimensionError("conv2d: kernel channels " + std::to_string(w.dim(2)) + " != input channels " +
                         std::to_string(channels));
  }
  const std::size_t padded_h = in_h + 2 * padding, padded_w = in_w + 2 * padding;
  if (kh > padded_h || kw > padded_w) throw DimensionError("conv2d: kernel larger than padded input");
  if ((padded_h - kh) % stride != 0 || (padded_w - kw) % stride != 0) {
    throw DimensionError("conv2d: non-integral output size for stride " + std::to_string(stride));
  }
  const std::size_t out_h = (padded_h - kh) / stride + 1, out_w = (padded_w - kw) / stride + 1;

  std::vector<double> out(batch * out_h * out_w * filters, 0.0);
  const double* px = x.data().data();
  const double* pw = w.data().data();
  // Per output entry the sum runs over (kh, kw, c) in that order.
  parallel_for(batch * out_h, [&](std::size_t row) {
    const std::size_t n = row / out_h, oh = row % out_h;
    for (std::size_t ow = 0; ow < out_w; ++ow) {
      double* dst = out.data() + ((n * out_h + oh) * out_w + ow) * filters;
      for (std::size_t i = 0; i < kh; ++i) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
        for (std::size_t j = 0; j < kw; ++j) {
          const std::ptrdiff_t iw =
              static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
          const double* src = px + ((n * in_h + ih) * in_w + iw) * channels;
          const double* wk = pw + (i * kw + j) * channels * filters;
          for (std::size_t c = 0; c < channels; ++c) {
            const double xv = src[c];
            const double* wrow = wk + c * filters;
            for (std::size_t f = 0; f < filters; ++f) dst[f] += xv * wrow[f];
          }
        }
      }
    }
  });

  return record_op(
      {batch, out_h, out_w, filters}, std::move(out), {x, w},
      [=](std::span<const double> g, std::span<std::vector<double>*> gi) {
        const double* px = x.data().data();
        const double* pw = w.data().data();
        auto visit = [&](auto&& fn) {
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t oh = 0; oh < out_h; ++oh)
              for (std::size_t ow = 0; ow < out_w; ++ow) {
                const double* go = g.data() + ((n * out_h + oh) * out_w + ow) * filters;
                for (std::size_t i = 0; i < kh; ++i) {
                  const std::ptrdiff_t ih =
                      static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
                  for (std::size_t j = 0; j < kw; ++j) {
                    const std::ptrdiff_t iw =
                        static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
                    const std::size_t xoff = ((n * in_h + ih) * in_w + iw) * channels;
                    const std::size_t woff = (i * kw + j) * channels * filters;
                    fn(go, xoff, woff);
                  }
                }
              }
        };
        if (auto* gx = gi[0]) {
          visit([&](const double* go, std::size_t xoff, std::size_t woff) {
            for (std::size_t c = 0; c < channels; ++c) {
              double acc = 0.0;
              const double* wrow = pw + woff + c * filters;
              for (std::size_t f = 0; f < filters; ++f) acc += go[f] * wrow[f];
              (*gx)[xoff + c] += acc;
            }
          });
        }
        if (auto* gw = gi[1]) {
          visit([&](const double* go, std::size_t xoff, std::size_t woff) {
            for (std::size_t c = 0; c < channels; ++c) {
              const double xv = px[xoff + c];
              double* dst = gw->data() + woff + c * filters;
              for (std::size_t f = 0; f < filters; ++f) dst[f] += xv * go[f];
            }
          });
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return record_op(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, std::span<std::vector<double>*> gi) {
    for (auto* buf : gi) {
      if (!buf) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record_op(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, std::span<std::vector<double>*> gi) {
    if (auto* ga = gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (auto* gb = gi[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return record_op(a.shape(), std::move(out), {a, b},
                   [a, b](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
                     if (auto* gb = gi[1])
                       for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
                   });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return record_op(a.shape(), std::move(out), {a},
                   [factor](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
                   });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + value;
  return record_op(a.shape(), std::move(out), {a}, [](std::span<const double> g, std::span<std::vector<double>*> gi) {
    if (auto* ga = gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.rank() == 0 || bias.rank() != 1 || bias.dim(0) != a.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match last axis of " +
                         shape_to_string(a.shape()));
  }
  const std::size_t width = bias.size();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + bias[i % width];
  return record_op(a.shape(), std::move(out), {a, bias},
                   [width](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                     if (auto* gb = gi[1])
                       for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % width] += g[i];
                   });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x, double& y, double& dy) {
    y = std::exp(x);
    dy = y;
  });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(a, [](double x, double& y, double& dy) {
    y = std::log(x);
    dy = 1.0 / x;
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, [lo, hi](double x, double& y, double& dy) {
    y = std::clamp(x, lo, hi);
    dy = (x > lo && x < hi) ? 1.0 : 0.0;
  });
}

Tensor clamp(const Tensor& a, const Tensor& lo, const Tensor& hi) {
  require_same_shape(a, lo, "clamp");
  require_same_shape(a, hi, "clamp");
  const auto n = a.size();
  std::vector<double> out(n), slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::min(std::max(a[i], lo[i]), hi[i]);
    slope[i] = (a[i] > lo[i] && a[i] < hi[i]) ? 1.0 : 0.0;
  }
  return record_op(a.shape(), std::move(out), {a},
                   [slope = std::move(slope)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * slope[i];
                   });
}

Tensor sign(const Tensor& a) {
  return unary(a, [](double x, double& y, double& dy) {
    y = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    dy = 0.0;
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x, double& y, double& dy) {
    y = x > 0.0 ? x : 0.0;
    dy = x > 0.0 ? 1.0 : 0.0;
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  const auto n = a.size();
  return record_op({}, {total}, {a}, [n](std::span<const double> g, std::span<std::vector<double>*> gi) {
    if (auto* ga = gi[0])
      for (std::size_t i = 0; i < n; ++i) (*ga)[i] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

std::vector<std::size_t> argmax(const Tensor& a) {
  if (a.rank() == 0) return {0};
  const std::size_t width = a.shape().back();
  if (width == 0) throw DimensionError("argmax over empty axis");
  const std::size_t rows = a.size() / width;
  std::vector<std::size_t> idx(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t u = 1; u < width; ++u) {
      if (a[r * width + u] > a[r * width + best]) best = u;
    }
    idx[r] = best;
  }
  return idx;
}

Tensor softmax(const Tensor& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = a[base];
      for (std::size_t u = 1; u < s.extent; ++u) mx = std::max(mx, a[base + u * s.inner]);
      double z = 0.0;
      for (std::size_t u = 0; u < s.extent; ++u) {
        const double e = std::exp(a[base + u * s.inner] - mx);
        out[base + u * s.inner] = e;
        z += e;
      }
      for (std::size_t u = 0; u < s.extent; ++u) out[base + u * s.inner] /= z;
    }
  }
  std::vector<double> probs = out;
  return record_op(a.shape(), std::move(out), {a},
                   [s, probs = std::move(probs)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     auto* ga = gi[0];
                     if (!ga) return;
                     for (std::size_t o = 0; o < s.outer; ++o) {
                       for (std::size_t in = 0; in < s.inner; ++in) {
                         const std::size_t base = o * s.extent * s.inner + in;
                         double dot = 0.0;
                         for (std::size_t u = 0; u < s.extent; ++u) {
                           const auto k = base + u * s.inner;
                           dot += g[k] * probs[k];
                         }
                         for (std::size_t u = 0; u < s.extent; ++u) {
                           const auto k = base + u * s.inner;
                           (*ga)[k] += probs[k] * (g[k] - dot);
                         }
                       }
                     }
                   });
}

Tensor log_softmax(const Tensor& a, int axis) {
  const auto s = split_axis(a.shape(), axis);
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = a[base];
      for (std::size_t u = 1; u < s.extent; ++u) mx = std::max(mx, a[base + u * s.inner]);
      double z = 0.0;
      for (std::size_t u = 0; u < s.extent; ++u) z += std::exp(a[base + u * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t u = 0; u < s.extent; ++u) out[base + u * s.inner] = a[base + u * s.inner] - lz;
    }
  }
  std::vector<double> logp = out;
  return record_op(a.shape(), std::move(out), {a},
                   [s, logp = std::move(logp)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     auto* ga = gi[0];
                     if (!ga) return;
                     for (std::size_t o = 0; o < s.outer; ++o) {
                       for (std::size_t in = 0; in < s.inner; ++in) {
                         const std::size_t base = o * s.extent * s.inner + in;
                         double total = 0.0;
                         for (std::size_t u = 0; u < s.extent; ++u) total += g[base + u * s.inner];
                         for (std::size_t u = 0; u < s.extent; ++u) {
                           const auto k = base + u * s.inner;
                           (*ga)[k] += g[k] - std::exp(logp[k]) * total;
                         }
                       }
                     }
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return record_op(std::move(shape), std::move(out), {a}, [](std::span<const double> g, std::span<std::vector<double>*> gi) {
    if (auto* ga = gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const auto rank = a.rank();
  if (axes.size() != rank) throw DimensionError("permute: axis count does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw DimensionError("permute: invalid axis list");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.dim(axes[i]);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);

  // source offset for each output position
  const auto n = a.size();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += counter[i] * in_strides[axes[i]];
    source[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[source[i]];
  return record_op(std::move(out_shape), std::move(out), {a},
                   [source = std::move(source)](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t i = 0; i < g.size(); ++i) (*ga)[source[i]] += g[i];
                   });
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& index) {
  if (a.rank() == 0) throw DimensionError("pick: scalar input");
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.size() / width;
  if (index.size() != rows) throw DimensionError("pick: index count does not match leading positions");
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= width) throw ContractError("pick: index " + std::to_string(index[r]) + " out of range");
    out[r] = a[r * width + index[r]];
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  return record_op(std::move(out_shape), std::move(out), {a},
                   [index, width](std::span<const double> g, std::span<std::vector<double>*> gi) {
                     if (auto* ga = gi[0])
                       for (std::size_t r = 0; r < g.size(); ++r) (*ga)[r * width + index[r]] += g[r];
                   });
}

}  // namespace lwta

#include "gccpm/kernels.hpp"
#include "gccpm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gccpm {

std::pair<int, int> PoolSpec::output_size(int in_h, int in_w) const
{
    auto extent = [](int in, int k, int s, int p) {
        const int span = in + 2 * p - k;
        return span < 0 ? 0 : span / s + 1;
    };
    return {extent(in_h, kernel.first, stride.first, padding.first),
            extent(in_w, kernel.second, stride.second, padding.second)};
}

namespace {

void require_rank4(const Shape& s, const char* op)
{
    if (s.size() != 4)
        fail(ErrorKind::shape, std::string(op) + ": expected N x C x H x W, got " + shape_string(s));
}

void require_same_shape(const Shape& a, const Shape& b, const char* op)
{
    if (a != b)
        fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

} // namespace

template <class T>
basic_tensor<T> pool2d(const basic_tensor<T>& input, const PoolSpec& spec)
{
    require_rank4(input.shape(), "pool2d");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto [kh, kw] = spec.kernel;
    const auto [sh, sw] = spec.stride;
    const auto [ph, pw] = spec.padding;
    if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 || ph < 0 || pw < 0)
        fail(ErrorKind::config, "pool2d: kernel and stride must be positive, padding non-negative");
    if (kh > h + 2 * ph || kw > w + 2 * pw)
        fail(ErrorKind::shape, "pool2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                   " larger than padded input " + shape_string(input.shape()));
    if (ph >= kh || pw >= kw)
        fail(ErrorKind::config, "pool2d: padding must be smaller than the kernel");
    const auto [ho, wo] = spec.output_size(h, w);

    basic_tensor<T> out(Shape{n, c, ho, wo});
    const T* x = input.data().data();
    T* y = out.mutable_data().data();
    const std::size_t planes = static_cast<std::size_t>(n) * c;
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
    std::vector<int> argmax;
    if (spec.kind == PoolKind::max)
        argmax.resize(planes * out_plane);
    const T inv_area = T(1) / static_cast<T>(kh * kw);

    for (std::size_t pl = 0; pl < planes; ++pl) {
        const T* xp = x + pl * in_plane;
        T* yp = y + pl * out_plane;
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                const int y0 = i * sh - ph, x0 = j * sw - pw;
                if (spec.kind == PoolKind::avg) {
                    T s = T(0);
                    for (int u = std::max(0, y0); u < std::min(h, y0 + kh); ++u)
                        for (int v = std::max(0, x0); v < std::min(w, x0 + kw); ++v)
                            s += xp[static_cast<std::size_t>(u) * w + v];
                    yp[static_cast<std::size_t>(i) * wo + j] = s * inv_area;
                } else {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_idx = -1;
                    for (int u = std::max(0, y0); u < std::min(h, y0 + kh); ++u)
                        for (int v = std::max(0, x0); v < std::min(w, x0 + kw); ++v) {
                            const int idx = u * w + v;
                            if (best_idx < 0 || xp[idx] > best) {
                                best = xp[idx];
                                best_idx = idx;
                            }
                        }
                    yp[static_cast<std::size_t>(i) * wo + j] = best;
                    argmax[pl * out_plane + static_cast<std::size_t>(i) * wo + j] = best_idx;
                }
            }
        }
    }

    if (detail::needs_grad<T>({&input})) {
        detail::attach<T>(out, "pool2d", {input},
                          [=, argmax = std::move(argmax)](std::span<const T> gout, std::span<T* const> gin) {
                              T* gx = gin[0];
                              for (std::size_t pl = 0; pl < planes; ++pl) {
                                  const T* gp = gout.data() + pl * out_plane;
                                  T* gxp = gx + pl * in_plane;
                                  for (int i = 0; i < ho; ++i)
                                      for (int j = 0; j < wo; ++j) {
                                          const std::size_t oi = static_cast<std::size_t>(i) * wo + j;
                                          if (spec.kind == PoolKind::max) {
                                              gxp[argmax[pl * out_plane + oi]] += gp[oi];
                                              continue;
                                          }
                                          const int y0 = i * sh - ph, x0 = j * sw - pw;
                                          const T share = gp[oi] * inv_area;
                                          for (int u = std::max(0, y0); u < std::min(h, y0 + kh); ++u)
                                              for (int v = std::max(0, x0); v < std::min(w, x0 + kw); ++v)
                                                  gxp[static_cast<std::size_t>(u) * w + v] += share;
                                      }
                              }
                          });
    }
    return out;
}

namespace {

struct LerpTap {
    int i0, i1;
    double frac;
};

std::vector<LerpTap> bilinear_taps(int in, int factor)
{
    std::vector<LerpTap> taps(static_cast<std::size_t>(in) * factor);
    for (int d = 0; d < in * factor; ++d) {
        double src = (d + 0.5) / factor - 0.5;
        if (src < 0.0)
            src = 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1)
            i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        taps[d] = {i0, i1, src - i0};
    }
    return taps;
}

} // namespace

template <class T>
basic_tensor<T> upsample(const basic_tensor<T>& input, int factor, UpsampleMode mode)
{
    require_rank4(input.shape(), "upsample");
    if (factor < 1)
        fail(ErrorKind::config, "upsample: factor must be >= 1");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int ho = h * factor, wo = w * factor;
    basic_tensor<T> out(Shape{n, c, ho, wo});
    const std::size_t planes = static_cast<std::size_t>(n) * c;
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
    const T* x = input.data().data();
    T* y = out.mutable_data().data();

    const auto ty = bilinear_taps(h, factor);
    const auto tx = bilinear_taps(w, factor);
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const T* xp = x + pl * in_plane;
        T* yp = y + pl * out_plane;
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
                T v;
                if (mode == UpsampleMode::nearest) {
                    v = xp[static_cast<std::size_t>(i / factor) * w + j / factor];
                } else {
                    const auto& a = ty[i];
                    const auto& b = tx[j];
                    const T fy = static_cast<T>(a.frac), fx = static_cast<T>(b.frac);
                    const T top = xp[a.i0 * w + b.i0] * (T(1) - fx) + xp[a.i0 * w + b.i1] * fx;
                    const T bot = xp[a.i1 * w + b.i0] * (T(1) - fx) + xp[a.i1 * w + b.i1] * fx;
                    v = top * (T(1) - fy) + bot * fy;
                }
                yp[static_cast<std::size_t>(i) * wo + j] = v;
            }
    }

    if (detail::needs_grad<T>({&input})) {
        detail::attach<T>(out, "upsample", {input}, [=](std::span<const T> gout, std::span<T* const> gin) {
            T* gx = gin[0];
            for (std::size_t pl = 0; pl < planes; ++pl) {
                const T* gp = gout.data() + pl * out_plane;
                T* gxp = gx + pl * in_plane;
                for (int i = 0; i < ho; ++i)
                    for (int j = 0; j < wo; ++j) {
                        const T g = gp[static_cast<std::size_t>(i) * wo + j];
                        if (mode == UpsampleMode::nearest) {
                            gxp[static_cast<std::size_t>(i / factor) * w + j / factor] += g;
                            continue;
                        }
                        const auto& a = ty[i];
                        const auto& b = tx[j];
                        const T fy = static_cast<T>(a.frac), fx = static_cast<T>(b.frac);
                        gxp[a.i0 * w + b.i0] += g * (T(1) - fy) * (T(1) - fx);
                        gxp[a.i0 * w + b.i1] += g * (T(1) - fy) * fx;
                        gxp[a.i1 * w + b.i0] += g * fy * (T(1) - fx);
                        gxp[a.i1 * w + b.i1] += g * fy * fx;
                    }
            }
        });
    }
    return out;
}

template <class T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& tensors, int axis)
{
    if (tensors.empty())
        fail(ErrorKind::shape, "concat: empty tensor list");
    const Shape& first = tensors.front().shape();
    const int rank = static_cast<int>(first.size());
    if (axis < 0)
        axis += rank;
    if (axis < 0 || axis >= rank)
        fail(ErrorKind::shape, "concat: axis out of range for rank " + std::to_string(rank));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& t : tensors) {
        if (static_cast<int>(t.rank()) != rank)
            fail(ErrorKind::shape, "concat: rank mismatch");
        for (int d = 0; d < rank; ++d)
            if (d != axis && t.dim(d) != first[d])
                fail(ErrorKind::shape, "concat: mismatched extent on axis " + std::to_string(d) + ": " +
                                           shape_string(t.shape()) + " vs " + shape_string(first));
        out_shape[axis] += t.dim(axis);
    }
    if (tensors.size() == 1)
        return tensors.front();

    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d)
        outer *= first[d];
    for (int d = axis + 1; d < rank; ++d)
        inner *= first[d];
    basic_tensor<T> out(out_shape);
    T* y = out.mutable_data().data();
    const std::size_t out_chunk = static_cast<std::size_t>(out_shape[axis]) * inner;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> chunks;
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        const std::size_t chunk = static_cast<std::size_t>(t.dim(axis)) * inner;
        const T* x = t.data().data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x + o * chunk, chunk, y + o * out_chunk + offset);
        offsets.push_back(offset);
        chunks.push_back(chunk);
        offset += chunk;
    }

    bool any = false;
    for (const auto& t : tensors)
        any = any || detail::needs_grad<T>({&t});
    if (any) {
        detail::attach<T>(out, "concat", tensors, [=](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t k = 0; k < gin.size(); ++k) {
                if (gin[k] == nullptr)
                    continue;
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* src = gout.data() + o * out_chunk + offsets[k];
                    T* dst = gin[k] + o * chunks[k];
                    for (std::size_t i = 0; i < chunks[k]; ++i)
                        dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

template <class T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "add");
    basic_tensor<T> out(a.shape());
    const auto& k = kernels::active<T>();
    k.add(a.data().data(), b.data().data(), out.mutable_data().data(), a.numel());
    if (detail::needs_grad<T>({&a, &b})) {
        detail::attach<T>(out, "add", {a, b}, [](std::span<const T> gout, std::span<T* const> gin) {
            const auto& kk = kernels::active<T>();
            for (T* g : gin)
                if (g != nullptr)
                    kk.accumulate(g, gout.data(), gout.size());
        });
    }
    return out;
}

template <class T>
basic_tensor<T> sub(const basic_tensor<T>& a, const basic_tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "sub");
    basic_tensor<T> out(a.shape());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = a.data()[i] - b.data()[i];
    if (detail::needs_grad<T>({&a, &b})) {
        detail::attach<T>(out, "sub", {a, b}, [](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t i = 0; i < gout.size(); ++i) {
                if (gin[0] != nullptr)
                    gin[0][i] += gout[i];
                if (gin[1] != nullptr)
                    gin[1][i] -= gout[i];
            }
        });
    }
    return out;
}

template <class T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "mul");
    basic_tensor<T> out(a.shape());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = a.data()[i] * b.data()[i];
    if (detail::needs_grad<T>({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        detail::attach<T>(out, "mul", {a, b}, [ai, bi](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t i = 0; i < gout.size(); ++i) {
                if (gin[0] != nullptr)
                    gin[0][i] += gout[i] * bi->data[i];
                if (gin[1] != nullptr)
                    gin[1][i] += gout[i] * ai->data[i];
            }
        });
    }
    return out;
}

template <class T>
basic_tensor<T> scale(const basic_tensor<T>& a, T factor)
{
    basic_tensor<T> out(a.shape());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = a.data()[i] * factor;
    if (detail::needs_grad<T>({&a})) {
        detail::attach<T>(out, "scale", {a}, [factor](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t i = 0; i < gout.size(); ++i)
                gin[0][i] += gout[i] * factor;
        });
    }
    return out;
}

template <class T>
basic_tensor<T> relu(const basic_tensor<T>& x)
{
    basic_tensor<T> out(x.shape());
    kernels::active<T>().relu(x.data().data(), out.mutable_data().data(), x.numel());
    if (detail::needs_grad<T>({&x})) {
        auto xi = x.impl();
        detail::attach<T>(out, "relu", {x}, [xi](std::span<const T> gout, std::span<T* const> gin) {
            kernels::active<T>().relu_backward(xi->data.data(), gout.data(), gin[0], gout.size());
        });
    }
    return out;
}

template <class T>
basic_tensor<T> sum(const basic_tensor<T>& x)
{
    T s = T(0);
    for (T v : x.data())
        s += v;
    auto out = basic_tensor<T>::scalar(s);
    if (detail::needs_grad<T>({&x})) {
        const std::size_t n = x.numel();
        detail::attach<T>(out, "sum", {x}, [n](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t i = 0; i < n; ++i)
                gin[0][i] += gout[0];
        });
    }
    return out;
}

template <class T>
basic_tensor<T> weighted_squared_error(const basic_tensor<T>& pred, const basic_tensor<T>& target,
                                       const std::optional<basic_tensor<T>>& weights)
{
    require_rank4(pred.shape(), "weighted_squared_error");
    require_same_shape(pred.shape(), target.shape(), "weighted_squared_error");
    const int n = pred.dim(0), k = pred.dim(1);
    if (weights && weights->shape() != Shape{n, k})
        fail(ErrorKind::shape, "weighted_squared_error: weights must be N x K = " + shape_string(Shape{n, k}) +
                                   ", got " + shape_string(weights->shape()));
    const std::size_t plane = static_cast<std::size_t>(pred.dim(2)) * pred.dim(3);
    const T norm = T(1) / (static_cast<T>(n) * static_cast<T>(k));
    std::vector<T> wv(static_cast<std::size_t>(n) * k, T(1));
    if (weights)
        std::copy(weights->data().begin(), weights->data().end(), wv.begin());

    const T* p = pred.data().data();
    const T* t = target.data().data();
    T total = T(0);
    for (std::size_t m = 0; m < wv.size(); ++m) {
        if (wv[m] == T(0))
            continue;
        T s = T(0);
        for (std::size_t i = 0; i < plane; ++i) {
            const T d = t[m * plane + i] - p[m * plane + i];
            s += d * d;
        }
        total += wv[m] * s;
    }
    auto out = basic_tensor<T>::scalar(total * norm);
    if (detail::needs_grad<T>({&pred})) {
        auto pi = pred.impl();
        auto ti = target.impl();
        detail::attach<T>(out, "weighted_squared_error", {pred},
                          [=, wv = std::move(wv)](std::span<const T> gout, std::span<T* const> gin) {
                              const T scale_factor = T(2) * norm * gout[0];
                              for (std::size_t m = 0; m < wv.size(); ++m) {
                                  if (wv[m] == T(0))
                                      continue;
                                  const T c = scale_factor * wv[m];
                                  for (std::size_t i = 0; i < plane; ++i) {
                                      const std::size_t idx = m * plane + i;
                                      gin[0][idx] += c * (pi->data[idx] - ti->data[idx]);
                                  }
                              }
                          });
    }
    return out;
}

template <class T>
basic_tensor<T> flip_horizontal(const basic_tensor<T>& x)
{
    const int w = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / w;
    basic_tensor<T> out(x.shape());
    auto y = out.mutable_data();
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < w; ++j)
            y[r * w + j] = x.data()[r * w + (w - 1 - j)];
    if (detail::needs_grad<T>({&x})) {
        detail::attach<T>(out, "flip_horizontal", {x}, [rows, w](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t r = 0; r < rows; ++r)
                for (int j = 0; j < w; ++j)
                    gin[0][r * w + (w - 1 - j)] += gout[r * w + j];
        });
    }
    return out;
}

template <class T>
basic_tensor<T> permute_channels(const basic_tensor<T>& x, const std::vector<int>& order)
{
    if (x.rank() < 2)
        fail(ErrorKind::shape, "permute_channels: rank must be >= 2");
    const int c = x.dim(1);
    if (static_cast<int>(order.size()) != c)
        fail(ErrorKind::shape, "permute_channels: order has " + std::to_string(order.size()) + " entries for " +
                                   std::to_string(c) + " channels");
    for (int o : order)
        if (o < 0 || o >= c)
            fail(ErrorKind::shape, "permute_channels: channel index out of range");
    const std::size_t plane = x.numel() / (static_cast<std::size_t>(x.dim(0)) * c);
    const int n = x.dim(0);
    basic_tensor<T> out(x.shape());
    auto y = out.mutable_data();
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < c; ++i)
            std::copy_n(x.data().data() + (static_cast<std::size_t>(b) * c + order[i]) * plane, plane,
                        y.data() + (static_cast<std::size_t>(b) * c + i) * plane);
    if (detail::needs_grad<T>({&x})) {
        detail::attach<T>(out, "permute_channels", {x}, [=](std::span<const T> gout, std::span<T* const> gin) {
            for (int b = 0; b < n; ++b)
                for (int i = 0; i < c; ++i) {
                    const T* src = gout.data() + (static_cast<std::size_t>(b) * c + i) * plane;
                    T* dst = gin[0] + (static_cast<std::size_t>(b) * c + order[i]) * plane;
                    for (std::size_t k = 0; k < plane; ++k)
                        dst[k] += src[k];
                }
        });
    }
    return out;
}

template <class T>
basic_tensor<T> batch_item(const basic_tensor<T>& x, int n)
{
    if (n < 0 || n >= x.dim(0))
        fail(ErrorKind::shape, "batch_item: index out of range");
    Shape s = x.shape();
    s[0] = 1;
    const std::size_t item = x.numel() / x.dim(0);
    std::vector<T> values(x.data().begin() + static_cast<std::ptrdiff_t>(item * n),
                          x.data().begin() + static_cast<std::ptrdiff_t>(item * (n + 1)));
    return basic_tensor<T>(std::move(s), std::move(values));
}

#define GCCPM_INSTANTIATE_OPS(T)                                                                                 \
    template basic_tensor<T> pool2d<T>(const basic_tensor<T>&, const PoolSpec&);                                 \
    template basic_tensor<T> upsample<T>(const basic_tensor<T>&, int, UpsampleMode);                             \
    template basic_tensor<T> concat<T>(const std::vector<basic_tensor<T>>&, int);                                \
    template basic_tensor<T> add<T>(const basic_tensor<T>&, const basic_tensor<T>&);                             \
    template basic_tensor<T> sub<T>(const basic_tensor<T>&, const basic_tensor<T>&);                             \
    template basic_tensor<T> mul<T>(const basic_tensor<T>&, const basic_tensor<T>&);                             \
    template basic_tensor<T> scale<T>(const basic_tensor<T>&, T);                                                \
    template basic_tensor<T> relu<T>(const basic_tensor<T>&);                                                    \
    template basic_tensor<T> sum<T>(const basic_tensor<T>&);                                                     \
    template basic_tensor<T> weighted_squared_error<T>(const basic_tensor<T>&, const basic_tensor<T>&,           \
                                                       const std::optional<basic_tensor<T>>&);                   \
    template basic_tensor<T> flip_horizontal<T>(const basic_tensor<T>&);                                         \
    template basic_tensor<T> permute_channels<T>(const basic_tensor<T>&, const std::vector<int>&);               \
    template basic_tensor<T> batch_item<T>(const basic_tensor<T>&, int);

GCCPM_INSTANTIATE_OPS(float)
GCCPM_INSTANTIATE_OPS(double)

} // namespace gccpm

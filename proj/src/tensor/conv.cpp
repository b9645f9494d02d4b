#include "gccpm/kernels.hpp"
#include "gccpm/ops.hpp"

#include <algorithm>
#include <cstring>

namespace gccpm {

std::pair<int, int> ConvSpec::same_padding(std::pair<int, int> kernel, int dilation)
{
    return {dilation * (kernel.first - 1) / 2, dilation * (kernel.second - 1) / 2};
}

void ConvSpec::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorKind::config, "invalid ConvSpec: " + what); };
    if (in_channels <= 0 || out_channels <= 0)
        bad("channel counts must be positive");
    if (groups <= 0)
        bad("groups must be positive");
    if (in_channels % groups != 0 || out_channels % groups != 0)
        bad("in_channels and out_channels must be divisible by groups");
    if (kernel.first <= 0 || kernel.second <= 0)
        bad("kernel extents must be positive");
    if (stride.first <= 0 || stride.second <= 0)
        bad("stride must be positive");
    if (dilation < 1)
        bad("dilation must be >= 1");
    if (padding.first < 0 || padding.second < 0)
        bad("padding must be non-negative");
}

Shape ConvSpec::weight_shape() const
{
    return {out_channels, in_channels / groups, kernel.first, kernel.second};
}

std::pair<int, int> ConvSpec::output_size(int in_h, int in_w) const
{
    auto extent = [&](int in, int k, int s, int p) {
        const int span = in + 2 * p - dilation * (k - 1) - 1;
        if (span < 0)
            return 0;
        return span / s + 1;
    };
    return {extent(in_h, kernel.first, stride.first, padding.first),
            extent(in_w, kernel.second, stride.second, padding.second)};
}

namespace {

struct ConvGeometry {
    int n, cin, h, w;
    int cout, ho, wo;
    int kh, kw, sh, sw, ph, pw, r, groups;
    int cin_g() const { return cin / groups; }
    int cout_g() const { return cout / groups; }
    int col_rows() const { return cin_g() * kh * kw; }
    int out_pixels() const { return ho * wo; }
    bool pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0; }
    bool depthwise() const { return groups == cin && groups == cout; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col)
{
    const int cols = g.out_pixels();
    for (int c = 0; c < g.cin_g(); ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.kh; ++u) {
            for (int v = 0; v < g.kw; ++v) {
                T* row = col + static_cast<std::size_t>((c * g.kh + u) * g.kw + v) * cols;
                for (int i = 0; i < g.ho; ++i) {
                    const int y = i * g.sh - g.ph + g.r * u;
                    T* dst = row + static_cast<std::size_t>(i) * g.wo;
                    if (y < 0 || y >= g.h) {
                        std::fill(dst, dst + g.wo, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(y) * g.w;
                    for (int j = 0; j < g.wo; ++j) {
                        const int xx = j * g.sw - g.pw + g.r * v;
                        dst[j] = (xx >= 0 && xx < g.w) ? src[xx] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* col, const ConvGeometry& g, T* gx)
{
    const int cols = g.out_pixels();
    for (int c = 0; c < g.cin_g(); ++c) {
        T* gc = gx + static_cast<std::size_t>(c) * g.h * g.w;
        for (int u = 0; u < g.kh; ++u) {
            for (int v = 0; v < g.kw; ++v) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + u) * g.kw + v) * cols;
                for (int i = 0; i < g.ho; ++i) {
                    const int y = i * g.sh - g.ph + g.r * u;
                    if (y < 0 || y >= g.h)
                        continue;
                    const T* src = row + static_cast<std::size_t>(i) * g.wo;
                    T* dst = gc + static_cast<std::size_t>(y) * g.w;
                    for (int j = 0; j < g.wo; ++j) {
                        const int xx = j * g.sw - g.pw + g.r * v;
                        if (xx >= 0 && xx < g.w)
                            dst[xx] += src[j];
                    }
                }
            }
        }
    }
}

template <class T>
void depthwise_forward(const T* x, const T* w, const T* b, const ConvGeometry& g, T* y)
{
    for (int n = 0; n < g.n; ++n) {
        for (int c = 0; c < g.cin; ++c) {
            const T* xc = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
            const T* wc = w + static_cast<std::size_t>(c) * g.kh * g.kw;
            T* yc = y + (static_cast<std::size_t>(n) * g.cout + c) * g.ho * g.wo;
            const T bias = b != nullptr ? b[c] : T(0);
            for (int i = 0; i < g.ho; ++i) {
                for (int j = 0; j < g.wo; ++j) {
                    T acc = T(0);
                    for (int u = 0; u < g.kh; ++u) {
                        const int yy = i * g.sh - g.ph + g.r * u;
                        if (yy < 0 || yy >= g.h)
                            continue;
                        for (int v = 0; v < g.kw; ++v) {
                            const int xx = j * g.sw - g.pw + g.r * v;
                            if (xx >= 0 && xx < g.w)
                                acc += xc[static_cast<std::size_t>(yy) * g.w + xx] * wc[u * g.kw + v];
                        }
                    }
                    yc[static_cast<std::size_t>(i) * g.wo + j] = acc + bias;
                }
            }
        }
    }
}

template <class T>
void depthwise_backward(const T* x, const T* w, const T* gy, const ConvGeometry& g, T* gx, T* gw)
{
    for (int n = 0; n < g.n; ++n) {
        for (int c = 0; c < g.cin; ++c) {
            const T* xc = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
            const T* wc = w + static_cast<std::size_t>(c) * g.kh * g.kw;
            const T* gyc = gy + (static_cast<std::size_t>(n) * g.cout + c) * g.ho * g.wo;
            T* gxc = gx != nullptr ? gx + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w : nullptr;
            T* gwc = gw != nullptr ? gw + static_cast<std::size_t>(c) * g.kh * g.kw : nullptr;
            for (int i = 0; i < g.ho; ++i) {
                for (int j = 0; j < g.wo; ++j) {
                    const T go = gyc[static_cast<std::size_t>(i) * g.wo + j];
                    for (int u = 0; u < g.kh; ++u) {
                        const int yy = i * g.sh - g.ph + g.r * u;
                        if (yy < 0 || yy >= g.h)
                            continue;
                        for (int v = 0; v < g.kw; ++v) {
                            const int xx = j * g.sw - g.pw + g.r * v;
                            if (xx < 0 || xx >= g.w)
                                continue;
                            const std::size_t xi = static_cast<std::size_t>(yy) * g.w + xx;
                            if (gxc != nullptr)
                                gxc[xi] += go * wc[u * g.kw + v];
                            if (gwc != nullptr)
                                gwc[u * g.kw + v] += go * xc[xi];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

template <class T>
basic_tensor<T> conv2d(const basic_tensor<T>& input, const basic_tensor<T>& weights,
                       const std::optional<basic_tensor<T>>& bias, const ConvSpec& spec)
{
    spec.validate();
    if (input.rank() != 4)
        fail(ErrorKind::shape, "conv2d: input must be N x C x H x W, got " + shape_string(input.shape()));
    if (input.dim(1) != spec.in_channels)
        fail(ErrorKind::shape, "conv2d: input has " + std::to_string(input.dim(1)) + " channels, spec expects " +
                                   std::to_string(spec.in_channels));
    if (weights.shape() != spec.weight_shape())
        fail(ErrorKind::shape, "conv2d: weights " + shape_string(weights.shape()) + " do not match expected " +
                                   shape_string(spec.weight_shape()));
    if (spec.has_bias != bias.has_value())
        fail(ErrorKind::shape, "conv2d: bias presence does not match spec.has_bias");
    if (bias && bias->shape() != Shape{spec.out_channels})
        fail(ErrorKind::shape, "conv2d: bias must have shape [" + std::to_string(spec.out_channels) + "]");

    ConvGeometry g{};
    g.n = input.dim(0);
    g.cin = spec.in_channels;
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.cout = spec.out_channels;
    std::tie(g.ho, g.wo) = spec.output_size(g.h, g.w);
    g.kh = spec.kernel.first;
    g.kw = spec.kernel.second;
    g.sh = spec.stride.first;
    g.sw = spec.stride.second;
    g.ph = spec.padding.first;
    g.pw = spec.padding.second;
    g.r = spec.dilation;
    g.groups = spec.groups;
    if (g.ho <= 0 || g.wo <= 0)
        fail(ErrorKind::shape, "conv2d: non-positive output extent for input " + shape_string(input.shape()) +
                                   " (kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) + ", dilation " +
                                   std::to_string(g.r) + ")");

    basic_tensor<T> out(Shape{g.n, g.cout, g.ho, g.wo});
    const auto& k = kernels::active<T>();
    const T* x = input.data().data();
    const T* w = weights.data().data();
    T* y = out.mutable_data().data();
    const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
    const std::size_t out_plane = static_cast<std::size_t>(g.out_pixels());

    if (g.depthwise()) {
        depthwise_forward(x, w, bias ? bias->data().data() : static_cast<const T*>(nullptr), g, y);
    } else {
        std::vector<T> col;
        if (!g.pointwise())
            col.resize(static_cast<std::size_t>(g.col_rows()) * out_plane);
        for (int n = 0; n < g.n; ++n) {
            for (int grp = 0; grp < g.groups; ++grp) {
                const T* xg = x + (static_cast<std::size_t>(n) * g.cin + static_cast<std::size_t>(grp) * g.cin_g()) * in_plane;
                const T* wg = w + static_cast<std::size_t>(grp) * g.cout_g() * g.col_rows();
                T* yg = y + (static_cast<std::size_t>(n) * g.cout + static_cast<std::size_t>(grp) * g.cout_g()) * out_plane;
                const T* b_operand = xg;
                if (!g.pointwise()) {
                    im2col(xg, g, col.data());
                    b_operand = col.data();
                }
                k.gemm(g.cout_g(), g.out_pixels(), g.col_rows(), kernels::row_major(wg, g.col_rows()),
                       kernels::row_major(b_operand, g.out_pixels()), yg, g.out_pixels(), false);
            }
            if (bias) {
                const T* b = bias->data().data();
                for (int o = 0; o < g.cout; ++o) {
                    T* yo = y + (static_cast<std::size_t>(n) * g.cout + o) * out_plane;
                    for (std::size_t i = 0; i < out_plane; ++i)
                        yo[i] += b[o];
                }
            }
        }
    }

    const basic_tensor<T>* bias_ptr = bias ? &*bias : nullptr;
    if (detail::needs_grad<T>({&input, &weights, bias_ptr})) {
        std::vector<basic_tensor<T>> inputs{input, weights};
        if (bias)
            inputs.push_back(*bias);
        auto xi = input.impl();
        auto wi = weights.impl();
        detail::attach<T>(out, "conv2d", std::move(inputs), [g, xi, wi](std::span<const T> gout, std::span<T* const> gin) {
            const auto& kk = kernels::active<T>();
            const T* xd = xi->data.data();
            const T* wd = wi->data.data();
            T* gx = gin[0];
            T* gw = gin[1];
            T* gb = gin.size() > 2 ? gin[2] : nullptr;
            const std::size_t in_plane_b = static_cast<std::size_t>(g.h) * g.w;
            const std::size_t out_plane_b = static_cast<std::size_t>(g.out_pixels());
            if (gb != nullptr) {
                for (int n = 0; n < g.n; ++n)
                    for (int o = 0; o < g.cout; ++o) {
                        const T* go = gout.data() + (static_cast<std::size_t>(n) * g.cout + o) * out_plane_b;
                        T s = T(0);
                        for (std::size_t i = 0; i < out_plane_b; ++i)
                            s += go[i];
                        gb[o] += s;
                    }
            }
            if (g.depthwise()) {
                depthwise_backward(xd, wd, gout.data(), g, gx, gw);
                return;
            }
            std::vector<T> col;
            if (!g.pointwise())
                col.resize(static_cast<std::size_t>(g.col_rows()) * out_plane_b);
            for (int n = 0; n < g.n; ++n) {
                for (int grp = 0; grp < g.groups; ++grp) {
                    const std::size_t x_off = (static_cast<std::size_t>(n) * g.cin + static_cast<std::size_t>(grp) * g.cin_g()) * in_plane_b;
                    const T* wg = wd + static_cast<std::size_t>(grp) * g.cout_g() * g.col_rows();
                    const T* gy = gout.data() + (static_cast<std::size_t>(n) * g.cout + static_cast<std::size_t>(grp) * g.cout_g()) * out_plane_b;
                    if (gw != nullptr) {
                        const T* b_src = xd + x_off;
                        if (!g.pointwise()) {
                            im2col(xd + x_off, g, col.data());
                            b_src = col.data();
                        }
                        // dW_g (cout_g x rows) += dY (cout_g x P) * col^T (P x rows)
                        kk.gemm(g.cout_g(), g.col_rows(), g.out_pixels(), kernels::row_major(gy, g.out_pixels()),
                                kernels::transposed(b_src, g.out_pixels()),
                                gw + static_cast<std::size_t>(grp) * g.cout_g() * g.col_rows(), g.col_rows(), true);
                    }
                    if (gx != nullptr) {
                        // dcol (rows x P) = W_g^T (rows x cout_g) * dY (cout_g x P)
                        if (g.pointwise()) {
                            kk.gemm(g.col_rows(), g.out_pixels(), g.cout_g(), kernels::transposed(wg, g.col_rows()),
                                    kernels::row_major(gy, g.out_pixels()), gx + x_off, g.out_pixels(), true);
                        } else {
                            kk.gemm(g.col_rows(), g.out_pixels(), g.cout_g(), kernels::transposed(wg, g.col_rows()),
                                    kernels::row_major(gy, g.out_pixels()), col.data(), g.out_pixels(), false);
                            col2im(col.data(), g, gx + x_off);
                        }
                    }
                }
            }
        });
    }
    return out;
}

template Tensor conv2d<float>(const Tensor&, const Tensor&, const std::optional<Tensor>&, const ConvSpec&);
template Tensor64 conv2d<double>(const Tensor64&, const Tensor64&, const std::optional<Tensor64>&, const ConvSpec&);

} // namespace gccpm

#pragma once

// Independent reference implementations shared by unit and acceptance tests.

#include "gccpm/metrics.hpp"
#include "gccpm/ops.hpp"
#include "gccpm/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using gccpm::basic_tensor;
using gccpm::ConvSpec;
using gccpm::Shape;

template <class T>
basic_tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> v(gccpm::shape_numel(shape));
    for (auto& x : v)
        x = static_cast<T>(u(rng));
    return basic_tensor<T>(shape, std::move(v));
}

/// Direct evaluation of the atrous sum, one output at a time.
template <class T>
basic_tensor<T> loop_conv(const basic_tensor<T>& x, const basic_tensor<T>& w, const std::optional<basic_tensor<T>>& b,
                          const ConvSpec& s)
{
    const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const auto [ho, wo] = s.output_size(h, wd);
    const int cin_g = s.in_channels / s.groups, cout_g = s.out_channels / s.groups;
    basic_tensor<T> y({n, s.out_channels, ho, wo});
    auto out = y.mutable_data();
    const auto xd = x.data();
    const auto wdv = w.data();
    for (int in = 0; in < n; ++in)
        for (int o = 0; o < s.out_channels; ++o) {
            const int g = o / cout_g;
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    T acc = b ? b->data()[o] : T(0);
                    for (int c = 0; c < cin_g; ++c)
                        for (int u = 0; u < s.kernel.first; ++u)
                            for (int v = 0; v < s.kernel.second; ++v) {
                                const int yy = i * s.stride.first - s.padding.first + s.dilation * u;
                                const int xx = j * s.stride.second - s.padding.second + s.dilation * v;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= wd)
                                    continue;
                                const int ci = g * cin_g + c;
                                acc += xd[((static_cast<std::size_t>(in) * s.in_channels + ci) * h + yy) * wd + xx] *
                                       wdv[((static_cast<std::size_t>(o) * cin_g + c) * s.kernel.first + u) *
                                               s.kernel.second +
                                           v];
                            }
                    out[((static_cast<std::size_t>(in) * s.out_channels + o) * ho + i) * wo + j] = acc;
                }
        }
    return y;
}

/// Kernel with r - 1 zero rows/columns inserted between consecutive taps.
template <class T>
basic_tensor<T> zero_insert(const basic_tensor<T>& w, int r)
{
    const int co = w.dim(0), ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int eh = r * (kh - 1) + 1, ew = r * (kw - 1) + 1;
    basic_tensor<T> out({co, ci, eh, ew});
    auto d = out.mutable_data();
    const auto s = w.data();
    for (int o = 0; o < co; ++o)
        for (int c = 0; c < ci; ++c)
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v)
                    d[((static_cast<std::size_t>(o) * ci + c) * eh + u * r) * ew + v * r] =
                        s[((static_cast<std::size_t>(o) * ci + c) * kh + u) * kw + v];
    return out;
}

/// Counts multiplications of a looped convolution that skips nothing (padding taps
/// multiply zeros), i.e. Cout * (Cin / groups) * kh * kw per output pixel.
inline std::uint64_t count_loop_multiplications(const ConvSpec& s, int h, int w)
{
    const auto [ho, wo] = s.output_size(h, w);
    std::uint64_t count = 0;
    const int cin_g = s.in_channels / s.groups;
    for (int o = 0; o < s.out_channels; ++o)
        for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j)
                for (int c = 0; c < cin_g; ++c)
                    for (int u = 0; u < s.kernel.first; ++u)
                        for (int v = 0; v < s.kernel.second; ++v)
                            ++count;
    return count;
}

/// One named finite-difference scenario: a scalar closure and its inputs.
struct GradCase {
    std::string name;
    std::function<gccpm::Tensor64(const std::vector<gccpm::Tensor64>&)> fn;
    std::vector<gccpm::Tensor64> inputs;
};

/// Pushes every element at least `margin` away from zero (keeps ReLU kinks out of
/// the finite-difference stencil).
inline gccpm::Tensor64 away_from_zero(gccpm::Tensor64 t, double margin)
{
    for (auto& v : t.mutable_data())
        v = v < 0 ? std::min(v, -margin) : std::max(v, margin);
    return t;
}

/// Random projection to a scalar so that every output coordinate carries gradient.
inline gccpm::Tensor64 project(const gccpm::Tensor64& t, const gccpm::Tensor64& r)
{
    return gccpm::sum(gccpm::mul(t, r));
}

/// Builds one randomized case per differentiable operator plus composites.
std::vector<GradCase> gradient_cases(std::mt19937_64& rng);

} // namespace oracle

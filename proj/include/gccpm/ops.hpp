#pragma once

#include "gccpm/tensor.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace gccpm {

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    std::pair<int, int> kernel{1, 1};
    std::pair<int, int> stride{1, 1};
    int dilation = 1;
    int groups = 1;
    std::pair<int, int> padding{0, 0};
    bool has_bias = true;

    /// Symmetric padding that keeps the spatial size at stride 1: r * (k - 1) / 2.
    static std::pair<int, int> same_padding(std::pair<int, int> kernel, int dilation);

    /// Throws ErrorKind::config naming the violated invariant.
    void validate() const;

    Shape weight_shape() const;
    /// floor((in + 2p - r*(k-1) - 1) / s) + 1; may be <= 0 for invalid geometry.
    std::pair<int, int> output_size(int in_h, int in_w) const;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class PoolKind { avg, max };
enum class UpsampleMode { nearest, bilinear };

struct PoolSpec {
    PoolKind kind = PoolKind::max;
    std::pair<int, int> kernel{2, 2};
    std::pair<int, int> stride{2, 2};
    std::pair<int, int> padding{0, 0};

    std::pair<int, int> output_size(int in_h, int in_w) const;
    friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Dilated (atrous) grouped 2-D convolution over N x C x H x W input:
/// y[n, o, i, j] = b[o] + sum_{c, u, v} x[n, c, i*sh - ph + r*u, j*sw - pw + r*v] * w[o, c, u, v].
template <class T>
basic_tensor<T> conv2d(const basic_tensor<T>& input, const basic_tensor<T>& weights,
                       const std::optional<basic_tensor<T>>& bias, const ConvSpec& spec);

template <class T>
basic_tensor<T> conv2d(const basic_tensor<T>& input, const basic_tensor<T>& weights, std::nullopt_t,
                       const ConvSpec& spec)
{
    return conv2d(input, weights, std::optional<basic_tensor<T>>{}, spec);
}

/// Average (zero padding counted in the divisor) or max pooling; max ties go to the first index.
template <class T>
basic_tensor<T> pool2d(const basic_tensor<T>& input, const PoolSpec& spec);

template <class T>
basic_tensor<T> pool2d(const basic_tensor<T>& input, PoolKind kind, std::pair<int, int> kernel,
                       std::pair<int, int> stride)
{
    return pool2d(input, PoolSpec{kind, kernel, stride, {0, 0}});
}

/// Integer-factor upsampling. Bilinear uses the align_corners=false convention:
/// source coordinate = (dst + 0.5) / factor - 0.5, clamped to the valid range.
template <class T>
basic_tensor<T> upsample(const basic_tensor<T>& input, int factor, UpsampleMode mode);

template <class T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& tensors, int axis);

template <class T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b);

template <class T>
basic_tensor<T> sub(const basic_tensor<T>& a, const basic_tensor<T>& b);

template <class T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b);

template <class T>
basic_tensor<T> scale(const basic_tensor<T>& a, T factor);

/// max(x, 0); the gradient at exactly zero is zero.
template <class T>
basic_tensor<T> relu(const basic_tensor<T>& x);

/// Sum of all elements as a one-element tensor.
template <class T>
basic_tensor<T> sum(const basic_tensor<T>& x);

/// Per-sample heatmap loss over N x K x H x W tensors:
/// mean over n of (1/K) * sum_k weight[n, k] * sum_{x,y} (target - pred)^2.
/// `weights` is N x K (or empty for all ones). Gradient flows to `pred` only.
template <class T>
basic_tensor<T> weighted_squared_error(const basic_tensor<T>& pred, const basic_tensor<T>& target,
                                       const std::optional<basic_tensor<T>>& weights);

/// Mirrors the last axis (W). Differentiable.
template <class T>
basic_tensor<T> flip_horizontal(const basic_tensor<T>& x);

/// Reorders channels (axis 1): out[:, i] = x[:, order[i]]. Differentiable.
template <class T>
basic_tensor<T> permute_channels(const basic_tensor<T>& x, const std::vector<int>& order);

/// Slices batch item n of an N x ... tensor into a 1 x ... tensor (no gradient).
template <class T>
basic_tensor<T> batch_item(const basic_tensor<T>& x, int n);

} // namespace gccpm

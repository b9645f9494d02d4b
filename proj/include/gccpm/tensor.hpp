#pragma once

// Dense N-dimensional tensor with reverse-mode automatic differentiation.
//
// A tensor is a cheap shared handle: copies alias the same storage. Operators
// that receive at least one input with requires_grad() record a backward
// closure on their result while gradient recording is enabled (see NoGradGuard).

#include "gccpm/error.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gccpm {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class T>
class basic_tensor;

namespace detail {

template <class T>
struct TensorImpl;

template <class T>
struct GradFn {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    // gin[i] is null when inputs[i] does not need a gradient; otherwise the
    // closure accumulates (+=) into it.
    std::function<void(std::span<const T> gout, std::span<T* const> gin)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::shared_ptr<GradFn<T>> grad_fn;
};

} // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool enabled();

private:
    bool previous_;
};

template <class T>
class basic_tensor {
public:
    using value_type = T;

    basic_tensor() = default;
    explicit basic_tensor(Shape shape, T fill = T(0));
    basic_tensor(Shape shape, std::vector<T> values);

    static basic_tensor scalar(T value) { return basic_tensor(Shape{1}, std::vector<T>{value}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const T> data() const { return impl_->data; }
    /// Direct write access; used for initialisation and optimiser updates, never
    /// on a tensor whose value has already been consumed by a recorded graph.
    std::span<T> mutable_data() { return impl_->data; }

    T item() const;
    T at(int n, int c, int h, int w) const;

    bool requires_grad() const { return impl_->requires_grad; }
    basic_tensor& set_requires_grad(bool value = true);

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    /// Deep copy of the values; the copy is a fresh leaf.
    basic_tensor clone() const;
    /// Same storage-free value copy reshaped; product of extents must match.
    basic_tensor reshape(Shape shape) const;

    bool is_leaf() const { return impl_->grad_fn == nullptr; }

    const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }
    static basic_tensor from_impl(std::shared_ptr<detail::TensorImpl<T>> impl);

private:
    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using Tensor = basic_tensor<float>;
using Tensor64 = basic_tensor<double>;

/// Runs reverse-mode differentiation from a one-element tensor. Leaves
/// accumulate into their grad buffers across calls; intermediate tensors on
/// the path receive the gradient of this call only.
template <class T>
void backward(const basic_tensor<T>& loss);

/// Throws ErrorKind::numeric if any value is NaN or infinite.
template <class T>
void check_finite(const basic_tensor<T>& t, const std::string& what);

template <class T>
bool all_finite(const basic_tensor<T>& t);

template <class To, class From>
basic_tensor<To> cast(const basic_tensor<From>& t);

namespace detail {

/// Whether an op consuming these inputs should record a backward closure.
template <class T>
bool needs_grad(std::initializer_list<const basic_tensor<T>*> inputs);

/// Attaches a backward closure to `out` consuming `inputs`.
template <class T>
void attach(basic_tensor<T>& out, const char* op, std::vector<basic_tensor<T>> inputs,
            std::function<void(std::span<const T>, std::span<T* const>)> fn);

} // namespace detail

} // namespace gccpm

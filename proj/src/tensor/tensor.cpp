#include "gccpm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace gccpm {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (int e : shape)
        n *= static_cast<std::size_t>(e);
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled)
{
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard()
{
    g_grad_enabled = previous_;
}

bool NoGradGuard::enabled()
{
    return !g_grad_enabled;
}

namespace {

void validate_shape(const Shape& shape)
{
    if (shape.empty())
        fail(ErrorKind::shape, "tensor shape must have at least one extent");
    for (int e : shape)
        if (e <= 0)
            fail(ErrorKind::shape, "tensor extents must be positive, got " + shape_string(shape));
}

} // namespace

template <class T>
basic_tensor<T>::basic_tensor(Shape shape, T fill)
{
    validate_shape(shape);
    impl_ = std::make_shared<detail::TensorImpl<T>>();
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

template <class T>
basic_tensor<T>::basic_tensor(Shape shape, std::vector<T> values)
{
    validate_shape(shape);
    if (shape_numel(shape) != values.size())
        fail(ErrorKind::shape, "tensor of shape " + shape_string(shape) + " needs " +
                                   std::to_string(shape_numel(shape)) + " values, got " +
                                   std::to_string(values.size()));
    impl_ = std::make_shared<detail::TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

template <class T>
basic_tensor<T> basic_tensor<T>::from_impl(std::shared_ptr<detail::TensorImpl<T>> impl)
{
    basic_tensor t;
    t.impl_ = std::move(impl);
    return t;
}

template <class T>
T basic_tensor<T>::item() const
{
    if (numel() != 1)
        fail(ErrorKind::shape, "item() needs a one-element tensor, got " + shape_string(shape()));
    return impl_->data[0];
}

template <class T>
T basic_tensor<T>::at(int n, int c, int h, int w) const
{
    const Shape& s = impl_->shape;
    if (s.size() != 4)
        fail(ErrorKind::shape, "at(n,c,h,w) needs a rank-4 tensor");
    return impl_->data[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <class T>
basic_tensor<T>& basic_tensor<T>::set_requires_grad(bool value)
{
    impl_->requires_grad = value;
    return *this;
}

template <class T>
std::span<T> basic_tensor<T>::mutable_grad()
{
    if (impl_->grad.empty())
        impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
}

template <class T>
void basic_tensor<T>::zero_grad()
{
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <class T>
basic_tensor<T> basic_tensor<T>::clone() const
{
    return basic_tensor(impl_->shape, impl_->data);
}

template <class T>
basic_tensor<T> basic_tensor<T>::reshape(Shape shape) const
{
    validate_shape(shape);
    if (shape_numel(shape) != numel())
        fail(ErrorKind::shape, "cannot reshape " + shape_string(impl_->shape) + " to " + shape_string(shape));
    basic_tensor out(std::move(shape), impl_->data);
    if (detail::needs_grad<T>({this})) {
        detail::attach<T>(out, "reshape", {*this}, [](std::span<const T> gout, std::span<T* const> gin) {
            for (std::size_t i = 0; i < gout.size(); ++i)
                gin[0][i] += gout[i];
        });
    }
    return out;
}

namespace detail {

template <class T>
bool needs_grad(std::initializer_list<const basic_tensor<T>*> inputs)
{
    if (!g_grad_enabled)
        return false;
    for (const auto* t : inputs)
        if (t != nullptr && t->defined() && t->requires_grad())
            return true;
    return false;
}

template <class T>
void attach(basic_tensor<T>& out, const char* op, std::vector<basic_tensor<T>> inputs,
            std::function<void(std::span<const T>, std::span<T* const>)> fn)
{
    auto node = std::make_shared<GradFn<T>>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs)
        node->inputs.push_back(in.impl());
    node->backward = std::move(fn);
    out.impl()->grad_fn = std::move(node);
    out.impl()->requires_grad = true;
}

} // namespace detail

template <class T>
void backward(const basic_tensor<T>& loss)
{
    using Impl = detail::TensorImpl<T>;
    if (!loss.defined() || loss.numel() != 1)
        fail(ErrorKind::shape, "backward() needs a scalar loss");
    if (!loss.requires_grad())
        fail(ErrorKind::usage, "backward(): loss does not depend on any tensor requiring grad");

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* fn = node->grad_fn.get();
        if (fn != nullptr && next < fn->inputs.size()) {
            Impl* child = fn->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    std::unordered_map<Impl*, std::vector<T>> grads;
    grads[loss.impl().get()] = std::vector<T>(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl* node = *it;
        auto found = grads.find(node);
        if (found == grads.end())
            continue;
        std::vector<T> gout = std::move(found->second);
        grads.erase(found);
        if (node->grad_fn == nullptr) {
            if (node->grad.empty())
                node->grad.assign(node->data.size(), T(0));
            for (std::size_t i = 0; i < gout.size(); ++i)
                node->grad[i] += gout[i];
            continue;
        }
        node->grad = gout;
        auto& fn = *node->grad_fn;
        std::vector<T*> gin(fn.inputs.size(), nullptr);
        for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
            Impl* in = fn.inputs[i].get();
            if (!in->requires_grad)
                continue;
            auto& buf = grads[in];
            if (buf.empty())
                buf.assign(in->data.size(), T(0));
            gin[i] = buf.data();
        }
        // Two inputs aliasing one tensor share a buffer, which accumulates correctly.
        fn.backward(gout, gin);
    }
}

template <class T>
bool all_finite(const basic_tensor<T>& t)
{
    for (T v : t.data())
        if (!std::isfinite(v))
            return false;
    return true;
}

template <class T>
void check_finite(const basic_tensor<T>& t, const std::string& what)
{
    if (!all_finite(t))
        fail(ErrorKind::numeric, what + " contains NaN or Inf");
}

template <class To, class From>
basic_tensor<To> cast(const basic_tensor<From>& t)
{
    std::vector<To> values(t.data().begin(), t.data().end());
    return basic_tensor<To>(t.shape(), std::move(values));
}

template class basic_tensor<float>;
template class basic_tensor<double>;
template void backward<float>(const Tensor&);
template void backward<double>(const Tensor64&);
template bool all_finite<float>(const Tensor&);
template bool all_finite<double>(const Tensor64&);
template void check_finite<float>(const Tensor&, const std::string&);
template void check_finite<double>(const Tensor64&, const std::string&);
template Tensor cast<float, double>(const Tensor64&);
template Tensor64 cast<double, float>(const Tensor&);
template Tensor cast<float, float>(const Tensor&);
template Tensor64 cast<double, double>(const Tensor64&);
template bool detail::needs_grad<float>(std::initializer_list<const Tensor*>);
template bool detail::needs_grad<double>(std::initializer_list<const Tensor64*>);
template void detail::attach<float>(Tensor&, const char*, std::vector<Tensor>,
                                    std::function<void(std::span<const float>, std::span<float* const>)>);
template void detail::attach<double>(Tensor64&, const char*, std::vector<Tensor64>,
                                     std::function<void(std::span<const double>, std::span<double* const>)>);

} // namespace gccpm

#include "kernels_impl.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gccpm::kernels::scalar {

namespace {

template <class T>
void gemm(int m, int n, int k, MatrixRef<T> a, MatrixRef<T> b, T* c, std::ptrdiff_t ldc, bool accumulate)
{
    std::vector<T> row(static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), T(0));
        for (int p = 0; p < k; ++p) {
            const T aip = a(i, p);
            const T* brow = b.data + p * b.row_stride;
            for (int j = 0; j < n; ++j)
                row[j] += aip * brow[j * b.col_stride];
        }
        T* crow = c + i * ldc;
        if (accumulate) {
            for (int j = 0; j < n; ++j)
                crow[j] += row[j];
        } else {
            for (int j = 0; j < n; ++j)
                crow[j] = row[j];
        }
    }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] + b[i];
}

template <class T>
void accumulate(T* dst, const T* src, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        dst[i] += src[i];
}

template <class T>
void relu(const T* x, T* out, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        out[i] = !(x[i] <= T(0)) ? x[i] : T(0); // NaN passes through
}

template <class T>
void relu_backward(const T* x, const T* gout, T* gin, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        gin[i] += x[i] > T(0) ? gout[i] : T(0);
}

template <class T>
void adam(T* param, const T* grad, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps, T bc1, T bc2)
{
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grad[i];
        m[i] = beta1 * m[i] + (T(1) - beta1) * g;
        v[i] = beta2 * v[i] + (T(1) - beta2) * (g * g);
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

template <class T>
const KernelSet<T>& table()
{
    static const KernelSet<T> set{
        &gemm<T>, &add<T>, &accumulate<T>, &relu<T>, &relu_backward<T>, &adam<T>,
    };
    return set;
}

template const KernelSet<float>& table<float>();
template const KernelSet<double>& table<double>();

} // namespace gccpm::kernels::scalar

#pragma once

// Data-parallel inner loops used by the tensor operators.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant compiled in its own translation unit. The active table
// is chosen once at startup from CPUID and can be forced with the
// GCCPM_SIMD environment variable ("scalar" or "avx2") or set_simd_level().

#include <cstddef>
#include <string_view>

namespace gccpm::kernels {

enum class SimdLevel {
    scalar,
    avx2,
};

const char* to_string(SimdLevel level);

/// Strided read-only matrix operand; element (r, c) is data[r * row_stride + c * col_stride].
/// A transposed operand is the same buffer with the strides swapped.
template <class T>
struct MatrixRef {
    const T* data;
    std::ptrdiff_t row_stride;
    std::ptrdiff_t col_stride;

    T operator()(std::ptrdiff_t r, std::ptrdiff_t c) const { return data[r * row_stride + c * col_stride]; }
};

template <class T>
MatrixRef<T> row_major(const T* data, std::ptrdiff_t ld)
{
    return {data, ld, 1};
}

template <class T>
MatrixRef<T> transposed(const T* data, std::ptrdiff_t ld)
{
    return {data, 1, ld};
}

template <class T>
struct KernelSet {
    // C[m x n] (leading dimension ldc) = (accumulate ? C : 0) + A[m x k] * B[k x n]
    void (*gemm)(int m, int n, int k, MatrixRef<T> a, MatrixRef<T> b, T* c, std::ptrdiff_t ldc, bool accumulate);
    // out[i] = a[i] + b[i]
    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    // dst[i] += src[i]
    void (*accumulate)(T* dst, const T* src, std::size_t n);
    // out[i] = max(x[i], 0)
    void (*relu)(const T* x, T* out, std::size_t n);
    // gin[i] += x[i] > 0 ? gout[i] : 0
    void (*relu_backward)(const T* x, const T* gout, T* gin, std::size_t n);
    // Adam moment update and parameter step; bc1/bc2 are the bias corrections 1 - beta^t.
    void (*adam)(T* param, const T* grad, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps, T bc1, T bc2);
};

SimdLevel detected_simd_level();
SimdLevel active_simd_level();

/// Throws gccpm::Error if the level is not supported by this CPU/build.
void set_simd_level(SimdLevel level);

/// Parses "scalar" / "avx2"; throws on anything else.
SimdLevel parse_simd_level(std::string_view text);

template <class T>
const KernelSet<T>& active();

template <class T>
const KernelSet<T>& table(SimdLevel level);

} // namespace gccpm::kernels

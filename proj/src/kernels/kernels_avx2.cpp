// AVX2 + FMA variants. This file is compiled with -mavx2 -mfma and only
// reached through the dispatch table after a CPUID check.

#include "kernels_impl.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace gccpm::kernels::avx2 {

namespace {

constexpr int kBlockK = 256;
constexpr int kBlockM = 72;
constexpr int kBlockN = 512;

template <class T, int MR>
void pack_a(MatrixRef<T> a, int i0, int mc, int p0, int kc, T* out)
{
    for (int ir = 0; ir < mc; ir += MR) {
        const int rows = std::min(MR, mc - ir);
        for (int p = 0; p < kc; ++p) {
            for (int r = 0; r < rows; ++r)
                out[p * MR + r] = a(i0 + ir + r, p0 + p);
            for (int r = rows; r < MR; ++r)
                out[p * MR + r] = T(0);
        }
        out += static_cast<std::ptrdiff_t>(MR) * kc;
    }
}

template <class T, int NR>
void pack_b(MatrixRef<T> b, int p0, int kc, int j0, int nc, T* out)
{
    for (int jr = 0; jr < nc; jr += NR) {
        const int cols = std::min(NR, nc - jr);
        for (int p = 0; p < kc; ++p) {
            const T* src = b.data + (p0 + p) * b.row_stride + (j0 + jr) * b.col_stride;
            T* dst = out + p * NR;
            if (b.col_stride == 1) {
                for (int c = 0; c < cols; ++c)
                    dst[c] = src[c];
            } else {
                for (int c = 0; c < cols; ++c)
                    dst[c] = src[c * b.col_stride];
            }
            for (int c = cols; c < NR; ++c)
                dst[c] = T(0);
        }
        out += static_cast<std::ptrdiff_t>(NR) * kc;
    }
}

// 6x16 single-precision tile.
void micro_f32(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc, int rows, int cols, bool overwrite)
{
    __m256 acc[6][2];
    for (auto& r : acc) {
        r[0] = _mm256_setzero_ps();
        r[1] = _mm256_setzero_ps();
    }
    for (int p = 0; p < kc; ++p) {
        const __m256 b0 = _mm256_loadu_ps(bp);
        const __m256 b1 = _mm256_loadu_ps(bp + 8);
        for (int r = 0; r < 6; ++r) {
            const __m256 av = _mm256_broadcast_ss(ap + r);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
        ap += 6;
        bp += 16;
    }
    if (rows == 6 && cols == 16) {
        for (int r = 0; r < 6; ++r) {
            float* crow = c + r * ldc;
            if (overwrite) {
                _mm256_storeu_ps(crow, acc[r][0]);
                _mm256_storeu_ps(crow + 8, acc[r][1]);
            } else {
                _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
                _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
            }
        }
        return;
    }
    alignas(32) float tile[6][16];
    for (int r = 0; r < 6; ++r) {
        _mm256_store_ps(tile[r], acc[r][0]);
        _mm256_store_ps(tile[r] + 8, acc[r][1]);
    }
    for (int r = 0; r < rows; ++r) {
        float* crow = c + r * ldc;
        for (int j = 0; j < cols; ++j)
            crow[j] = overwrite ? tile[r][j] : crow[j] + tile[r][j];
    }
}

// 6x8 double-precision tile.
void micro_f64(int kc, const double* ap, const double* bp, double* c, std::ptrdiff_t ldc, int rows, int cols, bool overwrite)
{
    __m256d acc[6][2];
    for (auto& r : acc) {
        r[0] = _mm256_setzero_pd();
        r[1] = _mm256_setzero_pd();
    }
    for (int p = 0; p < kc; ++p) {
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        for (int r = 0; r < 6; ++r) {
            const __m256d av = _mm256_broadcast_sd(ap + r);
            acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
        }
        ap += 6;
        bp += 8;
    }
    if (rows == 6 && cols == 8) {
        for (int r = 0; r < 6; ++r) {
            double* crow = c + r * ldc;
            if (overwrite) {
                _mm256_storeu_pd(crow, acc[r][0]);
                _mm256_storeu_pd(crow + 4, acc[r][1]);
            } else {
                _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[r][0]));
                _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc[r][1]));
            }
        }
        return;
    }
    alignas(32) double tile[6][8];
    for (int r = 0; r < 6; ++r) {
        _mm256_store_pd(tile[r], acc[r][0]);
        _mm256_store_pd(tile[r] + 4, acc[r][1]);
    }
    for (int r = 0; r < rows; ++r) {
        double* crow = c + r * ldc;
        for (int j = 0; j < cols; ++j)
            crow[j] = overwrite ? tile[r][j] : crow[j] + tile[r][j];
    }
}

template <class T>
struct Micro;

template <>
struct Micro<float> {
    static constexpr int mr = 6;
    static constexpr int nr = 16;
    static void run(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc, int rows, int cols, bool overwrite)
    {
        micro_f32(kc, ap, bp, c, ldc, rows, cols, overwrite);
    }
};

template <>
struct Micro<double> {
    static constexpr int mr = 6;
    static constexpr int nr = 8;
    static void run(int kc, const double* ap, const double* bp, double* c, std::ptrdiff_t ldc, int rows, int cols, bool overwrite)
    {
        micro_f64(kc, ap, bp, c, ldc, rows, cols, overwrite);
    }
};

template <class T>
void gemm(int m, int n, int k, MatrixRef<T> a, MatrixRef<T> b, T* c, std::ptrdiff_t ldc, bool accumulate)
{
    constexpr int MR = Micro<T>::mr;
    constexpr int NR = Micro<T>::nr;
    if (m <= 0 || n <= 0)
        return;
    if (k <= 0) {
        if (!accumulate) {
            for (int i = 0; i < m; ++i)
                std::fill(c + i * ldc, c + i * ldc + n, T(0));
        }
        return;
    }

    thread_local std::vector<T> packed_a;
    thread_local std::vector<T> packed_b;
    const int nc_max = std::min(kBlockN, n);
    const int kc_max = std::min(kBlockK, k);
    const int mc_max = std::min(kBlockM, m);
    packed_b.resize(static_cast<std::size_t>((nc_max + NR - 1) / NR * NR) * kc_max);
    packed_a.resize(static_cast<std::size_t>((mc_max + MR - 1) / MR * MR) * kc_max);

    for (int j0 = 0; j0 < n; j0 += kBlockN) {
        const int nc = std::min(kBlockN, n - j0);
        for (int p0 = 0; p0 < k; p0 += kBlockK) {
            const int kc = std::min(kBlockK, k - p0);
            const bool overwrite = p0 == 0 && !accumulate;
            pack_b<T, NR>(b, p0, kc, j0, nc, packed_b.data());
            for (int i0 = 0; i0 < m; i0 += kBlockM) {
                const int mc = std::min(kBlockM, m - i0);
                pack_a<T, MR>(a, i0, mc, p0, kc, packed_a.data());
                for (int jr = 0; jr < nc; jr += NR) {
                    const T* bp = packed_b.data() + static_cast<std::ptrdiff_t>(jr / NR) * NR * kc;
                    for (int ir = 0; ir < mc; ir += MR) {
                        const T* ap = packed_a.data() + static_cast<std::ptrdiff_t>(ir / MR) * MR * kc;
                        T* ctile = c + static_cast<std::ptrdiff_t>(i0 + ir) * ldc + j0 + jr;
                        Micro<T>::run(kc, ap, bp, ctile, ldc, std::min(MR, mc - ir), std::min(NR, nc - jr), overwrite);
                    }
                }
            }
        }
    }
}

void add_f32(const float* a, const float* b, float* out, std::size_t n)
{
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] + b[i];
}

void add_f64(const double* a, const double* b, double* out, std::size_t n)
{
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] + b[i];
}

void accumulate_f32(float* dst, const float* src, std::size_t n)
{
    add_f32(dst, src, dst, n);
}

void accumulate_f64(double* dst, const double* src, std::size_t n)
{
    add_f64(dst, src, dst, n);
}

void relu_f32(const float* x, float* out, std::size_t n)
{
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        // and-mask keeps exact zeros for non-positive inputs (max_ps would pass -0.0 through);
        // the unordered compare lets NaN through so divergence stays visible
        _mm256_storeu_ps(out + i, _mm256_and_ps(v, _mm256_cmp_ps(v, zero, _CMP_NLE_UQ)));
    }
    for (; i < n; ++i)
        out[i] = !(x[i] <= 0.0f) ? x[i] : 0.0f;
}

void relu_f64(const double* x, double* out, std::size_t n)
{
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(out + i, _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_NLE_UQ)));
    }
    for (; i < n; ++i)
        out[i] = !(x[i] <= 0.0) ? x[i] : 0.0;
}

void relu_backward_f32(const float* x, const float* gout, float* gin, std::size_t n)
{
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(_mm256_loadu_ps(gout + i), mask);
        _mm256_storeu_ps(gin + i, _mm256_add_ps(_mm256_loadu_ps(gin + i), g));
    }
    for (; i < n; ++i)
        gin[i] += x[i] > 0.0f ? gout[i] : 0.0f;
}

void relu_backward_f64(const double* x, const double* gout, double* gin, std::size_t n)
{
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d g = _mm256_and_pd(_mm256_loadu_pd(gout + i), mask);
        _mm256_storeu_pd(gin + i, _mm256_add_pd(_mm256_loadu_pd(gin + i), g));
    }
    for (; i < n; ++i)
        gin[i] += x[i] > 0.0 ? gout[i] : 0.0;
}

void adam_f32(float* param, const float* grad, float* m, float* v, std::size_t n, float lr, float beta1, float beta2,
              float eps, float bc1, float bc2)
{
    const __m256 vb1 = _mm256_set1_ps(beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2);
    const __m256 vomb1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 vomb2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 vbc1 = _mm256_set1_ps(bc1);
    const __m256 vbc2 = _mm256_set1_ps(bc2);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vlr = _mm256_set1_ps(lr);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 g = _mm256_loadu_ps(grad + i);
        const __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(vomb1, g));
        const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)), _mm256_mul_ps(vomb2, _mm256_mul_ps(g, g)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        const __m256 mhat = _mm256_div_ps(mi, vbc1);
        const __m256 vhat = _mm256_div_ps(vi, vbc2);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
        _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
    }
    for (; i < n; ++i) {
        const float g = grad[i];
        m[i] = beta1 * m[i] + (1.0f - beta1) * g;
        v[i] = beta2 * v[i] + (1.0f - beta2) * (g * g);
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

void adam_f64(double* param, const double* grad, double* m, double* v, std::size_t n, double lr, double beta1,
              double beta2, double eps, double bc1, double bc2)
{
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vomb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vomb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vomb1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(vomb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vbc1);
        const __m256d vhat = _mm256_div_pd(vi, vbc2);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g);
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

} // namespace

template <>
const KernelSet<float>& table<float>()
{
    static const KernelSet<float> set{
        &gemm<float>, &add_f32, &accumulate_f32, &relu_f32, &relu_backward_f32, &adam_f32,
    };
    return set;
}

template <>
const KernelSet<double>& table<double>()
{
    static const KernelSet<double> set{
        &gemm<double>, &add_f64, &accumulate_f64, &relu_f64, &relu_backward_f64, &adam_f64,
    };
    return set;
}

} // namespace gccpm::kernels::avx2

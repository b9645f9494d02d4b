#include "doctest.h"

#include "gccpm/error.hpp"
#include "gccpm/kernels.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace gccpm;
using namespace gccpm::kernels;

namespace {

template <class T>
std::vector<T> random_vector(std::size_t n, std::mt19937& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<T> v(n);
    for (auto& x : v)
        x = static_cast<T>(u(rng));
    return v;
}

template <class T>
bool simd_available()
{
    return detected_simd_level() == SimdLevel::avx2;
}

template <class T>
void check_gemm_equivalence(T tol)
{
    if (!simd_available<T>())
        return;
    std::mt19937 rng(7);
    const auto& ref = table<T>(SimdLevel::scalar);
    const auto& vec = table<T>(SimdLevel::avx2);
    const std::array<int, 3> sizes[] = {{1, 1, 1}, {6, 16, 8}, {7, 17, 3}, {13, 31, 257}, {73, 515, 40}, {5, 3, 600}, {64, 9, 27}};
    for (auto [m, n, k] : sizes) {
        for (int ta = 0; ta < 2; ++ta) {
            for (int tb = 0; tb < 2; ++tb) {
                for (int acc = 0; acc < 2; ++acc) {
                    auto a = random_vector<T>(static_cast<std::size_t>(m) * k, rng);
                    auto b = random_vector<T>(static_cast<std::size_t>(k) * n, rng);
                    auto c0 = random_vector<T>(static_cast<std::size_t>(m) * n, rng);
                    auto c1 = c0;
                    MatrixRef<T> ar = ta ? transposed(a.data(), m) : row_major(a.data(), k);
                    MatrixRef<T> br = tb ? transposed(b.data(), k) : row_major(b.data(), n);
                    ref.gemm(m, n, k, ar, br, c0.data(), n, acc != 0);
                    vec.gemm(m, n, k, ar, br, c1.data(), n, acc != 0);
                    for (std::size_t i = 0; i < c0.size(); ++i)
                        REQUIRE(std::abs(c0[i] - c1[i]) <= tol * (1 + std::abs(c0[i])) * std::sqrt(T(k)));
                }
            }
        }
    }
}

template <class T>
void check_elementwise_equivalence()
{
    if (!simd_available<T>())
        return;
    std::mt19937 rng(11);
    const auto& ref = table<T>(SimdLevel::scalar);
    const auto& vec = table<T>(SimdLevel::avx2);
    for (std::size_t n : {0u, 1u, 3u, 8u, 15u, 64u, 1001u}) {
        auto a = random_vector<T>(n, rng);
        auto b = random_vector<T>(n, rng);
        if (n > 2)
            a[1] = 0;
        std::vector<T> o0(n), o1(n);
        ref.add(a.data(), b.data(), o0.data(), n);
        vec.add(a.data(), b.data(), o1.data(), n);
        CHECK(o0 == o1);
        ref.relu(a.data(), o0.data(), n);
        vec.relu(a.data(), o1.data(), n);
        CHECK(o0 == o1);
        auto g0 = b, g1 = b;
        ref.relu_backward(a.data(), b.data(), g0.data(), n);
        vec.relu_backward(a.data(), b.data(), g1.data(), n);
        CHECK(g0 == g1);
        ref.accumulate(g0.data(), a.data(), n);
        vec.accumulate(g1.data(), a.data(), n);
        CHECK(g0 == g1);

        auto p0 = a, p1 = a;
        std::vector<T> m0(n, T(0.01)), m1 = m0, v0(n, T(0.02)), v1 = v0;
        ref.adam(p0.data(), b.data(), m0.data(), v0.data(), n, T(1e-3), T(0.9), T(0.999), T(1e-8), T(0.1), T(0.001));
        vec.adam(p1.data(), b.data(), m1.data(), v1.data(), n, T(1e-3), T(0.9), T(0.999), T(1e-8), T(0.1), T(0.001));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(m0[i] == doctest::Approx(m1[i]).epsilon(1e-6));
            CHECK(v0[i] == doctest::Approx(v1[i]).epsilon(1e-6));
            CHECK(p0[i] == doctest::Approx(p1[i]).epsilon(1e-6));
        }
    }
}

} // namespace

TEST_CASE("gemm variants agree with the scalar reference")
{
    check_gemm_equivalence<float>(1e-5f);
    check_gemm_equivalence<double>(1e-13);
}

TEST_CASE("elementwise variants agree with the scalar reference")
{
    check_elementwise_equivalence<float>();
    check_elementwise_equivalence<double>();
}

TEST_CASE("relu propagates NaN in every variant")
{
    std::vector<SimdLevel> levels{SimdLevel::scalar};
    if (detected_simd_level() == SimdLevel::avx2)
        levels.push_back(SimdLevel::avx2);
    for (auto level : levels) {
        std::vector<float> x(11, -1.0f), out(11);
        x[2] = std::numeric_limits<float>::quiet_NaN();
        x[9] = std::numeric_limits<float>::quiet_NaN();
        table<float>(level).relu(x.data(), out.data(), x.size());
        CHECK(std::isnan(out[2]));
        CHECK(std::isnan(out[9]));
        CHECK(out[0] == 0.0f);
    }
}

TEST_CASE("simd level parsing and override")
{
    CHECK(parse_simd_level("scalar") == SimdLevel::scalar);
    CHECK(parse_simd_level("avx2") == SimdLevel::avx2);
    CHECK_THROWS_AS(parse_simd_level("neon512"), Error);

    const auto saved = active_simd_level();
    set_simd_level(SimdLevel::scalar);
    CHECK(active_simd_level() == SimdLevel::scalar);
    CHECK(&active<float>() == &table<float>(SimdLevel::scalar));
    set_simd_level(saved);
}

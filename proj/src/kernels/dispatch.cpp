#include "kernels_impl.hpp"

#include "gccpm/error.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace gccpm::kernels {

namespace {

bool cpu_has_avx2()
{
#if defined(GCCPM_HAVE_AVX2)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

SimdLevel initial_level()
{
    const SimdLevel best = detected_simd_level();
    if (const char* env = std::getenv("GCCPM_SIMD"); env != nullptr && *env != '\0') {
        const SimdLevel wanted = parse_simd_level(env);
        if (wanted == SimdLevel::avx2 && best != SimdLevel::avx2)
            fail(ErrorKind::config, "GCCPM_SIMD=avx2 requested but the CPU lacks AVX2/FMA");
        return wanted;
    }
    return best;
}

std::atomic<SimdLevel>& current()
{
    static std::atomic<SimdLevel> level{initial_level()};
    return level;
}

} // namespace

const char* to_string(SimdLevel level)
{
    switch (level) {
    case SimdLevel::scalar: return "scalar";
    case SimdLevel::avx2: return "avx2";
    }
    return "unknown";
}

SimdLevel parse_simd_level(std::string_view text)
{
    if (text == "scalar")
        return SimdLevel::scalar;
    if (text == "avx2")
        return SimdLevel::avx2;
    fail(ErrorKind::config, "unknown SIMD level '" + std::string(text) + "' (expected scalar or avx2)");
}

SimdLevel detected_simd_level()
{
    static const bool avx2 = cpu_has_avx2();
    return avx2 ? SimdLevel::avx2 : SimdLevel::scalar;
}

SimdLevel active_simd_level()
{
    return current().load(std::memory_order_relaxed);
}

void set_simd_level(SimdLevel level)
{
    if (level == SimdLevel::avx2 && detected_simd_level() != SimdLevel::avx2)
        fail(ErrorKind::config, "AVX2 kernels are not available on this CPU");
    current().store(level, std::memory_order_relaxed);
}

template <class T>
const KernelSet<T>& table(SimdLevel level)
{
#if defined(GCCPM_HAVE_AVX2)
    if (level == SimdLevel::avx2) {
        if (detected_simd_level() != SimdLevel::avx2)
            fail(ErrorKind::config, "AVX2 kernels are not available on this CPU");
        return avx2::table<T>();
    }
#else
    if (level == SimdLevel::avx2)
        fail(ErrorKind::config, "AVX2 kernels were not compiled into this build");
#endif
    return scalar::table<T>();
}

template <class T>
const KernelSet<T>& active()
{
    return table<T>(active_simd_level());
}

template const KernelSet<float>& table<float>(SimdLevel);
template const KernelSet<double>& table<double>(SimdLevel);
template const KernelSet<float>& active<float>();
template const KernelSet<double>& active<double>();

} // namespace gccpm::kernels

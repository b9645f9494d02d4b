#pragma once

#include "gccpm/kernels.hpp"

namespace gccpm::kernels {

namespace scalar {
template <class T>
const KernelSet<T>& table();
}

#if defined(GCCPM_HAVE_AVX2)
namespace avx2 {
template <class T>
const KernelSet<T>& table();
}
#endif

} // namespace gccpm::kernels

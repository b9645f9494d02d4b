#pragma once

#include "gccpm/tensor.hpp"

#include <cstdint>
#include <vector>

namespace gccpm {

struct AdamConfig {
    double lr = 4e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter first/second moments, shaped like the parameters they track.
template <class T>
struct AdamState {
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// The step counter is incremented before the bias corrections are computed.
/// Parameters without a grad buffer are treated as having zero gradient.
template <class T>
void adam_step(std::vector<basic_tensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg);

} // namespace gccpm

#pragma once

#include "gccpm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace gccpm {

/// Compares reverse-mode gradients of a scalar-valued closure against central
/// finite differences. Returns the maximum over every coordinate of every input
/// with requires_grad() of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class T>
double finite_diff_check(const std::function<basic_tensor<T>(const std::vector<basic_tensor<T>>&)>& fn,
                         std::vector<basic_tensor<T>> inputs, double epsilon = 1e-6)
{
    for (auto& in : inputs)
        if (in.requires_grad())
            in.zero_grad();
    auto loss = fn(inputs);
    if (loss.numel() != 1)
        fail(ErrorKind::shape, "finite_diff_check: closure must return a scalar");
    backward(loss);

    double worst = 0.0;
    for (auto& in : inputs) {
        if (!in.requires_grad())
            continue;
        const std::vector<T> analytic = in.has_grad() ? std::vector<T>(in.grad().begin(), in.grad().end())
                                                      : std::vector<T>(in.numel(), T(0));
        auto values = in.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            double f_plus, f_minus;
            {
                NoGradGuard guard;
                values[i] = saved + static_cast<T>(epsilon);
                f_plus = static_cast<double>(fn(inputs).item());
                values[i] = saved - static_cast<T>(epsilon);
                f_minus = static_cast<double>(fn(inputs).item());
            }
            values[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
            const double a = static_cast<double>(analytic[i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

} // namespace gccpm

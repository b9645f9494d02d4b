#include "gccpm/optim.hpp"

#include "gccpm/kernels.hpp"

#include <cmath>

namespace gccpm {

template <class T>
void adam_step(std::vector<basic_tensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg)
{
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), T(0));
            state.second_moment.emplace_back(p.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size())
        fail(ErrorKind::shape, "adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                                   " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.first_moment[i].size() != params[i].numel())
            fail(ErrorKind::shape, "adam_step: moment size mismatch for parameter " + std::to_string(i));

    ++state.step;
    const double t = static_cast<double>(state.step);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const auto& k = kernels::active<T>();
    std::vector<T> zeros;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const T* g = nullptr;
        if (p.has_grad()) {
            g = p.grad().data();
        } else {
            zeros.assign(p.numel(), T(0));
            g = zeros.data();
        }
        k.adam(p.mutable_data().data(), g, state.first_moment[i].data(), state.second_moment[i].data(), p.numel(),
               static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1), static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
               bc1, bc2);
    }
}

template void adam_step<float>(std::vector<Tensor>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::vector<Tensor64>&, AdamState<double>&, const AdamConfig&);

} // namespace gccpm

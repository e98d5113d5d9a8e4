// Adam with bias correction over an ordered parameter list. The update order
// is the parameter order, so identical runs stay bit-identical.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eyedeg/errors.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {

struct AdamConfig {
    double lr = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamStateT {
    std::vector<TensorT<T>> m;
    std::vector<TensorT<T>> v;
    std::int64_t step = 0;
};

using AdamState = AdamStateT<float>;

template <typename T, typename ParamRange>
AdamStateT<T> init_adam(const ParamRange& params) {
    AdamStateT<T> st;
    for (const auto& p : params) {
        st.m.emplace_back(p.value.shape);
        st.v.emplace_back(p.value.shape);
    }
    return st;
}

// One update over params[i].value using params[i].grad. Moment shapes must
// mirror the parameters; the step counter advances by exactly 1.
template <typename T, typename ParamRange>
void adam_step(ParamRange& params, AdamStateT<T>& state, const AdamConfig& cfg) {
    if (cfg.lr <= 0) throw ConfigError("adam: lr must be > 0");
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw UsageError("adam: state does not match parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi].value;
        const auto& grad = value.grad;
        if (grad.size() != value.data.size())
            throw UsageError("adam: parameter '" + params[pi].name + "' has no gradient");
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        if (m.shape != value.shape)
            throw UsageError("adam: moment shape mismatch for '" + params[pi].name + "'");
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            if (!std::isfinite(g))
                throw NumericError("adam: non-finite gradient in '" + params[pi].name +
                                   "' at step " + std::to_string(state.step));
            const double mn = cfg.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg.beta1) * g;
            const double vn = cfg.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg.beta2) * g * g;
            m.data[i] = static_cast<T>(mn);
            v.data[i] = static_cast<T>(vn);
            const double mhat = mn / bc1;
            const double vhat = vn / bc2;
            value.data[i] = static_cast<T>(static_cast<double>(value.data[i]) -
                                           cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

}  // namespace eyedeg

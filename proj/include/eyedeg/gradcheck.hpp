// Central finite differences in 64-bit - the independent oracle every
// analytic backward pass is checked against.
#pragma once

#include <cmath>
#include <functional>

#include "eyedeg/errors.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {

// f must be pure; point is perturbed one coordinate at a time.
template <typename F>
TensorT<double> finite_diff_grad(F&& f, const TensorT<double>& point, double h) {
    if (h <= 0) throw ConfigError("finite_diff_grad: h must be > 0");
    TensorT<double> grad(point.shape);
    TensorT<double> x = point;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = x.data[i];
        x.data[i] = orig + h;
        const double fp = f(x);
        x.data[i] = orig - h;
        const double fm = f(x);
        x.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: non-finite function evaluation");
        grad.data[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_err(const TensorT<double>& a, const TensorT<double>& b) {
    if (a.shape != b.shape) throw UsageError("max_rel_err: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({1.0, std::abs(a.data[i]), std::abs(b.data[i])});
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
    }
    return worst;
}

}  // namespace eyedeg

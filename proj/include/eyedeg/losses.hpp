// The three training objectives and their combination. Each term returns its
// value plus analytic gradients w.r.t. the network outputs it touches; an
// empty sub-batch deactivates a term (value 0, zero gradients) rather than
// erroring, so the same code path serves joint and single-domain training.
//
//   loss1: MSE between predicted and exact degrees (synthetic sub-batch)
//   loss2: squared pull to 0 for closed samples, hinge to the openness
//          threshold for open samples (real sub-batch, binary labels)
//   loss3: |mean gap| + |variance gap| between the two domains' feature
//          statistics (scalar stats over all elements, population variance)
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "eyedeg/errors.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {

struct LossWeights {
    double lambda1 = 0.01;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double ot = 15.0;
};

template <typename T>
struct ScalarLossResult {
    double value = 0.0;
    TensorT<T> d_output;  // gradient w.r.t. the head outputs; empty when inactive
    bool active = false;
};

// Mean squared error over the synthetic sub-batch; gradient 2(o-l)/Ns.
template <typename T>
ScalarLossResult<T> loss1_mse(const TensorT<T>& o2_syn, const std::vector<T>& degree_labels) {
    ScalarLossResult<T> res;
    const std::size_t n = degree_labels.size();
    if (n == 0) return res;
    if (o2_syn.numel() != n) throw DataError("loss1: output/label count mismatch");
    res.active = true;
    res.d_output = TensorT<T>(o2_syn.shape);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(o2_syn.data[i]) - static_cast<double>(degree_labels[i]);
        sum += diff * diff;
        res.d_output.data[i] = static_cast<T>(2.0 * diff / static_cast<double>(n));
    }
    res.value = sum / static_cast<double>(n);
    return res;
}

// Binary loss: (1/Nr) * sum[ o^2 * (1-l) + max(OT - o, 0) * l ].
// Subgradient at the hinge kink (o == OT) is 0.
template <typename T>
ScalarLossResult<T> loss2_binary(const TensorT<T>& o2_real, const std::vector<T>& binary_labels,
                                 double ot) {
    if (ot <= 0) throw ConfigError("loss2: openness threshold must be > 0");
    ScalarLossResult<T> res;
    const std::size_t n = binary_labels.size();
    if (n == 0) return res;
    if (o2_real.numel() != n) throw DataError("loss2: output/label count mismatch");
    res.active = true;
    res.d_output = TensorT<T>(o2_real.shape);
    double sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double l = static_cast<double>(binary_labels[i]);
        if (l != 0.0 && l != 1.0)
            throw DataError("loss2: label must be exactly 0 or 1, got " + std::to_string(l));
        const double o = static_cast<double>(o2_real.data[i]);
        if (l == 0.0) {
            sum += o * o;
            res.d_output.data[i] = static_cast<T>(2.0 * o * inv_n);
        } else {
            const double margin = ot - o;
            sum += margin > 0.0 ? margin : 0.0;
            res.d_output.data[i] = static_cast<T>(o < ot ? -inv_n : 0.0);
        }
    }
    res.value = sum * inv_n;
    return res;
}

template <typename T>
struct DistributionLossResult {
    double value = 0.0;
    TensorT<T> d_syn;
    TensorT<T> d_real;
    bool active = false;
};

namespace detail {

template <typename T>
void mean_var(const TensorT<T>& t, double& mean, double& var) {
    const double n = static_cast<double>(t.numel());
    double s = 0.0;
    for (const T& v : t.data) s += static_cast<double>(v);
    mean = s / n;
    double ss = 0.0;
    for (const T& v : t.data) {
        const double d = static_cast<double>(v) - mean;
        ss += d * d;
    }
    var = ss / n;  // population variance
}

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// |mean_S - mean_R| + |var_S - var_R|, scalar statistics over every element
// of each sub-batch. Subgradient of |.| at 0 is 0.
template <typename T>
DistributionLossResult<T> loss3_distribution(const TensorT<T>& o1_syn, const TensorT<T>& o1_real) {
    DistributionLossResult<T> res;
    if (o1_syn.numel() == 0 || o1_real.numel() == 0) return res;
    if (o1_syn.rank() != 2 || o1_real.rank() != 2 || o1_syn.shape[1] != o1_real.shape[1])
        throw DataError("loss3: feature widths must match");
    res.active = true;
    double ms, vs, mr, vr;
    detail::mean_var(o1_syn, ms, vs);
    detail::mean_var(o1_real, mr, vr);
    res.value = std::abs(ms - mr) + std::abs(vs - vr);

    const double sm = detail::sgn(ms - mr);
    const double sv = detail::sgn(vs - vr);
    const double inv_ns = 1.0 / static_cast<double>(o1_syn.numel());
    const double inv_nr = 1.0 / static_cast<double>(o1_real.numel());

    res.d_syn = TensorT<T>(o1_syn.shape);
    for (std::size_t i = 0; i < o1_syn.numel(); ++i) {
        const double x = static_cast<double>(o1_syn.data[i]);
        res.d_syn.data[i] = static_cast<T>(sm * inv_ns + sv * 2.0 * (x - ms) * inv_ns);
    }
    res.d_real = TensorT<T>(o1_real.shape);
    for (std::size_t i = 0; i < o1_real.numel(); ++i) {
        const double x = static_cast<double>(o1_real.data[i]);
        res.d_real.data[i] = static_cast<T>(-sm * inv_nr - sv * 2.0 * (x - mr) * inv_nr);
    }
    return res;
}

template <typename T>
struct CombinedLossResult {
    double total = 0.0;
    double loss1 = 0.0, loss2 = 0.0, loss3 = 0.0;
    bool loss1_active = false, loss2_active = false, loss3_active = false;
    TensorT<T> d_o1_syn, d_o1_real;  // lambda3 * loss3 gradients
    TensorT<T> d_o2_syn, d_o2_real;  // lambda1 * loss1 / lambda2 * loss2 gradients
};

template <typename T>
CombinedLossResult<T> combined_loss(const TensorT<T>& o1_syn, const TensorT<T>& o2_syn,
                                    const std::vector<T>& degree_labels,
                                    const TensorT<T>& o1_real, const TensorT<T>& o2_real,
                                    const std::vector<T>& binary_labels, const LossWeights& w) {
    if (w.lambda1 < 0 || w.lambda2 < 0 || w.lambda3 < 0)
        throw ConfigError("combined_loss: lambdas must be >= 0");
    if (degree_labels.empty() && binary_labels.empty())
        throw DataError("combined_loss: at least one sub-batch must be non-empty");

    CombinedLossResult<T> res;
    auto l1 = loss1_mse(o2_syn, degree_labels);
    auto l2 = loss2_binary(o2_real, binary_labels, w.ot);
    auto l3 = loss3_distribution(o1_syn, o1_real);

    res.loss1 = l1.value;
    res.loss2 = l2.value;
    res.loss3 = l3.value;
    res.loss1_active = l1.active;
    res.loss2_active = l2.active;
    res.loss3_active = l3.active;
    res.total = w.lambda1 * l1.value + w.lambda2 * l2.value + w.lambda3 * l3.value;

    auto scaled = [](TensorT<T> t, double s) {
        for (auto& v : t.data) v = static_cast<T>(static_cast<double>(v) * s);
        return t;
    };
    if (l1.active) res.d_o2_syn = scaled(std::move(l1.d_output), w.lambda1);
    if (l2.active) res.d_o2_real = scaled(std::move(l2.d_output), w.lambda2);
    if (l3.active) {
        res.d_o1_syn = scaled(std::move(l3.d_syn), w.lambda3);
        res.d_o1_real = scaled(std::move(l3.d_real), w.lambda3);
    } else {
        // O1 receives no gradient outside joint training
        if (o1_syn.numel() > 0) res.d_o1_syn = TensorT<T>(o1_syn.shape);
        if (o1_real.numel() > 0) res.d_o1_real = TensorT<T>(o1_real.shape);
    }
    return res;
}

}  // namespace eyedeg

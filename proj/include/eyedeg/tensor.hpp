// Dense row-major n-d tensor. float for training, double for gradient checks;
// every numeric kernel in ops.hpp is templated on the element type.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eyedeg/errors.hpp"

namespace eyedeg {

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty unless attached; same length as data otherwise

    TensorT() = default;

    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(checked_numel(shape), T(0));
    }

    TensorT(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != checked_numel(shape))
            throw ConfigError("tensor: element count does not match shape");
    }

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<int> s, T value) {
        TensorT t(std::move(s));
        for (auto& v : t.data) v = value;
        return t;
    }

    std::size_t numel() const { return data.size(); }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 4-d accessor (N,C,H,W); also usable for rank-2 via at2.
    T& at4(int n, int c, int h, int w) {
        return data[idx4(n, c, h, w)];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data[idx4(n, c, h, w)];
    }
    T& at2(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }
    const T& at2(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) + static_cast<std::size_t>(c)]; }

    void attach_grad() {
        grad.assign(data.size(), T(0));
    }
    bool has_grad() const { return !grad.empty(); }
    void zero_grad() {
        if (grad.empty())
            grad.assign(data.size(), T(0));
        else
            std::fill(grad.begin(), grad.end(), T(0));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }

    static std::size_t checked_numel(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw ConfigError("tensor: shape extents must be positive");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

private:
    std::size_t idx4(int n, int c, int h, int w) const {
        const auto C = static_cast<std::size_t>(shape[1]);
        const auto H = static_cast<std::size_t>(shape[2]);
        const auto W = static_cast<std::size_t>(shape[3]);
        return ((static_cast<std::size_t>(n) * C + static_cast<std::size_t>(c)) * H +
                static_cast<std::size_t>(h)) * W + static_cast<std::size_t>(w);
    }
};

using Tensor = TensorT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
    for (const T& v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename T>
void require_finite(const TensorT<T>& t, const char* context) {
    if (!all_finite(t)) throw NumericError(std::string("non-finite values in ") + context);
}

template <typename T, typename U>
TensorT<T> cast_tensor(const TensorT<U>& src) {
    TensorT<T> out(src.shape);
    for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<T>(src.data[i]);
    return out;
}

}  // namespace eyedeg

// Forward/backward kernels: conv2d (im2col + small GEMMs), 2x2 max-pool,
// fully connected, and the Max-Feature-Map activation. All kernels are pure
// and single-threaded; summation order is fixed so repeated runs are
// bit-identical.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

#include "eyedeg/errors.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {
namespace detail {

// C(M,N) += A(M,K) * B(K,N), row-major. Inner loop over n vectorizes.
template <typename T>
void gemm_nn(int M, int K, int N, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m) {
        const T* a = A + static_cast<std::size_t>(m) * K;
        T* c = C + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// C(K,N) += A(M,K)^T * B(M,N). Used for d(col) = W^T * dOut.
template <typename T>
void gemm_tn(int M, int K, int N, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m) {
        const T* a = A + static_cast<std::size_t>(m) * K;
        const T* b = B + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            T* c = C + static_cast<std::size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// Dot product with a fixed 16-lane accumulation order (vector friendly,
// still deterministic run to run).
template <typename T>
T dotk(const T* x, const T* y, int n) {
    T acc[16] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0),
                 T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 16 <= n; i += 16)
        for (int j = 0; j < 16; ++j) acc[j] += x[i + j] * y[i + j];
    T tail = T(0);
    for (; i < n; ++i) tail += x[i] * y[i];
    T s0 = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    T s1 = ((acc[8] + acc[9]) + (acc[10] + acc[11])) + ((acc[12] + acc[13]) + (acc[14] + acc[15]));
    return (s0 + s1) + tail;
}

struct ConvGeom {
    int C, H, W, O, kh, kw, stride, pad, Ho, Wo;
};

inline ConvGeom conv_geometry(const std::vector<int>& in_shape, const std::vector<int>& w_shape,
                              int stride, int pad) {
    if (in_shape.size() != 4 || w_shape.size() != 4)
        throw ConfigError("conv2d: input must be NxCxHxW and weight OxCxKhxKw");
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
    ConvGeom g{};
    g.C = in_shape[1];
    g.H = in_shape[2];
    g.W = in_shape[3];
    g.O = w_shape[0];
    g.kh = w_shape[2];
    g.kw = w_shape[3];
    g.stride = stride;
    g.pad = pad;
    if (w_shape[1] != g.C)
        throw ConfigError("conv2d: weight channel count does not match input channels");
    if (g.kh > g.H + 2 * pad || g.kw > g.W + 2 * pad)
        throw ConfigError("conv2d: kernel larger than padded input");
    g.Ho = (g.H + 2 * pad - g.kh) / stride + 1;
    g.Wo = (g.W + 2 * pad - g.kw) / stride + 1;
    return g;
}

// col is (C*kh*kw) x (Ho*Wo) for one image.
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
    const int N = g.Ho * g.Wo;
    for (int c = 0; c < g.C; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * g.H * g.W;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * N;
                for (int oh = 0; oh < g.Ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    T* dst = row + static_cast<std::size_t>(oh) * g.Wo;
                    if (ih < 0 || ih >= g.H) {
                        std::fill(dst, dst + g.Wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ih) * g.W;
                    for (int ow = 0; ow < g.Wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        dst[ow] = (iw >= 0 && iw < g.W) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* img) {
    const int N = g.Ho * g.Wo;
    for (int c = 0; c < g.C; ++c) {
        T* plane = img + static_cast<std::size_t>(c) * g.H * g.W;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * N;
                for (int oh = 0; oh < g.Ho; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.H) continue;
                    T* dst = plane + static_cast<std::size_t>(ih) * g.W;
                    const T* src = row + static_cast<std::size_t>(oh) * g.Wo;
                    for (int ow = 0; ow < g.Wo; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias, int stride, int pad) {
    const auto g = detail::conv_geometry(input.shape, weight.shape, stride, pad);
    if (bias.numel() != static_cast<std::size_t>(g.O))
        throw ConfigError("conv2d: bias length must equal output channels");
    const int Nimg = input.shape[0];
    const int K = g.C * g.kh * g.kw;
    const int N = g.Ho * g.Wo;
    TensorT<T> out({Nimg, g.O, g.Ho, g.Wo});
    std::vector<T> col(static_cast<std::size_t>(K) * N);
    for (int n = 0; n < Nimg; ++n) {
        const T* img = input.data.data() + static_cast<std::size_t>(n) * g.C * g.H * g.W;
        detail::im2col(img, g, col.data());
        T* o = out.data.data() + static_cast<std::size_t>(n) * g.O * N;
        for (int m = 0; m < g.O; ++m)
            std::fill(o + static_cast<std::size_t>(m) * N, o + static_cast<std::size_t>(m + 1) * N,
                      bias.data[static_cast<std::size_t>(m)]);
        detail::gemm_nn(g.O, K, N, weight.data.data(), col.data(), o);
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    TensorT<T> input;  // empty when skipped
    TensorT<T> weight;
    TensorT<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weight, int stride,
                               int pad, const TensorT<T>& d_out, bool need_d_input = true) {
    const auto g = detail::conv_geometry(input.shape, weight.shape, stride, pad);
    const int Nimg = input.shape[0];
    const int K = g.C * g.kh * g.kw;
    const int N = g.Ho * g.Wo;
    if (d_out.shape != std::vector<int>{Nimg, g.O, g.Ho, g.Wo})
        throw UsageError("conv2d_backward: d_out shape does not match forward output");

    Conv2dGrads<T> grads;
    grads.weight = TensorT<T>(weight.shape);
    grads.bias = TensorT<T>({g.O});
    if (need_d_input) grads.input = TensorT<T>(input.shape);

    std::vector<T> col(static_cast<std::size_t>(K) * N);
    std::vector<T> dcol(static_cast<std::size_t>(K) * N);
    for (int n = 0; n < Nimg; ++n) {
        const T* img = input.data.data() + static_cast<std::size_t>(n) * g.C * g.H * g.W;
        const T* dout = d_out.data.data() + static_cast<std::size_t>(n) * g.O * N;
        detail::im2col(img, g, col.data());
        // dW[m][k] += dot(dOut[m], col[k]); dB[m] += sum(dOut[m])
        for (int m = 0; m < g.O; ++m) {
            const T* dr = dout + static_cast<std::size_t>(m) * N;
            T* dw = grads.weight.data.data() + static_cast<std::size_t>(m) * K;
            for (int k = 0; k < K; ++k)
                dw[k] += detail::dotk(dr, col.data() + static_cast<std::size_t>(k) * N, N);
            T s = T(0);
            for (int i = 0; i < N; ++i) s += dr[i];
            grads.bias.data[static_cast<std::size_t>(m)] += s;
        }
        if (need_d_input) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_tn(g.O, K, N, weight.data.data(), dout, dcol.data());
            detail::col2im_add(dcol.data(), g,
                               grads.input.data.data() + static_cast<std::size_t>(n) * g.C * g.H * g.W);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// 2x2 max-pool, stride 2. Odd trailing row/column dropped. Ties break toward
// the lowest linear index. argmax stores flat indices into the input buffer.

template <typename T>
struct Pool2Result {
    TensorT<T> out;
    std::vector<std::int32_t> argmax;
};

template <typename T>
Pool2Result<T> maxpool2_forward(const TensorT<T>& input) {
    if (input.rank() != 4) throw ConfigError("maxpool2: input must be NxCxHxW");
    const int Nimg = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    if (H < 2 || W < 2) throw ConfigError("maxpool2: spatial extents must be >= 2");
    const int Ho = H / 2, Wo = W / 2;
    Pool2Result<T> res{TensorT<T>({Nimg, C, Ho, Wo}), {}};
    res.argmax.resize(res.out.numel());
    std::size_t oi = 0;
    for (int n = 0; n < Nimg; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < Ho; ++oh) {
                for (int ow = 0; ow < Wo; ++ow) {
                    const std::size_t p00 = base + static_cast<std::size_t>(2 * oh) * W + 2 * ow;
                    std::size_t best = p00;
                    T bv = input.data[p00];
                    const std::size_t cand[3] = {p00 + 1, p00 + static_cast<std::size_t>(W),
                                                 p00 + static_cast<std::size_t>(W) + 1};
                    for (std::size_t q : cand) {
                        if (input.data[q] > bv) {
                            bv = input.data[q];
                            best = q;
                        }
                    }
                    res.out.data[oi] = bv;
                    res.argmax[oi] = static_cast<std::int32_t>(best);
                    ++oi;
                }
            }
        }
    }
    return res;
}

template <typename T>
TensorT<T> maxpool2_backward(const std::vector<std::int32_t>& argmax,
                             const std::vector<int>& input_shape, const TensorT<T>& d_out) {
    if (argmax.size() != d_out.numel())
        throw UsageError("maxpool2_backward: argmax cache does not match d_out");
    TensorT<T> d_in(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i)
        d_in.data[static_cast<std::size_t>(argmax[i])] += d_out.data[i];
    return d_in;
}

// ---------------------------------------------------------------------------
// Fully connected: y = x W^T + b, x is NxF, W is GxF.

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias) {
    if (input.rank() != 2 || weight.rank() != 2)
        throw ConfigError("linear: input must be NxF and weight GxF");
    const int N = input.shape[0], F = input.shape[1], G = weight.shape[0];
    if (weight.shape[1] != F) throw ConfigError("linear: weight width does not match input features");
    if (bias.numel() != static_cast<std::size_t>(G))
        throw ConfigError("linear: bias length must equal output features");
    TensorT<T> out({N, G});
    for (int n = 0; n < N; ++n) {
        const T* x = input.data.data() + static_cast<std::size_t>(n) * F;
        T* o = out.data.data() + static_cast<std::size_t>(n) * G;
        for (int g = 0; g < G; ++g)
            o[g] = bias.data[static_cast<std::size_t>(g)] +
                   detail::dotk(x, weight.data.data() + static_cast<std::size_t>(g) * F, F);
    }
    return out;
}

template <typename T>
struct LinearGrads {
    TensorT<T> input;
    TensorT<T> weight;
    TensorT<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& input, const TensorT<T>& weight,
                               const TensorT<T>& d_out) {
    const int N = input.shape[0], F = input.shape[1], G = weight.shape[0];
    if (d_out.shape != std::vector<int>{N, G})
        throw UsageError("linear_backward: d_out shape does not match forward output");
    LinearGrads<T> grads{TensorT<T>(input.shape), TensorT<T>(weight.shape), TensorT<T>({G})};
    for (int n = 0; n < N; ++n) {
        const T* x = input.data.data() + static_cast<std::size_t>(n) * F;
        const T* dy = d_out.data.data() + static_cast<std::size_t>(n) * G;
        T* dx = grads.input.data.data() + static_cast<std::size_t>(n) * F;
        for (int g = 0; g < G; ++g) {
            const T d = dy[g];
            const T* w = weight.data.data() + static_cast<std::size_t>(g) * F;
            T* dw = grads.weight.data.data() + static_cast<std::size_t>(g) * F;
            for (int f = 0; f < F; ++f) {
                dx[f] += d * w[f];
                dw[f] += d * x[f];
            }
            grads.bias.data[static_cast<std::size_t>(g)] += d;
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Max-Feature-Map: split channels (rank 4) or features (rank 2) in half and
// take the elementwise max. Exact ties route to the first half.

template <typename T>
struct MfmResult {
    TensorT<T> out;
    std::vector<std::uint8_t> first_wins;  // per output element
};

template <typename T>
MfmResult<T> mfm_forward(const TensorT<T>& input) {
    if (input.rank() != 2 && input.rank() != 4)
        throw ConfigError("mfm: input must be rank 2 or rank 4");
    const int N = input.shape[0];
    const int C2 = input.shape[1];
    if (C2 % 2 != 0) throw ConfigError("mfm: channel/feature count must be even");
    const int C = C2 / 2;
    std::size_t plane = 1;
    std::vector<int> out_shape = input.shape;
    out_shape[1] = C;
    if (input.rank() == 4) plane = static_cast<std::size_t>(input.shape[2]) * input.shape[3];

    MfmResult<T> res{TensorT<T>(out_shape), {}};
    res.first_wins.resize(res.out.numel());
    const std::size_t half = static_cast<std::size_t>(C) * plane;
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n) {
        const T* base = input.data.data() + static_cast<std::size_t>(n) * 2 * half;
        for (std::size_t i = 0; i < half; ++i) {
            const T a = base[i];
            const T b = base[half + i];
            const bool first = a >= b;
            res.out.data[oi] = first ? a : b;
            res.first_wins[oi] = first ? 1 : 0;
            ++oi;
        }
    }
    return res;
}

template <typename T>
TensorT<T> mfm_backward(const std::vector<std::uint8_t>& first_wins,
                        const std::vector<int>& input_shape, const TensorT<T>& d_out) {
    if (first_wins.size() != d_out.numel())
        throw UsageError("mfm_backward: winner cache does not match d_out");
    TensorT<T> d_in(input_shape);
    const int N = input_shape[0];
    const int C = input_shape[1] / 2;
    std::size_t plane = 1;
    if (input_shape.size() == 4)
        plane = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
    const std::size_t half = static_cast<std::size_t>(C) * plane;
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n) {
        T* base = d_in.data.data() + static_cast<std::size_t>(n) * 2 * half;
        for (std::size_t i = 0; i < half; ++i) {
            if (first_wins[oi])
                base[i] += d_out.data[oi];
            else
                base[half + i] += d_out.data[oi];
            ++oi;
        }
    }
    return d_in;
}

}  // namespace eyedeg

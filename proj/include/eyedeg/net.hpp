// The eye-openness network: a shared convolutional trunk with Max-Feature-Map
// activations feeding two heads. O1 is the 256-wide feature vector after the
// first fully connected block's MFM; O2 is the scalar degree regressed by the
// final fully connected layer. Includes deterministic initialization and a
// bit-exact binary checkpoint format.
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eyedeg/adam.hpp"
#include "eyedeg/errors.hpp"
#include "eyedeg/ops.hpp"
#include "eyedeg/rng.hpp"
#include "eyedeg/tensor.hpp"

namespace eyedeg {

enum class LayerKind { Conv, Pool, Mfm, Flatten, Linear };

struct LayerSpec {
    LayerKind kind;
    int out_channels = 0;  // conv: output channels before the MFM halving
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    int out_features = 0;  // linear

    static LayerSpec conv(int out_channels, int kernel, int stride, int pad) {
        return {LayerKind::Conv, out_channels, kernel, stride, pad, 0};
    }
    static LayerSpec pool() { return {LayerKind::Pool}; }
    static LayerSpec mfm() { return {LayerKind::Mfm}; }
    static LayerSpec flatten() { return {LayerKind::Flatten}; }
    static LayerSpec linear(int out_features) {
        return {LayerKind::Linear, 0, 0, 1, 0, out_features};
    }
};

struct NetConfig {
    std::vector<LayerSpec> layers;
    int in_channels = 1;
    int in_h = 48;
    int in_w = 128;
    int feature_width = 256;
    bool standardize_input = true;  // fixed x/255 affine at the input stage

    // Five conv blocks with MFM, three pools, then FC1 -> MFM -> 256 and the
    // scalar head. Channel counts listed are post-MFM widths.
    static NetConfig preset(const std::string& name) {
        NetConfig cfg;
        if (name == "default") {
            cfg.layers = {
                LayerSpec::conv(32, 5, 1, 2), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::conv(48, 3, 1, 1), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::conv(64, 3, 1, 1), LayerSpec::mfm(),
                LayerSpec::conv(48, 3, 1, 1), LayerSpec::mfm(),
                LayerSpec::conv(32, 3, 1, 1), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::flatten(),
                LayerSpec::linear(512),       LayerSpec::mfm(),
                LayerSpec::linear(1),
            };
        } else if (name == "reduced") {
            // Same structure, narrower and with a strided stem; CPU-trainable
            // at desk scale in minutes.
            cfg.layers = {
                LayerSpec::conv(16, 5, 2, 2), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::conv(24, 3, 1, 1), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::conv(32, 3, 1, 1), LayerSpec::mfm(),
                LayerSpec::conv(24, 3, 1, 1), LayerSpec::mfm(),
                LayerSpec::conv(16, 3, 1, 1), LayerSpec::mfm(), LayerSpec::pool(),
                LayerSpec::flatten(),
                LayerSpec::linear(512),       LayerSpec::mfm(),
                LayerSpec::linear(1),
            };
        } else {
            throw ConfigError("unknown net preset '" + name + "' (expected default|reduced)");
        }
        return cfg;
    }

    struct ShapeInfo {
        // Shape after each layer as {channels/features, h, w}; h=w=0 once flat.
        std::vector<std::array<int, 3>> after;
        int o1_layer = -1;  // layer index whose output is O1 (input of the final linear)
    };

    ShapeInfo walk_shapes() const {
        if (layers.empty()) throw ConfigError("net: empty layer list");
        ShapeInfo info;
        int c = in_channels, h = in_h, w = in_w;
        bool flat = false;
        int last_linear = -1;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    if (flat) throw ConfigError("net: conv after flatten");
                    if (l.out_channels <= 0 || l.kernel <= 0 || l.stride < 1 || l.pad < 0)
                        throw ConfigError("net: bad conv spec at layer " + std::to_string(i));
                    const int ho = (h + 2 * l.pad - l.kernel) / l.stride + 1;
                    const int wo = (w + 2 * l.pad - l.kernel) / l.stride + 1;
                    if (l.kernel > h + 2 * l.pad || l.kernel > w + 2 * l.pad || ho <= 0 || wo <= 0)
                        throw ConfigError("net: spatial underflow at conv layer " + std::to_string(i));
                    c = l.out_channels;
                    h = ho;
                    w = wo;
                    break;
                }
                case LayerKind::Pool:
                    if (flat) throw ConfigError("net: pool after flatten");
                    if (h < 2 || w < 2)
                        throw ConfigError("net: spatial underflow at pool layer " + std::to_string(i));
                    h /= 2;
                    w /= 2;
                    break;
                case LayerKind::Mfm:
                    if (c % 2 != 0)
                        throw ConfigError("net: layer feeding MFM must have even width (layer " +
                                          std::to_string(i) + ")");
                    c /= 2;
                    break;
                case LayerKind::Flatten:
                    if (flat) throw ConfigError("net: duplicate flatten");
                    c = c * h * w;
                    h = w = 0;
                    flat = true;
                    break;
                case LayerKind::Linear:
                    if (!flat) throw ConfigError("net: linear before flatten");
                    if (l.out_features <= 0)
                        throw ConfigError("net: bad linear spec at layer " + std::to_string(i));
                    c = l.out_features;
                    last_linear = static_cast<int>(i);
                    break;
            }
            info.after.push_back({c, h, w});
        }
        if (last_linear != static_cast<int>(layers.size()) - 1)
            throw ConfigError("net: last layer must be linear");
        if (layers.back().out_features != 1)
            throw ConfigError("net: final layer must output exactly 1 value");
        info.o1_layer = last_linear - 1;
        if (info.o1_layer < 0 || info.after[static_cast<std::size_t>(info.o1_layer)][0] != feature_width)
            throw ConfigError("net: feature width before the final layer must be " +
                              std::to_string(feature_width));
        return info;
    }

    std::uint64_t fingerprint() const {
        // FNV-1a over a canonical text form
        std::string s = "in:" + std::to_string(in_channels) + "x" + std::to_string(in_h) + "x" +
                        std::to_string(in_w) + ";fw:" + std::to_string(feature_width) +
                        ";std:" + (standardize_input ? "1" : "0") + ";";
        for (const auto& l : layers) {
            switch (l.kind) {
                case LayerKind::Conv:
                    s += "conv(" + std::to_string(l.out_channels) + "," + std::to_string(l.kernel) +
                         "," + std::to_string(l.stride) + "," + std::to_string(l.pad) + ");";
                    break;
                case LayerKind::Pool: s += "pool;"; break;
                case LayerKind::Mfm: s += "mfm;"; break;
                case LayerKind::Flatten: s += "flatten;"; break;
                case LayerKind::Linear: s += "linear(" + std::to_string(l.out_features) + ");"; break;
            }
        }
        std::uint64_t hash = 0xcbf29ce484222325ULL;
        for (unsigned char ch : s) {
            hash ^= ch;
            hash *= 0x100000001b3ULL;
        }
        return hash;
    }
};

template <typename T>
struct NamedTensorT {
    std::string name;
    TensorT<T> value;
};

template <typename T>
struct NetParamsT {
    std::vector<NamedTensorT<T>> tensors;
    std::uint64_t seed = 0;
    std::uint64_t config_fingerprint = 0;
    std::uint64_t version = 0;  // bumped after every in-place update

    const TensorT<T>& find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.value;
        throw UsageError("net: no parameter named '" + name + "'");
    }
    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.value.numel();
        return n;
    }
};

using NetParams = NetParamsT<float>;

// Zero-mean normal weights with fan-in scaling (std = sqrt(2/fan_in)), zero
// biases. Draws happen in double and cast to T, so float and double nets of
// the same seed agree to within rounding.
template <typename T>
NetParamsT<T> init_params(const NetConfig& cfg, std::uint64_t seed) {
    cfg.walk_shapes();  // validates the chain
    NetParamsT<T> params;
    params.seed = seed;
    params.config_fingerprint = cfg.fingerprint();

    int c = cfg.in_channels, h = cfg.in_h, w = cfg.in_w;
    bool flat = false;
    int conv_idx = 0, fc_idx = 0, param_idx = 0;
    for (const auto& l : cfg.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                ++conv_idx;
                const std::string base = "conv" + std::to_string(conv_idx);
                TensorT<T> weight({l.out_channels, c, l.kernel, l.kernel});
                const double std_dev = std::sqrt(2.0 / (static_cast<double>(c) * l.kernel * l.kernel));
                Rng rng(hash_mix(seed, static_cast<std::uint64_t>(param_idx++)));
                for (auto& v : weight.data) v = static_cast<T>(std_dev * rng.normal());
                params.tensors.push_back({base + ".weight", std::move(weight)});
                params.tensors.push_back({base + ".bias", TensorT<T>({l.out_channels})});
                c = l.out_channels;
                h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
                w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
                break;
            }
            case LayerKind::Pool:
                h /= 2;
                w /= 2;
                break;
            case LayerKind::Mfm:
                c /= 2;
                break;
            case LayerKind::Flatten:
                c = c * h * w;
                flat = true;
                break;
            case LayerKind::Linear: {
                ++fc_idx;
                const std::string base = "fc" + std::to_string(fc_idx);
                TensorT<T> weight({l.out_features, c});
                const double std_dev = std::sqrt(2.0 / static_cast<double>(c));
                Rng rng(hash_mix(seed, static_cast<std::uint64_t>(param_idx++)));
                for (auto& v : weight.data) v = static_cast<T>(std_dev * rng.normal());
                params.tensors.push_back({base + ".weight", std::move(weight)});
                params.tensors.push_back({base + ".bias", TensorT<T>({l.out_features})});
                c = l.out_features;
                break;
            }
        }
    }
    (void)flat;
    return params;
}

template <typename T>
struct ForwardCacheT {
    bool valid = false;
    std::uint64_t params_version = 0;
    TensorT<T> input;                               // standardized input
    std::vector<TensorT<T>> outputs;                // per layer
    std::vector<std::vector<std::int32_t>> argmax;  // per layer (pools)
    std::vector<std::vector<std::uint8_t>> mfm_win; // per layer (mfm)
    int o1_layer = -1;
};

template <typename T>
struct NetOutputs {
    TensorT<T> o1;
    TensorT<T> o2;
    ForwardCacheT<T> cache;
};

template <typename T>
NetOutputs<T> net_forward(const NetConfig& cfg, const NetParamsT<T>& params,
                          const TensorT<T>& batch) {
    if (batch.rank() != 4 || batch.shape[1] != cfg.in_channels || batch.shape[2] != cfg.in_h ||
        batch.shape[3] != cfg.in_w)
        throw ConfigError("net: batch geometry " + batch.shape_str() + " does not match config");

    const auto info = cfg.walk_shapes();
    NetOutputs<T> out;
    auto& cache = out.cache;
    cache.valid = true;
    cache.params_version = params.version;
    cache.o1_layer = info.o1_layer;
    cache.argmax.resize(cfg.layers.size());
    cache.mfm_win.resize(cfg.layers.size());
    cache.outputs.reserve(cfg.layers.size());

    cache.input = batch;
    if (cfg.standardize_input) {
        const T scale = static_cast<T>(1.0 / 255.0);
        for (auto& v : cache.input.data) v *= scale;
    }

    const TensorT<T>* cur = &cache.input;
    int conv_idx = 0, fc_idx = 0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        TensorT<T> next;
        switch (l.kind) {
            case LayerKind::Conv: {
                ++conv_idx;
                const std::string base = "conv" + std::to_string(conv_idx);
                next = conv2d_forward(*cur, params.find(base + ".weight"),
                                      params.find(base + ".bias"), l.stride, l.pad);
                break;
            }
            case LayerKind::Pool: {
                auto r = maxpool2_forward(*cur);
                cache.argmax[i] = std::move(r.argmax);
                next = std::move(r.out);
                break;
            }
            case LayerKind::Mfm: {
                auto r = mfm_forward(*cur);
                cache.mfm_win[i] = std::move(r.first_wins);
                next = std::move(r.out);
                break;
            }
            case LayerKind::Flatten: {
                next = *cur;
                next.shape = {cur->shape[0],
                              static_cast<int>(cur->numel()) / cur->shape[0]};
                break;
            }
            case LayerKind::Linear: {
                ++fc_idx;
                const std::string base = "fc" + std::to_string(fc_idx);
                next = linear_forward(*cur, params.find(base + ".weight"),
                                      params.find(base + ".bias"));
                break;
            }
        }
        if (!all_finite(next))
            throw NumericError("net: non-finite activation after layer " + std::to_string(i));
        cache.outputs.push_back(std::move(next));
        cur = &cache.outputs.back();
    }
    out.o1 = cache.outputs[static_cast<std::size_t>(info.o1_layer)];
    out.o2 = cache.outputs.back();
    return out;
}

// Exact analytic gradients of (O1, O2) w.r.t. every parameter, composed with
// the upstream loss gradients d_o1/d_o2. The two head contributions sum where
// the feature vector feeds the final layer. Gradients are written into each
// parameter tensor's grad buffer (zeroed first).
template <typename T>
void net_backward(const NetConfig& cfg, NetParamsT<T>& params, const ForwardCacheT<T>& cache,
                  const TensorT<T>& d_o1, const TensorT<T>& d_o2) {
    if (!cache.valid) throw UsageError("net: backward without a forward cache");
    if (cache.params_version != params.version)
        throw UsageError("net: stale forward cache (parameters changed since forward)");
    const int n_layers = static_cast<int>(cfg.layers.size());
    if (static_cast<int>(cache.outputs.size()) != n_layers)
        throw UsageError("net: forward cache does not match config");
    if (d_o2.shape != cache.outputs.back().shape)
        throw UsageError("net: d_o2 shape mismatch");
    if (d_o1.shape != cache.outputs[static_cast<std::size_t>(cache.o1_layer)].shape)
        throw UsageError("net: d_o1 shape mismatch");

    for (auto& t : params.tensors) t.value.zero_grad();

    // Count conv/fc layers so the reverse walk can name parameters.
    int total_conv = 0, total_fc = 0;
    for (const auto& l : cfg.layers) {
        if (l.kind == LayerKind::Conv) ++total_conv;
        if (l.kind == LayerKind::Linear) ++total_fc;
    }

    auto grad_of = [&params](const std::string& name) -> TensorT<T>& {
        for (auto& t : params.tensors)
            if (t.name == name) return t.value;
        throw UsageError("net: no parameter named '" + name + "'");
    };

    TensorT<T> delta = d_o2;
    int conv_idx = total_conv, fc_idx = total_fc;
    for (int i = n_layers - 1; i >= 0; --i) {
        const auto& l = cfg.layers[static_cast<std::size_t>(i)];
        const TensorT<T>& in =
            (i == 0) ? cache.input : cache.outputs[static_cast<std::size_t>(i - 1)];
        TensorT<T> d_in;
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::string base = "conv" + std::to_string(conv_idx--);
                auto g = conv2d_backward(in, params.find(base + ".weight"), l.stride, l.pad, delta,
                                         /*need_d_input=*/i > 0);
                auto& wt = grad_of(base + ".weight");
                for (std::size_t k = 0; k < wt.grad.size(); ++k) wt.grad[k] += g.weight.data[k];
                auto& bt = grad_of(base + ".bias");
                for (std::size_t k = 0; k < bt.grad.size(); ++k) bt.grad[k] += g.bias.data[k];
                d_in = std::move(g.input);
                break;
            }
            case LayerKind::Pool:
                d_in = maxpool2_backward(cache.argmax[static_cast<std::size_t>(i)], in.shape, delta);
                break;
            case LayerKind::Mfm:
                d_in = mfm_backward(cache.mfm_win[static_cast<std::size_t>(i)], in.shape, delta);
                break;
            case LayerKind::Flatten:
                d_in = delta;
                d_in.shape = in.shape;
                break;
            case LayerKind::Linear: {
                const std::string base = "fc" + std::to_string(fc_idx--);
                auto g = linear_backward(in, params.find(base + ".weight"), delta);
                auto& wt = grad_of(base + ".weight");
                for (std::size_t k = 0; k < wt.grad.size(); ++k) wt.grad[k] += g.weight.data[k];
                auto& bt = grad_of(base + ".bias");
                for (std::size_t k = 0; k < bt.grad.size(); ++k) bt.grad[k] += g.bias.data[k];
                d_in = std::move(g.input);
                break;
            }
        }
        if (i == 0) break;
        delta = std::move(d_in);
        // the feature head joins the scalar head's path here
        if (i - 1 == cache.o1_layer)
            for (std::size_t k = 0; k < delta.numel(); ++k) delta.data[k] += d_o1.data[k];
    }
}

struct DegreeEstimate {
    double raw;       // O2 as regressed; may be negative or exceed 100
    double reported;  // max(raw, 0); values above 100 are legal
};

template <typename T>
DegreeEstimate infer_degree(const NetConfig& cfg, const NetParamsT<T>& params,
                            const TensorT<T>& crop) {
    auto out = net_forward(cfg, params, crop);
    const double raw = static_cast<double>(out.o2.data[0]);
    return {raw, raw > 0.0 ? raw : 0.0};
}

// Open iff the raw O2 exceeds the openness threshold (strict).
inline bool classify_open(double raw_degree, double ot) {
    if (ot <= 0) throw ConfigError("classify_open: threshold must be > 0");
    return raw_degree > ot;
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian, magic "EYED", version u32=1, config
// fingerprint u64, tensor count u32, then per tensor: name length u16 +
// UTF-8 name, rank u8, dims u32 each, raw 32-bit float data.

namespace detail {

inline void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
inline void put_u16(std::string& buf, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    put_bytes(buf, b, 2);
}
inline void put_u32(std::string& buf, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(buf, b, 4);
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(buf, b, 8);
}
inline void put_f32(std::string& buf, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(buf, u);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit ByteReader(const std::string& b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'E', 'Y', 'E', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
    std::string buf;
    detail::put_bytes(buf, kCheckpointMagic, 4);
    detail::put_u32(buf, kCheckpointVersion);
    detail::put_u64(buf, params.config_fingerprint);
    detail::put_u32(buf, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        if (t.name.size() > 0xffff) throw ConfigError("checkpoint: tensor name too long");
        detail::put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
        detail::put_bytes(buf, t.name.data(), t.name.size());
        buf.push_back(static_cast<char>(t.value.rank()));
        for (int d : t.value.shape) detail::put_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : t.value.data) detail::put_f32(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

inline NetParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(buf);
    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
        throw IoError("checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    NetParams params;
    params.config_fingerprint = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        NamedTensorT<float> t;
        t.name = r.str(name_len);
        r.need(1);
        const int rank = static_cast<std::uint8_t>(buf[r.pos]);
        r.pos += 1;
        if (rank < 1 || rank > 8) throw IoError("checkpoint: implausible tensor rank");
        std::vector<int> shape(static_cast<std::size_t>(rank));
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            if (d <= 0 || numel > (1u << 28)) throw IoError("checkpoint: implausible tensor shape");
            numel *= static_cast<std::size_t>(d);
        }
        t.value = TensorT<float>(shape);
        for (auto& v : t.value.data) v = r.f32();
        params.tensors.push_back(std::move(t));
    }
    if (r.pos != buf.size()) throw IoError("checkpoint: trailing bytes");
    return params;
}

inline NetParams load_checkpoint(const std::filesystem::path& path, const NetConfig& cfg) {
    NetParams params = load_checkpoint(path);
    if (params.config_fingerprint != cfg.fingerprint())
        throw ConfigError("checkpoint: config fingerprint mismatch (file written for a different net)");
    return params;
}

}  // namespace eyedeg

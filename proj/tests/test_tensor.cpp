#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <eyedeg/adam.hpp>
#include <eyedeg/gradcheck.hpp>
#include <eyedeg/ops.hpp>
#include <eyedeg/rng.hpp>
#include <eyedeg/tensor.hpp>

using namespace eyedeg;

namespace {

TensorT<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    TensorT<double> t(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

struct NamedParam {
    std::string name;
    TensorT<float> value;
};

}  // namespace

TEST_CASE("tensor shape and grad invariants") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK_FALSE(t.has_grad());
    t.attach_grad();
    CHECK(t.grad.size() == t.data.size());
    CHECK_THROWS_AS(Tensor({2, 0}), ConfigError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.f, 2.f, 3.f}), ConfigError);
}

TEST_CASE("conv2d forward hand values") {
    // identity 1x1 kernel
    TensorT<double> x({1, 1, 1, 1}, {2.0});
    TensorT<double> w({1, 1, 1, 1}, {1.0});
    TensorT<double> b({1}, {0.0});
    auto y = conv2d_forward(x, w, b, 1, 0);
    CHECK(y.data[0] == doctest::Approx(2.0));

    // all-ones 2x2 kernel plus bias: 1+2+3+4+0.5
    TensorT<double> x2({1, 1, 2, 2}, {1, 2, 3, 4});
    TensorT<double> w2 = TensorT<double>::full({1, 1, 2, 2}, 1.0);
    TensorT<double> b2({1}, {0.5});
    auto y2 = conv2d_forward(x2, w2, b2, 1, 0);
    CHECK(y2.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(y2.data[0] == doctest::Approx(10.5));

    // zero kernel -> bias everywhere
    Rng rng(7);
    auto x3 = random_tensor({2, 3, 5, 6}, rng);
    TensorT<double> w3({4, 3, 3, 3});
    TensorT<double> b3 = TensorT<double>::full({4}, -1.25);
    auto y3 = conv2d_forward(x3, w3, b3, 1, 1);
    for (double v : y3.data) CHECK(v == doctest::Approx(-1.25));

    // channel mismatch
    TensorT<double> wbad({4, 2, 3, 3});
    CHECK_THROWS_AS(conv2d_forward(x3, wbad, b3, 1, 1), ConfigError);
}

TEST_CASE("conv2d output geometry") {
    Rng rng(3);
    auto x = random_tensor({1, 1, 48, 128}, rng);
    auto w = random_tensor({16, 1, 5, 5}, rng);
    TensorT<double> b({16});
    auto y = conv2d_forward(x, w, b, 2, 2);
    CHECK(y.shape == std::vector<int>{1, 16, 24, 64});
}

TEST_CASE("conv2d backward hand values") {
    TensorT<double> x({1, 1, 1, 1}, {2.0});
    TensorT<double> w({1, 1, 1, 1}, {1.0});
    TensorT<double> dy({1, 1, 1, 1}, {1.0});
    auto g = conv2d_backward(x, w, 1, 0, dy);
    CHECK(g.weight.data[0] == doctest::Approx(2.0));
    CHECK(g.input.data[0] == doctest::Approx(1.0));
    CHECK(g.bias.data[0] == doctest::Approx(1.0));

    // zero upstream -> zero gradients
    TensorT<double> dz({1, 1, 1, 1}, {0.0});
    auto gz = conv2d_backward(x, w, 1, 0, dz);
    CHECK(gz.weight.data[0] == 0.0);
    CHECK(gz.input.data[0] == 0.0);
    CHECK(gz.bias.data[0] == 0.0);

    // mismatched d_out is a usage error
    TensorT<double> dbad({1, 1, 2, 2});
    CHECK_THROWS_AS(conv2d_backward(x, w, 1, 0, dbad), UsageError);
}

TEST_CASE("conv2d backward matches finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_tensor({1, 2, 5, 5}, rng);
        auto w = random_tensor({3, 2, 3, 3}, rng, 0.5);
        auto b = random_tensor({3}, rng, 0.1);
        const int stride = 1 + static_cast<int>(rng.below(2));
        const int pad = static_cast<int>(rng.below(2));
        auto y = conv2d_forward(x, w, b, stride, pad);
        auto dy = random_tensor(y.shape, rng);

        auto g = conv2d_backward(x, w, stride, pad, dy);
        auto loss_x = [&](const TensorT<double>& xv) {
            auto yv = conv2d_forward(xv, w, b, stride, pad);
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        auto loss_w = [&](const TensorT<double>& wv) {
            auto yv = conv2d_forward(x, wv, b, stride, pad);
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        auto loss_b = [&](const TensorT<double>& bv) {
            auto yv = conv2d_forward(x, w, bv, stride, pad);
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        CHECK(max_rel_err(g.input, finite_diff_grad(loss_x, x, 1e-3)) <= 1e-4);
        CHECK(max_rel_err(g.weight, finite_diff_grad(loss_w, w, 1e-3)) <= 1e-4);
        CHECK(max_rel_err(g.bias, finite_diff_grad(loss_b, b, 1e-3)) <= 1e-4);
    }
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng(21);
    auto x = random_tensor({1, 2, 6, 7}, rng);
    auto y = random_tensor({1, 2, 6, 7}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    TensorT<double> b({3});
    const double a = 1.7, c = -0.4;
    TensorT<double> mix({1, 2, 6, 7});
    for (std::size_t i = 0; i < mix.numel(); ++i) mix.data[i] = a * x.data[i] + c * y.data[i];
    auto lhs = conv2d_forward(mix, w, b, 1, 1);
    auto fx = conv2d_forward(x, w, b, 1, 1);
    auto fy = conv2d_forward(y, w, b, 1, 1);
    for (std::size_t i = 0; i < lhs.numel(); ++i)
        CHECK(lhs.data[i] == doctest::Approx(a * fx.data[i] + c * fy.data[i]).epsilon(1e-9));
}

TEST_CASE("maxpool2 forward") {
    TensorT<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
    auto r = maxpool2_forward(x);
    CHECK(r.out.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(r.out.data[0] == 4.0);
    CHECK(r.argmax[0] == 3);  // position (1,1)

    // constant input: tie toward the lowest linear index
    auto c = TensorT<double>::full({1, 2, 4, 4}, 5.0);
    auto rc = maxpool2_forward(c);
    for (double v : rc.out.data) CHECK(v == 5.0);
    CHECK(rc.argmax[0] == 0);
    CHECK(rc.argmax[1] == 2);

    // odd trailing row/column dropped
    TensorT<double> odd({1, 1, 5, 7});
    CHECK(maxpool2_forward(odd).out.shape == std::vector<int>{1, 1, 2, 3});

    TensorT<double> small({1, 1, 1, 4});
    CHECK_THROWS_AS(maxpool2_forward(small), ConfigError);
}

TEST_CASE("maxpool2 backward routes to argmax and matches finite differences") {
    TensorT<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
    auto r = maxpool2_forward(x);
    TensorT<double> dy({1, 1, 1, 1}, {2.5});
    auto dx = maxpool2_backward(r.argmax, x.shape, dy);
    CHECK(dx.data == std::vector<double>{0, 0, 0, 2.5});

    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto xi = random_tensor({2, 2, 4, 6}, rng);
        auto fwd = maxpool2_forward(xi);
        auto dyr = random_tensor(fwd.out.shape, rng);
        auto dxi = maxpool2_backward(fwd.argmax, xi.shape, dyr);
        auto loss = [&](const TensorT<double>& xv) {
            auto yv = maxpool2_forward(xv).out;
            return detail::dotk(yv.data.data(), dyr.data.data(), static_cast<int>(yv.numel()));
        };
        // finite differences are valid only away from pooling ties; random
        // normal draws make exact ties measure-zero
        CHECK(max_rel_err(dxi, finite_diff_grad(loss, xi, 1e-4)) <= 1e-4);
    }
}

TEST_CASE("linear forward hand values") {
    // identity weight, zero bias
    TensorT<double> x({1, 3}, {4, 5, 6});
    TensorT<double> eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    TensorT<double> z({3});
    auto y = linear_forward(x, eye, z);
    CHECK(y.data == x.data);

    // x=[1,2], W=[[3,4]], b=[5] -> 16
    TensorT<double> x2({1, 2}, {1, 2});
    TensorT<double> w2({1, 2}, {3, 4});
    TensorT<double> b2({1}, {5});
    CHECK(linear_forward(x2, w2, b2).data[0] == doctest::Approx(16.0));

    TensorT<double> wbad({1, 3});
    CHECK_THROWS_AS(linear_forward(x2, wbad, b2), ConfigError);
}

TEST_CASE("linear backward matches finite differences") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_tensor({3, 5}, rng);
        auto w = random_tensor({4, 5}, rng);
        auto b = random_tensor({4}, rng);
        auto y = linear_forward(x, w, b);
        auto dy = random_tensor(y.shape, rng);
        auto g = linear_backward(x, w, dy);
        auto lx = [&](const TensorT<double>& v) {
            auto yv = linear_forward(v, w, b);
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        auto lw = [&](const TensorT<double>& v) {
            auto yv = linear_forward(x, v, b);
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        CHECK(max_rel_err(g.input, finite_diff_grad(lx, x, 1e-3)) <= 1e-4);
        CHECK(max_rel_err(g.weight, finite_diff_grad(lw, w, 1e-3)) <= 1e-4);
    }
}

TEST_CASE("mfm forward & backward") {
    // C=1: halves 1 and 3 -> 3
    TensorT<double> x({1, 2, 1, 1}, {1, 3});
    auto r = mfm_forward(x);
    CHECK(r.out.data[0] == 3.0);
    CHECK(r.first_wins[0] == 0);

    // identical halves -> first half wins (tie rule)
    TensorT<double> t({1, 4}, {2, 5, 2, 5});
    auto rt = mfm_forward(t);
    CHECK(rt.out.data == std::vector<double>{2, 5});
    CHECK(rt.first_wins[0] == 1);
    TensorT<double> dy({1, 2}, {1.0, -2.0});
    auto dx = mfm_backward(rt.first_wins, t.shape, dy);
    CHECK(dx.data == std::vector<double>{1.0, -2.0, 0.0, 0.0});

    TensorT<double> oddc({1, 3, 2, 2});
    CHECK_THROWS_AS(mfm_forward(oddc), ConfigError);
}

TEST_CASE("mfm output dominates both halves and equals one of them") {
    Rng rng(51);
    auto x = random_tensor({2, 6, 3, 4}, rng);
    auto r = mfm_forward(x);
    const int C = 3;
    const std::size_t plane = 12;
    const std::size_t half = C * plane;
    std::size_t oi = 0;
    for (int n = 0; n < 2; ++n) {
        const double* base = x.data.data() + static_cast<std::size_t>(n) * 2 * half;
        for (std::size_t i = 0; i < half; ++i, ++oi) {
            const double a = base[i], b = base[half + i];
            CHECK(r.out.data[oi] >= a);
            CHECK(r.out.data[oi] >= b);
            CHECK((r.out.data[oi] == a || r.out.data[oi] == b));
        }
    }
}

TEST_CASE("mfm backward matches finite differences off ties") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_tensor({2, 4, 3, 3}, rng);
        auto fwd = mfm_forward(x);
        auto dy = random_tensor(fwd.out.shape, rng);
        auto dx = mfm_backward(fwd.first_wins, x.shape, dy);
        auto loss = [&](const TensorT<double>& v) {
            auto yv = mfm_forward(v).out;
            return detail::dotk(yv.data.data(), dy.data.data(), static_cast<int>(yv.numel()));
        };
        CHECK(max_rel_err(dx, finite_diff_grad(loss, x, 1e-4)) <= 1e-4);
    }
}

TEST_CASE("kernels are pure: same inputs give bit-identical outputs") {
    Rng rng(71);
    auto x = random_tensor({2, 2, 6, 8}, rng);
    auto w = random_tensor({4, 2, 3, 3}, rng);
    auto b = random_tensor({4}, rng);
    auto y1 = conv2d_forward(x, w, b, 1, 1);
    auto y2 = conv2d_forward(x, w, b, 1, 1);
    CHECK(y1.data == y2.data);
    auto p1 = maxpool2_forward(y1);
    auto p2 = maxpool2_forward(y1);
    CHECK(p1.out.data == p2.out.data);
    CHECK(p1.argmax == p2.argmax);
}

TEST_CASE("adam hand-checked step") {
    // zero gradient -> params unchanged
    std::vector<NamedParam> params;
    params.push_back({"p", TensorT<float>({1}, {3.0f})});
    params[0].value.attach_grad();
    auto st = init_adam<float>(params);
    AdamConfig cfg;
    adam_step(params, st, cfg);
    CHECK(params[0].value.data[0] == 3.0f);
    CHECK(st.step == 1);

    // scalar param, g=1, step 1, lr=0.1 -> decreases by ~0.1
    std::vector<NamedParam> p2;
    p2.push_back({"w", TensorT<float>({1}, {0.5f})});
    p2[0].value.attach_grad();
    p2[0].value.grad[0] = 1.0f;
    auto st2 = init_adam<float>(p2);
    AdamConfig c2;
    c2.lr = 0.1;
    adam_step(p2, st2, c2);
    CHECK(p2[0].value.data[0] == doctest::Approx(0.4).epsilon(1e-4));

    // non-finite gradient -> training error naming the step
    p2[0].value.grad[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(p2, st2, c2), NumericError);
}

TEST_CASE("adam repeated runs are bit-identical") {
    auto run = [] {
        Rng rng(99);
        std::vector<NamedParam> params;
        params.push_back({"w", TensorT<float>({8})});
        for (auto& v : params[0].value.data) v = static_cast<float>(rng.normal());
        params[0].value.attach_grad();
        auto st = init_adam<float>(params);
        AdamConfig cfg;
        cfg.lr = 0.01;
        for (int i = 0; i < 50; ++i) {
            for (std::size_t j = 0; j < 8; ++j)
                params[0].value.grad[j] = static_cast<float>(rng.normal());
            adam_step(params, st, cfg);
        }
        return params[0].value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("finite_diff_grad oracle sanity") {
    // f(x) = x^2 at x=3 -> 6
    TensorT<double> p({1}, {3.0});
    auto g = finite_diff_grad([](const TensorT<double>& x) { return x.data[0] * x.data[0]; }, p, 1e-3);
    CHECK(g.data[0] == doctest::Approx(6.0).epsilon(1e-6));

    // constant f -> zero
    auto gz = finite_diff_grad([](const TensorT<double>&) { return 42.0; }, p, 1e-3);
    CHECK(gz.data[0] == 0.0);

    // f = sum(x) -> all ones
    TensorT<double> q({4}, {1, -2, 3, 0.5});
    auto gs = finite_diff_grad(
        [](const TensorT<double>& x) {
            double s = 0;
            for (double v : x.data) s += v;
            return s;
        },
        q, 1e-3);
    for (double v : gs.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(finite_diff_grad([](const TensorT<double>&) { return 1.0; }, p, 0.0), ConfigError);
}

TEST_CASE("rng determinism and per-sample independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(hash_mix(1, 2) != hash_mix(2, 1));
    // permutation is a bijection
    Rng c(5);
    auto p = c.permutation(100);
    std::vector<bool> seen(100, false);
    for (int v : p) {
        CHECK_FALSE(seen[static_cast<std::size_t>(v)]);
        seen[static_cast<std::size_t>(v)] = true;
    }
}

#include "doctest.h"

#include "gccpm/gradcheck.hpp"
#include "gccpm/ops.hpp"
#include "gccpm/optim.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace gccpm;

namespace {

ConvSpec plain(int cin, int cout, int kh, int kw, int dilation = 1)
{
    ConvSpec s;
    s.in_channels = cin;
    s.out_channels = cout;
    s.kernel = {kh, kw};
    s.dilation = dilation;
    s.has_bias = false;
    return s;
}

template <class T>
double max_abs_diff(const basic_tensor<T>& a, const basic_tensor<T>& b)
{
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

} // namespace

TEST_CASE("conv2d: sum of nine ones")
{
    Tensor x({1, 1, 3, 3}, 1.0f);
    Tensor w({1, 1, 3, 3}, 1.0f);
    auto y = conv2d(x, w, std::nullopt, plain(1, 1, 3, 3));
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0f);
}

TEST_CASE("conv2d: dilated row kernel")
{
    Tensor x({1, 1, 1, 5}, std::vector<float>{1, 2, 3, 4, 5});
    Tensor w({1, 1, 1, 3}, 1.0f);
    auto y = conv2d(x, w, std::nullopt, plain(1, 1, 1, 3, 2));
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0f);
}

TEST_CASE("conv2d: identity 1x1 kernel and bias")
{
    std::mt19937_64 rng(3);
    auto x = oracle::random_tensor<float>({2, 1, 5, 4}, rng);
    auto y = conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), std::nullopt, plain(1, 1, 1, 1));
    CHECK(max_abs_diff(x, y) == 0.0);

    auto s = plain(1, 1, 1, 1);
    s.has_bias = true;
    auto yb = conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), std::optional(Tensor({1}, 0.5f)), s);
    CHECK(yb.data()[3] == doctest::Approx(x.data()[3] + 0.5f));
}

TEST_CASE("conv2d: errors")
{
    Tensor x({1, 2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 3, 3, 3}), std::nullopt, plain(3, 1, 3, 3)), Error);
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 5, 5}), std::nullopt, plain(2, 1, 5, 5)), Error);
    auto s = plain(2, 3, 1, 1);
    s.groups = 2;
    CHECK_THROWS_AS(s.validate(), Error);
    CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), Tensor({1, 2, 1, 1}), std::nullopt, plain(2, 1, 1, 1)), Error);
}

TEST_CASE("conv2d matches the looped oracle for random specs in both precisions")
{
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        ConvSpec s;
        s.groups = std::uniform_int_distribution<int>(1, 3)(rng);
        s.in_channels = s.groups * std::uniform_int_distribution<int>(1, 3)(rng);
        s.out_channels = s.groups * std::uniform_int_distribution<int>(1, 3)(rng);
        s.kernel = {std::uniform_int_distribution<int>(1, 3)(rng), std::uniform_int_distribution<int>(1, 3)(rng)};
        s.stride = {std::uniform_int_distribution<int>(1, 2)(rng), std::uniform_int_distribution<int>(1, 2)(rng)};
        s.dilation = std::uniform_int_distribution<int>(1, 3)(rng);
        s.padding = {std::uniform_int_distribution<int>(0, 2)(rng), std::uniform_int_distribution<int>(0, 2)(rng)};
        s.has_bias = trial % 2 == 0;
        const int h = 7 + trial % 3, w = 6 + trial % 4;
        auto x = oracle::random_tensor<double>({2, s.in_channels, h, w}, rng);
        auto wt = oracle::random_tensor<double>(s.weight_shape(), rng);
        const auto [ho, wo] = s.output_size(h, w);
        if (ho <= 0 || wo <= 0) {
            CHECK_THROWS_AS(conv2d(x, wt, std::nullopt, s), Error);
            continue;
        }
        std::optional<Tensor64> b;
        if (s.has_bias)
            b = oracle::random_tensor<double>({s.out_channels}, rng);
        CHECK(max_abs_diff(conv2d(x, wt, b, s), oracle::loop_conv(x, wt, b, s)) < 1e-12);

        auto xf = cast<float>(x);
        auto wf = cast<float>(wt);
        std::optional<Tensor> bf;
        if (b)
            bf = cast<float>(*b);
        CHECK(max_abs_diff(conv2d(xf, wf, bf, s), oracle::loop_conv(xf, wf, bf, s)) < 1e-5);
    }
}

TEST_CASE("dilated conv equals conv with zero-inserted kernel")
{
    std::mt19937_64 rng(5);
    for (int r : {2, 3, 4}) {
        for (int size = 5; size <= 9; ++size) {
            auto s = plain(2, 3, 3, 2, r);
            auto x = oracle::random_tensor<double>({1, 2, size + 4, size + 3}, rng);
            auto w = oracle::random_tensor<double>(s.weight_shape(), rng);
            auto dense = oracle::zero_insert(w, r);
            auto ds = plain(2, 3, dense.dim(2), dense.dim(3));
            CHECK(max_abs_diff(conv2d(x, w, std::nullopt, s), conv2d(x, dense, std::nullopt, ds)) <= 1e-12);
        }
    }
}

TEST_CASE("depthwise conv equals independent per-channel convolution")
{
    std::mt19937_64 rng(9);
    ConvSpec s = plain(4, 4, 3, 3, 2);
    s.groups = 4;
    s.padding = ConvSpec::same_padding(s.kernel, s.dilation);
    auto x = oracle::random_tensor<double>({2, 4, 8, 8}, rng);
    auto w = oracle::random_tensor<double>(s.weight_shape(), rng);
    auto y = conv2d(x, w, std::nullopt, s);
    for (int c = 0; c < 4; ++c) {
        Tensor64 xc({2, 1, 8, 8}), wc({1, 1, 3, 3});
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 64; ++i)
                xc.mutable_data()[n * 64 + i] = x.data()[(n * 4 + c) * 64 + i];
        for (int i = 0; i < 9; ++i)
            wc.mutable_data()[i] = w.data()[c * 9 + i];
        ConvSpec single = plain(1, 1, 3, 3, 2);
        single.padding = s.padding;
        auto yc = oracle::loop_conv(xc, wc, std::optional<Tensor64>{}, single);
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 64; ++i)
                CHECK(y.data()[(n * 4 + c) * 64 + i] == doctest::Approx(yc.data()[n * 64 + i]).epsilon(1e-12));
    }
}

TEST_CASE("output size arithmetic matches the closed form over a grid")
{
    for (int in = 1; in <= 12; ++in)
        for (int k = 1; k <= 4; ++k)
            for (int s = 1; s <= 3; ++s)
                for (int r = 1; r <= 3; ++r)
                    for (int p = 0; p <= 3; ++p) {
                        ConvSpec spec = plain(1, 1, k, k, r);
                        spec.stride = {s, s};
                        spec.padding = {p, p};
                        const int num = in + 2 * p - r * (k - 1) - 1;
                        const int expected = num < 0 ? 0 : num / s + 1;
                        CHECK(spec.output_size(in, in).first == expected);
                        if (expected > 0) {
                            auto y = conv2d(Tensor({1, 1, in, in}, 1.0f), Tensor({1, 1, k, k}, 1.0f), std::nullopt, spec);
                            CHECK(y.dim(2) == expected);
                        } else {
                            CHECK_THROWS_AS(conv2d(Tensor({1, 1, in, in}), Tensor({1, 1, k, k}), std::nullopt, spec),
                                            Error);
                        }
                    }
}

TEST_CASE("pooling examples")
{
    CHECK(pool2d(Tensor({1, 1, 2, 2}, 1.0f), PoolKind::avg, {2, 2}, {2, 2}).item() == 1.0f);
    CHECK(pool2d(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}), PoolKind::max, {2, 2}, {2, 2}).item() == 4.0f);
    CHECK_THROWS_AS(pool2d(Tensor({1, 1, 2, 2}), PoolKind::max, {3, 3}, {1, 1}), Error);

    std::mt19937_64 rng(1);
    auto x = oracle::random_tensor<double>({1, 2, 32, 32}, rng);
    auto y = pool2d(x, PoolKind::avg, {16, 16}, {16, 16});
    REQUIRE(y.shape() == Shape{1, 2, 2, 2});
    for (int c = 0; c < 2; ++c)
        for (int bi = 0; bi < 2; ++bi)
            for (int bj = 0; bj < 2; ++bj) {
                double acc = 0;
                for (int i = 0; i < 16; ++i)
                    for (int j = 0; j < 16; ++j)
                        acc += x.at(0, c, bi * 16 + i, bj * 16 + j);
                CHECK(y.at(0, c, bi, bj) == doctest::Approx(acc / 256.0).epsilon(1e-12));
            }
}

TEST_CASE("max pool gradient goes to the first maximal index")
{
    Tensor64 x({1, 1, 2, 2}, std::vector<double>{3, 3, 1, 3});
    x.set_requires_grad(true);
    backward(sum(pool2d(x, PoolKind::max, {2, 2}, {2, 2})));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("upsample examples")
{
    Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    auto y = upsample(x, 2, UpsampleMode::nearest);
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) ==
          std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    CHECK(max_abs_diff(upsample(x, 1, UpsampleMode::bilinear), x) == 0.0);
    auto c = upsample(Tensor({1, 2, 3, 3}, 0.7f), 2, UpsampleMode::bilinear);
    for (float v : c.data())
        CHECK(v == doctest::Approx(0.7f));
    // align_corners=false: the first output sample sits at source -0.25, clamped to 0.
    auto b = upsample(Tensor({1, 1, 1, 2}, std::vector<float>{0, 4}), 2, UpsampleMode::bilinear);
    CHECK(std::vector<float>(b.data().begin(), b.data().end()) == std::vector<float>{0, 1, 3, 4, 0, 1, 3, 4});
    CHECK_THROWS_AS(upsample(x, 0, UpsampleMode::nearest), Error);
}

TEST_CASE("concat examples")
{
    auto y = concat<float>({Tensor({1, 2, 4, 4}), Tensor({1, 2, 4, 4})}, 1);
    CHECK(y.shape() == Shape{1, 4, 4, 4});
    Tensor one({1, 3, 2, 2}, 1.0f);
    CHECK(concat<float>({one}, 1).impl() == one.impl());
    auto z = concat<float>({Tensor({1, 32, 2, 2}), Tensor({1, 32, 2, 2}), Tensor({1, 64, 2, 2})}, 1);
    CHECK(z.dim(1) == 128);
    CHECK_THROWS_AS(concat<float>({Tensor({1, 2, 4, 4}), Tensor({1, 2, 3, 4})}, 1), Error);
}

TEST_CASE("elementwise examples")
{
    Tensor x({3}, std::vector<float>{-1, 0, 2});
    auto r = relu(x);
    CHECK(std::vector<float>(r.data().begin(), r.data().end()) == std::vector<float>{0, 0, 2});
    CHECK(max_abs_diff(add(x, Tensor({3})), x) == 0.0);
    auto a = add(relu(x), relu(scale(x, -1.0f)));
    CHECK(std::vector<float>(a.data().begin(), a.data().end()) == std::vector<float>{1, 0, 2});
    CHECK_THROWS_AS(add(x, Tensor({4})), Error);

    Tensor64 z({3}, std::vector<double>{-1, 0, 2});
    z.set_requires_grad(true);
    backward(sum(relu(z)));
    CHECK(std::vector<double>(z.grad().begin(), z.grad().end()) == std::vector<double>{0, 0, 1});
}

TEST_CASE("backward examples")
{
    Tensor64 w({3}, std::vector<double>{1, -2, 3});
    Tensor64 x({3}, std::vector<double>{4, 5, 6});
    w.set_requires_grad(true);
    backward(sum(mul(w, x)));
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{4, 5, 6});
    w.zero_grad();
    backward(sum(mul(w, w)));
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{2, -4, 6});
    // Leaves accumulate across calls.
    backward(sum(mul(w, w)));
    CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{4, -8, 12});
    CHECK_THROWS_AS(backward(mul(w, w)), Error);
}

TEST_CASE("finite difference check on linear and nonlinear closures")
{
    std::mt19937_64 rng(2);
    auto a = oracle::random_tensor<double>({4, 3}, rng).set_requires_grad(true);
    auto c = oracle::random_tensor<double>({4, 3}, rng);
    std::function<Tensor64(const std::vector<Tensor64>&)> linear = [c](const auto& in) { return sum(mul(in[0], c)); };
    CHECK(finite_diff_check(linear, {a}) < 1e-8);
}

TEST_CASE("every differentiable operator passes finite differences in 64-bit")
{
    std::mt19937_64 rng(1234);
    for (int round = 0; round < 10; ++round) {
        for (auto& gc : oracle::gradient_cases(rng)) {
            const double err = finite_diff_check<double>(gc.fn, gc.inputs);
            INFO(gc.name, " round ", round);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("forward is bit-deterministic")
{
    std::mt19937_64 rng(8);
    ConvSpec s = plain(3, 5, 3, 3, 2);
    s.padding = ConvSpec::same_padding(s.kernel, 2);
    auto x = oracle::random_tensor<float>({2, 3, 17, 17}, rng);
    auto w = oracle::random_tensor<float>(s.weight_shape(), rng);
    auto y1 = conv2d(x, w, std::nullopt, s);
    auto y2 = conv2d(x, w, std::nullopt, s);
    CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

TEST_CASE("adam examples")
{
    AdamConfig cfg;
    cfg.lr = 1e-2;
    {
        std::vector<Tensor64> p{Tensor64({3}, std::vector<double>{1, 2, 3})};
        p[0].set_requires_grad(true);
        p[0].mutable_grad();
        AdamState<double> st;
        adam_step(p, st, cfg);
        CHECK(std::vector<double>(p[0].data().begin(), p[0].data().end()) == std::vector<double>{1, 2, 3});
        CHECK(st.step == 1);
    }
    {
        std::vector<Tensor64> p{Tensor64({3}, std::vector<double>{1, 2, 3})};
        p[0].set_requires_grad(true);
        auto g = p[0].mutable_grad();
        g[0] = 0.5;
        g[1] = -3.0;
        g[2] = 1e-3;
        AdamState<double> st;
        adam_step(p, st, cfg);
        // m_hat = g and v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps).
        CHECK(p[0].data()[0] == doctest::Approx(1 - cfg.lr).epsilon(1e-7));
        CHECK(p[0].data()[1] == doctest::Approx(2 + cfg.lr).epsilon(1e-7));
        CHECK(p[0].data()[2] == doctest::Approx(3 - cfg.lr).epsilon(1e-5));
    }
    {
        std::vector<Tensor64> p{Tensor64({1}, 1.0)};
        p[0].set_requires_grad(true);
        AdamState<double> st;
        double prev = 1.0;
        for (int i = 0; i < 2; ++i) {
            p[0].mutable_grad()[0] = 0.3;
            adam_step(p, st, cfg);
            CHECK(p[0].data()[0] < prev);
            prev = p[0].data()[0];
        }
    }
}

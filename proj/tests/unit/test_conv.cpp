#include <doctest.h>

#include "a3d2/conv.hpp"
#include "reference_ops.hpp"

using namespace a3d2;

namespace {

template <typename T>
void check_exact(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape == b.shape);
    for (size_t i = 0; i < a.numel(); ++i) {
        REQUIRE(a.data[i] == b.data[i]);
    }
}

ConvSpec random_spec(std::mt19937_64& rng, bool dilated) {
    std::uniform_int_distribution<int> s(1, 2), p(0, 2), d(1, dilated ? 2 : 1);
    ConvSpec spec;
    spec.stride_h = s(rng);
    spec.stride_w = s(rng);
    spec.pad_h = p(rng);
    spec.pad_w = p(rng);
    spec.dil_h = d(rng);
    spec.dil_w = d(rng);
    return spec;
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity kernel") {
    std::mt19937_64 rng(1);
    auto x = random_uniform<double>({2, 1, 4, 5}, rng);
    Tensor64 w({1, 1, 1, 1}, {1.0});
    Tensor64 b({1});
    check_exact(conv2d_forward(x, w, b, ConvSpec{}), x);
}

TEST_CASE("conv2d: all-ones 2x2 kernel sums the window") {
    Tensor64 x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor64 w = Tensor64::full({1, 1, 2, 2}, 1.0);
    Tensor64 b({1});
    const Tensor64 y = conv2d_forward(x, w, b, ConvSpec{});
    REQUIRE(y.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(y.data[0] == 10.0);
}

TEST_CASE("conv2d: stem geometry 448 -> 224") {
    std::mt19937_64 rng(2);
    auto x = random_uniform<float>({2, 3, 448, 448}, rng);
    auto w = random_uniform<float>({64, 3, 7, 7}, rng);
    auto b = random_uniform<float>({64}, rng);
    const auto y = conv2d_forward(x, w, b, ConvSpec::hw(2, 3));
    CHECK(y.shape == std::vector<int>{2, 64, 224, 224});
}

TEST_CASE("conv2d: shape errors name the offending dim") {
    std::mt19937_64 rng(3);
    auto x = random_uniform<double>({1, 3, 4, 4}, rng);
    auto w = random_uniform<double>({2, 4, 3, 3}, rng);
    Tensor64 b({2});
    CHECK_THROWS_WITH_AS(conv2d_forward(x, w, b, ConvSpec::hw(1, 1)),
                         doctest::Contains("channel dim"), std::invalid_argument);
    auto w2 = random_uniform<double>({2, 3, 7, 7}, rng);
    Tensor64 b2({2});
    CHECK_THROWS_WITH_AS(conv2d_forward(x, w2, b2, ConvSpec{}), doctest::Contains("axis H"),
                         std::invalid_argument);
}

TEST_CASE("conv2d: float64 matches the naive oracle exactly") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> dim(1, 12), ch(1, 4), k(1, 3);
    for (int it = 0; it < 30; ++it) {
        const int kh = k(rng), kw = k(rng);
        const int h = std::max(dim(rng), kh), w = std::max(dim(rng), kw);
        auto x = random_uniform<double>({ch(rng), ch(rng), h, w}, rng);
        auto wt = random_uniform<double>({ch(rng), x.dim(1), kh, kw}, rng);
        auto b = random_uniform<double>({wt.dim(0)}, rng);
        const ConvSpec spec = random_spec(rng, true);
        if (h + 2 * spec.pad_h < spec.dil_h * (kh - 1) + 1) continue;
        if (w + 2 * spec.pad_w < spec.dil_w * (kw - 1) + 1) continue;
        check_exact(conv2d_forward(x, wt, b, spec), ref::conv2d(x, wt, b, spec));
    }
}

TEST_CASE("conv2d: float32 GEMM path agrees with the float64 path") {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 10; ++it) {
        auto x64 = random_uniform<double>({2, 3, 9, 8}, rng);
        auto w64 = random_uniform<double>({4, 3, 3, 3}, rng);
        auto b64 = random_uniform<double>({4}, rng);
        const ConvSpec spec = random_spec(rng, true);
        if (9 + 2 * spec.pad_h < spec.dil_h * 2 + 1) continue;
        const auto y64 = conv2d_forward(x64, w64, b64, spec);
        const auto y32 =
            conv2d_forward(x64.cast<float>(), w64.cast<float>(), b64.cast<float>(), spec);
        REQUIRE(y32.shape == y64.shape);
        for (size_t i = 0; i < y64.numel(); ++i) {
            CHECK(std::abs(y32.data[i] - y64.data[i]) <
                  1e-4 * std::max(1.0, std::abs(y64.data[i])));
        }
    }
}

TEST_CASE("conv2d backward: zero grad and identity kernel cases") {
    std::mt19937_64 rng(6);
    auto x = random_uniform<double>({1, 2, 5, 5}, rng);
    auto w = random_uniform<double>({3, 2, 3, 3}, rng);
    const ConvSpec spec = ConvSpec::hw(1, 1);

    GradPair<double> g = conv2d_backward(x, w, spec, Tensor64({1, 3, 5, 5}));
    for (double v : g.input_grad.data) CHECK(v == 0.0);
    for (double v : g.param_grads.at("weight").data) CHECK(v == 0.0);
    for (double v : g.param_grads.at("bias").data) CHECK(v == 0.0);

    Tensor64 wid({1, 1, 1, 1}, {1.0});
    auto x1 = random_uniform<double>({2, 1, 4, 4}, rng);
    auto gy = random_uniform<double>({2, 1, 4, 4}, rng);
    check_exact(conv2d_backward(x1, wid, ConvSpec{}, gy).input_grad, gy);
}

TEST_CASE("conv2d backward: float32 GEMM path agrees with float64") {
    std::mt19937_64 rng(7);
    auto x64 = random_uniform<double>({2, 3, 7, 7}, rng);
    auto w64 = random_uniform<double>({4, 3, 3, 3}, rng);
    auto gy64 = random_uniform<double>({2, 4, 4, 4}, rng);
    const ConvSpec spec = ConvSpec::hw(2, 1);
    const auto g64 = conv2d_backward(x64, w64, spec, gy64);
    const auto g32 = conv2d_backward(x64.cast<float>(), w64.cast<float>(), spec, gy64.cast<float>());
    auto close = [](const Tensor<float>& a, const Tensor64& b) {
        REQUIRE(a.shape == b.shape);
        for (size_t i = 0; i < a.numel(); ++i) {
            CHECK(std::abs(a.data[i] - b.data[i]) < 1e-4 * std::max(1.0, std::abs(b.data[i])));
        }
    };
    close(g32.input_grad, g64.input_grad);
    close(g32.param_grads.at("weight"), g64.param_grads.at("weight"));
    close(g32.param_grads.at("bias"), g64.param_grads.at("bias"));
}

TEST_CASE("conv3d: fusion-layer shape and zero kernel") {
    std::mt19937_64 rng(8);
    ConvSpec spec;
    spec.pad_h = spec.pad_w = 1;
    auto x = random_uniform<float>({1, 1, 3, 448, 448}, rng);
    auto w = random_uniform<float>({16, 1, 3, 3, 3}, rng);
    auto b = random_uniform<float>({16}, rng);
    CHECK(conv3d_forward(x, w, b, spec).shape == std::vector<int>{1, 16, 1, 448, 448});

    auto x2 = random_uniform<double>({1, 2, 3, 4, 4}, rng);
    Tensor64 w0({2, 2, 3, 3, 3});
    Tensor64 b0({2});
    for (double v : conv3d_forward(x2, w0, b0, spec).data) CHECK(v == 0.0);
}

TEST_CASE("conv3d: float64 matches the naive oracle exactly") {
    std::mt19937_64 rng(9);
    auto x = random_uniform<double>({1, 1, 5, 6, 6}, rng);
    auto w = random_uniform<double>({2, 1, 5, 3, 3}, rng);
    auto b = random_uniform<double>({2}, rng);
    ConvSpec spec;
    check_exact(conv3d_forward(x, w, b, spec), ref::conv3d(x, w, b, spec));

    std::uniform_int_distribution<int> d(3, 6), k(1, 3);
    for (int it = 0; it < 15; ++it) {
        ConvSpec s2;
        s2.pad_h = s2.pad_w = 1;
        const int kd = k(rng);
        auto x2 = random_uniform<double>({1, 2, std::max(d(rng), kd), d(rng), d(rng)}, rng);
        auto w2 = random_uniform<double>({2, 2, kd, 3, 3}, rng);
        auto b2 = random_uniform<double>({2}, rng);
        check_exact(conv3d_forward(x2, w2, b2, s2), ref::conv3d(x2, w2, b2, s2));
    }
}

TEST_CASE("conv3d backward: zero grad and 1x1x1 identity") {
    std::mt19937_64 rng(10);
    auto x = random_uniform<double>({1, 1, 3, 4, 4}, rng);
    auto w = random_uniform<double>({2, 1, 3, 3, 3}, rng);
    ConvSpec spec;
    spec.pad_h = spec.pad_w = 1;
    GradPair<double> g = conv3d_backward(x, w, spec, Tensor64({1, 2, 1, 4, 4}));
    for (double v : g.input_grad.data) CHECK(v == 0.0);
    for (double v : g.param_grads.at("weight").data) CHECK(v == 0.0);

    Tensor64 wid({1, 1, 1, 1, 1}, {1.0});
    auto gy = random_uniform<double>({1, 1, 3, 4, 4}, rng);
    check_exact(conv3d_backward(x, wid, ConvSpec{}, gy).input_grad, gy);
}

TEST_CASE("conv_transpose2d: scatter example and shape arithmetic") {
    Tensor64 x({1, 1, 1, 1}, {5.0});
    Tensor64 w = Tensor64::full({1, 1, 2, 2}, 1.0);
    Tensor64 b({1});
    ConvSpec spec;
    spec.stride_h = spec.stride_w = 2;
    const Tensor64 y = conv_transpose2d_forward(x, w, b, spec);
    REQUIRE(y.shape == std::vector<int>{1, 1, 2, 2});
    for (double v : y.data) CHECK(v == 5.0);

    std::mt19937_64 rng(11);
    auto x2 = random_uniform<float>({1, 2, 112, 112}, rng);
    auto w2 = random_uniform<float>({2, 2, 3, 3}, rng);
    auto b2 = random_uniform<float>({2}, rng);
    CHECK(conv_transpose2d_forward(x2, w2, b2, ConvSpec::transposed(2, 1, 0)).dim(2) == 223);
    CHECK(conv_transpose2d_forward(x2, w2, b2, ConvSpec::transposed(2, 1, 1)).dim(2) == 224);
}

TEST_CASE("conv_transpose2d: adjoint of conv2d_backward input grad") {
    std::mt19937_64 rng(12);
    for (int it = 0; it < 10; ++it) {
        const ConvSpec spec = random_spec(rng, true);
        auto x = random_uniform<double>({2, 3, 9, 9}, rng);
        auto w = random_uniform<double>({4, 3, 3, 3}, rng);
        if (9 + 2 * spec.pad_h < spec.dil_h * 2 + 1 || 9 + 2 * spec.pad_w < spec.dil_w * 2 + 1)
            continue;
        const Tensor64 y = conv2d_forward(x, w, Tensor64({4}), spec);
        const auto gy = random_uniform<double>(y.shape, rng);
        const Tensor64 via_backward = conv2d_backward(x, w, spec, gy).input_grad;
        const Tensor64 via_transpose = conv_transpose2d_forward(gy, w, Tensor64({3}), spec);
        REQUIRE(via_backward.shape == via_transpose.shape);
        for (size_t i = 0; i < via_backward.numel(); ++i) {
            CHECK(std::abs(via_backward.data[i] - via_transpose.data[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv_transpose2d: float64 matches the adjoint oracle exactly") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> dim(1, 8), ch(1, 3), k(1, 3), st(1, 2), op(0, 1);
    for (int it = 0; it < 20; ++it) {
        ConvSpec spec;
        spec.stride_h = st(rng);
        spec.stride_w = st(rng);
        spec.pad_h = op(rng);
        spec.pad_w = op(rng);
        spec.out_pad_h = spec.stride_h > 1 ? op(rng) : 0;
        spec.out_pad_w = spec.stride_w > 1 ? op(rng) : 0;
        const int kh = std::max(k(rng), spec.pad_h + 1), kw = std::max(k(rng), spec.pad_w + 1);
        auto x = random_uniform<double>({ch(rng), ch(rng), dim(rng), dim(rng)}, rng);
        auto w = random_uniform<double>({x.dim(1), ch(rng), kh, kw}, rng);
        auto b = random_uniform<double>({w.dim(1)}, rng);
        if ((x.dim(2) - 1) * spec.stride_h - 2 * spec.pad_h + kh < 1) continue;
        if ((x.dim(3) - 1) * spec.stride_w - 2 * spec.pad_w + kw < 1) continue;
        check_exact(conv_transpose2d_forward(x, w, b, spec), ref::conv_transpose2d(x, w, b, spec));
    }
}

TEST_CASE("conv_transpose2d backward: float32 path agrees with float64") {
    std::mt19937_64 rng(14);
    auto x64 = random_uniform<double>({2, 4, 5, 5}, rng);
    auto w64 = random_uniform<double>({4, 3, 3, 3}, rng);
    const ConvSpec spec = ConvSpec::transposed(2, 1, 1);
    auto y64 = conv_transpose2d_forward(x64, w64, Tensor64({3}), spec);
    auto gy64 = random_uniform<double>(y64.shape, rng);
    const auto g64 = conv_transpose2d_backward(x64, w64, spec, gy64);
    const auto g32 =
        conv_transpose2d_backward(x64.cast<float>(), w64.cast<float>(), spec, gy64.cast<float>());
    for (size_t i = 0; i < g64.input_grad.numel(); ++i) {
        CHECK(std::abs(g32.input_grad.data[i] - g64.input_grad.data[i]) <
              1e-4 * std::max(1.0, std::abs(g64.input_grad.data[i])));
    }
}

#include <doctest.h>

#include "a3d2/model.hpp"

using namespace a3d2;

namespace {

ModelConfig small_config(int n = 1, int res = 64) {
    ModelConfig cfg;
    cfg.n = n;
    cfg.height = cfg.width = res;
    cfg.base_channels = 8;  // full architecture, desk-scale widths
    cfg.seed = 5;
    return cfg;
}

size_t total_params(const ModelConfig& cfg) {
    size_t total = 0;
    for (const auto& [name, shape] : parameter_shapes(cfg)) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        total += n;
    }
    return total;
}

}  // namespace

TEST_CASE("build_network: deterministic per seed") {
    const ModelConfig cfg = small_config();
    const auto a = build_network<float>(cfg);
    const auto b = build_network<float>(cfg);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) {
        const auto& other = b.at(name);
        REQUIRE(t.shape == other.shape);
        for (size_t i = 0; i < t.numel(); ++i) REQUIRE(t.data[i] == other.data[i]);
    }
    ModelConfig cfg2 = cfg;
    cfg2.seed = 6;
    const auto c = build_network<float>(cfg2);
    bool any_diff = false;
    for (const auto& [name, t] : a) {
        const auto& other = c.at(name);
        for (size_t i = 0; i < t.numel() && !any_diff; ++i) any_diff = t.data[i] != other.data[i];
    }
    CHECK(any_diff);
}

TEST_CASE("build_network: config validation") {
    ModelConfig cfg = small_config();
    cfg.height = 100;
    CHECK_THROWS_WITH_AS((void)build_network<float>(cfg), doctest::Contains("divisible by 32"),
                         std::invalid_argument);
    cfg = small_config();
    cfg.n = -1;
    CHECK_THROWS_AS((void)build_network<float>(cfg), std::invalid_argument);
    cfg = small_config(0);
    CHECK_NOTHROW((void)parameter_shapes(cfg));  // N=0 is the 2D baseline
}

TEST_CASE("parameter inventory: N only changes the temporal kernel extent") {
    ModelConfig n1;
    n1.n = 1;
    ModelConfig n2;
    n2.n = 2;
    const auto s1 = parameter_shapes(n1);
    const auto s2 = parameter_shapes(n2);
    REQUIRE(s1.size() == s2.size());
    int diffs = 0;
    for (size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i].first == s2[i].first);
        if (s1[i].second != s2[i].second) {
            ++diffs;
            CHECK(s1[i].first == "fusion.conv3d.weight");
            CHECK(s1[i].second == std::vector<int>{16, 1, 3, 3, 3});
            CHECK(s2[i].second == std::vector<int>{16, 1, 5, 3, 3});
        }
    }
    CHECK(diffs == 1);
    CHECK(total_params(n2) - total_params(n1) == 288);
    // the N=0 baseline drops another 288
    ModelConfig n0;
    n0.n = 0;
    CHECK(total_params(n1) - total_params(n0) == 288);
}

TEST_CASE("fusion_forward: shapes, frame-count validation, finiteness") {
    const ModelConfig cfg = small_config(1);
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(7);
    auto frames = random_uniform<float>({2, 1, 3, 64, 64}, rng, 0.0f, 1.0f);
    const auto fused = fusion_forward(frames, params);
    CHECK(fused.shape == std::vector<int>{2, 3, 64, 64});
    for (float v : fused.data) CHECK(std::isfinite(v));

    // all-identical frames stay well-defined
    Tensor<float> same({1, 1, 3, 64, 64});
    for (size_t i = 0; i < same.numel(); ++i) same.data[i] = 0.25f;
    for (float v : fusion_forward(same, params).data) CHECK(std::isfinite(v));

    auto wrong = random_uniform<float>({1, 1, 5, 64, 64}, rng);
    CHECK_THROWS_WITH_AS((void)fusion_forward(wrong, params), doctest::Contains("expects 3"),
                         std::invalid_argument);
}

TEST_CASE("encoder_forward: stage geometry 448 -> 112/56/28/14 and 64 -> 2x2 bottleneck") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(8);

    auto x448 = random_uniform<float>({1, 3, 448, 448}, rng);
    const auto enc = encoder_forward(x448, params);
    const int b = cfg.base_channels;
    CHECK(enc.skips[0].shape == std::vector<int>{1, b, 112, 112});
    CHECK(enc.skips[1].shape == std::vector<int>{1, 2 * b, 56, 56});
    CHECK(enc.skips[2].shape == std::vector<int>{1, 4 * b, 28, 28});
    CHECK(enc.skips[3].shape == std::vector<int>{1, 8 * b, 14, 14});
    CHECK(enc.bottleneck.shape == std::vector<int>{1, 8 * b, 14, 14});

    auto x64 = random_uniform<float>({1, 3, 64, 64}, rng);
    CHECK(encoder_forward(x64, params).bottleneck.shape == std::vector<int>{1, 8 * b, 2, 2});
}

TEST_CASE("encoder_forward: zero input with zeroed norm affine params stays zero") {
    const ModelConfig cfg = small_config();
    auto params = build_network<float>(cfg);
    for (auto& [name, t] : params) {
        if (name.find(".gamma") != std::string::npos) std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    Tensor<float> x({1, 3, 64, 64});
    const auto enc = encoder_forward(x, params);
    for (float v : enc.bottleneck.data) CHECK(v == 0.0f);
    for (const auto& s : enc.skips) {
        for (float v : s.data) CHECK(v == 0.0f);
    }
}

TEST_CASE("dac_forward: zeroed branch weights give the identity map") {
    const ModelConfig cfg = small_config();
    auto params = build_network<float>(cfg);
    for (auto& [name, t] : params) {
        if (name.rfind("dac.", 0) == 0) std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    std::mt19937_64 rng(9);
    auto x = random_uniform<float>({1, 8 * cfg.base_channels, 16, 16}, rng);
    const auto y = dac_forward(x, params);
    REQUIRE(y.shape == x.shape);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("dac_forward: shape preserved for any plane size") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(10);
    for (int hw : {1, 2, 11, 16}) {
        auto x = random_uniform<float>({1, 8 * cfg.base_channels, hw, hw}, rng);
        CHECK(dac_forward(x, params).shape == x.shape);
    }
}

TEST_CASE("rmp_forward: adds exactly four channels, clamps tiny planes") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(11);
    const int c = 8 * cfg.base_channels;
    for (int hw : {14, 7, 2}) {
        auto x = random_uniform<float>({2, c, hw, hw}, rng);
        const auto y = rmp_forward(x, params);
        CHECK(y.shape == std::vector<int>{2, c + 4, hw, hw});
    }
    // pool-6 on a 14x14 plane floors to 2x2 before upsampling
    auto x = random_uniform<float>({1, 1, 14, 14}, rng);
    CHECK(maxpool2d_forward(x, 6, 6, 6, 6).output.shape == std::vector<int>{1, 1, 2, 2});
}

TEST_CASE("rmp_forward: constant plane gives constant branch fields") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    const int c = 8 * cfg.base_channels;
    Tensor<float> x = Tensor<float>::full({1, c, 12, 12}, 0.75f);
    const auto y = rmp_forward(x, params);
    const size_t plane = 12 * 12;
    for (int branch = 0; branch < 4; ++branch) {
        const float* p = y.data.data() + (static_cast<size_t>(c) + branch) * plane;
        for (size_t i = 1; i < plane; ++i) CHECK(p[i] == doctest::Approx(p[0]).epsilon(1e-6));
    }
}

TEST_CASE("decoder_forward: stage outputs 28/56/112/224 and head input 448") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(12);
    const int b = cfg.base_channels;
    std::array<Tensor<float>, 4> skips{
        random_uniform<float>({1, b, 112, 112}, rng),
        random_uniform<float>({1, 2 * b, 56, 56}, rng),
        random_uniform<float>({1, 4 * b, 28, 28}, rng),
        random_uniform<float>({1, 8 * b, 14, 14}, rng),
    };
    auto bottleneck = random_uniform<float>({1, 8 * b + 4, 14, 14}, rng);
    const auto out = decoder_forward(bottleneck, skips, params);
    CHECK(out.shape == std::vector<int>{1, b / 2, 448, 448});
}

TEST_CASE("decoder_forward: zero bottleneck and zero decoder weights give zero output") {
    const ModelConfig cfg = small_config();
    auto params = build_network<float>(cfg);
    for (auto& [name, t] : params) {
        if (name.rfind("decoder.", 0) == 0) std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    const int b = cfg.base_channels;
    std::mt19937_64 rng(13);
    std::array<Tensor<float>, 4> skips{
        random_uniform<float>({1, b, 16, 16}, rng),
        random_uniform<float>({1, 2 * b, 8, 8}, rng),
        random_uniform<float>({1, 4 * b, 4, 4}, rng),
        random_uniform<float>({1, 8 * b, 2, 2}, rng),
    };
    Tensor<float> bottleneck({1, 8 * b + 4, 2, 2});
    const auto out = decoder_forward(bottleneck, skips, params);
    for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("decoder_forward: skip shape mismatch is rejected naming the stage") {
    const ModelConfig cfg = small_config();
    const auto params = build_network<float>(cfg);
    std::mt19937_64 rng(14);
    const int b = cfg.base_channels;
    std::array<Tensor<float>, 4> skips{
        random_uniform<float>({1, b, 16, 16}, rng),
        random_uniform<float>({1, 2 * b, 8, 8}, rng),
        random_uniform<float>({1, 4 * b, 8, 8}, rng),  // wrong: should be 4x4
        random_uniform<float>({1, 8 * b, 2, 2}, rng),
    };
    auto bottleneck = random_uniform<float>({1, 8 * b + 4, 2, 2}, rng);
    CHECK_THROWS_WITH_AS((void)decoder_forward(bottleneck, skips, params),
                         doctest::Contains("stage 4"), std::invalid_argument);
}

TEST_CASE("forward: probability range, shape independence from N, determinism") {
    std::mt19937_64 rng(15);
    for (int n : {0, 1, 2}) {
        const auto params = build_network<float>(small_config(n));
        auto frames = random_uniform<float>({2, 1, 2 * n + 1, 64, 64}, rng, 0.0f, 1.0f);
        const auto res = forward(frames, params);
        CHECK(res.prob.shape == std::vector<int>{2, 1, 64, 64});
        for (float v : res.prob.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    const auto params = build_network<float>(small_config());
    auto frames = random_uniform<float>({1, 1, 3, 64, 64}, rng, 0.0f, 1.0f);
    const auto a = forward(frames, params);
    const auto b = forward(frames, params);
    for (size_t i = 0; i < a.prob.numel(); ++i) REQUIRE(a.prob.data[i] == b.prob.data[i]);
}

TEST_CASE("backward: zero grad mask gives all-zero grads with full key coverage") {
    const auto params = build_network<float>(small_config());
    std::mt19937_64 rng(16);
    auto frames = random_uniform<float>({1, 1, 3, 64, 64}, rng, 0.0f, 1.0f);
    const auto res = forward(frames, params);
    const auto back = backward(res.trace, params, Tensor<float>(res.prob.shape));
    REQUIRE(back.param_grads.size() == params.size());
    for (const auto& [name, g] : back.param_grads) {
        CHECK(g.shape == params.at(name).shape);
        for (float v : g.data) CHECK(v == 0.0f);
    }
    CHECK(back.input_grad.shape == frames.shape);
}

TEST_CASE("backward: nonzero grad mask reaches every layer group") {
    const auto params = build_network<float>(small_config());
    std::mt19937_64 rng(17);
    auto frames = random_uniform<float>({1, 1, 3, 64, 64}, rng, 0.0f, 1.0f);
    const auto res = forward(frames, params);
    const auto gy = random_uniform<float>(res.prob.shape, rng);
    const auto back = backward(res.trace, params, gy);
    for (const char* probe : {"fusion.conv3d.weight", "encoder.stage3.block2.conv1.weight",
                              "dac.branch4.conv4.weight", "rmp.pool5.conv.weight",
                              "decoder.block2.deconv.weight", "head.conv2.weight"}) {
        double mag = 0;
        for (float v : back.param_grads.at(probe).data) mag += std::abs(v);
        INFO("param ", probe);
        CHECK(mag > 0.0);
    }
}

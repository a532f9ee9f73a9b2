#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "ntc/layers.hpp"

using namespace ntc;

namespace {

Tensor64 project(Tensor64 y, const std::vector<double>& weights) {
    const std::size_t n = y.size();
    return matmul(reshape(std::move(y), {1, n}),
                  Tensor64::from_data({n, 1}, std::vector<double>(weights)));
}

}  // namespace

TEST_CASE("conv_block parameter counts match the reference ledger") {
    ParamRng<float> rng(1);
    ConvBlock<float> first(1, 64, 2, 2, rng);
    CHECK(first.conv_param_count() == 320);
    CHECK(first.bn_param_count() == 128);
    CHECK(first.conv_param_count() == first.weight.size() + first.bias.size());

    ConvBlock<float> later(64, 64, 2, 2, rng);
    CHECK(later.conv_param_count() == 16448);
}

TEST_CASE("conv_block forward trims one row and one column") {
    ParamRng<float> rng(2);
    ConvBlock<float> block(1, 64, 2, 2, rng);
    Tensor32 x = Tensor32::from_data({3, 1, 8, 6}, std::vector<float>(3 * 48, 0.25f));
    CHECK(block.forward(x, true).shape() == Shape{3, 64, 7, 5});

    // Kernel larger than the input fails at forward time.
    ConvBlock<float> big(1, 4, 9, 9, rng);
    CHECK_THROWS_AS(big.forward(x, true), ShapeError);
}

TEST_CASE("four stacked conv blocks: (N,1,8,6) -> (N,64,4,2), flatten 512") {
    ParamRng<float> rng(3);
    std::vector<ConvBlock<float>> blocks;
    blocks.emplace_back(1, 64, 2, 2, rng);
    for (int i = 0; i < 3; ++i) blocks.emplace_back(64, 64, 2, 2, rng);
    std::mt19937_64 vr(5);
    auto rv = fd::random_vec(vr, 2 * 48, 0, 1);
    Tensor32 y = Tensor32::from_data({2, 1, 8, 6}, std::vector<float>(rv.begin(), rv.end()));
    const Shape expected[] = {{2, 64, 7, 5}, {2, 64, 6, 4}, {2, 64, 5, 3}, {2, 64, 4, 2}};
    for (std::size_t i = 0; i < 4; ++i) {
        y = blocks[i].forward(y, true);
        CHECK(y.shape() == expected[i]);
    }
    CHECK(reshape(y, {2, 512}).shape() == Shape{2, 512});
}

TEST_CASE("lstm output shapes and return-sequence consistency") {
    ParamRng<float> rng(4);
    Lstm<float> seq(1, 100, true, rng);
    std::mt19937_64 vr(6);
    auto rv = fd::random_vec(vr, 2 * 512);
    Tensor32 x = Tensor32::from_data({2, 512, 1}, std::vector<float>(rv.begin(), rv.end()));
    Tensor32 full = seq.forward(x);
    CHECK(full.shape() == Shape{2, 512, 100});

    // Final hidden state equals the return_sequences=false output.
    Lstm<float> last = seq;
    last.return_sequences = false;
    Tensor32 final_state = last.forward(x);
    CHECK(final_state.shape() == Shape{2, 100});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t j = 0; j < 100; ++j)
            CHECK(final_state.data()[n * 100 + j] == full.data()[(n * 512 + 511) * 100 + j]);

    CHECK_THROWS_AS(seq.forward(Tensor32::zeros({2, 5, 3})), ShapeError);
}

TEST_CASE("lstm with all-zero weights is a fixed point at zero") {
    ParamRng<float> rng(5);
    Lstm<float> lstm(2, 7, true, rng);
    for (Tensor32 p : {lstm.wx, lstm.wh, lstm.bias})
        for (auto& v : p.data()) v = 0.0f;
    Tensor32 x = Tensor32::from_data({3, 11, 2}, std::vector<float>(3 * 11 * 2, 0.8f));
    Tensor32 y = lstm.forward(x);
    for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("lstm parameter count formula") {
    ParamRng<float> rng(6);
    Lstm<float> lstm(1, 100, true, rng);
    CHECK(lstm.param_count() == 40800);
    CHECK(lstm.param_count() == lstm.wx.size() + lstm.wh.size() + lstm.bias.size());
}

TEST_CASE("lstm gradients pass finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        ParamRng<double> prng(std::uint64_t(seed) + 10);
        std::mt19937_64 vr(std::uint64_t(seed) + 60);
        const std::size_t s = 1 + seed % 3, u = 4, n = 2, t = 3 + seed % 3;
        for (bool return_sequences : {true, false}) {
            Lstm<double> lstm(s, u, return_sequences, prng);
            Tensor64 x = Tensor64::from_data({n, t, s}, fd::random_vec(vr, n * t * s), true);
            auto wp = fd::random_vec(vr, return_sequences ? n * t * u : n * u);
            auto r = fd::check([&] { return project(lstm.forward(x), wp); },
                               {x, lstm.wx, lstm.wh, lstm.bias});
            CHECK(r.max_rel < 1e-4);
        }
    }
}

TEST_CASE("time_distributed equals per-step dense with shared weights") {
    ParamRng<float> rng(7);
    Dense<float> dense(100, 64, rng);
    CHECK(dense.param_count() == 6464);

    std::mt19937_64 vr(8);
    auto rv = fd::random_vec(vr, 2 * 512 * 100);
    Tensor32 x = Tensor32::from_data({2, 512, 100}, std::vector<float>(rv.begin(), rv.end()));
    Tensor32 y = time_distributed(dense, x);
    CHECK(y.shape() == Shape{2, 512, 64});

    CHECK_THROWS_AS(time_distributed(dense, Tensor32::zeros({2, 100})), ShapeError);
    CHECK_THROWS_AS(time_distributed(dense, Tensor32::zeros({2, 5, 99})), ShapeError);
}

TEST_CASE("time_distributed with T=1 reduces to the plain dense layer") {
    ParamRng<float> rng(8);
    Dense<float> dense(5, 3, rng);
    std::mt19937_64 vr(9);
    auto rv = fd::random_vec(vr, 4 * 5);
    std::vector<float> xf(rv.begin(), rv.end());
    Tensor32 seq = time_distributed(dense, Tensor32::from_data({4, 1, 5}, xf));
    Tensor32 flat = dense.forward(Tensor32::from_data({4, 5}, xf));
    CHECK(seq.data() == flat.data());  // exact
}

TEST_CASE("time_distributed is step-equivariant") {
    ParamRng<float> rng(9);
    Dense<float> dense(6, 4, rng);
    std::mt19937_64 vr(10);
    auto rv = fd::random_vec(vr, 1 * 5 * 6);
    std::vector<float> xf(rv.begin(), rv.end());
    Tensor32 y = time_distributed(dense, Tensor32::from_data({1, 5, 6}, xf));

    // Reverse the step axis of the input: output steps reverse identically.
    std::vector<float> xr(xf.size());
    for (std::size_t t = 0; t < 5; ++t)
        std::copy_n(xf.data() + t * 6, 6, xr.data() + (4 - t) * 6);
    Tensor32 yr = time_distributed(dense, Tensor32::from_data({1, 5, 6}, xr));
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(yr.data()[(4 - t) * 4 + j] == y.data()[t * 4 + j]);
}

TEST_CASE("time_distributed gradients pass finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        ParamRng<double> prng(std::uint64_t(seed) + 20);
        std::mt19937_64 vr(std::uint64_t(seed) + 70);
        Dense<double> dense(4, 3, prng);
        Tensor64 x = Tensor64::from_data({2, 5, 4}, fd::random_vec(vr, 2 * 5 * 4), true);
        auto wp = fd::random_vec(vr, 2 * 5 * 3);
        auto r = fd::check([&] { return project(time_distributed(dense, x), wp); },
                           {x, dense.weight, dense.bias});
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("formula counts equal enumeration over random hyper-parameters") {
    std::mt19937_64 rng(11);
    ParamRng<float> prng(12);
    for (int draw = 0; draw < 50; ++draw) {
        const std::size_t cin = 1 + rng() % 8, units = 1 + rng() % 32;
        const std::size_t kh = 1 + rng() % 3, kw = 1 + rng() % 3;
        ConvBlock<float> block(cin, units, kh, kw, prng);
        CHECK(block.conv_param_count() == block.weight.size() + block.bias.size());
        CHECK(block.bn_param_count() == block.gamma.size() + block.beta.size());

        const std::size_t s = 1 + rng() % 16, u = 1 + rng() % 16;
        Lstm<float> lstm(s, u, true, prng);
        CHECK(lstm.param_count() == lstm.wx.size() + lstm.wh.size() + lstm.bias.size());

        Dense<float> dense(s, u, prng);
        CHECK(dense.param_count() == dense.weight.size() + dense.bias.size());
    }
}

TEST_CASE("reference dense counts") {
    ParamRng<float> rng(13);
    CHECK(Dense<float>(64, 64, rng).param_count() == 4160);
    CHECK(Dense<float>(32768, 141, rng).param_count() == 4620429);
}

#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "ntc/adam.hpp"
#include "ntc/ops.hpp"

using namespace ntc;

namespace {

constexpr double kTol = 1e-4;
constexpr int kSeeds = 20;

// Scalarizer: fixed random projection of the output, so FD checks see every
// output coordinate.
Tensor64 project(Tensor64 y, const std::vector<double>& weights) {
    const std::size_t n = y.size();
    return matmul(reshape(std::move(y), {1, n}),
                  Tensor64::from_data({n, 1}, std::vector<double>(weights)));
}

std::size_t dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return lo + rng() % (hi - lo + 1);
}

}  // namespace

TEST_CASE("forward definitions") {
    // 3x3 ones, one 2x2 kernel of ones, valid: every window sums to 4.
    Tensor64 x = Tensor64::from_data({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor64 w = Tensor64::from_data({1, 1, 2, 2}, std::vector<double>(4, 1.0));
    Tensor64 b = Tensor64::zeros({1});
    Tensor64 y = conv2d(x, w, b, Padding::Valid);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    for (double v : y.data()) CHECK(v == doctest::Approx(4.0));

    Tensor64 r = relu(Tensor64::from_data({3}, {-1.0, 0.0, 2.0}));
    CHECK(r.data() == std::vector<double>{0.0, 0.0, 2.0});

    // Huge logit must not overflow thanks to the log-sum-exp form.
    Tensor64 logits = Tensor64::from_data({1, 2}, {1000.0, 0.0});
    CHECK(softmax_cross_entropy(logits, {0}).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to 1 and cross-entropy is bounded") {
    std::mt19937_64 rng(3);
    for (int seed = 0; seed < 10; ++seed) {
        const std::size_t n = dim(rng, 1, 5), c = dim(rng, 2, 7);
        Tensor64 logits = Tensor64::from_data({n, c}, fd::random_vec(rng, n * c, -30, 30));
        Tensor64 probs = softmax(logits);
        for (std::size_t r = 0; r < n; ++r) {
            double sum = 0;
            for (std::size_t j = 0; j < c; ++j) sum += probs.data()[r * c + j];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng() % c;
        CHECK(softmax_cross_entropy(logits, labels).item() >= 0.0);
    }
    // Zero loss iff the prediction is effectively one-hot on the true class.
    Tensor64 hot = Tensor64::from_data({1, 3}, {100.0, 0.0, 0.0});
    CHECK(softmax_cross_entropy(hot, {0}).item() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(softmax_cross_entropy(hot, {1}).item() > 1.0);
}

TEST_CASE("shape errors name the primitive and both shapes") {
    Tensor64 a = Tensor64::zeros({2, 3});
    Tensor64 b = Tensor64::zeros({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor64::zeros({0, 1, 3, 3}), Tensor64::zeros({1, 1, 2, 2}),
                           Tensor64::zeros({1}), Padding::Valid),
                    ArgumentError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4,2)") != std::string::npos);
    }
}

TEST_CASE("linear case: d/dw sum(w*x) == x") {
    Tensor64 w = Tensor64::from_data({4}, {0.1, 0.2, 0.3, 0.4}, true);
    const std::vector<double> x = {2.0, -1.0, 0.5, 3.0};
    Tensor64 loss = project(elementwise_mul(w, Tensor64::from_data({4}, std::vector<double>(x))),
                            {1, 1, 1, 1});
    loss.backward();
    for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == doctest::Approx(x[i]));
}

TEST_CASE("backward state machine") {
    Tensor64 w = Tensor64::from_data({2}, {1.0, 2.0}, true);
    Tensor64 y = relu(w);
    CHECK_THROWS_AS(y.backward(), ArgumentError);  // non-scalar
    Tensor64 loss = project(y, {1.0, 1.0});
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), StateError);
}

TEST_CASE("finite differences: dense and elementwise primitives") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(std::uint64_t(seed) + 100);
        const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);

        Tensor64 a = Tensor64::from_data({m, k}, fd::random_vec(rng, m * k), true);
        Tensor64 b = Tensor64::from_data({k, n}, fd::random_vec(rng, k * n), true);
        auto wmm = fd::random_vec(rng, m * n);
        auto r = fd::check([&] { return project(matmul(a, b), wmm); }, {a, b});
        CHECK(r.max_rel < kTol);

        Tensor64 x = Tensor64::from_data({m, n}, fd::random_vec(rng, m * n), true);
        Tensor64 bias = Tensor64::from_data({n}, fd::random_vec(rng, n), true);
        r = fd::check([&] { return project(add_bias(x, bias), wmm); }, {x, bias});
        CHECK(r.max_rel < kTol);

        Tensor64 u = Tensor64::from_data({m, n}, fd::random_vec(rng, m * n), true);
        Tensor64 v = Tensor64::from_data({m, n}, fd::random_vec(rng, m * n), true);
        r = fd::check([&] { return project(add(u, v), wmm); }, {u, v});
        CHECK(r.max_rel < kTol);
        r = fd::check([&] { return project(elementwise_mul(u, v), wmm); }, {u, v});
        CHECK(r.max_rel < kTol);

        r = fd::check([&] { return project(sigmoid(u), wmm); }, {u});
        CHECK(r.max_rel < kTol);
        r = fd::check([&] { return project(tanh_act(u), wmm); }, {u});
        CHECK(r.max_rel < kTol);
        r = fd::check([&] { return project(relu(u), wmm); }, {u});
        CHECK(r.max_rel < kTol);
        r = fd::check([&] { return project(reshape(u, {n, m}), wmm); }, {u});
        CHECK(r.max_rel < kTol);

        const std::size_t axis = rng() % 2;
        auto wc = fd::random_vec(rng, 2 * m * n);
        r = fd::check([&] { return project(concat<double>({u, v}, axis), wc); }, {u, v});
        CHECK(r.max_rel < kTol);
    }
}

TEST_CASE("finite differences: conv2d both paddings") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(std::uint64_t(seed) + 200);
        const std::size_t n = dim(rng, 1, 2), cin = dim(rng, 1, 2), cout = dim(rng, 1, 2);
        const std::size_t h = dim(rng, 3, 5), wd = dim(rng, 3, 5);
        const std::size_t kh = dim(rng, 1, 3), kw = dim(rng, 1, 3);

        Tensor64 x = Tensor64::from_data({n, cin, h, wd}, fd::random_vec(rng, n * cin * h * wd),
                                         true);
        Tensor64 w =
            Tensor64::from_data({cout, cin, kh, kw}, fd::random_vec(rng, cout * cin * kh * kw),
                                true);
        Tensor64 b = Tensor64::from_data({cout}, fd::random_vec(rng, cout), true);

        for (Padding pad : {Padding::Valid, Padding::Same}) {
            const Shape out_shape = conv2d(x, w, b, pad).shape();
            auto wp = fd::random_vec(rng, shape_numel(out_shape));
            auto r = fd::check([&] { return project(conv2d(x, w, b, pad), wp); }, {x, w, b});
            CHECK(r.max_rel < kTol);
        }
    }
}

TEST_CASE("finite differences: maxpool2d with routing to the window argmax") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(std::uint64_t(seed) + 300);
        const std::size_t n = dim(rng, 1, 2), c = dim(rng, 1, 2);
        const std::size_t h = dim(rng, 3, 6), wd = dim(rng, 3, 6);
        const std::size_t stride = dim(rng, 1, 2);

        Tensor64 x = Tensor64::from_data({n, c, h, wd}, fd::spaced_vec(rng, n * c * h * wd), true);
        const Shape out_shape = maxpool2d(x, 2, 2, stride).shape();
        auto wp = fd::random_vec(rng, shape_numel(out_shape));
        auto r = fd::check([&] { return project(maxpool2d(x, 2, 2, stride), wp); }, {x});
        CHECK(r.max_rel < kTol);
    }

    // Tie goes to the first maximal element in row-major window scan.
    Tensor64 tied = Tensor64::from_data({1, 1, 2, 2}, {5.0, 5.0, 5.0, 5.0}, true);
    Tensor64 loss = project(maxpool2d(tied, 2, 2, 1), {1.0});
    loss.backward();
    CHECK(tied.grad() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("finite differences: batchnorm2d in training and inference modes") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(std::uint64_t(seed) + 400);
        const std::size_t n = dim(rng, 2, 4), c = dim(rng, 1, 3);
        const std::size_t h = dim(rng, 2, 3), wd = dim(rng, 2, 3);

        Tensor64 x = Tensor64::from_data({n, c, h, wd}, fd::random_vec(rng, n * c * h * wd), true);
        Tensor64 gamma = Tensor64::from_data({c}, fd::random_vec(rng, c, 0.5, 1.5), true);
        Tensor64 beta = Tensor64::from_data({c}, fd::random_vec(rng, c), true);
        auto wp = fd::random_vec(rng, x.size());

        BatchNormStats<double> stats(c);
        auto r = fd::check(
            [&] { return project(batchnorm2d(x, gamma, beta, stats, true), wp); },
            {x, gamma, beta});
        CHECK(r.max_rel < kTol);

        BatchNormStats<double> frozen(c);
        frozen.running_mean = fd::random_vec(rng, c);
        frozen.running_var = fd::random_vec(rng, c, 0.5, 2.0);
        r = fd::check([&] { return project(batchnorm2d(x, gamma, beta, frozen, false), wp); },
                      {x, gamma, beta});
        CHECK(r.max_rel < kTol);
    }
}

TEST_CASE("finite differences: softmax and cross-entropy") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937_64 rng(std::uint64_t(seed) + 500);
        const std::size_t n = dim(rng, 1, 4), c = dim(rng, 2, 6);
        Tensor64 logits = Tensor64::from_data({n, c}, fd::random_vec(rng, n * c, -2, 2), true);
        auto wp = fd::random_vec(rng, n * c);
        auto r = fd::check([&] { return project(softmax(logits), wp); }, {logits});
        CHECK(r.max_rel < kTol);

        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng() % c;
        r = fd::check([&] { return softmax_cross_entropy(logits, labels); }, {logits});
        CHECK(r.max_rel < kTol);
    }
}

TEST_CASE("batchnorm normalizes batches: mean 0, variance 1") {
    std::mt19937_64 rng(42);
    const std::size_t n = 16, c = 3, h = 4, wd = 4;
    Tensor64 x = Tensor64::from_data({n, c, h, wd}, fd::random_vec(rng, n * c * h * wd, -3, 7));
    Tensor64 gamma = Tensor64::from_data({c}, std::vector<double>(c, 1.0));
    Tensor64 beta = Tensor64::zeros({c});
    BatchNormStats<double> stats(c);
    Tensor64 y = batchnorm2d(x, gamma, beta, stats, true);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mean = 0, var = 0;
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t i = 0; i < h * wd; ++i)
                mean += y.data()[(img * c + ch) * h * wd + i];
        mean /= double(n * h * wd);
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t i = 0; i < h * wd; ++i) {
                const double d = y.data()[(img * c + ch) * h * wd + i] - mean;
                var += d * d;
            }
        var /= double(n * h * wd);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor32 w = Tensor32::from_data({3}, {1.0f, 2.0f, 3.0f}, true);
    w.node()->ensure_grad();
    std::vector<Tensor32> params = {w};
    AdamState<float> state;
    adam_step(params, state);
    CHECK(w.data() == std::vector<float>{1.0f, 2.0f, 3.0f});
}

TEST_CASE("adam: first bias-corrected step has magnitude ~lr") {
    Tensor64 w = Tensor64::from_data({1}, {0.0}, true);
    w.node()->ensure_grad()[0] = 1.0;
    std::vector<Tensor64> params = {w};
    AdamState<double> state;
    const double lr = 0.001, eps = 1e-8;
    adam_step(params, state, lr, 0.9, 0.999, eps);
    // Closed form at step 1: m_hat = 1, v_hat = 1, delta = lr/(1+eps).
    CHECK(w.data()[0] == doctest::Approx(-lr / (1.0 + eps)).epsilon(1e-12));
}

TEST_CASE("adam: missing gradient is a state error naming the parameter") {
    Tensor32 w = Tensor32::from_data({2}, {1.0f, 2.0f}, true);
    std::vector<Tensor32> params = {w};
    AdamState<float> state;
    try {
        adam_step(params, state);
        FAIL("expected StateError");
    } catch (const StateError& e) {
        CHECK(std::string(e.what()).find("parameter 0") != std::string::npos);
    }
}

TEST_CASE("adam: identical inputs give identical 100-step trajectories") {
    auto run = [] {
        std::mt19937_64 rng(9);
        Tensor32 w = Tensor32::from_data({8}, std::vector<float>(8, 0.5f), true);
        std::vector<Tensor32> params = {w};
        AdamState<float> state;
        for (int step = 0; step < 100; ++step) {
            auto& g = w.node()->ensure_grad();
            for (auto& v : g) v = float(fd::random_vec(rng, 1)[0]);
            adam_step(params, state);
            w.zero_grad();
        }
        return w.data();
    };
    CHECK(run() == run());  // bitwise
}

TEST_CASE("forward determinism is bitwise in 32-bit mode") {
    auto run = [] {
        std::mt19937_64 rng(77);
        auto rv = fd::random_vec(rng, 2 * 1 * 6 * 6);
        std::vector<float> xf(rv.begin(), rv.end());
        Tensor32 x = Tensor32::from_data({2, 1, 6, 6}, xf);
        auto wv = fd::random_vec(rng, 4 * 1 * 2 * 2);
        std::vector<float> wf(wv.begin(), wv.end());
        Tensor32 w = Tensor32::from_data({4, 1, 2, 2}, wf);
        Tensor32 b = Tensor32::zeros({4});
        Tensor32 gamma = Tensor32::from_data({4}, std::vector<float>(4, 1.0f));
        Tensor32 beta = Tensor32::zeros({4});
        BatchNormStats<float> stats(4);
        Tensor32 y = batchnorm2d(maxpool2d(relu(conv2d(x, w, b, Padding::Same)), 2, 2, 1), gamma,
                                 beta, stats, true);
        return y.data();
    };
    CHECK(run() == run());
}

// Pooling, convolution, batch normalization, and masked softmax, checked
// against plain-loop oracles, closed forms, and finite differences.

#include "support/test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;
using namespace timeformer;

TEST_CASE("average pooling drops a trailing partial window") {
    Tensor x = Tensor::from_values({5}, {1, 2, 3, 4, 5});
    Tensor y = avg_pool1d(x, 2, 2);
    REQUIRE(y.values() == std::vector<double>{1.5, 3.5});
    REQUIRE_THROWS_AS(avg_pool1d(Tensor(Shape{3}), 4, 1), DimensionError);
    REQUIRE_THROWS_AS(avg_pool1d(x, 0, 1), ConfigError);
    REQUIRE_THROWS_AS(avg_pool1d(x, 2, 0), ConfigError);
}

TEST_CASE("average pooling matches window enumeration oracle") {
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        const std::size_t len = 2 + rng.below(30);
        const std::size_t kernel = 1 + rng.below(len);
        const std::size_t stride = 1 + rng.below(4);
        Tensor x = ts::random_tensor(rng, {len});
        Tensor y = avg_pool1d(x, kernel, stride);
        const auto ref = ts::naive_avg_pool(x.values(), kernel, stride);
        REQUIRE(y.numel() == ref.size());
        REQUIRE(ts::max_abs_diff(y.values(), ref) < 1e-12);
    }
}

TEST_CASE("average pooling applies per row of a batch") {
    Tensor x = Tensor::from_values({2, 4}, {1, 2, 3, 4, 10, 20, 30, 40});
    Tensor y = avg_pool1d(x, 2, 2);
    REQUIRE(y.shape() == Shape{2, 2});
    REQUIRE(y.values() == std::vector<double>{1.5, 3.5, 15.0, 35.0});
}

TEST_CASE("conv1d identity and errors") {
    Tensor x = Tensor::from_values({4, 1}, {1, 2, 3, 4});
    Tensor w = Tensor::from_values({1, 1, 1}, {1.0});
    Tensor b(Shape{1});
    REQUIRE(ts::max_abs_diff(conv1d(x, w, b).values(), x.values()) == 0.0);

    REQUIRE_THROWS_AS(conv1d(x, Tensor(Shape{2, 1, 1}), b), ConfigError);
    REQUIRE_THROWS_AS(conv1d(x, Tensor(Shape{3, 2, 1}), b), DimensionError);
    REQUIRE_THROWS_AS(conv1d(x, w, Tensor(Shape{2})), DimensionError);
}

TEST_CASE("conv1d matches triple-loop oracle") {
    Rng rng(37);
    for (int i = 0; i < 20; ++i) {
        const std::size_t len = 3 + rng.below(10);
        const std::size_t c_in = 1 + rng.below(3);
        const std::size_t c_out = 1 + rng.below(3);
        const std::size_t kernel = 1 + 2 * rng.below(3);
        Tensor x = ts::random_tensor(rng, {len, c_in});
        Tensor w = ts::random_tensor(rng, {kernel, c_in, c_out});
        Tensor b = ts::random_tensor(rng, {c_out});
        Tensor y = conv1d(x, w, b);
        const auto ref = ts::naive_conv1d(x.values(), len, c_in, w.values(), kernel, c_out,
                                          b.values());
        REQUIRE(ts::max_abs_diff(y.values(), ref) < 1e-12);
    }
}

TEST_CASE("conv1d batched equals per-sample application") {
    Rng rng(41);
    Tensor x = ts::random_tensor(rng, {3, 5, 2});
    Tensor w = ts::random_tensor(rng, {3, 2, 4});
    Tensor b = ts::random_tensor(rng, {4});
    Tensor y = conv1d(x, w, b);
    for (std::size_t s = 0; s < 3; ++s) {
        Tensor xs(Shape{5, 2});
        std::copy_n(x.values().begin() + s * 10, 10, xs.values().begin());
        Tensor ys = conv1d(xs, w, b);
        std::vector<double> got(y.values().begin() + s * 20, y.values().begin() + (s + 1) * 20);
        REQUIRE(ts::max_abs_diff(got, ys.values()) == 0.0);
    }
}

TEST_CASE("conv1d gradients pass finite differences") {
    Rng rng(43);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Tensor x = ts::random_tensor(rng, {6, 2}, -1.0, 1.0, true);
        Tensor w = ts::random_tensor(rng, {3, 2, 3}, -1.0, 1.0, true);
        Tensor b = ts::random_tensor(rng, {3}, -1.0, 1.0, true);
        Tensor mix = ts::random_tensor(rng, {6, 3});
        worst = std::max(worst, ts::fd_max_rel_error({x, w, b}, [&] {
            return sum(mul(conv1d(x, w, b), mix));
        }));
    }
    REQUIRE(worst < 1e-4);
}

TEST_CASE("batchnorm training normalizes each feature") {
    Rng rng(47);
    BatchNorm state(3);
    Tensor x = ts::random_tensor(rng, {16, 3}, -2.0, 5.0);
    Tensor y = batchnorm(x, state, true);
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t r = 0; r < 16; ++r) m += y.values()[r * 3 + c];
        m /= 16.0;
        for (std::size_t r = 0; r < 16; ++r) {
            const double dv = y.values()[r * 3 + c] - m;
            v += dv * dv;
        }
        v /= 16.0;
        REQUIRE(m == Approx(0.0).margin(1e-12));
        REQUIRE(v == Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("batchnorm maintains running statistics with momentum 0.1") {
    BatchNorm state(1);
    Tensor x = Tensor::from_values({4, 1}, {1.0, 2.0, 3.0, 4.0});
    batchnorm(x, state, true);
    const double batch_mean = 2.5;
    const double batch_var = (2.25 + 0.25 + 0.25 + 2.25) / 4.0;
    REQUIRE(state.running_mean[0] == Approx(0.9 * 0.0 + 0.1 * batch_mean));
    REQUIRE(state.running_var[0] == Approx(0.9 * 1.0 + 0.1 * batch_var));

    Tensor y = batchnorm(x, state, false);
    const double expect = (1.0 - state.running_mean[0]) /
                          std::sqrt(state.running_var[0] + state.eps);
    REQUIRE(y.values()[0] == Approx(expect));
}

TEST_CASE("batchnorm eval is elementwise in the batch") {
    Rng rng(53);
    BatchNorm state(2);
    batchnorm(ts::random_tensor(rng, {8, 2}), state, true);
    Tensor a = ts::random_tensor(rng, {4, 2});
    Tensor b = a.detached_copy();
    b.values()[3 * 2] = 99.0;
    Tensor ya = batchnorm(a, state, false);
    Tensor yb = batchnorm(b, state, false);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            REQUIRE(ya.at2(r, c) == yb.at2(r, c));
        }
    }
}

TEST_CASE("batchnorm gradients pass finite differences") {
    Rng rng(59);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        BatchNorm state(2);
        Tensor x = ts::random_tensor(rng, {5, 2}, -1.0, 1.0, true);
        Tensor mix = ts::random_tensor(rng, {5, 2});
        worst = std::max(worst, ts::fd_max_rel_error({x, state.gamma, state.beta}, [&] {
            return sum(mul(batchnorm(x, state, true), mix));
        }));
    }
    REQUIRE(worst < 1e-4);
}

TEST_CASE("batchnorm rejects bad inputs") {
    BatchNorm state(2);
    REQUIRE_THROWS_AS(batchnorm(Tensor(Shape{3}), state, true), DimensionError);
    REQUIRE_THROWS_AS(batchnorm(Tensor(Shape{3, 4}), state, true), DimensionError);
}

TEST_CASE("masked softmax restricts support to the causal prefix") {
    Rng rng(61);
    Tensor scores = ts::random_tensor(rng, {4, 4}, -3.0, 3.0);
    Tensor y = masked_softmax_lastdim(scores, true);
    for (std::size_t i = 0; i < 4; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j > i) {
                REQUIRE(y.at2(i, j) == 0.0);
            } else {
                REQUIRE(y.at2(i, j) > 0.0);
                total += y.at2(i, j);
            }
        }
        REQUIRE(total == Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("masked softmax without restrictions equals plain softmax") {
    Rng rng(67);
    Tensor scores = ts::random_tensor(rng, {3, 3}, -2.0, 2.0);
    REQUIRE(ts::max_abs_diff(masked_softmax_lastdim(scores, false), softmax_lastdim(scores)) ==
            0.0);
}

TEST_CASE("key mask removes columns but a query always sees itself") {
    Rng rng(71);
    Tensor scores = ts::random_tensor(rng, {1, 3, 3}, -1.0, 1.0);
    KeyMask mask{1, 3, {0, 1, 0}};
    Tensor y = masked_softmax_lastdim(scores, false, &mask);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double v = y.values()[i * 3 + j];
            if (j == i || mask.allows(0, j)) {
                REQUIRE(v > 0.0);
            } else {
                REQUIRE(v == 0.0);
            }
        }
    }
    REQUIRE_THROWS_AS(masked_softmax_lastdim(Tensor(Shape{2, 3}), true), DimensionError);
}

TEST_CASE("masked softmax gradients pass finite differences") {
    Rng rng(73);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Tensor scores = ts::random_tensor(rng, {4, 4}, -2.0, 2.0, true);
        Tensor mix = ts::random_tensor(rng, {4, 4});
        worst = std::max(worst, ts::fd_max_rel_error({scores}, [&] {
            return sum(mul(masked_softmax_lastdim(scores, true), mix));
        }));
    }
    REQUIRE(worst < 1e-4);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rng.hpp"
#include "tensor.hpp"

using namespace privit;
using namespace privit::ad;

namespace {

std::vector<double> random_vec(size_t n, Rng & rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (double & x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

}  // namespace

TEST_CASE("matmul forward") {
    Graph g;
    Tensor eye = g.constant({2, 2}, {1, 0, 0, 1});
    Tensor b   = g.constant({2, 2}, {2, 3, 4, 5});
    Tensor r   = matmul(eye, b);
    CHECK(r.value() == std::vector<double>{2, 3, 4, 5});

    Tensor row = g.constant({1, 2}, {1, 2});
    Tensor col = g.constant({2, 1}, {3, 4});
    CHECK(matmul(row, col).value()[0] == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul shape errors name both shapes") {
    Graph g;
    Tensor a = g.constant({2, 3}, std::vector<double>(6, 0.0));
    Tensor b = g.constant({2, 3}, std::vector<double>(6, 0.0));
    try {
        matmul(a, b);
        FAIL("expected an exception");
    } catch (const std::invalid_argument & e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("gradient of sum(A*B) wrt A") {
    // central finite differences give [[2,2],[2,2]] for B = ones
    auto f = [](Graph & g, Tensor a) {
        Tensor b = g.constant({2, 2}, {1, 1, 1, 1});
        return sum(matmul(a, b));
    };
    CHECK(grad_check(f, {2, 2}, {1, 2, 3, 4}, 1e-5) < 1e-8);

    Graph  g;
    Tensor a = g.input({2, 2}, {1, 2, 3, 4}, true);
    Tensor b = g.constant({2, 2}, {1, 1, 1, 1});
    g.backward(sum(matmul(a, b)));
    for (double v : a.grad()) {
        CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("elementwise ops") {
    Graph g;
    Tensor x = g.constant({2}, {2, -3});
    CHECK(square(x).value() == std::vector<double>{4, 9});
    Tensor a = g.constant({2}, {1, 2});
    Tensor b = g.constant({2}, {3, 4});
    CHECK(add(a, b).value() == std::vector<double>{4, 6});
    CHECK(sub(b, a).value() == std::vector<double>{2, 2});
    CHECK(mul(a, b).value() == std::vector<double>{3, 8});
    CHECK(affine(a, 2.0, 1.0).value() == std::vector<double>{3, 5});

    // d/dx x^2 at 3 is 6
    Graph g2;
    Tensor x3 = g2.input({1}, {3.0}, true);
    g2.backward(sum(square(x3)));
    CHECK(x3.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gelu values") {
    Graph g;
    Tensor x = g.constant({3}, {0.0, 1.0, -10.0});
    Tensor y = gelu(x);
    CHECK(y.value()[0] == 0.0);
    CHECK(y.value()[1] == doctest::Approx(0.8411919906082768).epsilon(1e-12));
    CHECK(std::fabs(y.value()[2]) < 1e-6);
}

TEST_CASE("softmax rows") {
    Graph g;
    Tensor flat = softmax_rows(g.constant({3}, {0, 0, 0}));
    for (double v : flat.value()) {
        CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
    Tensor dom = softmax_rows(g.constant({3}, {1000, 0, 0}));
    CHECK(dom.value()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dom.value()[1] == doctest::Approx(0.0).epsilon(1e-12));

    // sums to one within 1e-12 and shift-invariant within 1e-9
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v = random_vec(6, rng);
        Graph g2;
        Tensor y = softmax_rows(g2.constant({6}, v));
        double s = 0;
        for (double p : y.value()) {
            s += p;
        }
        CHECK(std::fabs(s - 1.0) < 1e-12);
        std::vector<double> shifted = v;
        for (double & x : shifted) {
            x += 13.25;
        }
        Tensor y2 = softmax_rows(g2.constant({6}, shifted));
        for (size_t i = 0; i < v.size(); ++i) {
            CHECK(std::fabs(y.value()[i] - y2.value()[i]) < 1e-9);
        }
    }
}

TEST_CASE("softmax jacobian matches finite differences") {
    const std::vector<double> x0 = {1, 2, 3};
    for (int i = 0; i < 3; ++i) {
        auto f = [i](Graph &, Tensor x) { return slice(softmax_rows(x), i, 1); };
        CHECK(grad_check(f, {3}, x0, 1e-5) < 1e-6);
    }
}

TEST_CASE("softmax rejects NaN") {
    Graph g;
    Tensor bad = g.constant({2}, {0.0, std::nan("")});
    CHECK_THROWS_AS(softmax_rows(bad), std::domain_error);
}

TEST_CASE("layernorm") {
    Graph g;
    Tensor gamma = g.constant({2}, {1, 1});
    Tensor beta  = g.constant({2}, {0, 0});
    Tensor y = layernorm_rows(g.constant({2}, {1, 3}), gamma, beta, 1e-12);
    CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-9));

    // constant row collapses to beta
    Tensor g3 = g.constant({3}, {1, 1, 1});
    Tensor b3 = g.constant({3}, {0, 0, 0});
    Tensor z  = layernorm_rows(g.constant({3}, {5, 5, 5}), g3, b3, 1e-5);
    for (double v : z.value()) {
        CHECK(v == 0.0);
    }

    // normalized output has mean 0, variance 1 when input variance >> eps
    Rng rng(3);
    std::vector<double> big = random_vec(16, rng, -4.0, 4.0);
    Graph g2;
    Tensor g16 = g2.constant({16}, std::vector<double>(16, 1.0));
    Tensor b16 = g2.constant({16}, std::vector<double>(16, 0.0));
    Tensor n   = layernorm_rows(g2.constant({16}, big), g16, b16, 1e-5);
    double mean = 0, var = 0;
    for (double v : n.value()) {
        mean += v;
    }
    mean /= 16;
    for (double v : n.value()) {
        var += (v - mean) * (v - mean);
    }
    var /= 16;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-3);

    auto f = [](Graph & gg, Tensor x) {
        Tensor gm = gg.constant({4}, {1.1, 0.9, 1.0, 1.2});
        Tensor bt = gg.constant({4}, {0.1, -0.2, 0.0, 0.3});
        Tensor w  = gg.constant({4}, {0.3, -0.7, 0.2, 0.9});
        return sum(mul(layernorm_rows(x, gm, bt, 1e-5), w));
    };
    CHECK(grad_check(f, {4}, {0.5, -1.0, 2.0, 0.25}, 1e-5) < 1e-4);
}

TEST_CASE("cross entropy") {
    Graph g;
    Tensor sure = g.constant({1, 2}, {1000, 0});
    CHECK(cross_entropy(sure, {0}).scalar() == doctest::Approx(0.0).epsilon(1e-12));

    Tensor even = g.constant({1, 2}, {0, 0});
    CHECK(cross_entropy(even, {0}).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Tensor batch = g.constant({2, 4}, std::vector<double>(8, 0.0));
    CHECK(cross_entropy(batch, {1, 3}).scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(even, {2}), std::out_of_range);
    CHECK_THROWS_AS(cross_entropy(even, {-1}), std::out_of_range);
}

TEST_CASE("kd divergence") {
    Graph g;
    // identical logits
    Tensor s = g.constant({1, 3}, {0.3, -0.4, 1.0});
    CHECK(kd_div(s, {0.3, -0.4, 1.0}, 4.0).scalar() == doctest::Approx(0.0).epsilon(1e-12));

    // teacher [1,0] vs student [0,1], T=1: 0.46211715726...
    Tensor s2 = g.constant({1, 2}, {0, 1});
    CHECK(kd_div(s2, {1, 0}, 1.0).scalar() == doctest::Approx(0.4621171572600097).epsilon(1e-10));

    // non-negativity over seeded random pairs
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        Graph g2;
        Tensor st = g2.constant({1, 5}, random_vec(5, rng, -3, 3));
        CHECK(kd_div(st, random_vec(5, rng, -3, 3), 4.0).scalar() >= -1e-12);
    }

    // gradient
    auto f = [](Graph &, Tensor x) { return kd_div(x, {0.5, -1.0, 0.7, 0.1}, 4.0); };
    CHECK(grad_check(f, {1, 4}, {0.2, 0.4, -0.8, 1.1}, 1e-5) < 1e-6);
}

TEST_CASE("abs_sum subgradient") {
    Graph g;
    Tensor x = g.input({3}, {0.5, -2.0, 0.0}, true);
    Tensor l = abs_sum(x);
    CHECK(l.scalar() == doctest::Approx(2.5).epsilon(1e-15));
    g.backward(l);
    CHECK(x.grad() == std::vector<double>{1.0, -1.0, 0.0});
}

TEST_CASE("grad_check oracle on simple functions") {
    auto sq = [](Graph &, Tensor x) { return sum(square(x)); };
    CHECK(grad_check(sq, {1}, {3.0}, 1e-5) < 1e-8);

    Rng rng(5);
    auto gl = [](Graph &, Tensor x) { return sum(gelu(x)); };
    CHECK(grad_check(gl, {8}, random_vec(8, rng), 1e-5) < 1e-5);

    auto ce = [](Graph & g, Tensor x) {
        Tensor w = g.constant({4, 3}, {0.2, -0.5, 0.9, 1.0, 0.3, -0.2, 0.7, 0.1, 0.4, -0.8, 0.6, 0.2});
        return cross_entropy(matmul(reshape(x, {2, 4}), w), {0, 2});
    };
    CHECK(grad_check(ce, {8}, random_vec(8, rng), 1e-5) < 1e-5);
}

TEST_CASE("every primitive passes grad_check on seeded random input") {
    Rng rng(42);
    const std::vector<double> x8  = random_vec(8, rng);
    const std::vector<double> x12 = random_vec(12, rng);

    auto w8 = random_vec(8, rng);
    auto check = [&](const ScalarFn & f, const std::vector<int> & shape,
                     const std::vector<double> & x0) {
        CHECK(grad_check(f, shape, x0, 1e-5) < 1e-4);
    };

    // constants drawn once; f must be a fixed function of x
    const auto b42  = random_vec(8, rng);
    const auto w43a = random_vec(12, rng);
    const auto w43b = random_vec(12, rng);
    const auto w34a = random_vec(12, rng);
    const auto w34b = random_vec(12, rng);

    check([&](Graph & g, Tensor x) { return sum(mul(gelu(x), g.constant({8}, w8))); }, {8}, x8);
    check([&](Graph & g, Tensor x) { return sum(mul(square(x), g.constant({8}, w8))); }, {8}, x8);
    check([&](Graph & g, Tensor x) { return sum(mul(softmax_rows(x), g.constant({8}, w8))); }, {8},
          x8);
    check([&](Graph & g, Tensor x) {
        Tensor a = reshape(x, {3, 4});
        Tensor b = g.constant({4, 2}, b42);
        return sum(square(matmul(a, b)));
    }, {12}, x12);
    check([&](Graph & g, Tensor x) { return sum(mul(transpose(reshape(x, {3, 4})),
                                                    g.constant({4, 3}, w43a))); },
          {12}, x12);
    check([&](Graph & g, Tensor x) { return sum(mul(repeat_cols(slice(x, 2, 4), 3),
                                                    g.constant({4, 3}, w43b))); },
          {8}, x8);
    check([&](Graph & g, Tensor x) {
        Tensor m = reshape(x, {3, 4});
        return sum(mul(concat_cols({cols(m, 0, 2), cols(m, 2, 4)}), g.constant({3, 4}, w34a)));
    }, {12}, x12);
    check([&](Graph & g, Tensor x) {
        Tensor m = reshape(x, {3, 4});
        return sum(mul(concat_rows({rows(m, 1, 3), rows(m, 0, 1)}), g.constant({3, 4}, w34b)));
    }, {12}, x12);
    check([](Graph &, Tensor x) { return abs_sum(x); }, {8}, x8);
    check([](Graph &, Tensor x) { return sum(affine(x, -2.5, 0.75)); }, {8}, x8);
}

TEST_CASE("backward is deterministic") {
    auto run = [] {
        Rng rng(99);
        Graph g;
        Tensor x = g.input({4, 4}, random_vec(16, rng), true);
        Tensor w = g.constant({4, 4}, random_vec(16, rng));
        Tensor y = sum(gelu(matmul(softmax_rows(x), w)));
        g.backward(y);
        return x.grad();
    };
    const std::vector<double> a = run();
    const std::vector<double> b = run();
    CHECK(a == b);  // bitwise
}

TEST_CASE("backward root gradient is one") {
    Graph g;
    Tensor x = g.input({3}, {1, 2, 3}, true);
    Tensor y = sum(square(x));
    g.backward(y);
    CHECK(y.grad()[0] == 1.0);
}

TEST_CASE("slice and reshape bounds") {
    Graph g;
    Tensor x = g.constant({4}, {1, 2, 3, 4});
    CHECK_THROWS_AS(slice(x, 2, 5), std::invalid_argument);
    CHECK_THROWS_AS(reshape(x, {3, 2}), std::invalid_argument);
    CHECK_THROWS_AS(grad_check([](Graph &, Tensor t) { return square(t); }, {2}, {1.0, 2.0}, 1e-5),
                    std::invalid_argument);  // non-scalar f
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "hiercls/autodiff.hpp"
#include "hiercls/rng.hpp"
#include "support/gradcheck.hpp"

using namespace hiercls;
using testsupport::finite_diff_grad;
using testsupport::max_rel_err;

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                     double lo = -1.0, double hi = 1.0) {
    Tensor t({rows, cols});
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("matmul forward") {
    Rng rng(7);
    Tensor a = random_matrix(rng, 3, 3);
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;

    Tape tape;
    Var out = tape.matmul(tape.leaf(a), tape.leaf(eye));
    REQUIRE(out.value().data == a.data);

    Tape t2;
    Var prod = t2.matmul(t2.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4})),
                         t2.leaf(Tensor::matrix(2, 1, {1, 1})));
    CHECK(prod.value().data == std::vector<double>{3.0, 7.0});

    Tape t3;
    CHECK_THROWS_AS(t3.matmul(t3.leaf(Tensor({2, 3})), t3.leaf(Tensor({2, 3}))),
                    error);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(11);
    Tensor a = random_matrix(rng, 4, 3);
    Tensor b = random_matrix(rng, 3, 5);

    auto loss = [&]() {
        Tape tape;
        return tape.sum(tape.matmul(tape.leaf(a), tape.leaf(b))).value().data[0];
    };
    const Tensor fd_a = finite_diff_grad(a, loss);
    const Tensor fd_b = finite_diff_grad(b, loss);

    Tape tape;
    Var va = tape.leaf(a), vb = tape.leaf(b);
    tape.backward(tape.sum(tape.matmul(va, vb)));
    CHECK(max_rel_err(va.grad(), fd_a) <= 1e-6);
    CHECK(max_rel_err(vb.grad(), fd_b) <= 1e-6);
}

TEST_CASE("add_bias") {
    Tape tape;
    Var x = tape.leaf(Tensor::matrix(1, 2, {1, 1}));
    Var out = tape.add_bias(x, tape.leaf(Tensor::vector1d({2, 3})));
    CHECK(out.value().data == std::vector<double>{3.0, 4.0});

    // zero bias is the identity
    Tape t2;
    Rng rng(3);
    Tensor m = random_matrix(rng, 4, 3);
    Var same = t2.add_bias(t2.leaf(m), t2.leaf(Tensor({3})));
    CHECK(same.value().data == m.data);

    CHECK_THROWS_AS(t2.add_bias(t2.leaf(m), t2.leaf(Tensor({4}))), error);
}

TEST_CASE("add_bias gradient is the column sum") {
    Rng rng(5);
    Tensor x = random_matrix(rng, 4, 3);
    Tensor b = Tensor::vector1d({0.1, -0.2, 0.3});

    auto loss = [&]() {
        Tape tape;
        return tape.sum(tape.add_bias(tape.leaf(x), tape.leaf(b)))
            .value()
            .data[0];
    };
    const Tensor fd = finite_diff_grad(b, loss);

    Tape tape;
    Var vb = tape.leaf(b);
    tape.backward(tape.sum(tape.add_bias(tape.leaf(x), vb)));
    CHECK(max_rel_err(vb.grad(), fd) <= 1e-6);

    // d sum / d b is exactly the row count per column
    for (double g : vb.grad().data) CHECK(g == 4.0);
}

TEST_CASE("relu") {
    Tape tape;
    Var x = tape.leaf(Tensor::matrix(1, 3, {-1, 0, 2}));
    Var out = tape.relu(x);
    CHECK(out.value().data == std::vector<double>{0.0, 0.0, 2.0});

    Tape t2;
    Var neg = t2.leaf(Tensor::matrix(2, 2, {-1, -2, -3, -4}));
    Var r = t2.relu(neg);
    t2.backward(t2.sum(r));
    CHECK(r.value().data == std::vector<double>(4, 0.0));
    CHECK(neg.grad().data == std::vector<double>(4, 0.0));
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
    Rng rng(13);
    Tensor x({3, 4});
    for (double& v : x.data) {
        v = rng.uniform(-1.0, 1.0);
        if (std::fabs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
    }
    auto loss = [&]() {
        Tape tape;
        return tape.sum(tape.relu(tape.leaf(x))).value().data[0];
    };
    const Tensor fd = finite_diff_grad(x, loss);

    Tape tape;
    Var vx = tape.leaf(x);
    tape.backward(tape.sum(tape.relu(vx)));
    CHECK(max_rel_err(vx.grad(), fd) <= 1e-6);
}

TEST_CASE("split produces equal contiguous blocks") {
    Rng rng(17);
    Tensor f = random_matrix(rng, 2, 600);
    Tape tape;
    auto segs = tape.split(tape.leaf(f), 3);
    REQUIRE(segs.size() == 3);
    for (const Var& s : segs) {
        CHECK(s.value().rows() == 2);
        CHECK(s.value().cols() == 200);
    }
    CHECK(segs[1].value().at(0, 0) == f.at(0, 200));

    Tape t2;
    auto one = t2.split(t2.leaf(f), 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].value().data == f.data);

    CHECK_THROWS_WITH(t2.split(t2.leaf(f), 7),
                      Catch::Matchers::ContainsSubstring("not divisible"));
}

TEST_CASE("concat inverts split") {
    Rng rng(19);
    for (std::size_t parts : {2u, 3u, 5u}) {
        Tensor f = random_matrix(rng, 3, 30);
        Tape tape;
        Var x = tape.leaf(f);
        Var roundtrip = tape.concat(tape.split(x, parts));
        CHECK(roundtrip.value().data == f.data);

        // gradient of the composition is the identity map
        tape.backward(tape.sum(roundtrip));
        CHECK(x.grad().data == std::vector<double>(f.size(), 1.0));
    }
}

TEST_CASE("concat shapes and gradient routing") {
    Rng rng(23);
    Tensor a = random_matrix(rng, 4, 2);
    Tensor b = random_matrix(rng, 4, 3);
    Tape tape;
    Var va = tape.leaf(a), vb = tape.leaf(b);
    Var cat = tape.concat({va, vb});
    CHECK(cat.value().rows() == 4);
    CHECK(cat.value().cols() == 5);

    tape.backward(tape.sum(cat));
    CHECK(va.grad().data == std::vector<double>(a.size(), 1.0));
    CHECK(vb.grad().data == std::vector<double>(b.size(), 1.0));

    Tape t2;
    Var single = t2.concat({t2.leaf(a)});
    CHECK(single.value().data == a.data);

    CHECK_THROWS_AS(t2.concat({t2.leaf(a), t2.leaf(Tensor({3, 2}))}), error);
}

TEST_CASE("stop_gradient is a forward identity with exactly zero backward") {
    Rng rng(29);
    Tensor x = random_matrix(rng, 3, 5);

    Tape tape;
    Var vx = tape.leaf(x);
    Var gated = tape.stop_gradient(vx);
    REQUIRE(std::memcmp(gated.value().data.data(), x.data.data(),
                        x.size() * sizeof(double)) == 0);

    tape.backward(tape.sum(gated));
    for (double g : vx.grad().data) {
        CHECK(g == 0.0);
        CHECK(!std::signbit(g)); // untouched +0.0, not an approximate zero
    }

    // only the live branch of y = x + gate(x) carries gradient
    Tape t2;
    Var v2 = t2.leaf(x);
    Var y = t2.add(v2, t2.stop_gradient(v2));
    t2.backward(t2.sum(y));
    CHECK(v2.grad().data == std::vector<double>(x.size(), 1.0));
}

TEST_CASE("softmax cross entropy forward values") {
    Tape tape;
    Var uniform = tape.softmax_cross_entropy(
        tape.leaf(Tensor::matrix(1, 2, {0, 0})), {0});
    CHECK_THAT(uniform.value().data[0],
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

    Var confident = tape.softmax_cross_entropy(
        tape.leaf(Tensor::matrix(1, 2, {10, 0})), {0});
    CHECK_THAT(confident.value().data[0],
               Catch::Matchers::WithinAbs(std::log(1.0 + std::exp(-10.0)), 1e-12));

    CHECK_THROWS_WITH(
        tape.softmax_cross_entropy(tape.leaf(Tensor::matrix(1, 2, {0, 0})), {2}),
        Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
    Rng rng(31);
    Tensor logits = random_matrix(rng, 4, 5, -2.0, 2.0);
    const std::vector<int> targets = {1, 0, 4, 2};

    auto loss = [&]() {
        Tape tape;
        return tape.softmax_cross_entropy(tape.leaf(logits), targets)
            .value()
            .data[0];
    };
    const Tensor fd = finite_diff_grad(logits, loss);

    Tape tape;
    Var vz = tape.leaf(logits);
    tape.backward(tape.softmax_cross_entropy(vz, targets));
    CHECK(max_rel_err(vz.grad(), fd) <= 1e-6);
}

TEST_CASE("backward seeds and accumulates") {
    Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tape tape;
    Var vx = tape.leaf(x);
    tape.backward(tape.sum(vx));
    CHECK(vx.grad().data == std::vector<double>(4, 1.0));

    // two uses of the same tensor accumulate
    Tape t2;
    Var v2 = t2.leaf(x);
    t2.backward(t2.add(t2.sum(v2), t2.sum(v2)));
    CHECK(v2.grad().data == std::vector<double>(4, 2.0));
}

TEST_CASE("backward rejects bad losses") {
    Tape tape;
    Var m = tape.leaf(Tensor({2, 2}));
    CHECK_THROWS_WITH(tape.backward(m),
                      Catch::Matchers::ContainsSubstring("scalar"));

    Tape other;
    Var s = other.sum(other.leaf(Tensor({2, 2})));
    CHECK_THROWS_WITH(tape.backward(s),
                      Catch::Matchers::ContainsSubstring("tape"));
}

TEST_CASE("each differentiable op passes randomized gradient checks") {
    // three random shapes per op, fresh values each time
    for (std::uint64_t seed : {101u, 202u, 303u}) {
        Rng rng(seed);
        const std::size_t m = 2 + rng.index_below(3);
        const std::size_t n = 2 + rng.index_below(4);
        const std::size_t p = 2 + rng.index_below(3);
        Tensor a = random_matrix(rng, m, n);
        Tensor b = random_matrix(rng, n, p);
        Tensor bias = random_matrix(rng, 1, p);
        bias.shape = {p};
        std::vector<int> targets;
        for (std::size_t i = 0; i < m; ++i)
            targets.push_back(static_cast<int>(rng.index_below(p)));

        // composite graph exercising matmul, add_bias, relu, split, concat,
        // scale, add and cross entropy together
        auto run = [&](bool want_grads, Tensor* ga, Tensor* gb, Tensor* gc) {
            Tape tape;
            Var va = tape.leaf(a), vb = tape.leaf(b), vc = tape.leaf(bias);
            Var h = tape.relu(tape.add_bias(tape.matmul(va, vb), vc));
            Var h2 = tape.concat(tape.split(h, 1));
            Var ce = tape.softmax_cross_entropy(h2, targets);
            Var loss = tape.add(tape.scale(ce, 0.7), tape.scale(tape.sum(h), 0.01));
            if (want_grads) {
                tape.backward(loss);
                *ga = va.grad();
                *gb = vb.grad();
                *gc = vc.grad();
            }
            return loss.value().data[0];
        };

        auto loss_only = [&]() { return run(false, nullptr, nullptr, nullptr); };
        const Tensor fd_a = finite_diff_grad(a, loss_only);
        const Tensor fd_b = finite_diff_grad(b, loss_only);
        const Tensor fd_c = finite_diff_grad(bias, loss_only);

        Tensor ga, gb, gc;
        run(true, &ga, &gb, &gc);
        CHECK(max_rel_err(ga, fd_a) <= 1e-5);
        CHECK(max_rel_err(gb, fd_b) <= 1e-5);
        CHECK(max_rel_err(gc, fd_c) <= 1e-5);
    }
}

TEST_CASE("identical op sequences are bit-identical") {
    auto build = [](std::vector<double>* values, std::vector<double>* grads) {
        Rng rng(42);
        Tensor a({3, 4}), b({4, 2});
        for (double& v : a.data) v = rng.normal();
        for (double& v : b.data) v = rng.normal();
        Tape tape;
        Var va = tape.leaf(a), vb = tape.leaf(b);
        Var out = tape.relu(tape.matmul(va, vb));
        Var loss = tape.softmax_cross_entropy(out, {0, 1, 0});
        tape.backward(loss);
        *values = out.value().data;
        *grads = va.grad().data;
        return loss.value().data[0];
    };
    std::vector<double> v1, g1, v2, g2;
    const double l1 = build(&v1, &g1);
    const double l2 = build(&v2, &g2);
    CHECK(std::memcmp(&l1, &l2, sizeof l1) == 0);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

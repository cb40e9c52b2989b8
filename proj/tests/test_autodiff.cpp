#include <cmath>

#include "core/checks.hpp"
#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace fuseformer;

TEST_CASE("d(x^2)/dx at x=3 is 6") {
    Tape tape;
    Tensor x = tape.leaf(Tensor::scalar(3.0));
    tape.backward(sum(mul(x, x)));
    CHECK(tape.grad(x).value() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("d(sum(A*B))/dA spreads B transposed") {
    Rng rng(4);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tape tape;
    Tensor at = tape.leaf(a);
    tape.backward(sum(matmul(at, b)));
    Tensor g = tape.grad(at);
    // d sum(AB) / dA[i,k] = sum_j B[k,j]
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 4; ++k) {
            double want = 0.0;
            for (int j = 0; j < 2; ++j) want += b.data()[k * 2 + j];
            CHECK(g.data()[i * 4 + k] == doctest::Approx(want).epsilon(1e-14));
        }
}

TEST_CASE("backward rejects non-scalar and detached outputs") {
    Tape tape;
    Tensor x = tape.leaf(Tensor({2}, {1.0, 2.0}));
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);

    Tensor constant = Tensor::scalar(5.0);
    CHECK_THROWS_AS(tape.backward(constant), ShapeError);
}

TEST_CASE("fan-out accumulates both paths") {
    // f(x) = sum(x*x) + sum(c*x) -> df/dx = 2x + c
    Rng rng(12);
    Tensor x = random_tensor({5}, rng);
    Tensor c = random_tensor({5}, rng);
    Tape tape;
    Tensor xt = tape.leaf(x);
    tape.backward(add(sum(mul(xt, xt)), sum(mul(c, xt))));
    Tensor g = tape.grad(xt);
    for (int i = 0; i < 5; ++i)
        CHECK(g.data()[i] == doctest::Approx(2.0 * x.data()[i] + c.data()[i]).epsilon(1e-13));

    const double err = grad_check(
        [&](const std::vector<Tensor>& t) {
            return add(sum(mul(t[0], t[0])), sum(mul(c, t[0])));
        }, {x}, 1e-5);
    CHECK(err <= 1e-8);
}

TEST_CASE("tape replay is bit-identical") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor({2, 6, 6}, rng);
        Tensor k = random_tensor({3, 2, 3, 3}, rng);
        Tape tape;
        Tensor xt = tape.leaf(x);
        Tensor kt = tape.leaf(k);
        Tensor y = sum(relu(conv2d(xt, kt, 1, 1)));
        tape.backward(y);
        std::vector<double> out;
        out.push_back(y.value());
        Tensor gx = tape.grad(xt), gk = tape.grad(kt);
        out.insert(out.end(), gx.data(), gx.data() + gx.size());
        out.insert(out.end(), gk.data(), gk.data() + gk.size());
        return out;
    };
    auto a = run(99), b = run(99);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_check is exact for linear functions") {
    Rng rng(13);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return mean(mul(t[0], w)); }, {x}, 1e-3);
    CHECK(err <= 1e-10);
}

TEST_CASE("grad_check on a conv2d+relu chain") {
    Rng rng(14);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({2, 2, 3, 3}, rng);
    Tensor sw = random_tensor({2, 5, 5}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) {
            return sum(mul(relu(conv2d(t[0], t[1], 1, 1)), sw));
        }, {x, k}, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("grad_check on a softmax-matmul attention cell") {
    Rng rng(15);
    Tensor q = random_tensor({4, 3}, rng);
    Tensor k = random_tensor({4, 3}, rng);
    Tensor v = random_tensor({4, 3}, rng);
    Tensor sw = random_tensor({4, 3}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) {
            Tensor s = mul_scalar(matmul(t[0], permute(t[1], {1, 0})), 1.0 / std::sqrt(3.0));
            return sum(mul(matmul(softmax(s, 1), t[2]), sw));
        }, {q, k, v}, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("grad_check flags a wrong backward implementation") {
    // custom op with a deliberately scaled gradient; the checker must catch it
    auto broken_double = [](const Tensor& x) {
        Tape* tp = common_tape({&x});
        Tensor out(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = 2.0 * x.data()[i];
        if (!tp) return out;
        const int xn = x.node();
        const int64_t n = x.size();
        int node = tp->push_node(n, [xn, n](Tape& t, int self) {
            const std::vector<double>& g = *t.grad_if(self);
            auto& gx = t.grad_ref(xn);
            for (int64_t i = 0; i < n; ++i)
                gx[static_cast<size_t>(i)] += 2.02 * g[static_cast<size_t>(i)]; // should be 2.0
        });
        return tp->track(std::move(out), node);
    };
    Rng rng(16);
    Tensor x = random_tensor({3, 3}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return sum(broken_double(t[0])); }, {x}, 1e-5);
    CHECK(err > 1e-4);
}

TEST_CASE("gradient suite passes wholesale") {
    const auto results = gradient_suite(20240817ull);
    for (const auto& r : results) {
        INFO(r.name, ": ", r.value);
        CHECK(r.pass);
    }
}

TEST_CASE("operands on different tapes are rejected") {
    Tape t1, t2;
    Tensor a = t1.leaf(Tensor({2}, {1, 2}));
    Tensor b = t2.leaf(Tensor({2}, {3, 4}));
    CHECK_THROWS_AS(add(a, b), ShapeError);
}

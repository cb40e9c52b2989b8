#include <cmath>

#include "core/checks.hpp"
#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace fuseformer;

TEST_CASE("conv2d identity kernel") {
    Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == std::vector<int>{1, 3, 3});
    for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones 2x2 kernel sums the window") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == std::vector<int>{1, 1, 1});
    CHECK(y.value() == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("conv2d matches the loop oracle") {
    Rng rng(7);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor y = conv2d(x, k, 1, 0);
    auto want = naive::conv2d({x.data(), x.data() + x.size()}, 2, 5, 5,
                              {k.data(), k.data() + k.size()}, 3, 3, 3, 1, 0);
    REQUIRE(static_cast<size_t>(y.size()) == want.size());
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(std::fabs(y.data()[i] - want[i]) <= 1e-12);
}

TEST_CASE("conv2d rejects bad geometry") {
    Tensor k({1, 1, 3, 3});
    Tensor x2({1, 4, 4});
    CHECK_THROWS_AS(conv2d(x2, k, 3, 0), ShapeError);      // (4-3)%3 != 0
    Tensor kbig({1, 1, 7, 7});
    CHECK_THROWS_AS(conv2d(x2, kbig, 1, 0), ShapeError);   // kernel larger than input
    Tensor kmis({1, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x2, kmis, 1, 1), ShapeError);   // channel mismatch
    CHECK_THROWS_AS(conv2d(x2, k, 0, 0), ShapeError);      // stride < 1
    CHECK_THROWS_AS(conv2d(x2, k, 1, -1), ShapeError);     // negative padding
}

TEST_CASE("relu forward") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor y = relu(x);
    CHECK(y.data()[0] == 0.0);
    CHECK(y.data()[1] == 0.0);
    CHECK(y.data()[2] == 2.0);

    Tensor pos({4}, {0.5, 1.0, 2.0, 3.5});
    Tensor same = relu(pos);
    for (int i = 0; i < 4; ++i) CHECK(same.data()[i] == pos.data()[i]);
}

TEST_CASE("relu subgradient routes zero at negatives") {
    Tape tape;
    Tensor x = tape.leaf(Tensor({2}, {-1.0, 2.0}));
    tape.backward(sum(relu(x)));
    Tensor g = tape.grad(x);
    CHECK(g.data()[0] == 0.0);
    CHECK(g.data()[1] == 1.0);
}

TEST_CASE("matmul basics and oracle") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(3);
    Tensor x = random_tensor({3, 3}, rng);
    Tensor ix = matmul(eye, x);
    for (int i = 0; i < 9; ++i) CHECK(ix.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));

    Tensor a({1, 2}, {1, 2});
    Tensor b({2, 1}, {3, 4});
    CHECK(matmul(a, b).value() == doctest::Approx(11.0).epsilon(1e-15));

    Tensor m = random_tensor({4, 5}, rng);
    Tensor n = random_tensor({5, 3}, rng);
    Tensor got = matmul(m, n);
    auto want = naive::matmul({m.data(), m.data() + m.size()}, 4, 5, {n.data(), n.data() + n.size()}, 3);
    for (size_t i = 0; i < want.size(); ++i) CHECK(std::fabs(got.data()[i] - want[i]) <= 1e-12);

    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax examples") {
    Tensor z({2}, {0.0, 0.0});
    Tensor s = softmax(z, 0);
    CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s.data()[1] == doctest::Approx(0.5).epsilon(1e-14));

    Tensor big({2}, {1000.0, 1000.0});
    Tensor sb = softmax(big, 0);
    CHECK(std::isfinite(sb.data()[0]));
    CHECK(sb.data()[0] == doctest::Approx(0.5).epsilon(1e-14));

    Tensor closed({2}, {0.0, std::log(3.0)});
    Tensor sc = softmax(closed, 0);
    CHECK(std::fabs(sc.data()[0] - 0.25) <= 1e-12);
    CHECK(std::fabs(sc.data()[1] - 0.75) <= 1e-12);
}

TEST_CASE("softmax slices sum to one and shift invariance") {
    Rng rng(11);
    Tensor x = random_tensor({3, 6, 2}, rng, -3.0, 3.0);
    Tensor y = softmax(x, 1);
    for (int o = 0; o < 3; ++o)
        for (int in = 0; in < 2; ++in) {
            double s = 0.0;
            for (int i = 0; i < 6; ++i) s += y.data()[(o * 6 + i) * 2 + in];
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    Tensor shifted = softmax(add_scalar(x, 17.25), 1);
    for (int64_t i = 0; i < y.size(); ++i)
        CHECK(std::fabs(y.data()[i] - shifted.data()[i]) <= 1e-12);
}

TEST_CASE("concat shapes and identity") {
    Rng rng(5);
    Tensor a = random_tensor({1, 2, 2}, rng);
    Tensor b = random_tensor({1, 2, 2}, rng);
    Tensor c = concat({a, b}, 0);
    CHECK(c.shape() == std::vector<int>{2, 2, 2});
    for (int i = 0; i < 4; ++i) {
        CHECK(c.data()[i] == a.data()[i]);
        CHECK(c.data()[4 + i] == b.data()[i]);
    }
    Tensor single = concat({a}, 0);
    for (int i = 0; i < 4; ++i) CHECK(single.data()[i] == a.data()[i]);

    Tensor ragged({1, 3, 2});
    CHECK_THROWS_AS(concat({a, ragged}, 0), ShapeError);
}

TEST_CASE("concat gradient splits back to parts") {
    Rng rng(6);
    std::vector<Tensor> in = {random_tensor({2, 2}, rng), random_tensor({3, 2}, rng)};
    Tensor sw = random_tensor({5, 2}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return mean(mul(concat({t[0], t[1]}, 0), sw)); }, in, 1e-3);
    CHECK(err <= 1e-9);
}

TEST_CASE("upsample_nearest") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor id = upsample_nearest(x, 1);
    for (int i = 0; i < 4; ++i) CHECK(id.data()[i] == x.data()[i]);

    Tensor y = upsample_nearest(x, 2);
    CHECK(y.shape() == std::vector<int>{1, 4, 4});
    const double want[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == want[i]);

    Rng rng(8);
    std::vector<Tensor> in = {random_tensor({2, 3, 3}, rng)};
    Tensor sw = random_tensor({2, 6, 6}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return sum(mul(upsample_nearest(t[0], 2), sw)); }, in, 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("max_pool2d") {
    Tensor c = Tensor::full({1, 4, 4}, 0.3);
    Tensor cp = max_pool2d(c, 2);
    for (int i = 0; i < 4; ++i) CHECK(cp.data()[i] == 0.3);

    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    CHECK(max_pool2d(x, 2).value() == 4.0);

    CHECK_THROWS_AS(max_pool2d(Tensor({1, 5, 4}), 2), ShapeError);

    Rng rng(9);
    std::vector<Tensor> in = {random_tensor({2, 4, 4}, rng)};
    Tensor sw = random_tensor({2, 2, 2}, rng);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return sum(mul(max_pool2d(t[0], 2), sw)); }, in, 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("max_pool2d ties route to the first element in scan order") {
    Tape tape;
    Tensor x = tape.leaf(Tensor({1, 2, 2}, {0.7, 0.7, 0.7, 0.7}));
    tape.backward(sum(max_pool2d(x, 2)));
    Tensor g = tape.grad(x);
    CHECK(g.data()[0] == 1.0);
    CHECK(g.data()[1] == 0.0);
    CHECK(g.data()[2] == 0.0);
    CHECK(g.data()[3] == 0.0);
}

TEST_CASE("permute and reshape round-trip") {
    Rng rng(10);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor p = permute(x, {2, 0, 1});
    CHECK(p.shape() == std::vector<int>{4, 2, 3});
    // spot-check the mapping out[k,i,j] == x[i,j,k]
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k)
                CHECK(p.data()[(k * 2 + i) * 3 + j] == x.data()[(i * 3 + j) * 4 + k]);
    Tensor back = permute(p, {1, 2, 0});
    for (int64_t i = 0; i < x.size(); ++i) CHECK(back.data()[i] == x.data()[i]);

    Tensor r = reshape(x, {6, 4});
    CHECK(r.shape() == std::vector<int>{6, 4});
    CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
}

#include <cmath>

#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace fuseformer;

namespace {

Tensor random_image_tensor(int side, Rng& rng) { return random_tensor({1, side, side}, rng, 0.0, 1.0); }

GrayImage to_image(const Tensor& t) { return GrayImage::from_tensor(t); }

} // namespace

TEST_CASE("l_pixel closed forms and gradient") {
    Rng rng(61);
    Tensor x = random_image_tensor(8, rng);
    CHECK(l_pixel(x, x).value() == 0.0);

    Tensor o({1, 2, 2}, {1.5, 2.5, 3.5, 4.5});
    Tensor i({1, 2, 2}, {0.5, 1.5, 2.5, 3.5});
    CHECK(l_pixel(o, i).value() == doctest::Approx(4.0).epsilon(1e-15));

    // gradient is 2(o-i)
    Tape tape;
    Tensor ot = tape.leaf(o);
    tape.backward(l_pixel(ot, i));
    Tensor g = tape.grad(ot);
    for (int k = 0; k < 4; ++k) CHECK(g.data()[k] == doctest::Approx(2.0).epsilon(1e-14));

    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return l_pixel(t[0], t[1]); },
        {random_image_tensor(6, rng), random_image_tensor(6, rng)}, 1e-5);
    CHECK(err <= 1e-6);

    CHECK_THROWS_AS(l_pixel(o, Tensor({1, 2, 3})), ShapeError);
}

TEST_CASE("l_ssim matches the metric module in forward value") {
    Rng rng(62);
    for (int it = 0; it < 10; ++it) {
        Tensor a = random_image_tensor(16, rng);
        Tensor b = random_image_tensor(16, rng);
        const double metric = ssim(to_image(a), to_image(b), SsimParams{});
        CHECK(std::fabs(l_ssim(a, b).value() - (1.0 - metric)) <= 1e-10);
    }
}

TEST_CASE("l_ssim is zero on identical images and stays in [0,2]") {
    Rng rng(63);
    Tensor x = random_image_tensor(16, rng);
    CHECK(l_ssim(x, x).value() == 0.0);
    for (int it = 0; it < 100; ++it) {
        Tensor a = random_image_tensor(12, rng);
        Tensor b = random_image_tensor(12, rng);
        const double v = l_ssim(a, b, ssim_params_for(12, 12)).value();
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
    CHECK_THROWS_AS(l_ssim(Tensor({1, 8, 8}), Tensor({1, 8, 8})), ShapeError); // below window 11
}

TEST_CASE("l_ssim gradient") {
    Rng rng(64);
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return l_ssim(t[0], t[1]); },
        {random_image_tensor(16, rng), random_image_tensor(16, rng)}, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("l_ae composition") {
    Rng rng(65);
    Tensor o = random_image_tensor(16, rng);
    Tensor i = random_image_tensor(16, rng);
    LossWeights w;

    CHECK(l_ae(i, i, w).value() == 0.0);

    LossWeights zero = w;
    zero.alpha = 0.0;
    CHECK(l_ae(o, i, zero).value() == l_pixel(o, i).value());

    // affine in alpha: l_ae(2) - l_pixel == 2 * (l_ae(1) - l_pixel)
    LossWeights a1 = w, a2 = w;
    a1.alpha = 1.0;
    a2.alpha = 2.0;
    const double lp = l_pixel(o, i).value();
    const double d1 = l_ae(o, i, a1).value() - lp;
    const double d2 = l_ae(o, i, a2).value() - lp;
    CHECK(std::fabs(d2 - 2.0 * d1) <= 1e-12);
}

TEST_CASE("l_ssim_bar edge cases, symmetry, bounds, gradient") {
    Rng rng(66);
    Tensor v = random_image_tensor(16, rng);
    Tensor i = random_image_tensor(16, rng);

    CHECK(l_ssim_bar(v, v, v).value() == 0.0);

    // f == v leaves only the infrared term
    const double s = ssim(to_image(v), to_image(i), SsimParams{});
    CHECK(std::fabs(l_ssim_bar(v, v, i).value() - (1.0 - s) * (1.0 - s)) <= 1e-10);

    // symmetric in (vis, ir)
    Tensor f = random_image_tensor(16, rng);
    CHECK(std::fabs(l_ssim_bar(f, v, i).value() - l_ssim_bar(f, i, v).value()) <= 1e-12);

    for (int it = 0; it < 100; ++it) {
        Tensor a = random_image_tensor(12, rng);
        Tensor b = random_image_tensor(12, rng);
        Tensor c = random_image_tensor(12, rng);
        const double val = l_ssim_bar(a, b, c, ssim_params_for(12, 12)).value();
        CHECK(val >= 0.0);
        CHECK(val <= 8.0);
    }

    const double err = grad_check(
        [&](const std::vector<Tensor>& t) { return l_ssim_bar(t[0], v, i); }, {f}, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("l_feature reductions and oracle") {
    Rng rng(67);
    LossWeights w;
    w.omega_m = {1.0};
    w.omega_vi = 1.0;
    w.omega_ir = 0.0;

    // single scale with target == phi_vi reduces to l_pixel
    Tensor pf = random_tensor({3, 4, 4}, rng);
    Tensor pv = random_tensor({3, 4, 4}, rng);
    Tensor pi = random_tensor({3, 4, 4}, rng);
    FeaturePyramid f{{pf}}, v{{pv}}, i{{pi}};
    CHECK(std::fabs(l_feature(f, v, i, w).value() - l_pixel(pf, pv).value()) <= 1e-12);

    // exact target gives zero
    LossWeights w2;
    w2.omega_m = {1.0, 1.0};
    FeaturePyramid v2{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    FeaturePyramid i2{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    FeaturePyramid f2;
    for (int m = 0; m < 2; ++m)
        f2.scales.push_back(add(mul_scalar(v2.scales[static_cast<size_t>(m)], w2.omega_vi),
                                mul_scalar(i2.scales[static_cast<size_t>(m)], w2.omega_ir)));
    CHECK(l_feature(f2, v2, i2, w2).value() <= 1e-25);

    // scalar loop oracle on random two-scale pyramids
    LossWeights w3;
    w3.omega_m = {0.7, 1.3};
    w3.omega_vi = 0.55;
    w3.omega_ir = 0.45;
    FeaturePyramid f3{{random_tensor({2, 3, 3}, rng), random_tensor({4, 2, 2}, rng)}};
    FeaturePyramid v3{{random_tensor({2, 3, 3}, rng), random_tensor({4, 2, 2}, rng)}};
    FeaturePyramid i3{{random_tensor({2, 3, 3}, rng), random_tensor({4, 2, 2}, rng)}};
    double want = 0.0;
    for (int m = 0; m < 2; ++m) {
        const Tensor& a = f3.scales[static_cast<size_t>(m)];
        const Tensor& b = v3.scales[static_cast<size_t>(m)];
        const Tensor& c = i3.scales[static_cast<size_t>(m)];
        double acc = 0.0;
        for (int64_t k = 0; k < a.size(); ++k) {
            const double d = a.data()[k] - (w3.omega_vi * b.data()[k] + w3.omega_ir * c.data()[k]);
            acc += d * d;
        }
        want += w3.omega_m[static_cast<size_t>(m)] * acc;
    }
    CHECK(std::fabs(l_feature(f3, v3, i3, w3).value() - want) <= 1e-12);

    // depth mismatch
    CHECK_THROWS_AS(l_feature(f3, v2, i3, w3), ShapeError);
}

TEST_CASE("l_fuse composition and full gradient") {
    Rng rng(68);
    LossWeights w;
    w.omega_m = {1.0, 0.5};

    // all-identical degenerate inputs give zero
    Tensor img = random_image_tensor(16, rng);
    FeaturePyramid p{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    LossWeights wall = w;
    wall.omega_vi = 0.5;
    wall.omega_ir = 0.5;
    CHECK(l_fuse(img, img, img, p, p, p, wall).value() <= 1e-22);

    // alpha -> 0 leaves only the feature term
    Tensor fi = random_image_tensor(16, rng);
    Tensor vi = random_image_tensor(16, rng);
    Tensor ii = random_image_tensor(16, rng);
    FeaturePyramid fp{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    FeaturePyramid vp{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    FeaturePyramid ip{{random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 2}, rng)}};
    LossWeights tiny_alpha = w;
    tiny_alpha.alpha = 0.0;
    CHECK(std::fabs(l_fuse(fi, vi, ii, fp, vp, ip, tiny_alpha).value() -
                    l_feature(fp, vp, ip, w).value()) <= 1e-12);

    // gradient through both terms w.r.t. every input
    std::vector<Tensor> in = {fi, vi, ii, fp.scales[0], fp.scales[1], vp.scales[0], vp.scales[1],
                              ip.scales[0], ip.scales[1]};
    const double err = grad_check(
        [&](const std::vector<Tensor>& t) {
            FeaturePyramid a{{t[3], t[4]}}, b{{t[5], t[6]}}, c{{t[7], t[8]}};
            return l_fuse(t[0], t[1], t[2], a, b, c, w);
        }, in, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("losses are nonnegative on random inputs") {
    Rng rng(69);
    LossWeights w;
    w.omega_m = {1.0};
    for (int it = 0; it < 25; ++it) {
        Tensor f = random_image_tensor(12, rng);
        Tensor v = random_image_tensor(12, rng);
        Tensor i = random_image_tensor(12, rng);
        FeaturePyramid fp{{random_tensor({2, 3, 3}, rng)}};
        FeaturePyramid vp{{random_tensor({2, 3, 3}, rng)}};
        FeaturePyramid ip{{random_tensor({2, 3, 3}, rng)}};
        const SsimParams sp = ssim_params_for(12, 12);
        CHECK(l_pixel(f, v).value() >= 0.0);
        CHECK(l_ssim(f, v, sp).value() >= 0.0);
        CHECK(l_ae(f, v, w, sp).value() >= 0.0);
        CHECK(l_ssim_bar(f, v, i, sp).value() >= 0.0);
        CHECK(l_feature(fp, vp, ip, w).value() >= 0.0);
        CHECK(l_fuse(f, v, i, fp, vp, ip, w, sp).value() >= 0.0);
    }
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate(3));
    w.alpha = 0.0;
    CHECK_THROWS_AS(w.validate(3), ConfigError);
    w.alpha = 1.0;
    CHECK_THROWS_AS(w.validate(2), ConfigError); // omega_m length mismatch
    w.omega_m = {1.0, -0.5};
    CHECK_THROWS_AS(w.validate(2), ConfigError);
    w.omega_m = {1.0, 1.0};
    w.omega_vi = 0.0;
    w.omega_ir = 0.0;
    CHECK_THROWS_AS(w.validate(2), ConfigError);
}

#include "core/losses.hpp"

#include <string>

#include "core/errors.hpp"

namespace fuseformer {

void LossWeights::validate(int num_scales) const {
    if (alpha <= 0.0) throw ConfigError("loss weights: alpha must be positive");
    if (static_cast<int>(omega_m.size()) != num_scales)
        throw ConfigError("loss weights: omega_m must have one entry per scale");
    for (double w : omega_m)
        if (w < 0.0) throw ConfigError("loss weights: omega_m entries must be nonnegative");
    if (omega_vi < 0.0 || omega_ir < 0.0)
        throw ConfigError("loss weights: modality weights must be nonnegative");
    if (omega_vi + omega_ir <= 0.0)
        throw ConfigError("loss weights: omega_vi + omega_ir must be positive");
}

namespace {

Tensor as_chw(const Tensor& t, const char* who) {
    if (t.ndim() == 3 && t.dim(0) == 1) return t;
    if (t.ndim() == 2) return reshape(t, {1, t.dim(0), t.dim(1)});
    throw ShapeError(std::string(who) + ": expected a single-channel 2-D image tensor");
}

} // namespace

Tensor ssim_diff(const Tensor& a_in, const Tensor& b_in, const SsimParams& p) {
    p.validate();
    Tensor a = as_chw(a_in, "ssim");
    Tensor b = as_chw(b_in, "ssim");
    if (a.shape() != b.shape()) throw ShapeError("ssim: dimension mismatch");
    const int h = a.dim(1), w = a.dim(2);
    if (h < p.window_size || w < p.window_size) throw ShapeError("ssim: image smaller than the window");
    Tensor win({1, 1, p.window_size, p.window_size}, gaussian_window(p.window_size, p.window_sigma));
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    Tensor mu1 = conv2d(a, win, 1, 0);
    Tensor mu2 = conv2d(b, win, 1, 0);
    Tensor e11 = conv2d(mul(a, a), win, 1, 0);
    Tensor e22 = conv2d(mul(b, b), win, 1, 0);
    Tensor e12 = conv2d(mul(a, b), win, 1, 0);

    Tensor mu1mu1 = mul(mu1, mu1);
    Tensor mu2mu2 = mul(mu2, mu2);
    Tensor mu1mu2 = mul(mu1, mu2);
    Tensor s11 = sub(e11, mu1mu1);
    Tensor s22 = sub(e22, mu2mu2);
    Tensor s12 = sub(e12, mu1mu2);

    Tensor num = mul(add_scalar(mul_scalar(mu1mu2, 2.0), c1), add_scalar(mul_scalar(s12, 2.0), c2));
    Tensor den = mul(add_scalar(add(mu1mu1, mu2mu2), c1), add_scalar(add(s11, s22), c2));
    return mean(div(num, den));
}

Tensor l_pixel(const Tensor& output, const Tensor& input) {
    if (output.shape() != input.shape()) throw ShapeError("l_pixel: shape mismatch");
    Tensor d = sub(output, input);
    return sum(mul(d, d));
}

Tensor l_ssim(const Tensor& output, const Tensor& input, const SsimParams& p) {
    return add_scalar(mul_scalar(ssim_diff(output, input, p), -1.0), 1.0);
}

Tensor l_ae(const Tensor& output, const Tensor& input, const LossWeights& w, const SsimParams& p) {
    return add(l_pixel(output, input), mul_scalar(l_ssim(output, input, p), w.alpha));
}

Tensor l_ssim_bar(const Tensor& fused, const Tensor& vis, const Tensor& ir, const SsimParams& p) {
    Tensor tv = l_ssim(fused, vis, p);
    Tensor ti = l_ssim(fused, ir, p);
    return add(mul(tv, tv), mul(ti, ti));
}

Tensor l_feature(const FeaturePyramid& fused, const FeaturePyramid& vis, const FeaturePyramid& ir,
                 const LossWeights& w) {
    const size_t m = fused.scales.size();
    if (vis.scales.size() != m || ir.scales.size() != m)
        throw ShapeError("l_feature: pyramid depth mismatch");
    if (w.omega_m.size() != m) throw ShapeError("l_feature: omega_m must have one entry per scale");
    if (m == 0) throw ShapeError("l_feature: empty pyramids");
    Tensor total;
    for (size_t i = 0; i < m; ++i) {
        if (fused.scales[i].shape() != vis.scales[i].shape() ||
            fused.scales[i].shape() != ir.scales[i].shape())
            throw ShapeError("l_feature: per-scale shape mismatch");
        Tensor target = add(mul_scalar(vis.scales[i], w.omega_vi), mul_scalar(ir.scales[i], w.omega_ir));
        Tensor term = mul_scalar(l_pixel(fused.scales[i], target), w.omega_m[i]);
        total = i == 0 ? term : add(total, term);
    }
    return total;
}

Tensor l_fuse(const Tensor& fused_img, const Tensor& vis_img, const Tensor& ir_img,
              const FeaturePyramid& fused_pyr, const FeaturePyramid& vis_pyr,
              const FeaturePyramid& ir_pyr, const LossWeights& w, const SsimParams& p) {
    Tensor feat = l_feature(fused_pyr, vis_pyr, ir_pyr, w);
    Tensor sbar = l_ssim_bar(fused_img, vis_img, ir_img, p);
    return add(feat, mul_scalar(sbar, w.alpha));
}

} // namespace fuseformer

#include "core/checks.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/gradcheck.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

namespace fuseformer {

namespace naive {

std::vector<double> conv2d(const std::vector<double>& input, int ci, int h, int w,
                           const std::vector<double>& kernel, int co, int kh, int kw, int stride,
                           int padding) {
    const int ho = (h + 2 * padding - kh) / stride + 1;
    const int wo = (w + 2 * padding - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(co) * ho * wo, 0.0);
    for (int o = 0; o < co; ++o)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
                double acc = 0.0;
                for (int c = 0; c < ci; ++c)
                    for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ih = oh * stride - padding + dy;
                            const int iw = ow * stride - padding + dx;
                            if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                            acc += input[(static_cast<size_t>(c) * h + ih) * w + iw] *
                                   kernel[((static_cast<size_t>(o) * ci + c) * kh + dy) * kw + dx];
                        }
                out[(static_cast<size_t>(o) * ho + oh) * wo + ow] = acc;
            }
    return out;
}

std::vector<double> matmul(const std::vector<double>& a, int n, int k, const std::vector<double>& b,
                           int m) {
    std::vector<double> out(static_cast<size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk)
                acc += a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * m + j];
            out[static_cast<size_t>(i) * m + j] = acc;
        }
    return out;
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
    const int ws = p.window_size;
    const std::vector<double> win = gaussian_window(ws, p.window_sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const double c3 = c2 / 2.0;
    const int oh = a.height - ws + 1, ow = a.width - ws + 1;
    double acc = 0.0;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double mu1 = 0.0, mu2 = 0.0;
            for (int dy = 0; dy < ws; ++dy)
                for (int dx = 0; dx < ws; ++dx) {
                    const double w = win[static_cast<size_t>(dy) * ws + dx];
                    mu1 += w * a.at(x + dx, y + dy);
                    mu2 += w * b.at(x + dx, y + dy);
                }
            double v1 = 0.0, v2 = 0.0, cov = 0.0;
            for (int dy = 0; dy < ws; ++dy)
                for (int dx = 0; dx < ws; ++dx) {
                    const double w = win[static_cast<size_t>(dy) * ws + dx];
                    const double da = a.at(x + dx, y + dy) - mu1;
                    const double db = b.at(x + dx, y + dy) - mu2;
                    v1 += w * da * da;
                    v2 += w * db * db;
                    cov += w * da * db;
                }
            const double s1 = std::sqrt(std::max(0.0, v1));
            const double s2 = std::sqrt(std::max(0.0, v2));
            const double lum = (2.0 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1);
            const double con = (2.0 * s1 * s2 + c2) / (v1 + v2 + c2);
            const double str = (cov + c3) / (s1 * s2 + c3);
            acc += lum * con * str;
        }
    return acc / (static_cast<double>(oh) * ow);
}

double entropy(const GrayImage& img) {
    std::vector<long> hist(256, 0);
    for (double p : img.pixels) {
        int b = static_cast<int>(std::floor(p * 256.0));
        b = std::clamp(b, 0, 255);
        hist[static_cast<size_t>(b)]++;
    }
    double h = 0.0;
    for (long c : hist)
        if (c > 0) {
            const double pr = static_cast<double>(c) / static_cast<double>(img.size());
            h -= pr * std::log2(pr);
        }
    return h;
}

double mutual_information(const GrayImage& a, const GrayImage& b, int bins) {
    auto bin_of = [bins](double p) {
        int v = static_cast<int>(std::floor(p * bins));
        return std::clamp(v, 0, bins - 1);
    };
    std::vector<long> ja(static_cast<size_t>(bins), 0), jb(static_cast<size_t>(bins), 0);
    std::vector<long> jab(static_cast<size_t>(bins) * bins, 0);
    for (size_t i = 0; i < a.size(); ++i) {
        const int x = bin_of(a.pixels[i]), y = bin_of(b.pixels[i]);
        ja[static_cast<size_t>(x)]++;
        jb[static_cast<size_t>(y)]++;
        jab[static_cast<size_t>(x) * bins + y]++;
    }
    const double n = static_cast<double>(a.size());
    auto h_of = [n](const std::vector<long>& hist) {
        double h = 0.0;
        for (long c : hist)
            if (c > 0) {
                const double pr = static_cast<double>(c) / n;
                h -= pr * std::log2(pr);
            }
        return h;
    };
    return h_of(ja) + h_of(jb) - h_of(jab);
}

namespace {

// single-pass raw-moment Pearson correlation
double corr_raw(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    const double va = saa / n - (sa / n) * (sa / n);
    const double vb = sbb / n - (sb / n) * (sb / n);
    if (va < 1e-15 || vb < 1e-15) return 0.0;
    const double cov = sab / n - (sa / n) * (sb / n);
    return cov / std::sqrt(va * vb);
}

} // namespace

double scd(const GrayImage& fused, const GrayImage& vis, const GrayImage& ir) {
    std::vector<double> d1(fused.size()), d2(fused.size());
    for (size_t i = 0; i < fused.size(); ++i) {
        d1[i] = fused.pixels[i] - vis.pixels[i];
        d2[i] = fused.pixels[i] - ir.pixels[i];
    }
    return corr_raw(d1, ir.pixels) + corr_raw(d2, vis.pixels);
}

std::vector<double> full_attention(const std::vector<double>& x, int t, int c,
                                   const std::vector<double>& wq, const std::vector<double>& wk,
                                   const std::vector<double>& wv, const std::vector<double>& wo,
                                   int heads) {
    const int dh = c / heads;
    const std::vector<double> q = matmul(x, t, c, wq, c);
    const std::vector<double> k = matmul(x, t, c, wk, c);
    const std::vector<double> v = matmul(x, t, c, wv, c);
    std::vector<double> ctx(static_cast<size_t>(t) * c, 0.0);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < t; ++i) {
            std::vector<double> scores(static_cast<size_t>(t));
            double mx = -1e300;
            for (int j = 0; j < t; ++j) {
                double s = 0.0;
                for (int d = 0; d < dh; ++d)
                    s += q[static_cast<size_t>(i) * c + off + d] * k[static_cast<size_t>(j) * c + off + d];
                s /= std::sqrt(static_cast<double>(dh));
                scores[static_cast<size_t>(j)] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                z += s;
            }
            for (int j = 0; j < t; ++j)
                for (int d = 0; d < dh; ++d)
                    ctx[static_cast<size_t>(i) * c + off + d] +=
                        scores[static_cast<size_t>(j)] / z * v[static_cast<size_t>(j) * c + off + d];
        }
    }
    std::vector<double> proj = matmul(ctx, t, c, wo, c);
    for (size_t i = 0; i < proj.size(); ++i) proj[i] += x[i];
    return proj;
}

} // namespace naive

namespace {

Tensor nudged_random(std::vector<int> shape, Rng& rng, double margin = 0.05) {
    Tensor t = random_tensor(std::move(shape), rng);
    for (int64_t i = 0; i < t.size(); ++i) {
        double& v = t.data()[i];
        if (std::fabs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
    }
    return t;
}

// weighted sum against fixed random weights, so every output element matters
Tensor scalarize(const Tensor& t, Rng& rng) {
    Tensor w = random_tensor(t.shape(), rng);
    return sum(mul(t, w.detached()));
}

CheckResult graded(const std::string& name, double err, double threshold) {
    CheckResult r;
    r.name = name;
    r.value = err;
    r.threshold = threshold;
    r.pass = err <= threshold;
    if (!r.pass) r.detail = "error " + std::to_string(err) + " exceeds " + std::to_string(threshold);
    return r;
}

double max_abs_diff(const double* a, const double* b, size_t n) {
    double m = 0.0;
    for (size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace

std::vector<CheckResult> gradient_suite(uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(seed);
    const double eps = 1e-5;

    {
        Tensor x = nudged_random({3, 4}, rng);
        Tensor sw = random_tensor({3, 4}, rng);
        out.push_back(graded("grad.relu",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(relu(in[0]), sw));
                             }, {x}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({3, 4}, rng);
        Tensor sw = random_tensor({3, 4}, rng);
        out.push_back(graded("grad.sigmoid",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(sigmoid(in[0]), sw));
                             }, {x}, eps),
                             1e-4));
    }
    {
        Tensor a = random_tensor({2, 5}, rng);
        Tensor b = random_tensor({2, 5}, rng, 0.5, 1.5); // div-safe
        Tensor sw = random_tensor({2, 5}, rng);
        out.push_back(graded("grad.elementwise",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 Tensor s = add(in[0], in[1]);
                                 Tensor d = sub(in[0], in[1]);
                                 Tensor m = mul(in[0], in[1]);
                                 Tensor q = div(in[0], in[1]);
                                 return sum(mul(add(add(s, d), add(m, q)), sw));
                             }, {a, b}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({4, 3}, rng);
        out.push_back(graded("grad.scalar_ops_linear",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return mean(add_scalar(mul_scalar(in[0], 2.5), -0.75));
                             }, {x}, 1e-3),
                             1e-9));
    }
    {
        Tensor a = random_tensor({4, 5}, rng);
        Tensor b = random_tensor({5, 3}, rng);
        Tensor sw = random_tensor({4, 3}, rng);
        out.push_back(graded("grad.matmul",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(matmul(in[0], in[1]), sw));
                             }, {a, b}, eps),
                             1e-4));
    }
    {
        Tensor a = random_tensor({2, 3, 4}, rng);
        Tensor b = random_tensor({2, 4, 2}, rng);
        Tensor sw = random_tensor({2, 3, 2}, rng);
        out.push_back(graded("grad.bmm",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(bmm(in[0], in[1]), sw));
                             }, {a, b}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({2, 3, 4}, rng);
        Tensor sw = random_tensor({4, 6}, rng);
        out.push_back(graded("grad.reshape_permute",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 Tensor p = permute(in[0], {2, 0, 1}); // [4,2,3]
                                 return mean(mul(reshape(p, {4, 6}), sw));
                             }, {x}, 1e-3),
                             1e-9));
    }
    {
        Tensor a = random_tensor({2, 2, 3}, rng);
        Tensor b = random_tensor({2, 1, 3}, rng);
        Tensor c = random_tensor({2, 3, 3}, rng);
        Tensor sw = random_tensor({2, 6, 3}, rng);
        out.push_back(graded("grad.concat",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return mean(mul(concat({in[0], in[1], in[2]}, 1), sw));
                             }, {a, b, c}, 1e-3),
                             1e-9));
    }
    {
        Tensor x = random_tensor({2, 5, 5}, rng);
        Tensor k = random_tensor({3, 2, 3, 3}, rng);
        Tensor sw = random_tensor({3, 5, 5}, rng);
        out.push_back(graded("grad.conv2d",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(conv2d(in[0], in[1], 1, 1), sw));
                             }, {x, k}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({2, 5, 5}, rng);
        Tensor k = random_tensor({2, 2, 3, 3}, rng);
        Tensor sw = random_tensor({2, 3, 3}, rng);
        out.push_back(graded("grad.conv2d_strided",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(conv2d(in[0], in[1], 2, 1), sw));
                             }, {x, k}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({3, 2, 4}, rng);
        Tensor b = random_tensor({3}, rng);
        Tensor sw = random_tensor({3, 2, 4}, rng);
        out.push_back(graded("grad.add_channel_bias",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return mean(mul(add_channel_bias(in[0], in[1]), sw));
                             }, {x, b}, 1e-3),
                             1e-9));
    }
    {
        Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
        Tensor sw = random_tensor({3, 5}, rng);
        out.push_back(graded("grad.softmax",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(softmax(in[0], 1), sw));
                             }, {x}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({2, 3, 3}, rng);
        Tensor sw = random_tensor({2, 6, 6}, rng);
        out.push_back(graded("grad.upsample_nearest",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(upsample_nearest(in[0], 2), sw));
                             }, {x}, eps),
                             1e-6));
    }
    {
        Tensor x = random_tensor({2, 4, 4}, rng);
        Tensor sw = random_tensor({2, 2, 2}, rng);
        out.push_back(graded("grad.max_pool2d",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return sum(mul(max_pool2d(in[0], 2), sw));
                             }, {x}, eps),
                             1e-6));
    }
    {
        // x feeding two consumers: fan-out adjoints must add
        Tensor x = random_tensor({3, 3}, rng);
        Tensor c = random_tensor({3, 3}, rng);
        out.push_back(graded("grad.fanout",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return add(sum(mul(in[0], in[0])), sum(mul(in[0], c)));
                             }, {x}, eps),
                             1e-4));
    }
    {
        // one attention cell: softmax(q k^T / sqrt(d)) v through the op stack
        Tensor q = random_tensor({4, 3}, rng);
        Tensor k = random_tensor({4, 3}, rng);
        Tensor v = random_tensor({4, 3}, rng);
        Tensor sw = random_tensor({4, 3}, rng);
        out.push_back(graded("grad.attention_cell",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 Tensor kt = permute(in[1], {1, 0});
                                 Tensor s = mul_scalar(matmul(in[0], kt), 1.0 / std::sqrt(3.0));
                                 return sum(mul(matmul(softmax(s, 1), in[2]), sw));
                             }, {q, k, v}, eps),
                             1e-4));
    }
    {
        Tensor x = random_tensor({4, 3, 5}, rng);
        Tensor wq = random_tensor({4, 4}, rng);
        Tensor wk = random_tensor({4, 4}, rng);
        Tensor wv = random_tensor({4, 4}, rng);
        Tensor wo = random_tensor({4, 4}, rng);
        Tensor sw = random_tensor({4, 3, 5}, rng);
        out.push_back(graded("grad.axial_attention",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 Tensor y = axial_attention(in[0], AttnAxis::width, in[1], in[2], in[3],
                                                            in[4], 2);
                                 return sum(mul(y, sw));
                             }, {x, wq, wk, wv, wo}, eps),
                             1e-4));
    }
    {
        Tensor o = random_tensor({1, 4, 4}, rng);
        Tensor i = random_tensor({1, 4, 4}, rng);
        out.push_back(graded("grad.l_pixel",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return l_pixel(in[0], in[1]);
                             }, {o, i}, eps),
                             1e-6));
    }
    {
        Tensor o = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor i = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        out.push_back(graded("grad.l_ssim",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return l_ssim(in[0], in[1]);
                             }, {o, i}, eps),
                             1e-4));
    }
    {
        Tensor o = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor i = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        LossWeights lw;
        lw.alpha = 10.0;
        out.push_back(graded("grad.l_ae",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return l_ae(in[0], in[1], lw);
                             }, {o, i}, eps),
                             1e-4));
    }
    {
        Tensor f = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor v = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor i = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        out.push_back(graded("grad.l_ssim_bar",
                             grad_check([&](const std::vector<Tensor>& in) {
                                 return l_ssim_bar(in[0], v, i);
                             }, {f}, eps),
                             1e-4));
    }
    {
        LossWeights lw;
        lw.omega_m = {0.7, 1.3};
        std::vector<Tensor> in;
        for (int p = 0; p < 3; ++p) {
            in.push_back(random_tensor({2, 4, 4}, rng));
            in.push_back(random_tensor({3, 2, 2}, rng));
        }
        out.push_back(graded("grad.l_feature",
                             grad_check([&](const std::vector<Tensor>& t) {
                                 FeaturePyramid f{{t[0], t[1]}}, v{{t[2], t[3]}}, i{{t[4], t[5]}};
                                 return l_feature(f, v, i, lw);
                             }, in, eps),
                             1e-4));
    }
    {
        LossWeights lw;
        lw.omega_m = {1.0, 0.5};
        Tensor fi = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor vi = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor ii = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        std::vector<Tensor> in = {fi, vi, ii};
        for (int p = 0; p < 3; ++p) {
            in.push_back(random_tensor({2, 6, 6}, rng));
            in.push_back(random_tensor({3, 3, 3}, rng));
        }
        out.push_back(graded("grad.l_fuse",
                             grad_check([&](const std::vector<Tensor>& t) {
                                 FeaturePyramid f{{t[3], t[4]}}, v{{t[5], t[6]}}, i{{t[7], t[8]}};
                                 return l_fuse(t[0], t[1], t[2], f, v, i, lw);
                             }, in, eps),
                             1e-4));
    }
    {
        // stage-1 path: l_ae through decode(encode(x)) w.r.t. every backbone parameter
        ModelConfig cfg;
        cfg.num_scales = 2;
        cfg.channels = {2, 4};
        cfg.heads = 2;
        cfg.layers = 1;
        cfg.input_h = cfg.input_w = 16;
        ModelWeights w = init_backbone(cfg, seed + 11);
        Tensor img = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        LossWeights lw;
        std::vector<Tensor> params;
        for (const auto& e : w.entries) params.push_back(e.value);
        Rng pick(seed + 12);
        out.push_back(graded("grad.forward_ae",
                             grad_check_sampled([&](const std::vector<Tensor>& t) {
                                 ModelWeights w2;
                                 w2.config = cfg;
                                 for (size_t e = 0; e < w.entries.size(); ++e)
                                     w2.add(w.entries[e].name, w.entries[e].stage, t[e]);
                                 return l_ae(forward_ae(img, w2), img, lw);
                             }, params, eps, 60, pick),
                             1e-4));
    }
    {
        // stage-2 path: l_fuse through the fusion blocks with a frozen backbone
        ModelConfig cfg;
        cfg.num_scales = 2;
        cfg.channels = {2, 4};
        cfg.heads = 2;
        cfg.layers = 1;
        cfg.input_h = cfg.input_w = 16;
        ModelWeights w = init_backbone(cfg, seed + 21);
        init_fusion(w, seed + 22);
        Tensor vis = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor ir = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        LossWeights lw;
        lw.omega_m = {1.0, 1.0};
        FeaturePyramid vp = encode(vis, w), ip = encode(ir, w);
        std::vector<Tensor> params;
        std::vector<size_t> fusion_slots;
        for (size_t e = 0; e < w.entries.size(); ++e)
            if (w.entries[e].stage == Stage::fusion) {
                params.push_back(w.entries[e].value);
                fusion_slots.push_back(e);
            }
        Rng pick(seed + 23);
        out.push_back(graded("grad.forward_fusion",
                             grad_check_sampled([&](const std::vector<Tensor>& t) {
                                 ModelWeights w2;
                                 w2.config = cfg;
                                 size_t which = 0;
                                 for (size_t e = 0; e < w.entries.size(); ++e) {
                                     const bool fus = which < fusion_slots.size() && fusion_slots[which] == e;
                                     w2.add(w.entries[e].name, w.entries[e].stage,
                                            fus ? t[which] : w.entries[e].value);
                                     if (fus) ++which;
                                 }
                                 FeaturePyramid fp;
                                 for (int m = 1; m <= cfg.num_scales; ++m)
                                     fp.scales.push_back(fuse_block(vp.scales[static_cast<size_t>(m - 1)],
                                                                    ip.scales[static_cast<size_t>(m - 1)],
                                                                    w2, m));
                                 Tensor fused = decode(fp, w2);
                                 return l_fuse(fused, vis, ir, fp, vp, ip, lw);
                             }, params, eps, 60, pick),
                             1e-4));
    }
    return out;
}

std::vector<CheckResult> oracle_suite(uint64_t seed, int instances) {
    std::vector<CheckResult> out;
    Rng rng(seed);

    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const int ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(3);
            const int kh = 1 + rng.uniform_int(3), kw = 1 + rng.uniform_int(3);
            const int stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(3);
            int h = kh - 2 * pad + stride * (1 + rng.uniform_int(5));
            int w = kw - 2 * pad + stride * (1 + rng.uniform_int(5));
            h = std::max(h, std::max(1, kh - 2 * pad));
            w = std::max(w, std::max(1, kw - 2 * pad));
            while ((h + 2 * pad - kh) % stride != 0) ++h;
            while ((w + 2 * pad - kw) % stride != 0) ++w;
            Tensor x = random_tensor({ci, h, w}, rng);
            Tensor k = random_tensor({co, ci, kh, kw}, rng);
            Tensor got = conv2d(x, k, stride, pad);
            std::vector<double> want =
                naive::conv2d({x.data(), x.data() + x.size()}, ci, h, w,
                              {k.data(), k.data() + k.size()}, co, kh, kw, stride, pad);
            worst = std::max(worst, max_abs_diff(got.data(), want.data(), want.size()));
        }
        out.push_back(graded("oracle.conv2d", worst, 1e-12));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const int n = 1 + rng.uniform_int(8), k = 1 + rng.uniform_int(8), m = 1 + rng.uniform_int(8);
            Tensor a = random_tensor({n, k}, rng);
            Tensor b = random_tensor({k, m}, rng);
            Tensor got = matmul(a, b);
            std::vector<double> want =
                naive::matmul({a.data(), a.data() + a.size()}, n, k, {b.data(), b.data() + b.size()}, m);
            worst = std::max(worst, max_abs_diff(got.data(), want.data(), want.size()));
        }
        out.push_back(graded("oracle.matmul", worst, 1e-12));
    }
    {
        double worst = 0.0;
        SsimParams p;
        for (int it = 0; it < instances; ++it) {
            GrayImage a(16, 16), b(16, 16);
            for (auto& v : a.pixels) v = rng.uniform();
            for (auto& v : b.pixels) v = rng.uniform();
            worst = std::max(worst, std::fabs(ssim(a, b, p) - naive::ssim(a, b, p)));
        }
        out.push_back(graded("oracle.ssim", worst, 1e-10));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            GrayImage a(12, 12);
            const int levels = 2 + rng.uniform_int(255);
            for (auto& v : a.pixels) v = static_cast<double>(rng.uniform_int(levels)) / levels;
            worst = std::max(worst, std::fabs(entropy(a) - naive::entropy(a)));
        }
        out.push_back(graded("oracle.entropy", worst, 1e-12));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const int side = 8 + rng.uniform_int(9);
            const int bins = it % 2 == 0 ? 256 : 16;
            GrayImage a(side, side), b(side, side);
            for (auto& v : a.pixels) v = rng.uniform();
            for (size_t i = 0; i < b.pixels.size(); ++i)
                b.pixels[i] = std::clamp(a.pixels[i] * 0.5 + rng.uniform() * 0.5, 0.0, 1.0);
            worst = std::max(worst,
                             std::fabs(mutual_information(a, b, bins) - naive::mutual_information(a, b, bins)));
        }
        out.push_back(graded("oracle.mi", worst, 1e-10));
    }
    {
        double worst = 0.0;
        for (int it = 0; it < instances; ++it) {
            const int side = 8 + rng.uniform_int(9);
            GrayImage f(side, side), v(side, side), i(side, side);
            for (auto& x : f.pixels) x = rng.uniform();
            for (auto& x : v.pixels) x = rng.uniform();
            for (auto& x : i.pixels) x = rng.uniform();
            worst = std::max(worst, std::fabs(scd(f, v, i) - naive::scd(f, v, i)));
        }
        out.push_back(graded("oracle.scd", worst, 1e-10));
    }
    return out;
}

std::vector<CheckResult> attention_suite(uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(seed);

    auto equiv_case = [&](bool row_case) {
        const int c = 4, n = 7, heads = 2;
        Tensor x = row_case ? random_tensor({c, 1, n}, rng) : random_tensor({c, n, 1}, rng);
        Tensor wq = random_tensor({c, c}, rng);
        Tensor wk = random_tensor({c, c}, rng);
        Tensor wv = random_tensor({c, c}, rng);
        Tensor wo = random_tensor({c, c}, rng);
        Tensor y = axial_attention(x, row_case ? AttnAxis::width : AttnAxis::height, wq, wk, wv, wo, heads);
        // token-major copy of x for the dense oracle
        std::vector<double> tokens(static_cast<size_t>(n) * c);
        for (int t = 0; t < n; ++t)
            for (int ch = 0; ch < c; ++ch)
                tokens[static_cast<size_t>(t) * c + ch] = x.data()[static_cast<int64_t>(ch) * n + t];
        std::vector<double> want = naive::full_attention(
            tokens, n, c, {wq.data(), wq.data() + wq.size()}, {wk.data(), wk.data() + wk.size()},
            {wv.data(), wv.data() + wv.size()}, {wo.data(), wo.data() + wo.size()}, heads);
        double worst = 0.0;
        for (int t = 0; t < n; ++t)
            for (int ch = 0; ch < c; ++ch)
                worst = std::max(worst, std::fabs(want[static_cast<size_t>(t) * c + ch] -
                                                  y.data()[static_cast<int64_t>(ch) * n + t]));
        return worst;
    };
    out.push_back(graded("attn.full_equivalence_1xN", equiv_case(true), 1e-10));
    out.push_back(graded("attn.full_equivalence_Nx1", equiv_case(false), 1e-10));

    {
        const int c = 8, h = 6, w = 5, heads = 2;
        Tensor x = random_tensor({c, h, w}, rng);
        AttnTrace trace;
        Tensor y = axial_attention(x, AttnAxis::height, random_tensor({c, c}, rng),
                                   random_tensor({c, c}, rng), random_tensor({c, c}, rng),
                                   random_tensor({c, c}, rng), heads, &trace);
        (void)y;
        Tensor y2 = axial_attention(x, AttnAxis::width, random_tensor({c, c}, rng),
                                    random_tensor({c, c}, rng), random_tensor({c, c}, rng),
                                    random_tensor({c, c}, rng), heads, &trace);
        (void)y2;
        double worst = 0.0;
        for (const Tensor& map : trace.maps) {
            const int b = map.dim(0), t = map.dim(1);
            for (int bb = 0; bb < b; ++bb)
                for (int i = 0; i < t; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < t; ++j)
                        s += map.data()[(static_cast<int64_t>(bb) * t + i) * t + j];
                    worst = std::max(worst, std::fabs(s - 1.0));
                }
        }
        out.push_back(graded("attn.rows_sum_to_one", worst, 1e-12));
    }
    return out;
}

std::vector<CheckResult> bounds_suite(uint64_t seed, int triples) {
    std::vector<CheckResult> out;
    Rng rng(seed);
    double ssim_lo = 1e300, ssim_hi = -1e300, bar_lo = 1e300, bar_hi = -1e300;
    for (int it = 0; it < triples; ++it) {
        Tensor f = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor v = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        Tensor i = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
        const double ls = l_ssim(f, v).value();
        const double lb = l_ssim_bar(f, v, i).value();
        ssim_lo = std::min(ssim_lo, ls);
        ssim_hi = std::max(ssim_hi, ls);
        bar_lo = std::min(bar_lo, lb);
        bar_hi = std::max(bar_hi, lb);
    }
    const double ssim_excess = std::max(0.0 - ssim_lo, ssim_hi - 2.0);
    const double bar_excess = std::max(0.0 - bar_lo, bar_hi - 8.0);
    out.push_back(graded("bounds.l_ssim_in_0_2", std::max(ssim_excess, 0.0), 0.0));
    out.push_back(graded("bounds.l_ssim_bar_in_0_8", std::max(bar_excess, 0.0), 0.0));

    {
        Rng r2(seed + 1);
        Tensor x = random_tensor({1, 16, 16}, r2, 0.0, 1.0);
        const double z1 = l_ssim(x, x).value();
        const double z2 = l_ssim_bar(x, x, x).value();
        const double z3 = l_pixel(x, x).value();
        CheckResult r;
        r.name = "bounds.exact_zero_on_identical";
        r.value = std::max({std::fabs(z1), std::fabs(z2), std::fabs(z3)});
        r.threshold = 0.0;
        r.pass = z1 == 0.0 && z2 == 0.0 && z3 == 0.0;
        if (!r.pass) r.detail = "losses on identical inputs are not exactly zero";
        out.push_back(r);
    }
    return out;
}

std::vector<CheckResult> selftest_suite(uint64_t seed) {
    std::vector<CheckResult> all;
    for (auto& r : gradient_suite(seed)) all.push_back(std::move(r));
    for (auto& r : oracle_suite(seed + 1, 25)) all.push_back(std::move(r));
    for (auto& r : attention_suite(seed + 2)) all.push_back(std::move(r));
    for (auto& r : bounds_suite(seed + 3, 200)) all.push_back(std::move(r));
    return all;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return true;
}

const CheckResult* first_failure(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return &r;
    return nullptr;
}

} // namespace fuseformer

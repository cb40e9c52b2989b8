#include "core/metrics.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace fuseformer {

void SsimParams::validate() const {
    if (window_size < 3 || window_size % 2 == 0)
        throw ShapeError("ssim: window size must be odd and >= 3");
    if (k1 <= 0.0 || k2 <= 0.0) throw ShapeError("ssim: k1 and k2 must be positive");
    if (dynamic_range <= 0.0) throw ShapeError("ssim: dynamic range must be positive");
}

SsimParams ssim_params_for(int width, int height) {
    SsimParams p;
    const int m = width < height ? width : height;
    if (m < p.window_size) {
        if (m < 3) throw ShapeError("ssim: image too small for any window");
        p.window_size = m % 2 == 1 ? m : m - 1;
    }
    return p;
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<size_t>(size) * size);
    const int half = size / 2;
    double total = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double d2 = static_cast<double>((x - half) * (x - half) + (y - half) * (y - half));
            const double v = std::exp(-d2 / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y) * size + x] = v;
            total += v;
        }
    for (auto& v : w) v /= total;
    return w;
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
    p.validate();
    if (a.width != b.width || a.height != b.height) throw ShapeError("ssim: dimension mismatch");
    if (a.width < p.window_size || a.height < p.window_size)
        throw ShapeError("ssim: image smaller than the window");
    const int ws = p.window_size;
    const std::vector<double> win = gaussian_window(ws, p.window_sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const int oh = a.height - ws + 1, ow = a.width - ws + 1;
    double acc = 0.0;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double mu1 = 0.0, mu2 = 0.0, e11 = 0.0, e22 = 0.0, e12 = 0.0;
            for (int dy = 0; dy < ws; ++dy) {
                const double* ra = &a.pixels[static_cast<size_t>(y + dy) * a.width + x];
                const double* rb = &b.pixels[static_cast<size_t>(y + dy) * b.width + x];
                const double* rw = &win[static_cast<size_t>(dy) * ws];
                for (int dx = 0; dx < ws; ++dx) {
                    const double w = rw[dx], va = ra[dx], vb = rb[dx];
                    mu1 += w * va;
                    mu2 += w * vb;
                    e11 += w * va * va;
                    e22 += w * vb * vb;
                    e12 += w * va * vb;
                }
            }
            const double s11 = e11 - mu1 * mu1;
            const double s22 = e22 - mu2 * mu2;
            const double s12 = e12 - mu1 * mu2;
            acc += ((2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)) /
                   ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2));
        }
    }
    return acc / (static_cast<double>(oh) * ow);
}

double ssim(const GrayImage& a, const GrayImage& b) {
    return ssim(a, b, ssim_params_for(a.width, a.height));
}

namespace {

int bin_of(double p, int bins) {
    int b = static_cast<int>(std::floor(p * bins));
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    return b;
}

} // namespace

double entropy(const GrayImage& img) {
    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    for (double p : img.pixels) hist[static_cast<size_t>(bin_of(p, kBins))] += 1.0;
    const double n = static_cast<double>(img.size());
    double h = 0.0;
    for (double c : hist) {
        if (c <= 0.0) continue;
        const double pr = c / n;
        h -= pr * std::log2(pr);
    }
    return h;
}

double mutual_information(const GrayImage& a, const GrayImage& b, int bins) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("mutual_information: dimension mismatch");
    if (bins < 2) throw ShapeError("mutual_information: bins must be >= 2");
    std::vector<double> joint(static_cast<size_t>(bins) * bins, 0.0);
    std::vector<double> pa(static_cast<size_t>(bins), 0.0), pb(static_cast<size_t>(bins), 0.0);
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) {
        const int ba = bin_of(a.pixels[i], bins);
        const int bb = bin_of(b.pixels[i], bins);
        joint[static_cast<size_t>(ba) * bins + bb] += 1.0;
        pa[static_cast<size_t>(ba)] += 1.0;
        pb[static_cast<size_t>(bb)] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    double mi = 0.0;
    for (int x = 0; x < bins; ++x) {
        if (pa[static_cast<size_t>(x)] <= 0.0) continue;
        for (int y = 0; y < bins; ++y) {
            const double j = joint[static_cast<size_t>(x) * bins + y];
            if (j <= 0.0) continue;
            const double pxy = j * inv;
            mi += pxy * std::log2(pxy / (pa[static_cast<size_t>(x)] * inv * pb[static_cast<size_t>(y)] * inv));
        }
    }
    return mi < 0.0 ? 0.0 : mi;
}

double correlation(const GrayImage& a, const GrayImage& b) {
    if (a.width != b.width || a.height != b.height) throw ShapeError("correlation: dimension mismatch");
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a.pixels[i];
        mb += b.pixels[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    const double va = saa / static_cast<double>(n), vb = sbb / static_cast<double>(n);
    if (va < 1e-15 || vb < 1e-15) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

double scd(const GrayImage& fused, const GrayImage& vis, const GrayImage& ir) {
    if (fused.width != vis.width || fused.height != vis.height || fused.width != ir.width ||
        fused.height != ir.height)
        throw ShapeError("scd: dimension mismatch");
    GrayImage d1(fused.width, fused.height), d2(fused.width, fused.height);
    for (size_t i = 0; i < fused.size(); ++i) {
        d1.pixels[i] = fused.pixels[i] - vis.pixels[i];
        d2.pixels[i] = fused.pixels[i] - ir.pixels[i];
    }
    return correlation(d1, ir) + correlation(d2, vis);
}

MetricRow evaluate_fused(const std::string& id, const GrayImage& fused, const GrayImage& vis,
                         const GrayImage& ir) {
    MetricRow row;
    row.id = id;
    row.entropy = entropy(fused);
    row.scd = scd(fused, vis, ir);
    row.mi = mutual_information(fused, vis) + mutual_information(fused, ir);
    const SsimParams p = ssim_params_for(fused.width, fused.height);
    row.ssim_vis = ssim(fused, vis, p);
    row.ssim_ir = ssim(fused, ir, p);
    return row;
}

MetricRow aggregate_rows(const std::vector<MetricRow>& rows) {
    MetricRow agg;
    agg.id = "AGGREGATE";
    if (rows.empty()) return agg;
    for (const auto& r : rows) {
        agg.entropy += r.entropy;
        agg.scd += r.scd;
        agg.mi += r.mi;
        agg.ssim_vis += r.ssim_vis;
        agg.ssim_ir += r.ssim_ir;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    agg.entropy *= inv;
    agg.scd *= inv;
    agg.mi *= inv;
    agg.ssim_vis *= inv;
    agg.ssim_ir *= inv;
    return agg;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "id,entropy,scd,mi,ssim\n";
    auto emit = [&out](const MetricRow& r) {
        out += r.id + "," + fmt6(r.entropy) + "," + fmt6(r.scd) + "," + fmt6(r.mi) + "," +
               fmt6(r.ssim_mean()) + "\n";
    };
    for (const auto& r : rows) emit(r);
    if (!rows.empty()) emit(aggregate_rows(rows));
    return out;
}

} // namespace fuseformer

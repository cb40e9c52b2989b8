#pragma once

#include <string>
#include <vector>

#include "core/image.hpp"

namespace fuseformer {

struct SsimParams {
    int window_size = 11;
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

// Default parameters for an image of the given dimensions: window 11 when it
// fits, otherwise the largest odd window not exceeding the smaller dimension.
SsimParams ssim_params_for(int width, int height);

// normalized Gaussian window, row-major size*size
std::vector<double> gaussian_window(int size, double sigma);

// Mean over all valid window positions of the standard three-term SSIM
// (Gaussian-weighted local statistics, C3 = C2/2 folded into the two-factor
// form). Symmetric; in [-1,1]; 1 for identical images.
double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p);
double ssim(const GrayImage& a, const GrayImage& b);

// Shannon entropy in bits of the 256-bin histogram; pixel p lands in
// min(floor(p*256), 255).
double entropy(const GrayImage& img);

// Mutual information in bits from the bins*bins joint histogram.
double mutual_information(const GrayImage& a, const GrayImage& b, int bins = 256);

// Pearson correlation; 0 when either variance is below 1e-15.
double correlation(const GrayImage& a, const GrayImage& b);

// r(F - I_v, I_i) + r(F - I_i, I_v)
double scd(const GrayImage& fused, const GrayImage& vis, const GrayImage& ir);

// One evaluated pair. `mi` is MI(F,vis) + MI(F,ir); the reported scalar SSIM
// is the mean of the per-reference values.
struct MetricRow {
    std::string id;
    double entropy = 0.0;
    double scd = 0.0;
    double mi = 0.0;
    double ssim_vis = 0.0;
    double ssim_ir = 0.0;

    double ssim_mean() const { return 0.5 * (ssim_vis + ssim_ir); }
};

MetricRow evaluate_fused(const std::string& id, const GrayImage& fused, const GrayImage& vis,
                         const GrayImage& ir);

MetricRow aggregate_rows(const std::vector<MetricRow>& rows);

// "id,entropy,scd,mi,ssim" header, one row per pair, then an AGGREGATE mean
// row; six decimal places.
std::string metrics_csv(const std::vector<MetricRow>& rows);

} // namespace fuseformer

#pragma once

#include <vector>

#include "core/metrics.hpp"
#include "core/ops.hpp"
#include "core/tensor.hpp"

namespace fuseformer {

struct LossWeights {
    double alpha = 10.0;                  // pixel/feature vs SSIM trade-off
    std::vector<double> omega_m = {1.0, 1.0, 1.0}; // per-scale feature weights
    double omega_vi = 0.6;                // modality weights of the feature target
    double omega_ir = 0.4;

    void validate(int num_scales) const;
};

// Feature maps per scale, finest first.
struct FeaturePyramid {
    std::vector<Tensor> scales;
};

// Differentiable SSIM mean; same statistics and constants as metrics::ssim.
// Inputs [H,W] or [1,H,W].
Tensor ssim_diff(const Tensor& a, const Tensor& b, const SsimParams& p = SsimParams{});

// squared Frobenius norm of (output - input)
Tensor l_pixel(const Tensor& output, const Tensor& input);

// 1 - SSIM(output, input), in [0,2]
Tensor l_ssim(const Tensor& output, const Tensor& input, const SsimParams& p = SsimParams{});

// l_pixel + alpha * l_ssim
Tensor l_ae(const Tensor& output, const Tensor& input, const LossWeights& w,
            const SsimParams& p = SsimParams{});

// [1-SSIM(f,v)]^2 + [1-SSIM(f,i)]^2, in [0,8]
Tensor l_ssim_bar(const Tensor& fused, const Tensor& vis, const Tensor& ir,
                  const SsimParams& p = SsimParams{});

// sum_m omega^m * || phi_f^m - (omega_vi*phi_vi^m + omega_ir*phi_ir^m) ||_F^2
Tensor l_feature(const FeaturePyramid& fused, const FeaturePyramid& vis, const FeaturePyramid& ir,
                 const LossWeights& w);

// l_feature + alpha * l_ssim_bar
Tensor l_fuse(const Tensor& fused_img, const Tensor& vis_img, const Tensor& ir_img,
              const FeaturePyramid& fused_pyr, const FeaturePyramid& vis_pyr,
              const FeaturePyramid& ir_pyr, const LossWeights& w,
              const SsimParams& p = SsimParams{});

} // namespace fuseformer

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/metrics.hpp"
#include "core/tensor.hpp"

namespace fuseformer {

// Naive reference implementations, kept deliberately independent of the
// tensor-op code paths they are compared against.
namespace naive {

// straight six-nested-loop cross-correlation
std::vector<double> conv2d(const std::vector<double>& input, int ci, int h, int w,
                           const std::vector<double>& kernel, int co, int kh, int kw, int stride,
                           int padding);

// row-by-column dot products
std::vector<double> matmul(const std::vector<double>& a, int n, int k, const std::vector<double>& b,
                           int m);

// per-window three-term SSIM with c3 = c2/2
double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p);

double entropy(const GrayImage& img);

// H(a) + H(b) - H(a,b) route
double mutual_information(const GrayImage& a, const GrayImage& b, int bins);

// raw-moment (single-pass) correlation route
double scd(const GrayImage& fused, const GrayImage& vis, const GrayImage& ir);

// dense multi-head self-attention over T tokens of dim c, with residual;
// x, wq..wo row-major
std::vector<double> full_attention(const std::vector<double>& x, int t, int c,
                                   const std::vector<double>& wq, const std::vector<double>& wk,
                                   const std::vector<double>& wv, const std::vector<double>& wo,
                                   int heads);

} // namespace naive

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;     // measured error or bound excess
    double threshold = 0.0;
    std::string detail;
};

// finite-difference checks of every differentiable op and loss
std::vector<CheckResult> gradient_suite(uint64_t seed);
// implementation-vs-oracle comparisons, `instances` random cases each
std::vector<CheckResult> oracle_suite(uint64_t seed, int instances);
// axial-vs-full attention equivalence and attention-row normalization
std::vector<CheckResult> attention_suite(uint64_t seed);
// loss range bounds over `triples` random image triples
std::vector<CheckResult> bounds_suite(uint64_t seed, int triples);

// gradient + oracle + attention battery used by the selftest command
std::vector<CheckResult> selftest_suite(uint64_t seed);

bool all_pass(const std::vector<CheckResult>& results);
const CheckResult* first_failure(const std::vector<CheckResult>& results);

} // namespace fuseformer

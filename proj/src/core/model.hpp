#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/losses.hpp"
#include "core/tensor.hpp"

namespace fuseformer {

struct ModelConfig {
    int num_scales = 3;
    std::vector<int> channels = {8, 16, 32};
    int heads = 2;
    int layers = 2; // height+width attention pairs per fusion block, per modality
    int input_h = 32;
    int input_w = 32;

    void validate() const;
    int head_dim(int scale_index) const { return channels[static_cast<size_t>(scale_index)] / heads; }
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

enum class Stage : uint8_t { encoder = 0, decoder = 1, fusion = 2 };

// Named parameter store. Entry order is construction order and fixes both
// the file layout and the optimizer update order.
struct ModelWeights {
    struct Entry {
        std::string name;
        Stage stage;
        Tensor value;
    };

    ModelConfig config;
    std::vector<Entry> entries;
    std::unordered_map<std::string, size_t> index;

    void add(const std::string& name, Stage stage, Tensor value);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return index.count(name) != 0; }
    void set(const std::string& name, Tensor value); // shape must match
    bool has_stage(Stage s) const;
};

// Encoder + decoder parameters, uniform in +-sqrt(1/fan_in), biases zero.
ModelWeights init_backbone(const ModelConfig& cfg, uint64_t seed);
// Appends (or replaces) the fusion-block parameters.
void init_fusion(ModelWeights& w, uint64_t seed);

// Versioned binary weight file; layout documented in docs/weight-format.md.
std::string encode_weights(const ModelWeights& w);
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights decode_weights(const std::string& bytes, const std::string& origin);
ModelWeights load_weights(const std::string& path);

// Encoder/decoder of `a` must match `b` (scales, channels, input size);
// heads/layers are fusion-side and may differ.
void check_backbone_compat(const ModelConfig& a, const ModelConfig& b);

// Copy of `w` whose selected stages are tape leaves; the rest stay constants.
ModelWeights bind_weights(const ModelWeights& w, Tape& tape, bool train_encoder, bool train_decoder,
                          bool train_fusion);

enum class AttnAxis { height, width };

// Per-head attention maps captured during a forward pass (softmax outputs,
// [batch*heads, T, T], in call order).
struct AttnTrace {
    std::vector<Tensor> maps;
};

// Multi-head scaled dot-product attention along one image axis, with a
// residual connection. x is [C,H,W]; every row (axis width) or column
// (axis height) is one sequence.
Tensor axial_attention(const Tensor& x, AttnAxis axis, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv, const Tensor& wo, int heads, AttnTrace* trace = nullptr);

struct FusionResult {
    Tensor fused;
    FeaturePyramid fused_pyr;
    FeaturePyramid vis_pyr;
    FeaturePyramid ir_pyr;
};

FeaturePyramid encode(const Tensor& img, const ModelWeights& w);
// scale is 1-based to match parameter names
Tensor fuse_block(const Tensor& phi_v, const Tensor& phi_ir, const ModelWeights& w, int scale,
                  AttnTrace* trace = nullptr);
Tensor decode(const FeaturePyramid& pyr, const ModelWeights& w);
Tensor forward_ae(const Tensor& img, const ModelWeights& w);
FusionResult forward_fusion(const Tensor& vis, const Tensor& ir, const ModelWeights& w,
                            AttnTrace* trace = nullptr);

// Rewrites fusion parameters so each scale's output equals its visible-band
// input exactly (test/diagnostic surgery).
void set_fusion_passthrough_visible(ModelWeights& w);

} // namespace fuseformer

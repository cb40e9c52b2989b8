#include "core/model.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/util.hpp"

namespace fuseformer {

void ModelConfig::validate() const {
    if (num_scales < 1) throw ConfigError("model: num_scales must be >= 1");
    if (static_cast<int>(channels.size()) != num_scales)
        throw ConfigError("model: need one channel count per scale");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    for (int c : channels) {
        if (c < 1) throw ConfigError("model: channel counts must be positive");
        if (c % heads != 0) throw ConfigError("model: channel counts must be divisible by heads");
    }
    const int div = 1 << (num_scales - 1);
    if (input_h < div || input_w < div || input_h % div != 0 || input_w % div != 0)
        throw ConfigError("model: input size must be divisible by 2^(num_scales-1)");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.num_scales == b.num_scales && a.channels == b.channels && a.heads == b.heads &&
           a.layers == b.layers && a.input_h == b.input_h && a.input_w == b.input_w;
}

void ModelWeights::add(const std::string& name, Stage stage, Tensor value) {
    if (index.count(name)) throw ConfigError("duplicate parameter: " + name);
    index[name] = entries.size();
    entries.push_back(Entry{name, stage, std::move(value)});
}

const Tensor& ModelWeights::get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("missing parameter: " + name);
    return entries[it->second].value;
}

void ModelWeights::set(const std::string& name, Tensor value) {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("missing parameter: " + name);
    if (entries[it->second].value.shape() != value.shape())
        throw ShapeError("set: shape mismatch for " + name);
    entries[it->second].value = std::move(value);
}

bool ModelWeights::has_stage(Stage s) const {
    for (const auto& e : entries)
        if (e.stage == s) return true;
    return false;
}

namespace {

Tensor init_conv(Rng& rng, int co, int ci, int k) {
    Tensor t({co, ci, k, k});
    const double bound = std::sqrt(1.0 / (static_cast<double>(ci) * k * k));
    double* d = t.data();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor init_proj(Rng& rng, int c) {
    Tensor t({c, c});
    const double bound = std::sqrt(1.0 / static_cast<double>(c));
    double* d = t.data();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = rng.uniform(-bound, bound);
    return t;
}

std::string scale_prefix(const char* group, int scale) {
    return std::string(group) + ".s" + std::to_string(scale) + ".";
}

} // namespace

ModelWeights init_backbone(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelWeights w;
    w.config = cfg;
    Rng rng(seed);
    int prev = 1;
    for (int m = 1; m <= cfg.num_scales; ++m) {
        const int c = cfg.channels[static_cast<size_t>(m - 1)];
        const std::string p = scale_prefix("enc", m);
        w.add(p + "conv.w", Stage::encoder, init_conv(rng, c, prev, 3));
        w.add(p + "conv.b", Stage::encoder, Tensor({c}));
        prev = c;
    }
    for (int m = cfg.num_scales - 1; m >= 1; --m) {
        const int c_deep = cfg.channels[static_cast<size_t>(m)];
        const int c_here = cfg.channels[static_cast<size_t>(m - 1)];
        const std::string p = scale_prefix("dec", m);
        w.add(p + "conv.w", Stage::decoder, init_conv(rng, c_here, c_deep + c_here, 3));
        w.add(p + "conv.b", Stage::decoder, Tensor({c_here}));
    }
    w.add("dec.out.w", Stage::decoder, init_conv(rng, 1, cfg.channels[0], 3));
    w.add("dec.out.b", Stage::decoder, Tensor({1}));
    return w;
}

void init_fusion(ModelWeights& w, uint64_t seed) {
    const ModelConfig& cfg = w.config;
    cfg.validate();
    // drop any previous fusion entries, keep backbone order intact
    std::vector<ModelWeights::Entry> kept;
    for (auto& e : w.entries)
        if (e.stage != Stage::fusion) kept.push_back(std::move(e));
    w.entries = std::move(kept);
    w.index.clear();
    for (size_t i = 0; i < w.entries.size(); ++i) w.index[w.entries[i].name] = i;

    Rng rng(seed);
    for (int m = 1; m <= cfg.num_scales; ++m) {
        const int c = cfg.channels[static_cast<size_t>(m - 1)];
        const std::string p = scale_prefix("fuse", m);
        w.add(p + "spatial.c1.w", Stage::fusion, init_conv(rng, c, 2 * c, 3));
        w.add(p + "spatial.c1.b", Stage::fusion, Tensor({c}));
        w.add(p + "spatial.c2.w", Stage::fusion, init_conv(rng, c, c, 3));
        w.add(p + "spatial.c2.b", Stage::fusion, Tensor({c}));
        for (const char* mod : {"vis", "ir"}) {
            for (int l = 1; l <= cfg.layers; ++l) {
                for (const char* ax : {"h", "w"}) {
                    const std::string q = p + "tr." + mod + ".l" + std::to_string(l) + "." + ax + ".";
                    w.add(q + "wq", Stage::fusion, init_proj(rng, c));
                    w.add(q + "wk", Stage::fusion, init_proj(rng, c));
                    w.add(q + "wv", Stage::fusion, init_proj(rng, c));
                    w.add(q + "wo", Stage::fusion, init_proj(rng, c));
                }
            }
        }
        w.add(p + "out.w", Stage::fusion, init_conv(rng, c, 5 * c, 3));
        w.add(p + "out.b", Stage::fusion, Tensor({c}));
    }
}

static const char kWeightMagic[9] = "FFWT0001"; // 8 bytes written

std::string encode_weights(const ModelWeights& w) {
    std::string out(kWeightMagic, 8);
    put_u32(out, static_cast<uint32_t>(w.config.num_scales));
    for (int c : w.config.channels) put_u32(out, static_cast<uint32_t>(c));
    put_u32(out, static_cast<uint32_t>(w.config.heads));
    put_u32(out, static_cast<uint32_t>(w.config.layers));
    put_u32(out, static_cast<uint32_t>(w.config.input_h));
    put_u32(out, static_cast<uint32_t>(w.config.input_w));
    put_u32(out, static_cast<uint32_t>(w.entries.size()));
    for (const auto& e : w.entries) {
        put_u32(out, static_cast<uint32_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.stage));
        put_u32(out, static_cast<uint32_t>(e.value.ndim()));
        for (int d : e.value.shape()) put_u32(out, static_cast<uint32_t>(d));
        for (int64_t i = 0; i < e.value.size(); ++i) put_f64(out, e.value.data()[i]);
    }
    put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

void save_weights(const ModelWeights& w, const std::string& path) {
    write_file_atomic(path, encode_weights(w));
}

ModelWeights decode_weights(const std::string& in, const std::string& origin) {
    if (in.size() < 16 || in.compare(0, 8, kWeightMagic, 8) != 0)
        throw IoError("not a fuseformer weight file: " + origin);
    const uint64_t stored = [&] {
        size_t p = in.size() - 8;
        return get_u64(in, p);
    }();
    if (fnv1a64(in.data(), in.size() - 8) != stored)
        throw IoError("weight file checksum mismatch: " + origin);
    size_t pos = 8;
    ModelWeights w;
    w.config.num_scales = static_cast<int>(get_u32(in, pos));
    if (w.config.num_scales < 1 || w.config.num_scales > 64)
        throw IoError("weight file has implausible scale count: " + origin);
    w.config.channels.clear();
    for (int i = 0; i < w.config.num_scales; ++i)
        w.config.channels.push_back(static_cast<int>(get_u32(in, pos)));
    w.config.heads = static_cast<int>(get_u32(in, pos));
    w.config.layers = static_cast<int>(get_u32(in, pos));
    w.config.input_h = static_cast<int>(get_u32(in, pos));
    w.config.input_w = static_cast<int>(get_u32(in, pos));
    const uint32_t count = get_u32(in, pos);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(in, pos);
        if (pos + name_len > in.size()) throw IoError("truncated weight file: " + origin);
        std::string name = in.substr(pos, name_len);
        pos += name_len;
        if (pos >= in.size()) throw IoError("truncated weight file: " + origin);
        const uint8_t stage = static_cast<uint8_t>(in[pos++]);
        if (stage > 2) throw IoError("weight file has unknown stage tag: " + origin);
        const uint32_t ndim = get_u32(in, pos);
        if (ndim > 8) throw IoError("weight file has implausible rank: " + origin);
        std::vector<int> shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(get_u32(in, pos)));
        const int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        for (int64_t k = 0; k < n; ++k) data[static_cast<size_t>(k)] = get_f64(in, pos);
        w.add(name, static_cast<Stage>(stage), Tensor(shape, std::move(data)));
    }
    w.config.validate();
    return w;
}

ModelWeights load_weights(const std::string& path) { return decode_weights(read_file(path), path); }

void check_backbone_compat(const ModelConfig& a, const ModelConfig& b) {
    if (a.num_scales != b.num_scales || a.channels != b.channels || a.input_h != b.input_h ||
        a.input_w != b.input_w)
        throw ConfigError("weight file backbone does not match the configured model");
}

ModelWeights bind_weights(const ModelWeights& w, Tape& tape, bool train_encoder, bool train_decoder,
                          bool train_fusion) {
    ModelWeights bound;
    bound.config = w.config;
    for (const auto& e : w.entries) {
        const bool track = (e.stage == Stage::encoder && train_encoder) ||
                           (e.stage == Stage::decoder && train_decoder) ||
                           (e.stage == Stage::fusion && train_fusion);
        bound.add(e.name, e.stage, track ? tape.leaf(e.value) : e.value);
    }
    return bound;
}

Tensor axial_attention(const Tensor& x, AttnAxis axis, const Tensor& wq, const Tensor& wk,
                       const Tensor& wv, const Tensor& wo, int heads, AttnTrace* trace) {
    if (x.ndim() != 3) throw ShapeError("axial_attention: input must be [C,H,W]");
    const int c = x.dim(0);
    if (heads < 1 || c % heads != 0)
        throw ShapeError("axial_attention: channels must be divisible by heads");
    for (const Tensor* p : {&wq, &wk, &wv, &wo})
        if (p->ndim() != 2 || p->dim(0) != c || p->dim(1) != c)
            throw ShapeError("axial_attention: projection weights must be [C,C]");
    const int dh = c / heads;

    const bool width_axis = axis == AttnAxis::width;
    Tensor seq = width_axis ? permute(x, {1, 2, 0}) : permute(x, {2, 1, 0}); // [B,T,C]
    const int B = seq.dim(0), T = seq.dim(1);

    Tensor flat = reshape(seq, {B * T, c});
    Tensor q = matmul(flat, wq);
    Tensor k = matmul(flat, wk);
    Tensor v = matmul(flat, wv);

    auto split_heads = [&](const Tensor& t) {
        return reshape(permute(reshape(t, {B, T, heads, dh}), {0, 2, 1, 3}), {B * heads, T, dh});
    };
    Tensor qh = split_heads(q);
    Tensor kh = reshape(permute(reshape(k, {B, T, heads, dh}), {0, 2, 3, 1}), {B * heads, dh, T});
    Tensor vh = split_heads(v);

    Tensor scores = mul_scalar(bmm(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax(scores, 2);
    if (trace) trace->maps.push_back(attn.detached());

    Tensor ctx = bmm(attn, vh); // [B*heads, T, dh]
    Tensor merged = reshape(permute(reshape(ctx, {B, heads, T, dh}), {0, 2, 1, 3}), {B * T, c});
    Tensor proj = reshape(matmul(merged, wo), {B, T, c});
    Tensor out = add(seq, proj); // residual

    return width_axis ? permute(out, {2, 0, 1}) : permute(out, {2, 1, 0});
}

FeaturePyramid encode(const Tensor& img, const ModelWeights& w) {
    const ModelConfig& cfg = w.config;
    if (img.ndim() != 3 || img.dim(0) != 1 || img.dim(1) != cfg.input_h || img.dim(2) != cfg.input_w)
        throw ShapeError("encode: input must be [1," + std::to_string(cfg.input_h) + "," +
                         std::to_string(cfg.input_w) + "]");
    FeaturePyramid pyr;
    Tensor x = img;
    for (int m = 1; m <= cfg.num_scales; ++m) {
        const std::string p = scale_prefix("enc", m);
        x = relu(add_channel_bias(conv2d(x, w.get(p + "conv.w"), 1, 1), w.get(p + "conv.b")));
        pyr.scales.push_back(x);
        if (m < cfg.num_scales) x = max_pool2d(x, 2);
    }
    return pyr;
}

Tensor fuse_block(const Tensor& phi_v, const Tensor& phi_ir, const ModelWeights& w, int scale,
                  AttnTrace* trace) {
    if (phi_v.shape() != phi_ir.shape()) throw ShapeError("fuse_block: modality shapes differ");
    const ModelConfig& cfg = w.config;
    const std::string p = scale_prefix("fuse", scale);

    Tensor sp = concat({phi_v, phi_ir}, 0);
    sp = relu(add_channel_bias(conv2d(sp, w.get(p + "spatial.c1.w"), 1, 1), w.get(p + "spatial.c1.b")));
    sp = relu(add_channel_bias(conv2d(sp, w.get(p + "spatial.c2.w"), 1, 1), w.get(p + "spatial.c2.b")));

    auto transformer = [&](const Tensor& input, const char* mod) {
        Tensor t = input;
        for (int l = 1; l <= cfg.layers; ++l) {
            const std::string q = p + "tr." + mod + ".l" + std::to_string(l) + ".";
            t = axial_attention(t, AttnAxis::height, w.get(q + "h.wq"), w.get(q + "h.wk"),
                                w.get(q + "h.wv"), w.get(q + "h.wo"), cfg.heads, trace);
            t = axial_attention(t, AttnAxis::width, w.get(q + "w.wq"), w.get(q + "w.wk"),
                                w.get(q + "w.wv"), w.get(q + "w.wo"), cfg.heads, trace);
        }
        return t;
    };
    Tensor tv = transformer(phi_v, "vis");
    Tensor ti = transformer(phi_ir, "ir");

    Tensor cat = concat({sp, tv, ti, phi_v, phi_ir}, 0);
    return relu(add_channel_bias(conv2d(cat, w.get(p + "out.w"), 1, 1), w.get(p + "out.b")));
}

Tensor decode(const FeaturePyramid& pyr, const ModelWeights& w) {
    const ModelConfig& cfg = w.config;
    if (static_cast<int>(pyr.scales.size()) != cfg.num_scales)
        throw ShapeError("decode: pyramid depth does not match the model");
    Tensor d = pyr.scales.back();
    for (int m = cfg.num_scales - 1; m >= 1; --m) {
        const std::string p = scale_prefix("dec", m);
        d = upsample_nearest(d, 2);
        d = concat({d, pyr.scales[static_cast<size_t>(m - 1)]}, 0); // cross-layer connection
        d = relu(add_channel_bias(conv2d(d, w.get(p + "conv.w"), 1, 1), w.get(p + "conv.b")));
    }
    return sigmoid(add_channel_bias(conv2d(d, w.get("dec.out.w"), 1, 1), w.get("dec.out.b")));
}

Tensor forward_ae(const Tensor& img, const ModelWeights& w) { return decode(encode(img, w), w); }

FusionResult forward_fusion(const Tensor& vis, const Tensor& ir, const ModelWeights& w,
                            AttnTrace* trace) {
    FusionResult r;
    r.vis_pyr = encode(vis, w);
    r.ir_pyr = encode(ir, w);
    for (int m = 1; m <= w.config.num_scales; ++m)
        r.fused_pyr.scales.push_back(fuse_block(r.vis_pyr.scales[static_cast<size_t>(m - 1)],
                                                r.ir_pyr.scales[static_cast<size_t>(m - 1)], w, m,
                                                trace));
    r.fused = decode(r.fused_pyr, w);
    return r;
}

void set_fusion_passthrough_visible(ModelWeights& w) {
    const ModelConfig& cfg = w.config;
    for (int m = 1; m <= cfg.num_scales; ++m) {
        const int c = cfg.channels[static_cast<size_t>(m - 1)];
        const std::string p = scale_prefix("fuse", m);
        // final conv picks the phi_v block (channels [3C,4C)) with a center tap
        Tensor k({c, 5 * c, 3, 3});
        for (int o = 0; o < c; ++o)
            k.data()[((static_cast<int64_t>(o) * 5 * c + 3 * c + o) * 3 + 1) * 3 + 1] = 1.0;
        w.set(p + "out.w", std::move(k));
        w.set(p + "out.b", Tensor({c}));
    }
}

} // namespace fuseformer

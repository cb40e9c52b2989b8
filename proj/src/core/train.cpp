#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/util.hpp"

namespace fs = std::filesystem;

namespace fuseformer {

double LrSchedule::at(double base, int epoch) const {
    if (kind == Kind::constant) return base;
    return base * std::pow(factor, static_cast<double>(epoch / every));
}

LrSchedule LrSchedule::parse(const std::string& text) {
    LrSchedule s;
    if (text == "constant") {
        s.kind = Kind::constant;
        return s;
    }
    if (text.rfind("step:", 0) == 0) {
        s.kind = Kind::step;
        const size_t second = text.find(':', 5);
        if (second == std::string::npos) throw ConfigError("lr_schedule: expected step:<factor>:<every>");
        try {
            s.factor = std::stod(text.substr(5, second - 5));
            s.every = std::stoi(text.substr(second + 1));
        } catch (const std::exception&) {
            throw ConfigError("lr_schedule: cannot parse '" + text + "'");
        }
        if (s.factor <= 0.0 || s.factor > 1.0 || s.every < 1)
            throw ConfigError("lr_schedule: factor must be in (0,1], every >= 1");
        return s;
    }
    throw ConfigError("lr_schedule: unknown schedule '" + text + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be positive");
    model.validate();
    loss.validate(model.num_scales);
    const bool has_manifest = !manifest.empty();
    const bool has_synth = synth_count > 0;
    if (has_manifest == has_synth)
        throw ConfigError("config: set exactly one data source (manifest or synth_count)");
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: empty element in " + key);
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("config: cannot parse " + key + " element '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("config: " + key + " is empty");
    return out;
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: cannot parse integer " + key + "='" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: cannot parse number " + key + "='" + v + "'");
    }
}

} // namespace

TrainConfig TrainConfig::parse(const std::string& text, const std::string& base_dir) {
    TrainConfig cfg;
    bool omega_m_set = false;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "stage") {
            if (val == "ae")
                cfg.stage = TrainStage::ae;
            else if (val == "fusion")
                cfg.stage = TrainStage::fusion;
            else
                throw ConfigError("config: stage must be 'ae' or 'fusion'");
        } else if (key == "epochs") {
            cfg.epochs = parse_int(val, key);
        } else if (key == "batch_size") {
            cfg.batch_size = parse_int(val, key);
        } else if (key == "learning_rate") {
            cfg.learning_rate = parse_double(val, key);
        } else if (key == "lr_schedule") {
            cfg.schedule = LrSchedule::parse(val);
        } else if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(std::stoull(val));
        } else if (key == "alpha") {
            cfg.loss.alpha = parse_double(val, key);
        } else if (key == "omega_m") {
            cfg.loss.omega_m = parse_double_list(val, key);
            omega_m_set = true;
        } else if (key == "omega_vi") {
            cfg.loss.omega_vi = parse_double(val, key);
        } else if (key == "omega_ir") {
            cfg.loss.omega_ir = parse_double(val, key);
        } else if (key == "scales") {
            cfg.model.num_scales = parse_int(val, key);
        } else if (key == "channels") {
            cfg.model.channels.clear();
            for (double c : parse_double_list(val, key))
                cfg.model.channels.push_back(static_cast<int>(c));
        } else if (key == "heads") {
            cfg.model.heads = parse_int(val, key);
        } else if (key == "layers") {
            cfg.model.layers = parse_int(val, key);
        } else if (key == "input") {
            const size_t x = val.find('x');
            if (x == std::string::npos) throw ConfigError("config: input must be <H>x<W>");
            cfg.model.input_h = parse_int(trim(val.substr(0, x)), key);
            cfg.model.input_w = parse_int(trim(val.substr(x + 1)), key);
        } else if (key == "manifest") {
            cfg.manifest = (fs::path(base_dir) / val).lexically_normal().string();
        } else if (key == "synth_count") {
            cfg.synth_count = parse_int(val, key);
        } else if (key == "synth_size") {
            cfg.synth_size = parse_int(val, key);
        } else if (key == "synth_export") {
            cfg.synth_export = (fs::path(base_dir) / val).lexically_normal().string();
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (!omega_m_set) cfg.loss.omega_m.assign(static_cast<size_t>(cfg.model.num_scales), 1.0);
    cfg.validate();
    return cfg;
}

TrainConfig TrainConfig::parse_file(const std::string& path) {
    return parse(read_file(path), fs::path(path).parent_path().string());
}

std::vector<ImagePair> load_config_data(const TrainConfig& cfg) {
    std::vector<ImagePair> pairs;
    if (!cfg.manifest.empty()) {
        pairs = load_manifest(cfg.manifest);
    } else {
        pairs = synth_pairs(cfg.synth_count, cfg.synth_size, cfg.seed);
        if (!cfg.synth_export.empty()) export_pairs(pairs, cfg.synth_export);
    }
    for (const auto& p : pairs)
        if (p.visible.width != cfg.model.input_w || p.visible.height != cfg.model.input_h)
            throw ShapeError("pair '" + p.id + "' does not match the configured input size");
    return pairs;
}

std::string TrainLog::csv() const {
    std::string out = "epoch," + loss_name + "," + term1_name + "," + term2_name + ",lr,checkpoint_loss\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "," + fmt17(r.loss) + "," + fmt17(r.term1) + "," +
               fmt17(r.term2) + "," + fmt17(r.lr) + ",";
        if (r.checkpointed) out += fmt17(r.checkpoint_loss);
        out += "\n";
    }
    for (const auto& note : footnotes) out += "# " + note + "\n";
    return out;
}

void Adam::step(ModelWeights& w, const std::vector<std::pair<std::string, Tensor>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
    for (const auto& [name, grad] : grads) {
        Tensor& param = w.entries[w.index.at(name)].value;
        if (param.shape() != grad.shape()) throw ShapeError("adam: gradient shape mismatch for " + name);
        auto& [m, v] = moments_[name];
        const size_t n = static_cast<size_t>(param.size());
        if (m.empty()) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
        double* p = param.data();
        const double* g = grad.data();
        for (size_t i = 0; i < n; ++i) {
            m[i] = p_.beta1 * m[i] + (1.0 - p_.beta1) * g[i];
            v[i] = p_.beta2 * v[i] + (1.0 - p_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + p_.eps);
        }
    }
}

namespace {

struct EpochStats {
    double loss = 0.0, term1 = 0.0, term2 = 0.0;
    int count = 0;
    void add(double l, double t1, double t2) {
        loss += l;
        term1 += t1;
        term2 += t2;
        ++count;
    }
};

void require_finite_params(const ModelWeights& w, int epoch) {
    for (const auto& e : w.entries)
        if (!e.value.all_finite())
            throw PropertyError("training diverged: non-finite parameter '" + e.name + "' after epoch " +
                                std::to_string(epoch + 1) + " (last checkpoint kept)");
}

std::vector<const ImagePair*> select_pairs(const std::vector<ImagePair>& pairs,
                                           const std::vector<std::string>& ids) {
    std::vector<const ImagePair*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(&pair_by_id(pairs, id));
    return out;
}

bool is_checkpoint_epoch(int epoch, int total) { return (epoch + 1) % 25 == 0 || epoch + 1 == total; }

} // namespace

TrainResult train_stage1(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                         const std::string& weights_out, const ProgressFn& progress) {
    cfg.validate();
    if (cfg.stage != TrainConfig::TrainStage::ae)
        throw ConfigError("train_stage1: config stage must be 'ae'");
    if (pairs.empty()) throw ConfigError("train_stage1: empty dataset");

    const DatasetSplit split = split_dataset(pair_ids(pairs), cfg.seed);
    const SsimParams sp = ssim_params_for(cfg.model.input_w, cfg.model.input_h);

    // both bands are independent reconstruction targets
    std::vector<Tensor> images;
    for (const auto* p : select_pairs(pairs, split.train)) {
        images.push_back(p->visible.to_tensor());
        images.push_back(p->infrared.to_tensor());
    }

    TrainResult res;
    res.split = split;
    res.weights = init_backbone(cfg.model, cfg.seed);
    res.log.loss_name = "l_ae";
    res.log.term1_name = "l_pixel";
    res.log.term2_name = "l_ssim";

    Adam adam;
    Rng order_rng(cfg.seed + 1);
    std::vector<size_t> idx(images.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    auto full_loss = [&](const ModelWeights& w) {
        double acc = 0.0;
        for (const auto& img : images)
            acc += l_ae(forward_ae(img, w), img, cfg.loss, sp).value();
        return acc / static_cast<double>(images.size());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.schedule.at(cfg.learning_rate, epoch);
        order_rng.shuffle(idx);
        EpochStats stats;
        for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(idx.size(), start + static_cast<size_t>(cfg.batch_size));
            Tape tape;
            ModelWeights bound = bind_weights(res.weights, tape, true, true, false);
            Tensor total;
            for (size_t i = start; i < stop; ++i) {
                const Tensor& img = images[idx[i]];
                Tensor out = forward_ae(img, bound);
                Tensor lp = l_pixel(out, img);
                Tensor ls = l_ssim(out, img, sp);
                Tensor li = add(lp, mul_scalar(ls, cfg.loss.alpha));
                stats.add(li.value(), lp.value(), ls.value());
                total = i == start ? li : add(total, li);
            }
            total = mul_scalar(total, 1.0 / static_cast<double>(stop - start));
            if (!std::isfinite(total.value()))
                throw PropertyError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch + 1) + " (last checkpoint kept)");
            tape.backward(total);
            std::vector<std::pair<std::string, Tensor>> grads;
            for (const auto& e : bound.entries)
                if (e.value.tracked()) grads.emplace_back(e.name, tape.grad(e.value));
            adam.step(res.weights, grads, lr);
        }
        require_finite_params(res.weights, epoch);

        TrainLog::Row row;
        row.epoch = epoch + 1;
        row.loss = stats.loss / stats.count;
        row.term1 = stats.term1 / stats.count;
        row.term2 = stats.term2 / stats.count;
        row.lr = lr;
        if (is_checkpoint_epoch(epoch, cfg.epochs)) {
            if (!weights_out.empty()) save_weights(res.weights, weights_out);
            row.checkpointed = true;
            row.checkpoint_loss = full_loss(res.weights);
        }
        res.log.rows.push_back(row);
        if (progress) progress(epoch + 1, cfg.epochs, row.loss);
    }

    // validation report
    {
        EpochStats v;
        for (const auto* p : select_pairs(pairs, split.validation)) {
            for (const GrayImage* band : {&p->visible, &p->infrared}) {
                Tensor img = band->to_tensor();
                Tensor out = forward_ae(img, res.weights);
                Tensor lp = l_pixel(out, img);
                Tensor ls = l_ssim(out, img, sp);
                v.add(lp.value() + cfg.loss.alpha * ls.value(), lp.value(), ls.value());
            }
        }
        if (v.count > 0)
            res.log.footnotes.push_back("validation: images=" + std::to_string(v.count) +
                                        " l_ae=" + fmt17(v.loss / v.count) + " l_pixel=" +
                                        fmt17(v.term1 / v.count) + " l_ssim=" + fmt17(v.term2 / v.count));
    }
    return res;
}

namespace {

struct PairCache {
    Tensor vis, ir;
    FeaturePyramid vis_pyr, ir_pyr;
};

PairCache make_cache(const ImagePair& p, const ModelWeights& w) {
    PairCache c;
    c.vis = p.visible.to_tensor();
    c.ir = p.infrared.to_tensor();
    c.vis_pyr = encode(c.vis, w);
    c.ir_pyr = encode(c.ir, w);
    return c;
}

} // namespace

TrainResult train_stage2(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                         const ModelWeights& stage1, const std::string& weights_out,
                         FusionLossMode mode, const ProgressFn& progress) {
    cfg.validate();
    if (cfg.stage != TrainConfig::TrainStage::fusion)
        throw ConfigError("train_stage2: config stage must be 'fusion'");
    if (pairs.empty()) throw ConfigError("train_stage2: empty dataset");
    if (!stage1.has_stage(Stage::encoder) || !stage1.has_stage(Stage::decoder))
        throw ConfigError("train_stage2: stage-1 weights (encoder+decoder) required");
    check_backbone_compat(stage1.config, cfg.model);

    const DatasetSplit split = split_dataset(pair_ids(pairs), cfg.seed);
    const SsimParams sp = ssim_params_for(cfg.model.input_w, cfg.model.input_h);

    TrainResult res;
    res.split = split;
    res.weights.config = cfg.model;
    for (const auto& e : stage1.entries)
        if (e.stage != Stage::fusion) res.weights.add(e.name, e.stage, e.value);
    init_fusion(res.weights, cfg.seed);

    const bool dual = mode == FusionLossMode::dual;
    res.log.loss_name = dual ? "l_fuse" : "l_total";
    res.log.term1_name = dual ? "l_feature" : "l_pixel";
    res.log.term2_name = dual ? "l_ssim_bar" : "l_ssim";

    // the backbone is frozen, so per-pair encoder features are constants
    std::vector<PairCache> cache;
    for (const auto* p : select_pairs(pairs, split.train))
        cache.push_back(make_cache(*p, res.weights));

    // builds the per-pair loss and its two reported terms
    auto pair_loss = [&](const PairCache& c, const ModelWeights& w, double* t1, double* t2) {
        FeaturePyramid fused_pyr;
        for (int m = 1; m <= cfg.model.num_scales; ++m)
            fused_pyr.scales.push_back(fuse_block(c.vis_pyr.scales[static_cast<size_t>(m - 1)],
                                                  c.ir_pyr.scales[static_cast<size_t>(m - 1)], w, m));
        Tensor fused = decode(fused_pyr, w);
        if (dual) {
            Tensor feat = l_feature(fused_pyr, c.vis_pyr, c.ir_pyr, cfg.loss);
            Tensor sbar = l_ssim_bar(fused, c.vis, c.ir, sp);
            if (t1) *t1 = feat.value();
            if (t2) *t2 = sbar.value();
            return add(feat, mul_scalar(sbar, cfg.loss.alpha));
        }
        Tensor lp = l_pixel(fused, c.vis);
        Tensor ls = l_ssim(fused, c.vis, sp);
        if (t1) *t1 = lp.value();
        if (t2) *t2 = ls.value();
        return add(lp, mul_scalar(ls, cfg.loss.alpha));
    };

    auto full_loss = [&](const ModelWeights& w) {
        double acc = 0.0;
        for (const auto& c : cache) acc += pair_loss(c, w, nullptr, nullptr).value();
        return acc / static_cast<double>(cache.size());
    };

    Adam adam;
    Rng order_rng(cfg.seed + 1);
    std::vector<size_t> idx(cache.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.schedule.at(cfg.learning_rate, epoch);
        order_rng.shuffle(idx);
        EpochStats stats;
        for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(idx.size(), start + static_cast<size_t>(cfg.batch_size));
            Tape tape;
            ModelWeights bound = bind_weights(res.weights, tape, false, false, true);
            Tensor total;
            for (size_t i = start; i < stop; ++i) {
                double t1 = 0.0, t2 = 0.0;
                Tensor li = pair_loss(cache[idx[i]], bound, &t1, &t2);
                stats.add(li.value(), t1, t2);
                total = i == start ? li : add(total, li);
            }
            total = mul_scalar(total, 1.0 / static_cast<double>(stop - start));
            if (!std::isfinite(total.value()))
                throw PropertyError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch + 1) + " (last checkpoint kept)");
            tape.backward(total);
            std::vector<std::pair<std::string, Tensor>> grads;
            for (const auto& e : bound.entries)
                if (e.value.tracked()) grads.emplace_back(e.name, tape.grad(e.value));
            adam.step(res.weights, grads, lr);
        }
        require_finite_params(res.weights, epoch);

        TrainLog::Row row;
        row.epoch = epoch + 1;
        row.loss = stats.loss / stats.count;
        row.term1 = stats.term1 / stats.count;
        row.term2 = stats.term2 / stats.count;
        row.lr = lr;
        if (is_checkpoint_epoch(epoch, cfg.epochs)) {
            if (!weights_out.empty()) save_weights(res.weights, weights_out);
            row.checkpointed = true;
            row.checkpoint_loss = full_loss(res.weights);
        }
        res.log.rows.push_back(row);
        if (progress) progress(epoch + 1, cfg.epochs, row.loss);
    }

    // validation report: loss plus the four fusion metrics
    {
        const auto val_pairs = select_pairs(pairs, split.validation);
        if (!val_pairs.empty()) {
            double loss_acc = 0.0;
            std::vector<MetricRow> metric_rows;
            for (const auto* p : val_pairs) {
                PairCache c = make_cache(*p, res.weights);
                loss_acc += pair_loss(c, res.weights, nullptr, nullptr).value();
                metric_rows.push_back(evaluate_fused(p->id, fuse_pair(res.weights, p->visible, p->infrared),
                                                     p->visible, p->infrared));
            }
            const MetricRow agg = aggregate_rows(metric_rows);
            res.log.footnotes.push_back(
                "validation: pairs=" + std::to_string(val_pairs.size()) + " " + res.log.loss_name + "=" +
                fmt17(loss_acc / static_cast<double>(val_pairs.size())));
            res.log.footnotes.push_back("validation: entropy=" + fmt6(agg.entropy) + " scd=" +
                                        fmt6(agg.scd) + " mi=" + fmt6(agg.mi) + " ssim_vis=" +
                                        fmt6(agg.ssim_vis) + " ssim_ir=" + fmt6(agg.ssim_ir));
        }
    }
    return res;
}

GrayImage fuse_pair(const ModelWeights& w, const GrayImage& vis, const GrayImage& ir) {
    if (vis.width != ir.width || vis.height != ir.height)
        throw ShapeError("fuse: visible and infrared dimensions differ");
    if (vis.width != w.config.input_w || vis.height != w.config.input_h)
        throw ShapeError("fuse: image size does not match the weight config (" +
                         std::to_string(w.config.input_w) + "x" + std::to_string(w.config.input_h) + ")");
    if (!w.has_stage(Stage::fusion))
        throw ConfigError("fuse: weight file has no fusion parameters (stage-2 weights required)");
    FusionResult r = forward_fusion(vis.to_tensor(), ir.to_tensor(), w);
    return GrayImage::from_tensor(r.fused);
}

std::vector<MetricRow> evaluate_model(const ModelWeights& w, const std::vector<ImagePair>& pairs) {
    std::vector<MetricRow> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs)
        rows.push_back(evaluate_fused(p.id, fuse_pair(w, p.visible, p.infrared), p.visible, p.infrared));
    return rows;
}

std::string BiasReport::csv() const {
    std::string out = "arm,mi_ir,ssim_ir\n";
    out += "l_fuse," + fmt6(dual.mi_ir) + "," + fmt6(dual.ssim_ir) + "\n";
    out += "l_ae_visible," + fmt6(visible_only.mi_ir) + "," + fmt6(visible_only.ssim_ir) + "\n";
    return out;
}

BiasReport bias_experiment(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                           const ModelWeights& stage1, int max_threads) {
    BiasReport report;
    const DatasetSplit split = split_dataset(pair_ids(pairs), cfg.seed);
    report.test_pairs = static_cast<int>(split.test.size());

    BiasArm arms[2];
    parallel_for(2, std::min(max_threads, 2), [&](int arm) {
        const FusionLossMode mode = arm == 0 ? FusionLossMode::dual : FusionLossMode::visible_only;
        TrainResult r = train_stage2(cfg, pairs, stage1, "", mode);
        double mi_acc = 0.0, ssim_acc = 0.0;
        const SsimParams sp = ssim_params_for(cfg.model.input_w, cfg.model.input_h);
        for (const auto* p : select_pairs(pairs, split.test)) {
            GrayImage fused = fuse_pair(r.weights, p->visible, p->infrared);
            mi_acc += mutual_information(fused, p->infrared);
            ssim_acc += ssim(fused, p->infrared, sp);
        }
        arms[arm].mi_ir = mi_acc / static_cast<double>(split.test.size());
        arms[arm].ssim_ir = ssim_acc / static_cast<double>(split.test.size());
    });
    report.dual = arms[0];
    report.visible_only = arms[1];
    return report;
}

SweepAxis sweep_axis_parse(const std::string& name) {
    if (name == "layers") return SweepAxis::layers;
    if (name == "batch") return SweepAxis::batch;
    if (name == "lr") return SweepAxis::lr;
    throw ConfigError("sweep: axis must be one of layers, batch, lr");
}

namespace {

const char* axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::layers: return "layers";
        case SweepAxis::batch: return "batch";
        default: return "lr";
    }
}

std::string axis_value_str(SweepAxis a, double v) {
    if (a == SweepAxis::lr) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return buf;
    }
    return std::to_string(static_cast<long long>(v));
}

} // namespace

std::string SweepTable::csv() const {
    std::string out = std::string(axis_name(axis)) + ",entropy,scd,mi,ssim\n";
    for (const auto& r : rows)
        out += axis_value_str(axis, r.value) + "," + fmt6(r.metrics.entropy) + "," +
               fmt6(r.metrics.scd) + "," + fmt6(r.metrics.mi) + "," + fmt6(r.metrics.ssim_mean()) + "\n";
    // rows breaking the expected capacity trend are called out explicitly
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].metrics.ssim_mean() < rows[i - 1].metrics.ssim_mean())
            out += "# trend-exception: " + std::string(axis_name(axis)) + "=" +
                   axis_value_str(axis, rows[i].value) + " ssim decreased\n";
    return out;
}

SweepTable sweep(const TrainConfig& base_cfg, SweepAxis axis, std::vector<double> values,
                 const std::vector<ImagePair>& pairs, const ModelWeights& stage1, int max_threads) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    std::sort(values.begin(), values.end());
    for (double v : values) {
        if (axis == SweepAxis::lr) {
            if (v <= 0.0) throw ConfigError("sweep: learning rates must be positive");
        } else if (v < 1.0 || v != std::floor(v)) {
            throw ConfigError("sweep: layer/batch values must be positive integers");
        }
    }

    SweepTable table;
    table.axis = axis;
    table.rows.resize(values.size());
    const DatasetSplit split = split_dataset(pair_ids(pairs), base_cfg.seed);

    parallel_for(static_cast<int>(values.size()), max_threads, [&](int i) {
        TrainConfig cfg = base_cfg;
        switch (axis) {
            case SweepAxis::layers: cfg.model.layers = static_cast<int>(values[static_cast<size_t>(i)]); break;
            case SweepAxis::batch: cfg.batch_size = static_cast<int>(values[static_cast<size_t>(i)]); break;
            case SweepAxis::lr: cfg.learning_rate = values[static_cast<size_t>(i)]; break;
        }
        TrainResult r = train_stage2(cfg, pairs, stage1, "");
        std::vector<MetricRow> rows;
        for (const auto* p : select_pairs(pairs, split.test))
            rows.push_back(evaluate_fused(p->id, fuse_pair(r.weights, p->visible, p->infrared),
                                          p->visible, p->infrared));
        table.rows[static_cast<size_t>(i)] = SweepRow{values[static_cast<size_t>(i)], aggregate_rows(rows)};
    });
    return table;
}

} // namespace fuseformer

// fuseformer command-line tool. Links only the public C API.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fuseformer.h"

namespace {

int fail(ff_status code) {
    std::fprintf(stderr, "error: %s\n", ff_last_error());
    return static_cast<int>(code);
}

void print_progress(int epoch, int total, double loss, void*) {
    if (epoch == 1 || epoch == total || epoch % 10 == 0)
        std::fprintf(stderr, "epoch %d/%d  loss %.6g\n", epoch, total, loss);
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        const std::string item = csv.substr(pos, comma - pos);
        if (item.empty()) throw CLI::ValidationError("--values", "empty element in value list");
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--values", "cannot parse '" + item + "'");
        }
        pos = comma + 1;
    }
    return out;
}

// temp-file-then-rename, mirroring the library's atomic writes
bool write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) return false;
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok || std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        return false;
    }
    return true;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct ImageHandle {
    ff_image* p = nullptr;
    ~ImageHandle() { ff_image_free(p); }
};

struct ModelHandle {
    ff_model* p = nullptr;
    ~ModelHandle() { ff_model_free(p); }
};

int cmd_fuse(const std::string& weights, const std::string& vis_path, const std::string& ir_path,
             const std::string& out_path, bool diff) {
    ModelHandle model;
    if (ff_status s = ff_model_load(weights.c_str(), &model.p)) return fail(s);
    ImageHandle vis, ir, fused;
    if (ff_status s = ff_image_load_pgm(vis_path.c_str(), &vis.p)) return fail(s);
    if (ff_status s = ff_image_load_pgm(ir_path.c_str(), &ir.p)) return fail(s);
    if (ff_status s = ff_model_fuse(model.p, vis.p, ir.p, &fused.p)) return fail(s);
    if (ff_status s = ff_image_save_pgm(fused.p, out_path.c_str(), 255)) return fail(s);

    // sidecar metric line
    double en = 0.0, sc = 0.0, mi_v = 0.0, mi_i = 0.0, ss_v = 0.0, ss_i = 0.0;
    if (ff_status s = ff_entropy(fused.p, &en)) return fail(s);
    if (ff_status s = ff_scd(fused.p, vis.p, ir.p, &sc)) return fail(s);
    if (ff_status s = ff_mutual_information(fused.p, vis.p, 256, &mi_v)) return fail(s);
    if (ff_status s = ff_mutual_information(fused.p, ir.p, 256, &mi_i)) return fail(s);
    if (ff_status s = ff_ssim(fused.p, vis.p, &ss_v)) return fail(s);
    if (ff_status s = ff_ssim(fused.p, ir.p, &ss_i)) return fail(s);
    const std::string sidecar = out_path + ".metrics.csv";
    const std::string line = "id,entropy,scd,mi,ssim\n" + out_path + "," + fmt6(en) + "," + fmt6(sc) +
                             "," + fmt6(mi_v + mi_i) + "," + fmt6(0.5 * (ss_v + ss_i)) + "\n";
    if (!write_text_atomic(sidecar, line)) {
        std::fprintf(stderr, "error: cannot write %s\n", sidecar.c_str());
        return FF_ERR_IO;
    }
    std::printf("fused -> %s  entropy=%s scd=%s mi=%s ssim_vis=%s ssim_ir=%s\n", out_path.c_str(),
                fmt6(en).c_str(), fmt6(sc).c_str(), fmt6(mi_v + mi_i).c_str(), fmt6(ss_v).c_str(),
                fmt6(ss_i).c_str());

    if (diff) {
        const int w = ff_image_width(fused.p), h = ff_image_height(fused.p);
        const double* fp = ff_image_pixels(fused.p);
        for (const auto& [other, suffix] :
             {std::pair<const ff_image*, const char*>{vis.p, "_dvis.pgm"},
              std::pair<const ff_image*, const char*>{ir.p, "_dir.pgm"}}) {
            std::vector<double> d(static_cast<size_t>(w) * h);
            const double* op = ff_image_pixels(other);
            for (size_t i = 0; i < d.size(); ++i) d[i] = std::fabs(fp[i] - op[i]);
            ImageHandle dimg;
            if (ff_status s = ff_image_create(w, h, d.data(), &dimg.p)) return fail(s);
            std::string base = out_path;
            const size_t dot = base.rfind(".pgm");
            if (dot != std::string::npos && dot == base.size() - 4) base.erase(dot);
            if (ff_status s = ff_image_save_pgm(dimg.p, (base + suffix).c_str(), 255)) return fail(s);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fuseformer: visible/infrared image fusion"};
    app.require_subcommand(1);

    long long seed = -1; // <0: keep the config seed

    // train-ae
    auto* train_ae = app.add_subcommand("train-ae", "stage 1: train the autoencoder");
    std::string ta_config, ta_out, ta_log;
    train_ae->add_option("--config", ta_config, "training config file")->required();
    train_ae->add_option("--out", ta_out, "output weight file")->required();
    train_ae->add_option("--log", ta_log, "training log CSV");
    train_ae->add_option("--seed", seed, "override the config seed");

    // train-fusion
    auto* train_fu = app.add_subcommand("train-fusion", "stage 2: train the fusion blocks");
    std::string tf_config, tf_stage1, tf_out, tf_log;
    train_fu->add_option("--config", tf_config, "training config file")->required();
    train_fu->add_option("--stage1", tf_stage1, "stage-1 weight file")->required();
    train_fu->add_option("--out", tf_out, "output weight file")->required();
    train_fu->add_option("--log", tf_log, "training log CSV");
    train_fu->add_option("--seed", seed, "override the config seed");

    // fuse
    auto* fuse = app.add_subcommand("fuse", "fuse one visible/infrared pair");
    std::string fu_weights, fu_vis, fu_ir, fu_out;
    bool fu_diff = false;
    fuse->add_option("--weights", fu_weights, "stage-2 weight file")->required();
    fuse->add_option("--vis", fu_vis, "visible-band PGM")->required();
    fuse->add_option("--ir", fu_ir, "infrared-band PGM")->required();
    fuse->add_option("--out", fu_out, "fused output PGM")->required();
    fuse->add_flag("--diff", fu_diff, "also write |fused-vis| and |fused-ir| images");

    // eval
    auto* eval = app.add_subcommand("eval", "metric report for pre-fused images");
    std::string ev_manifest, ev_dir, ev_out;
    eval->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    eval->add_option("--fused-dir", ev_dir, "directory holding <id>.pgm fused images")->required();
    eval->add_option("--out", ev_out, "report CSV")->required();

    // bias-exp
    auto* bias = app.add_subcommand("bias-exp", "dual-loss vs single-loss comparison");
    std::string bi_config, bi_stage1, bi_out;
    bias->add_option("--config", bi_config, "stage-2 training config")->required();
    bias->add_option("--stage1", bi_stage1, "stage-1 weight file")->required();
    bias->add_option("--out", bi_out, "report CSV")->required();
    bias->add_option("--seed", seed, "override the config seed");

    // sweep
    auto* sw = app.add_subcommand("sweep", "hyperparameter sweep over stage-2 runs");
    std::string sw_config, sw_stage1, sw_axis, sw_values, sw_out;
    sw->add_option("--config", sw_config, "stage-2 training config")->required();
    sw->add_option("--stage1", sw_stage1, "stage-1 weight file")->required();
    sw->add_option("--axis", sw_axis, "layers | batch | lr")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();
    sw->add_option("--out", sw_out, "table CSV")->required();
    sw->add_option("--seed", seed, "override the config seed");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    unsigned long long gc_seed = 20240817ull;
    gc->add_option("--seed", gc_seed, "random seed");

    // selftest
    auto* st = app.add_subcommand("selftest", "gradient, oracle, and attention batteries");
    unsigned long long st_seed = 20240817ull;
    st->add_option("--seed", st_seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return FF_ERR_SHAPE;
    }

    if (train_ae->parsed()) {
        ff_status s = ff_train_stage1(ta_config.c_str(), seed, ta_out.c_str(),
                                      ta_log.empty() ? nullptr : ta_log.c_str(), print_progress,
                                      nullptr);
        if (s) return fail(s);
        std::printf("stage-1 weights -> %s\n", ta_out.c_str());
        return 0;
    }
    if (train_fu->parsed()) {
        ff_status s = ff_train_stage2(tf_config.c_str(), seed, tf_stage1.c_str(), tf_out.c_str(),
                                      tf_log.empty() ? nullptr : tf_log.c_str(), print_progress,
                                      nullptr);
        if (s) return fail(s);
        std::printf("stage-2 weights -> %s\n", tf_out.c_str());
        return 0;
    }
    if (fuse->parsed()) return cmd_fuse(fu_weights, fu_vis, fu_ir, fu_out, fu_diff);
    if (eval->parsed()) {
        ff_status s = ff_evaluate(ev_manifest.c_str(), ev_dir.c_str(), ev_out.c_str(), 0);
        if (s == FF_ERR_PARTIAL) std::fprintf(stderr, "warning: %s\n", ff_last_error());
        else if (s) return fail(s);
        std::printf("report -> %s\n", ev_out.c_str());
        return static_cast<int>(s);
    }
    if (bias->parsed()) {
        ff_status s = ff_bias_experiment(bi_config.c_str(), seed, bi_stage1.c_str(), bi_out.c_str(), 0);
        if (s) return fail(s);
        std::printf("bias report -> %s\n", bi_out.c_str());
        return 0;
    }
    if (sw->parsed()) {
        std::vector<double> values;
        try {
            values = parse_values(sw_values);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return FF_ERR_SHAPE;
        }
        ff_status s = ff_sweep(sw_config.c_str(), seed, sw_stage1.c_str(), sw_axis.c_str(),
                               values.data(), static_cast<int>(values.size()), sw_out.c_str(), 0);
        if (s) return fail(s);
        std::printf("sweep table -> %s\n", sw_out.c_str());
        return 0;
    }
    if (gc->parsed()) {
        double worst = 0.0;
        ff_status s = ff_gradient_check(gc_seed, &worst);
        std::printf("gradient suite: max relative error %.3e\n", worst);
        if (s) return fail(s);
        return 0;
    }
    if (st->parsed()) {
        ff_status s = ff_selftest(st_seed, 1);
        if (s) return fail(s);
        std::printf("selftest: all properties hold\n");
        return 0;
    }
    return FF_ERR_SHAPE;
}

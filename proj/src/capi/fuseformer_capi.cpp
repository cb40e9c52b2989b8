#include "fuseformer.h"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "core/checks.hpp"
#include "core/dataset.hpp"
#include "core/errors.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/train.hpp"
#include "core/util.hpp"

namespace fs = std::filesystem;
using namespace fuseformer;

struct ff_image {
    GrayImage img;
};

struct ff_model {
    ModelWeights weights;
};

namespace {

thread_local std::string t_last_error;

template <typename Fn>
ff_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return FF_OK;
    } catch (const IoError& e) {
        t_last_error = e.what();
        return FF_ERR_IO;
    } catch (const ShapeError& e) {
        t_last_error = e.what();
        return FF_ERR_SHAPE;
    } catch (const ConfigError& e) {
        t_last_error = e.what();
        return FF_ERR_SHAPE;
    } catch (const PartialEvalError& e) {
        t_last_error = e.what();
        return FF_ERR_PARTIAL;
    } catch (const PropertyError& e) {
        t_last_error = e.what();
        return FF_ERR_PROPERTY;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return FF_ERR_PROPERTY;
    }
}

TrainConfig config_with_seed(const char* path, long long seed) {
    TrainConfig cfg = TrainConfig::parse_file(path);
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    return cfg;
}

ProgressFn wrap_progress(ff_progress progress, void* user) {
    if (!progress) return nullptr;
    return [progress, user](int epoch, int total, double loss) { progress(epoch, total, loss, user); };
}

} // namespace

extern "C" {

const char* ff_version(void) { return "fuseformer 1.0.0"; }

const char* ff_last_error(void) { return t_last_error.c_str(); }

ff_status ff_image_create(int width, int height, const double* pixels, ff_image** out) {
    return guarded([&] {
        if (!pixels || !out) throw ShapeError("ff_image_create: null argument");
        GrayImage img(width, height);
        std::copy(pixels, pixels + img.size(), img.pixels.begin());
        *out = new ff_image{std::move(img)};
    });
}

ff_status ff_image_load_pgm(const char* path, ff_image** out) {
    return guarded([&] {
        if (!path || !out) throw ShapeError("ff_image_load_pgm: null argument");
        *out = new ff_image{load_pgm(path)};
    });
}

ff_status ff_image_save_pgm(const ff_image* img, const char* path, int maxval) {
    return guarded([&] {
        if (!img || !path) throw ShapeError("ff_image_save_pgm: null argument");
        save_pgm(img->img, path, maxval);
    });
}

int ff_image_width(const ff_image* img) { return img ? img->img.width : 0; }
int ff_image_height(const ff_image* img) { return img ? img->img.height : 0; }
const double* ff_image_pixels(const ff_image* img) { return img ? img->img.pixels.data() : nullptr; }
void ff_image_free(ff_image* img) { delete img; }

ff_status ff_entropy(const ff_image* img, double* out) {
    return guarded([&] {
        if (!img || !out) throw ShapeError("ff_entropy: null argument");
        *out = entropy(img->img);
    });
}

ff_status ff_ssim(const ff_image* a, const ff_image* b, double* out) {
    return guarded([&] {
        if (!a || !b || !out) throw ShapeError("ff_ssim: null argument");
        *out = ssim(a->img, b->img);
    });
}

ff_status ff_mutual_information(const ff_image* a, const ff_image* b, int bins, double* out) {
    return guarded([&] {
        if (!a || !b || !out) throw ShapeError("ff_mutual_information: null argument");
        *out = mutual_information(a->img, b->img, bins);
    });
}

ff_status ff_scd(const ff_image* fused, const ff_image* vis, const ff_image* ir, double* out) {
    return guarded([&] {
        if (!fused || !vis || !ir || !out) throw ShapeError("ff_scd: null argument");
        *out = scd(fused->img, vis->img, ir->img);
    });
}

ff_status ff_model_load(const char* weights_path, ff_model** out) {
    return guarded([&] {
        if (!weights_path || !out) throw ShapeError("ff_model_load: null argument");
        *out = new ff_model{load_weights(weights_path)};
    });
}

void ff_model_free(ff_model* model) { delete model; }

int ff_model_input_width(const ff_model* model) { return model ? model->weights.config.input_w : 0; }
int ff_model_input_height(const ff_model* model) { return model ? model->weights.config.input_h : 0; }

ff_status ff_model_fuse(const ff_model* model, const ff_image* visible, const ff_image* infrared,
                        ff_image** fused_out) {
    return guarded([&] {
        if (!model || !visible || !infrared || !fused_out)
            throw ShapeError("ff_model_fuse: null argument");
        *fused_out = new ff_image{fuse_pair(model->weights, visible->img, infrared->img)};
    });
}

ff_status ff_train_stage1(const char* config_path, long long seed, const char* weights_out,
                          const char* log_csv_out, ff_progress progress, void* user) {
    return guarded([&] {
        if (!config_path || !weights_out) throw ShapeError("ff_train_stage1: null argument");
        TrainConfig cfg = config_with_seed(config_path, seed);
        if (cfg.stage != TrainConfig::TrainStage::ae)
            throw ConfigError("ff_train_stage1: config stage must be 'ae'");
        std::vector<ImagePair> pairs = load_config_data(cfg);
        TrainResult res = train_stage1(cfg, pairs, weights_out, wrap_progress(progress, user));
        if (log_csv_out) write_file_atomic(log_csv_out, res.log.csv());
    });
}

ff_status ff_train_stage2(const char* config_path, long long seed, const char* stage1_weights,
                          const char* weights_out, const char* log_csv_out, ff_progress progress,
                          void* user) {
    return guarded([&] {
        if (!config_path || !stage1_weights || !weights_out)
            throw ShapeError("ff_train_stage2: null argument");
        TrainConfig cfg = config_with_seed(config_path, seed);
        if (cfg.stage != TrainConfig::TrainStage::fusion)
            throw ConfigError("ff_train_stage2: config stage must be 'fusion'");
        std::vector<ImagePair> pairs = load_config_data(cfg);
        ModelWeights stage1 = load_weights(stage1_weights);
        TrainResult res = train_stage2(cfg, pairs, stage1, weights_out, FusionLossMode::dual,
                                       wrap_progress(progress, user));
        if (log_csv_out) write_file_atomic(log_csv_out, res.log.csv());
    });
}

ff_status ff_evaluate(const char* manifest_path, const char* fused_dir, const char* report_csv_out,
                      int max_threads) {
    return guarded([&] {
        if (!manifest_path || !fused_dir || !report_csv_out)
            throw ShapeError("ff_evaluate: null argument");
        const std::vector<ImagePair> pairs = load_manifest(manifest_path);
        std::vector<std::string> missing;
        std::vector<int> found;
        std::vector<GrayImage> fused(pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
            const std::string path = (fs::path(fused_dir) / (pairs[i].id + ".pgm")).string();
            if (!fs::exists(path)) {
                missing.push_back(pairs[i].id);
                continue;
            }
            fused[i] = load_pgm(path);
            found.push_back(static_cast<int>(i));
        }
        std::vector<MetricRow> rows(found.size());
        parallel_for(static_cast<int>(found.size()), max_threads, [&](int j) {
            const auto& p = pairs[static_cast<size_t>(found[static_cast<size_t>(j)])];
            rows[static_cast<size_t>(j)] =
                evaluate_fused(p.id, fused[static_cast<size_t>(found[static_cast<size_t>(j)])],
                               p.visible, p.infrared);
        });
        write_file_atomic(report_csv_out, metrics_csv(rows));
        if (!missing.empty()) {
            std::string msg = "missing fused images:";
            for (const auto& id : missing) msg += " " + id;
            throw PartialEvalError(msg);
        }
    });
}

ff_status ff_bias_experiment(const char* config_path, long long seed, const char* stage1_weights,
                             const char* report_csv_out, int max_threads) {
    return guarded([&] {
        if (!config_path || !stage1_weights || !report_csv_out)
            throw ShapeError("ff_bias_experiment: null argument");
        TrainConfig cfg = config_with_seed(config_path, seed);
        if (cfg.stage != TrainConfig::TrainStage::fusion)
            throw ConfigError("ff_bias_experiment: config stage must be 'fusion'");
        std::vector<ImagePair> pairs = load_config_data(cfg);
        ModelWeights stage1 = load_weights(stage1_weights);
        BiasReport report = bias_experiment(cfg, pairs, stage1, max_threads <= 0 ? 2 : max_threads);
        write_file_atomic(report_csv_out, report.csv());
    });
}

ff_status ff_sweep(const char* config_path, long long seed, const char* stage1_weights,
                   const char* axis, const double* values, int count, const char* table_csv_out,
                   int max_threads) {
    return guarded([&] {
        if (!config_path || !stage1_weights || !axis || !values || !table_csv_out)
            throw ShapeError("ff_sweep: null argument");
        if (count < 1) throw ConfigError("ff_sweep: need at least one value");
        TrainConfig cfg = config_with_seed(config_path, seed);
        if (cfg.stage != TrainConfig::TrainStage::fusion)
            throw ConfigError("ff_sweep: config stage must be 'fusion'");
        std::vector<ImagePair> pairs = load_config_data(cfg);
        ModelWeights stage1 = load_weights(stage1_weights);
        SweepTable table = sweep(cfg, sweep_axis_parse(axis), std::vector<double>(values, values + count),
                                 pairs, stage1, max_threads <= 0 ? count : max_threads);
        write_file_atomic(table_csv_out, table.csv());
    });
}

ff_status ff_gradient_check(unsigned long long seed, double* max_rel_error) {
    return guarded([&] {
        const std::vector<CheckResult> results = gradient_suite(seed);
        double worst = 0.0;
        for (const auto& r : results) worst = std::max(worst, r.value);
        if (max_rel_error) *max_rel_error = worst;
        if (const CheckResult* f = first_failure(results))
            throw PropertyError("gradient check failed: " + f->name + " (error " +
                                std::to_string(f->value) + ")");
    });
}

ff_status ff_selftest(unsigned long long seed, int verbose) {
    return guarded([&] {
        const std::vector<CheckResult> results = selftest_suite(seed);
        if (verbose) {
            for (const auto& r : results)
                std::printf("[%s] %-34s %.3e (limit %.1e)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                            r.value, r.threshold);
            std::fflush(stdout);
        }
        if (const CheckResult* f = first_failure(results))
            throw PropertyError("selftest failed: " + f->name +
                                (f->detail.empty() ? "" : " (" + f->detail + ")"));
    });
}

} // extern "C"

#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/dataset.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace fuseformer {

struct LrSchedule {
    enum class Kind { constant, step };
    Kind kind = Kind::step;
    double factor = 0.5;
    int every = 50;

    double at(double base, int epoch) const; // epoch is 0-based
    static LrSchedule parse(const std::string& text);
};

struct TrainConfig {
    enum class TrainStage { ae, fusion };

    TrainStage stage = TrainStage::ae;
    int epochs = 200;
    int batch_size = 4;
    double learning_rate = 1e-3;
    LrSchedule schedule;
    uint64_t seed = 42;
    LossWeights loss;
    ModelConfig model;
    std::string manifest;      // one data source: manifest ...
    int synth_count = 0;       // ... or generated pairs
    int synth_size = 32;
    std::string synth_export;  // optional: write generated pairs + manifest here

    void validate() const;
    // key=value lines, '#' comments; unknown keys are rejected. Paths are
    // resolved against base_dir.
    static TrainConfig parse(const std::string& text, const std::string& base_dir);
    static TrainConfig parse_file(const std::string& path);
};

// Pairs from the manifest or freshly synthesized, per config.
std::vector<ImagePair> load_config_data(const TrainConfig& cfg);

struct TrainLog {
    std::string loss_name;
    std::string term1_name;
    std::string term2_name;
    struct Row {
        int epoch = 0;
        double loss = 0.0;
        double term1 = 0.0;
        double term2 = 0.0;
        double lr = 0.0;
        bool checkpointed = false;
        double checkpoint_loss = 0.0;
    };
    std::vector<Row> rows;
    std::vector<std::string> footnotes; // emitted as '#' comment lines

    std::string csv() const;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected adaptive-moment optimizer keyed by parameter name.
class Adam {
public:
    explicit Adam(AdamParams p = {}) : p_(p) {}

    void step(ModelWeights& w, const std::vector<std::pair<std::string, Tensor>>& grads, double lr);

private:
    AdamParams p_;
    int64_t t_ = 0;
    std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

using ProgressFn = std::function<void(int epoch, int total, double loss)>;

struct TrainResult {
    ModelWeights weights;
    TrainLog log;
    DatasetSplit split;
};

// Stage 1: encoder + decoder as an autoencoder; every train-split image of
// both bands is an independent reconstruction target. Checkpoints to
// weights_out (when nonempty) every 25 epochs and at the end.
TrainResult train_stage1(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                         const std::string& weights_out, const ProgressFn& progress = nullptr);

// Loss used in stage 2: the dual-input fusion loss, or the single-input
// visible-band loss it is compared against.
enum class FusionLossMode { dual, visible_only };

TrainResult train_stage2(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                         const ModelWeights& stage1, const std::string& weights_out,
                         FusionLossMode mode = FusionLossMode::dual,
                         const ProgressFn& progress = nullptr);

// Untracked forward pass; image dims must match the weight config.
GrayImage fuse_pair(const ModelWeights& w, const GrayImage& vis, const GrayImage& ir);

// Per-pair fusion metrics for the given pairs.
std::vector<MetricRow> evaluate_model(const ModelWeights& w, const std::vector<ImagePair>& pairs);

struct BiasArm {
    double mi_ir = 0.0;   // mean MI(fused, infrared) over the test split
    double ssim_ir = 0.0; // mean SSIM(fused, infrared) over the test split
};

struct BiasReport {
    BiasArm dual;         // trained with the fusion loss
    BiasArm visible_only; // trained with the single-input loss
    int test_pairs = 0;

    std::string csv() const;
};

// Trains both arms from identical initialization and compares them on the
// test split. max_threads > 1 runs the arms concurrently.
BiasReport bias_experiment(const TrainConfig& cfg, const std::vector<ImagePair>& pairs,
                           const ModelWeights& stage1, int max_threads = 1);

enum class SweepAxis { layers, batch, lr };

SweepAxis sweep_axis_parse(const std::string& name);

struct SweepRow {
    double value = 0.0;
    MetricRow metrics; // aggregate over the test split
};

struct SweepTable {
    SweepAxis axis = SweepAxis::layers;
    std::vector<SweepRow> rows; // sorted by value

    std::string csv() const;
};

// One stage-2 run per value (same seed each), evaluated on the test split.
SweepTable sweep(const TrainConfig& base_cfg, SweepAxis axis, std::vector<double> values,
                 const std::vector<ImagePair>& pairs, const ModelWeights& stage1,
                 int max_threads = 1);

} // namespace fuseformer

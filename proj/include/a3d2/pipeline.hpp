#pragma once

#include "a3d2/checkpoint.hpp"
#include "a3d2/dataset.hpp"
#include "a3d2/metrics.hpp"
#include "a3d2/model.hpp"

namespace a3d2 {

struct TrainConfig {
    double lr = 2e-4;
    int batch_size = 4;
    int epochs = 100;
    double weight_decay = 1e-4;
    int n = 1;
    int height = 448;
    int width = 448;
    uint64_t seed = 1;
    std::string out_dir = "run";
    int eval_every = 0;             // epochs between test evals; 0 = final only
    double threshold = 0.5;
    double tau = 0.05;
    int max_steps = 0;              // 0 = no cap
    double stop_at_train_dice = 0;  // early stop on epoch-mean soft dice; 0 = off
    std::string init_checkpoint;    // optional warm start / external weight import

    void validate() const {
        if (lr <= 0) throw std::invalid_argument("train: lr must be > 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
        if (weight_decay < 0) throw std::invalid_argument("train: weight_decay must be >= 0");
        if (n < 0) throw std::invalid_argument("train: N must be >= 0");
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.n = n;
        m.height = height;
        m.width = width;
        m.seed = seed;
        return m;
    }
};

struct TrainLog {
    struct Step {
        int step = 0;
        int epoch = 0;
        double loss = 0.0;  // dice loss + weight-decay penalty
    };
    struct Eval {
        int epoch = 0;
        double mean_iou_raw = 0.0;
        double mean_iou_post = 0.0;
    };
    std::vector<Step> steps;
    std::vector<Eval> evals;
    double final_train_soft_dice = 0.0;
    double wall_seconds = 0.0;
};

struct MetricsRecord {
    std::string clip_id;
    int frame_index = 0;
    Metrics raw;
    Metrics post;
};

struct EvalResult {
    std::vector<MetricsRecord> per_image;
    Metrics mean_raw, mean_post;      // per-image averages
    Metrics pooled_raw, pooled_post;  // from pixel counts pooled over all images
    std::vector<Mask> raw_masks, post_masks, targets;
};

struct EvalOptions {
    int height = 448;
    int width = 448;
    double threshold = 0.5;
    double tau = 0.05;
};

EvalResult evaluate(const ParamMap<float>& params, const std::vector<Clip>& clips,
                    const std::vector<ClipSlice>& slices, const EvalOptions& opt);

// Metric aggregation over already-binarized predictions (the identity-oracle
// path: feeding targets as predictions must score 1 everywhere).
EvalResult evaluate_predictions(const std::vector<Mask>& preds, const std::vector<Mask>& targets,
                                const std::vector<std::string>& clip_ids,
                                const std::vector<int>& frame_indices, double tau);

// One binarized, post-processed mask per original clip frame.
std::vector<Mask> segment_video(const ParamMap<float>& params, const Clip& clip,
                                int expected_n = -1, double threshold = 0.5, double tau = 0.05);

struct TrainResult {
    ParamMap<float> params;
    ModelConfig model_config;
    DatasetPartition part;
    TrainLog log;
    EvalResult final_eval;     // empty per_image if the test set was skipped
    std::string final_checkpoint_path;
    std::string best_checkpoint_path;
    std::string log_path;
};

TrainResult train(const TrainConfig& config, const std::vector<Clip>& clips);

void write_train_log(const std::string& path, const TrainLog& log);
void write_metrics_report(const std::string& path, const EvalResult& result, bool post);

}  // namespace a3d2

#pragma once

#include "a3d2/image.hpp"
#include "a3d2/tensor.hpp"

namespace a3d2 {

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t tn = 0;
    int64_t fn = 0;

    int64_t total() const { return tp + fp + tn + fn; }
};

// Exact pixel counts over a binary pred/target pair. Rejects non-binary input.
ConfusionCounts confusion(const Mask& pred, const Mask& target);

// 0/0 resolves to 1 throughout: a correct empty prediction is a perfect score.
double iou(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
double dice_binary(const ConfusionCounts& c);

double iou(const Mask& pred, const Mask& target);

struct Metrics {
    double iou = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double dice = 0.0;

    static Metrics from_counts(const ConfusionCounts& c);
};

// prob >= threshold -> 1. Accepts (H,W) or (1,1,H,W); values outside [0,1]
// are rejected.
Mask binarize(const Tensor<float>& prob, double threshold = 0.5);

}  // namespace a3d2

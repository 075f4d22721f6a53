#include "a3d2/metrics.hpp"

#include <stdexcept>
#include <string>

namespace a3d2 {

namespace {

void require_binary(const Mask& m, const char* who) {
    for (const uint8_t v : m.pixels) {
        if (v > 1) {
            throw std::invalid_argument(std::string(who) + ": mask is not binary (value " +
                                        std::to_string(v) + ")");
        }
    }
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& target) {
    if (pred.width != target.width || pred.height != target.height) {
        throw std::invalid_argument("confusion: mask sizes differ: " + std::to_string(pred.width) +
                                    "x" + std::to_string(pred.height) + " vs " +
                                    std::to_string(target.width) + "x" +
                                    std::to_string(target.height));
    }
    require_binary(pred, "confusion");
    require_binary(target, "confusion");
    ConfusionCounts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.pixels[i] != 0;
        const bool t = target.pixels[i] != 0;
        if (p && t) {
            ++c.tp;
        } else if (p && !t) {
            ++c.fp;
        } else if (!p && t) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

namespace {
double ratio(int64_t num, int64_t den) { return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den); }
}  // namespace

double iou(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn); }
double sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }
double dice_binary(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }

double iou(const Mask& pred, const Mask& target) { return iou(confusion(pred, target)); }

Metrics Metrics::from_counts(const ConfusionCounts& c) {
    Metrics m;
    m.iou = a3d2::iou(c);
    m.sensitivity = a3d2::sensitivity(c);
    m.specificity = a3d2::specificity(c);
    m.dice = a3d2::dice_binary(c);
    return m;
}

Mask binarize(const Tensor<float>& prob, double threshold) {
    int h = 0, w = 0;
    if (prob.ndim() == 2) {
        h = prob.dim(0);
        w = prob.dim(1);
    } else if (prob.ndim() == 4 && prob.dim(0) == 1 && prob.dim(1) == 1) {
        h = prob.dim(2);
        w = prob.dim(3);
    } else {
        throw std::invalid_argument("binarize: expected (H,W) or (1,1,H,W), got " +
                                    shape_str(prob.shape));
    }
    Mask m(w, h);
    for (size_t i = 0; i < prob.numel(); ++i) {
        const float v = prob.data[i];
        if (v < 0.0f || v > 1.0f) {
            throw std::invalid_argument("binarize: probability " + std::to_string(v) +
                                        " outside [0,1]");
        }
        m.pixels[i] = v >= threshold ? 1 : 0;
    }
    return m;
}

}  // namespace a3d2

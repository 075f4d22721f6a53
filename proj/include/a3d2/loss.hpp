#pragma once

#include <map>

#include "a3d2/ops.hpp"
#include "a3d2/tensor.hpp"

namespace a3d2 {

template <typename T>
struct ScalarWithGrad {
    double value = 0.0;
    Tensor<T> grad;  // d(value)/d(pred), same shape as pred
};

// Soft dice over probabilities: (2*sum(p*t) + s) / (sum(p) + sum(t) + s),
// with the analytic gradient w.r.t. the prediction.
template <typename T>
ScalarWithGrad<T> soft_dice(const Tensor<T>& pred, const Tensor<T>& target, double smooth = 1.0) {
    if (pred.shape != target.shape) {
        throw std::invalid_argument("soft_dice: prediction shape " + shape_str(pred.shape) +
                                    " != target shape " + shape_str(target.shape));
    }
    double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (size_t i = 0; i < pred.numel(); ++i) {
        inter += static_cast<double>(pred.data[i]) * static_cast<double>(target.data[i]);
        sum_p += static_cast<double>(pred.data[i]);
        sum_t += static_cast<double>(target.data[i]);
    }
    const double num = 2.0 * inter + smooth;
    const double den = sum_p + sum_t + smooth;
    ScalarWithGrad<T> r;
    r.value = num / den;
    r.grad = Tensor<T>(pred.shape);
    const double inv_den2 = 1.0 / (den * den);
    for (size_t i = 0; i < pred.numel(); ++i) {
        r.grad.data[i] =
            static_cast<T>((2.0 * static_cast<double>(target.data[i]) * den - num) * inv_den2);
    }
    return r;
}

template <typename T>
ScalarWithGrad<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double smooth = 1.0) {
    ScalarWithGrad<T> r = soft_dice(pred, target, smooth);
    r.value = 1.0 - r.value;
    for (auto& v : r.grad.data) v = -v;
    return r;
}

// Reported value of the L2 penalty realized by the optimizer's weight decay:
// (wd/2) * sum of squares over decayed parameters.
template <typename T>
double l2_penalty(const std::map<std::string, Tensor<T>>& params, double weight_decay) {
    if (weight_decay == 0.0) return 0.0;
    double acc = 0.0;
    for (const auto& [name, p] : params) {
        if (!is_decayed_param(p)) continue;
        for (const T v : p.data) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return 0.5 * weight_decay * acc;
}

template <typename T>
double total_loss(double dice_loss_value, const std::map<std::string, Tensor<T>>& params,
                  double weight_decay) {
    return dice_loss_value + l2_penalty(params, weight_decay);
}

}  // namespace a3d2

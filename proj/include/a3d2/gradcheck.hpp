#pragma once

#include <functional>

#include "a3d2/loss.hpp"
#include "a3d2/ops.hpp"

namespace a3d2 {

// A differentiable operation packaged for finite-difference verification.
// All differentiable arguments (input and parameters alike) live in `inputs`;
// `backward` must return one gradient tensor per input given d(loss)/d(output).
struct CheckableOp {
    std::string name;
    std::vector<Tensor64> inputs;
    std::function<Tensor64(const std::vector<Tensor64>&)> forward;
    std::function<std::vector<Tensor64>(const std::vector<Tensor64>&, const Tensor64&)> backward;
};

struct GradcheckReport {
    double max_rel_err = 0.0;
    size_t entries_checked = 0;
};

inline double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central-difference check of op.backward against a random linear probe
// L = <c, forward(inputs)>. Exhaustive over every entry of every input.
inline GradcheckReport gradcheck(const CheckableOp& op, double eps = 1e-6,
                                 uint64_t probe_seed = 1234, double floor = 1e-2) {
    std::mt19937_64 rng(probe_seed);
    std::vector<Tensor64> inputs = op.inputs;
    const Tensor64 y0 = op.forward(inputs);
    const Tensor64 probe = random_uniform<double>(y0.shape, rng);

    auto loss = [&](const std::vector<Tensor64>& ins) {
        const Tensor64 y = op.forward(ins);
        double acc = 0.0;
        for (size_t i = 0; i < y.numel(); ++i) acc += y.data[i] * probe.data[i];
        return acc;
    };

    const std::vector<Tensor64> analytic = op.backward(inputs, probe);
    if (analytic.size() != inputs.size()) {
        throw std::runtime_error("gradcheck: op '" + op.name + "' returned " +
                                 std::to_string(analytic.size()) + " gradients for " +
                                 std::to_string(inputs.size()) + " inputs");
    }

    GradcheckReport rep;
    for (size_t t = 0; t < inputs.size(); ++t) {
        if (analytic[t].shape != inputs[t].shape) {
            throw std::runtime_error("gradcheck: op '" + op.name + "' gradient " +
                                     std::to_string(t) + " has shape " +
                                     shape_str(analytic[t].shape) + ", input has " +
                                     shape_str(inputs[t].shape));
        }
        for (size_t i = 0; i < inputs[t].numel(); ++i) {
            const double saved = inputs[t].data[i];
            const double step = eps * std::max(1.0, std::abs(saved));
            inputs[t].data[i] = saved + step;
            const double lp = loss(inputs);
            inputs[t].data[i] = saved - step;
            const double lm = loss(inputs);
            inputs[t].data[i] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(fd, analytic[t].data[i], floor));
            ++rep.entries_checked;
        }
    }
    return rep;
}

// The op under test with its backward deliberately scaled; gradcheck must
// flag it (harness self-test).
inline CheckableOp corrupt_backward(CheckableOp op, double scale = 1.5) {
    auto inner = op.backward;
    op.name += "+corrupted";
    op.backward = [inner, scale](const std::vector<Tensor64>& ins, const Tensor64& gy) {
        auto gs = inner(ins, gy);
        for (auto& g : gs) {
            for (auto& v : g.data) v *= scale;
        }
        return gs;
    };
    return op;
}

// ---------------------------------------------------------------------------
// Registry of every differentiable operator, each with random small inputs.
// ---------------------------------------------------------------------------

inline std::vector<CheckableOp> standard_op_checks(uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::vector<CheckableOp> ops;

    auto away_from_kink = [](Tensor64 t) {
        for (auto& v : t.data) v += (v >= 0 ? 0.25 : -0.25);
        return t;
    };

    {
        CheckableOp op;
        op.name = "relu";
        op.inputs = {away_from_kink(random_uniform<double>({2, 3, 4, 5}, rng))};
        op.forward = [](const std::vector<Tensor64>& in) { return relu_forward(in[0]); };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            return std::vector<Tensor64>{relu_backward(in[0], gy)};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "sigmoid";
        op.inputs = {random_uniform<double>({2, 3, 4, 4}, rng, -3.0, 3.0)};
        op.forward = [](const std::vector<Tensor64>& in) { return sigmoid_forward(in[0]); };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            return std::vector<Tensor64>{sigmoid_backward(sigmoid_forward(in[0]), gy)};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "add";
        op.inputs = {random_uniform<double>({2, 3, 5, 4}, rng),
                     random_uniform<double>({2, 3, 5, 4}, rng)};
        op.forward = [](const std::vector<Tensor64>& in) { return add_forward(in[0], in[1]); };
        op.backward = [](const std::vector<Tensor64>&, const Tensor64& gy) {
            return std::vector<Tensor64>{gy, gy};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "concat_channels";
        op.inputs = {random_uniform<double>({2, 2, 4, 4}, rng),
                     random_uniform<double>({2, 3, 4, 4}, rng)};
        op.forward = [](const std::vector<Tensor64>& in) {
            return concat_channels(in[0], in[1]);
        };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            return concat_channels_backward<double>({in[0].shape, in[1].shape}, gy);
        };
        ops.push_back(std::move(op));
    }

    auto conv2d_case = [&](const std::string& name, std::vector<int> xs, std::vector<int> ws,
                           ConvSpec spec) {
        CheckableOp op;
        op.name = name;
        op.inputs = {random_uniform<double>(xs, rng), random_uniform<double>(ws, rng),
                     random_uniform<double>({ws[0]}, rng)};
        op.forward = [spec](const std::vector<Tensor64>& in) {
            return conv2d_forward(in[0], in[1], in[2], spec);
        };
        op.backward = [spec](const std::vector<Tensor64>& in, const Tensor64& gy) {
            GradPair<double> g = conv2d_backward(in[0], in[1], spec, gy);
            return std::vector<Tensor64>{std::move(g.input_grad),
                                         std::move(g.param_grads.at("weight")),
                                         std::move(g.param_grads.at("bias"))};
        };
        ops.push_back(std::move(op));
    };
    conv2d_case("conv2d", {2, 3, 5, 5}, {4, 3, 3, 3}, ConvSpec::hw(1, 1));
    conv2d_case("conv2d_strided", {1, 2, 7, 8}, {3, 2, 3, 3}, ConvSpec::hw(2, 1));
    conv2d_case("conv2d_dilated", {1, 2, 8, 8}, {2, 2, 3, 3}, ConvSpec::hw(1, 2, 2));

    {
        CheckableOp op;
        op.name = "conv3d";
        ConvSpec spec;
        spec.pad_h = spec.pad_w = 1;
        op.inputs = {random_uniform<double>({1, 1, 3, 5, 5}, rng),
                     random_uniform<double>({2, 1, 3, 3, 3}, rng),
                     random_uniform<double>({2}, rng)};
        op.forward = [spec](const std::vector<Tensor64>& in) {
            return conv3d_forward(in[0], in[1], in[2], spec);
        };
        op.backward = [spec](const std::vector<Tensor64>& in, const Tensor64& gy) {
            GradPair<double> g = conv3d_backward(in[0], in[1], spec, gy);
            return std::vector<Tensor64>{std::move(g.input_grad),
                                         std::move(g.param_grads.at("weight")),
                                         std::move(g.param_grads.at("bias"))};
        };
        ops.push_back(std::move(op));
    }

    auto deconv_case = [&](const std::string& name, std::vector<int> xs, std::vector<int> ws,
                           ConvSpec spec) {
        CheckableOp op;
        op.name = name;
        op.inputs = {random_uniform<double>(xs, rng), random_uniform<double>(ws, rng),
                     random_uniform<double>({ws[1]}, rng)};
        op.forward = [spec](const std::vector<Tensor64>& in) {
            return conv_transpose2d_forward(in[0], in[1], in[2], spec);
        };
        op.backward = [spec](const std::vector<Tensor64>& in, const Tensor64& gy) {
            GradPair<double> g = conv_transpose2d_backward(in[0], in[1], spec, gy);
            return std::vector<Tensor64>{std::move(g.input_grad),
                                         std::move(g.param_grads.at("weight")),
                                         std::move(g.param_grads.at("bias"))};
        };
        ops.push_back(std::move(op));
    };
    deconv_case("conv_transpose2d", {2, 3, 4, 4}, {3, 2, 3, 3}, ConvSpec::transposed(2, 1, 1));
    deconv_case("conv_transpose2d_s1", {1, 2, 5, 5}, {2, 3, 2, 2}, ConvSpec::hw(1, 0));

    {
        CheckableOp op;
        op.name = "maxpool2d";
        op.inputs = {random_uniform<double>({2, 2, 7, 7}, rng)};
        op.forward = [](const std::vector<Tensor64>& in) {
            return maxpool2d_forward(in[0], 3, 3, 2, 2, 1, 1).output;
        };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            auto r = maxpool2d_forward(in[0], 3, 3, 2, 2, 1, 1);
            return std::vector<Tensor64>{maxpool2d_backward(in[0].shape, r.argmax, gy)};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "upsample_bilinear";
        op.inputs = {random_uniform<double>({1, 2, 3, 4}, rng)};
        op.forward = [](const std::vector<Tensor64>& in) {
            return upsample_bilinear_forward(in[0], 7, 6);
        };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            return std::vector<Tensor64>{upsample_bilinear_backward(in[0].shape, gy)};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "instance_norm";
        op.inputs = {random_uniform<double>({2, 3, 4, 5}, rng),
                     random_uniform<double>({3}, rng, 0.5, 1.5),
                     random_uniform<double>({3}, rng)};
        op.forward = [](const std::vector<Tensor64>& in) {
            return instance_norm_forward(in[0], in[1], in[2]);
        };
        op.backward = [](const std::vector<Tensor64>& in, const Tensor64& gy) {
            GradPair<double> g = instance_norm_backward(in[0], in[1], gy);
            return std::vector<Tensor64>{std::move(g.input_grad),
                                         std::move(g.param_grads.at("gamma")),
                                         std::move(g.param_grads.at("beta"))};
        };
        ops.push_back(std::move(op));
    }
    {
        CheckableOp op;
        op.name = "soft_dice";
        Tensor64 target({1, 1, 6, 6});
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        for (auto& v : target.data) v = coin(rng) < 0.4 ? 1.0 : 0.0;
        Tensor64 pred = random_uniform<double>({1, 1, 6, 6}, rng, 0.05, 0.95);
        op.inputs = {std::move(pred)};
        op.forward = [target](const std::vector<Tensor64>& in) {
            auto r = soft_dice(in[0], target, 1.0);
            return Tensor64({1}, {r.value});
        };
        op.backward = [target](const std::vector<Tensor64>& in, const Tensor64& gy) {
            auto r = soft_dice(in[0], target, 1.0);
            Tensor64 g = r.grad;
            for (auto& v : g.data) v *= gy.data[0];
            return std::vector<Tensor64>{std::move(g)};
        };
        ops.push_back(std::move(op));
    }

    return ops;
}

}  // namespace a3d2

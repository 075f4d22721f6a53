#pragma once

#include <array>
#include <functional>
#include <memory>
#include <set>

#include "a3d2/gradcheck.hpp"
#include "a3d2/ops.hpp"

namespace a3d2 {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

struct ModelConfig {
    int n = 1;                 // temporal half-window; 0 degenerates to a single-frame 2D model
    int height = 448;
    int width = 448;
    int base_channels = 64;    // encoder stem width; stages are x1/x2/x4/x8
    int fusion_channels = 16;  // 3D layer output channels
    int fused_channels = 3;    // input channels to the 2D body
    uint64_t seed = 0;

    int window() const { return 2 * n + 1; }

    void validate() const {
        if (n < 0) throw std::invalid_argument("model config: N must be >= 0");
        if (height < 32 || width < 32 || height % 32 || width % 32) {
            throw std::invalid_argument("model config: resolution " + std::to_string(height) + "x" +
                                        std::to_string(width) + " must be divisible by 32");
        }
        if (base_channels < 8 || base_channels % 4) {
            throw std::invalid_argument("model config: base_channels must be >= 8 and divisible by 4");
        }
        if (fusion_channels < 1 || fused_channels < 1) {
            throw std::invalid_argument("model config: channel widths must be >= 1");
        }
    }
};

inline const std::array<int, 4> kStageBlocks{3, 4, 6, 3};

// Every learnable tensor of the network, in definition order. This single
// inventory drives initialization, checkpoint validation and parameter
// counting, so the parameter set is closed under the architecture.
inline std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes(
    const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::vector<int>>> out;
    auto conv = [&](const std::string& p, int co, int ci, int kh, int kw) {
        out.emplace_back(p + ".weight", std::vector<int>{co, ci, kh, kw});
        out.emplace_back(p + ".bias", std::vector<int>{co});
    };
    auto deconv = [&](const std::string& p, int ci, int co, int kh, int kw) {
        out.emplace_back(p + ".weight", std::vector<int>{ci, co, kh, kw});
        out.emplace_back(p + ".bias", std::vector<int>{co});
    };
    auto norm = [&](const std::string& p, int c) {
        out.emplace_back(p + ".gamma", std::vector<int>{c});
        out.emplace_back(p + ".beta", std::vector<int>{c});
    };

    out.emplace_back("fusion.conv3d.weight",
                     std::vector<int>{cfg.fusion_channels, 1, cfg.window(), 3, 3});
    out.emplace_back("fusion.conv3d.bias", std::vector<int>{cfg.fusion_channels});
    norm("fusion.norm3d", cfg.fusion_channels);
    conv("fusion.conv2d", cfg.fused_channels, cfg.fusion_channels, 3, 3);
    norm("fusion.norm2d", cfg.fused_channels);

    const int b = cfg.base_channels;
    conv("encoder.stem.conv", b, cfg.fused_channels, 7, 7);
    norm("encoder.stem.norm", b);
    int cin = b;
    for (int s = 1; s <= 4; ++s) {
        const int cout = b << (s - 1);
        for (int blk = 0; blk < kStageBlocks[static_cast<size_t>(s - 1)]; ++blk) {
            const std::string p =
                "encoder.stage" + std::to_string(s) + ".block" + std::to_string(blk);
            const int bc_in = blk == 0 ? cin : cout;
            const int stride = (blk == 0 && s > 1) ? 2 : 1;
            conv(p + ".conv1", cout, bc_in, 3, 3);
            norm(p + ".norm1", cout);
            conv(p + ".conv2", cout, cout, 3, 3);
            norm(p + ".norm2", cout);
            if (stride != 1 || bc_in != cout) {
                conv(p + ".down.conv", cout, bc_in, 1, 1);
                norm(p + ".down.norm", cout);
            }
        }
        cin = cout;
    }

    const int c = 8 * b;
    conv("dac.branch1.conv1", c, c, 3, 3);
    conv("dac.branch2.conv1", c, c, 3, 3);
    conv("dac.branch2.conv2", c, c, 3, 3);
    conv("dac.branch3.conv1", c, c, 3, 3);
    conv("dac.branch3.conv2", c, c, 3, 3);
    conv("dac.branch3.conv3", c, c, 3, 3);
    conv("dac.branch4.conv1", c, c, 3, 3);
    conv("dac.branch4.conv2", c, c, 3, 3);
    conv("dac.branch4.conv3", c, c, 3, 3);
    conv("dac.branch4.conv4", c, c, 1, 1);

    for (int size : {2, 3, 5, 6}) {
        conv("rmp.pool" + std::to_string(size) + ".conv", 1, c, 1, 1);
    }

    const std::array<std::pair<int, int>, 4> dec{{{c + 4, 4 * b}, {4 * b, 2 * b}, {2 * b, b}, {b, b}}};
    for (int i = 0; i < 4; ++i) {
        const std::string p = "decoder.block" + std::to_string(4 - i);
        const int dc_in = dec[static_cast<size_t>(i)].first;
        const int dc_out = dec[static_cast<size_t>(i)].second;
        const int mid = dc_in / 4;
        conv(p + ".conv1", mid, dc_in, 1, 1);
        norm(p + ".norm1", mid);
        deconv(p + ".deconv", mid, mid, 3, 3);
        norm(p + ".norm2", mid);
        conv(p + ".conv2", dc_out, mid, 1, 1);
        norm(p + ".norm3", dc_out);
    }
    deconv("decoder.final_deconv", b, b / 2, 3, 3);
    conv("head.conv1", b / 2, b / 2, 3, 3);
    conv("head.conv2", 1, b / 2, 3, 3);
    return out;
}

template <typename T>
size_t param_count(const ParamMap<T>& params) {
    size_t n = 0;
    for (const auto& [name, p] : params) n += p.numel();
    return n;
}

// He fan-in init for kernels (deconv kernels store (Cin,Cout,kh,kw), so their
// fan-in divisor is dim 1), zeros for biases, gamma=1 / beta=0 for norms.
// Deterministic per seed: tensors are drawn in definition order.
template <typename T>
ParamMap<T> build_network(const ModelConfig& cfg) {
    ParamMap<T> params;
    std::mt19937_64 rng(cfg.seed);
    for (const auto& [name, shape] : parameter_shapes(cfg)) {
        Tensor<T> t;
        if (shape.size() >= 2) {
            const bool is_deconv = name.find("deconv") != std::string::npos;
            size_t numel = 1;
            for (int d : shape) numel *= static_cast<size_t>(d);
            const size_t fan_out_dim = static_cast<size_t>(is_deconv ? shape[1] : shape[0]);
            const double fan_in = static_cast<double>(numel) / static_cast<double>(fan_out_dim);
            t = random_normal<T>(shape, rng, std::sqrt(2.0 / fan_in));
        } else if (name.size() > 6 && name.rfind(".gamma") == name.size() - 6) {
            t = Tensor<T>::full(shape, T(1));
        } else {
            t = Tensor<T>(shape);  // biases and betas start at zero
        }
        params.emplace(name, std::move(t));
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward trace: a record of layer applications. Node order is topological
// (every node's inputs have smaller ids), so walking it backwards drives
// reverse-mode differentiation with branch gradients accumulated by id.
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardTrace {
    struct Node {
        Tensor<T> value;
        std::vector<int> inputs;
        std::function<void(const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                           const ParamMap<T>& params, ParamMap<T>& grads,
                           std::vector<Tensor<T>>& input_grads)>
            back;
    };
    std::vector<Node> nodes;
    int input_id = -1;
    int output_id = -1;
    int bottleneck_id = -1;
    std::array<int, 4> skip_ids{-1, -1, -1, -1};

    const Tensor<T>& value(int id) const { return nodes[static_cast<size_t>(id)].value; }
    const Tensor<T>& output() const { return value(output_id); }
};

template <typename T>
struct BackwardResult {
    ParamMap<T> param_grads;
    Tensor<T> input_grad;
};

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
BackwardResult<T> backward(const ForwardTrace<T>& tr, const ParamMap<T>& params,
                           const Tensor<T>& grad_mask) {
    if (tr.output_id < 0) throw std::invalid_argument("backward: trace has no output");
    if (grad_mask.shape != tr.output().shape) {
        throw std::invalid_argument("backward: grad shape " + shape_str(grad_mask.shape) +
                                    " != output shape " + shape_str(tr.output().shape));
    }
    BackwardResult<T> res;
    for (const auto& [name, p] : params) res.param_grads.emplace(name, Tensor<T>(p.shape));

    std::vector<Tensor<T>> node_grads(tr.nodes.size());
    node_grads[static_cast<size_t>(tr.output_id)] = grad_mask;
    for (int i = static_cast<int>(tr.nodes.size()) - 1; i >= 0; --i) {
        const auto& node = tr.nodes[static_cast<size_t>(i)];
        Tensor<T>& gy = node_grads[static_cast<size_t>(i)];
        if (gy.empty() || !node.back) {
            continue;
        }
        std::vector<Tensor<T>> igs(node.inputs.size());
        node.back(gy, tr, i, params, res.param_grads, igs);
        for (size_t j = 0; j < node.inputs.size(); ++j) {
            Tensor<T>& slot = node_grads[static_cast<size_t>(node.inputs[j])];
            if (slot.empty()) {
                slot = std::move(igs[j]);
            } else {
                add_into(slot, igs[j]);
            }
        }
        if (i != tr.input_id) gy = Tensor<T>();  // release as soon as consumed
    }
    Tensor<T>& gi = node_grads[static_cast<size_t>(tr.input_id)];
    res.input_grad = gi.empty() ? Tensor<T>(tr.value(tr.input_id).shape) : std::move(gi);
    return res;
}

// ---------------------------------------------------------------------------
// Graph builder: each method runs one engine op and records its backward.
// ---------------------------------------------------------------------------

template <typename T>
class NetBuilder {
public:
    NetBuilder(ForwardTrace<T>& tr, const ParamMap<T>& params) : tr_(tr), params_(params) {}

    const Tensor<T>& val(int id) const { return tr_.value(id); }

    int leaf(Tensor<T> v) {
        return record(std::move(v), {}, nullptr);
    }

    int conv2d(int x, const std::string& prefix, const ConvSpec& spec) {
        Tensor<T> y = conv2d_forward(val(x), P(prefix + ".weight"), P(prefix + ".bias"), spec);
        return record(std::move(y), {x},
                      [prefix, spec](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                                     const ParamMap<T>& P, ParamMap<T>& G,
                                     std::vector<Tensor<T>>& igs) {
                          const auto& node = tr.nodes[static_cast<size_t>(self)];
                          GradPair<T> g = conv2d_backward(tr.value(node.inputs[0]),
                                                          P.at(prefix + ".weight"), spec, gy);
                          add_into(G.at(prefix + ".weight"), g.param_grads.at("weight"));
                          add_into(G.at(prefix + ".bias"), g.param_grads.at("bias"));
                          igs[0] = std::move(g.input_grad);
                      });
    }

    int conv3d(int x, const std::string& prefix, const ConvSpec& spec) {
        Tensor<T> y = conv3d_forward(val(x), P(prefix + ".weight"), P(prefix + ".bias"), spec);
        return record(std::move(y), {x},
                      [prefix, spec](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                                     const ParamMap<T>& P, ParamMap<T>& G,
                                     std::vector<Tensor<T>>& igs) {
                          const auto& node = tr.nodes[static_cast<size_t>(self)];
                          GradPair<T> g = conv3d_backward(tr.value(node.inputs[0]),
                                                          P.at(prefix + ".weight"), spec, gy);
                          add_into(G.at(prefix + ".weight"), g.param_grads.at("weight"));
                          add_into(G.at(prefix + ".bias"), g.param_grads.at("bias"));
                          igs[0] = std::move(g.input_grad);
                      });
    }

    int deconv2d(int x, const std::string& prefix, const ConvSpec& spec) {
        Tensor<T> y =
            conv_transpose2d_forward(val(x), P(prefix + ".weight"), P(prefix + ".bias"), spec);
        return record(std::move(y), {x},
                      [prefix, spec](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                                     const ParamMap<T>& P, ParamMap<T>& G,
                                     std::vector<Tensor<T>>& igs) {
                          const auto& node = tr.nodes[static_cast<size_t>(self)];
                          GradPair<T> g = conv_transpose2d_backward(
                              tr.value(node.inputs[0]), P.at(prefix + ".weight"), spec, gy);
                          add_into(G.at(prefix + ".weight"), g.param_grads.at("weight"));
                          add_into(G.at(prefix + ".bias"), g.param_grads.at("bias"));
                          igs[0] = std::move(g.input_grad);
                      });
    }

    int inorm(int x, const std::string& prefix) {
        Tensor<T> y = instance_norm_forward(val(x), P(prefix + ".gamma"), P(prefix + ".beta"));
        return record(std::move(y), {x},
                      [prefix](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                               const ParamMap<T>& P, ParamMap<T>& G, std::vector<Tensor<T>>& igs) {
                          const auto& node = tr.nodes[static_cast<size_t>(self)];
                          GradPair<T> g = instance_norm_backward(tr.value(node.inputs[0]),
                                                                 P.at(prefix + ".gamma"), gy);
                          add_into(G.at(prefix + ".gamma"), g.param_grads.at("gamma"));
                          add_into(G.at(prefix + ".beta"), g.param_grads.at("beta"));
                          igs[0] = std::move(g.input_grad);
                      });
    }

    int relu(int x) {
        return record(relu_forward(val(x)), {x},
                      [](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                         const ParamMap<T>&, ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          const auto& node = tr.nodes[static_cast<size_t>(self)];
                          igs[0] = relu_backward(tr.value(node.inputs[0]), gy);
                      });
    }

    int sigmoid(int x) {
        return record(sigmoid_forward(val(x)), {x},
                      [](const Tensor<T>& gy, const ForwardTrace<T>& tr, int self,
                         const ParamMap<T>&, ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          igs[0] = sigmoid_backward(tr.value(self), gy);
                      });
    }

    int add(int a, int b) {
        return record(add_forward(val(a), val(b)), {a, b},
                      [](const Tensor<T>& gy, const ForwardTrace<T>&, int, const ParamMap<T>&,
                         ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          igs[0] = gy;
                          igs[1] = gy;
                      });
    }

    int concat(const std::vector<int>& xs) {
        std::vector<const Tensor<T>*> vals;
        std::vector<std::vector<int>> shapes;
        for (int id : xs) {
            vals.push_back(&val(id));
            shapes.push_back(val(id).shape);
        }
        return record(concat_channels(vals), xs,
                      [shapes](const Tensor<T>& gy, const ForwardTrace<T>&, int,
                               const ParamMap<T>&, ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          auto gs = concat_channels_backward(shapes, gy);
                          for (size_t j = 0; j < gs.size(); ++j) igs[j] = std::move(gs[j]);
                      });
    }

    int maxpool(int x, int k, int stride, int pad) {
        PoolResult<T> r = maxpool2d_forward(val(x), k, k, stride, stride, pad, pad);
        auto argmax = std::make_shared<std::vector<int32_t>>(std::move(r.argmax));
        std::vector<int> in_shape = val(x).shape;
        return record(std::move(r.output), {x},
                      [argmax, in_shape](const Tensor<T>& gy, const ForwardTrace<T>&, int,
                                         const ParamMap<T>&, ParamMap<T>&,
                                         std::vector<Tensor<T>>& igs) {
                          igs[0] = maxpool2d_backward(in_shape, *argmax, gy);
                      });
    }

    int upsample(int x, int oh, int ow) {
        std::vector<int> in_shape = val(x).shape;
        return record(upsample_bilinear_forward(val(x), oh, ow), {x},
                      [in_shape](const Tensor<T>& gy, const ForwardTrace<T>&, int,
                                 const ParamMap<T>&, ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          igs[0] = upsample_bilinear_backward(in_shape, gy);
                      });
    }

    // (B,C,1,H,W) -> (B,C,H,W)
    int squeeze_depth(int x) {
        const Tensor<T>& v = val(x);
        require_rank(v, 5, "squeeze_depth");
        if (v.dim(2) != 1) {
            throw std::invalid_argument("squeeze_depth: depth dim is " + std::to_string(v.dim(2)) +
                                        ", expected 1");
        }
        Tensor<T> y({v.dim(0), v.dim(1), v.dim(3), v.dim(4)}, v.data);
        std::vector<int> in_shape = v.shape;
        return record(std::move(y), {x},
                      [in_shape](const Tensor<T>& gy, const ForwardTrace<T>&, int,
                                 const ParamMap<T>&, ParamMap<T>&, std::vector<Tensor<T>>& igs) {
                          igs[0] = Tensor<T>(in_shape, gy.data);
                      });
    }

private:
    const Tensor<T>& P(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw std::invalid_argument("network: missing parameter '" + name + "'");
        }
        return it->second;
    }

    template <typename F>
    int record(Tensor<T>&& value, std::vector<int> inputs, F&& back) {
        typename ForwardTrace<T>::Node node;
        node.value = std::move(value);
        node.inputs = std::move(inputs);
        node.back = std::forward<F>(back);
        tr_.nodes.push_back(std::move(node));
        return static_cast<int>(tr_.nodes.size()) - 1;
    }

    ForwardTrace<T>& tr_;
    const ParamMap<T>& params_;
};

// ---------------------------------------------------------------------------
// Architecture graphs.
// ---------------------------------------------------------------------------

struct ArchDims {
    int n = 1;
    int base = 64;
    int fusion_ch = 16;
    int fused_ch = 3;
};

template <typename T>
ArchDims arch_from_params(const ParamMap<T>& params) {
    ArchDims d;
    auto need = [&](const char* name) -> const Tensor<T>& {
        auto it = params.find(name);
        if (it == params.end()) {
            throw std::invalid_argument(std::string("network: missing parameter '") + name + "'");
        }
        return it->second;
    };
    const Tensor<T>& w3 = need("fusion.conv3d.weight");
    d.fusion_ch = w3.dim(0);
    d.n = (w3.dim(2) - 1) / 2;
    d.fused_ch = need("fusion.conv2d.weight").dim(0);
    d.base = need("encoder.stem.conv.weight").dim(0);
    return d;
}

namespace graph {

template <typename T>
int fusion(NetBuilder<T>& b, int frames) {
    ConvSpec s3;  // temporal pad 0, spatial pad 1
    s3.pad_h = s3.pad_w = 1;
    int x = b.conv3d(frames, "fusion.conv3d", s3);
    x = b.squeeze_depth(x);
    x = b.relu(b.inorm(x, "fusion.norm3d"));
    x = b.conv2d(x, "fusion.conv2d", ConvSpec::hw(1, 1));
    x = b.relu(b.inorm(x, "fusion.norm2d"));
    return x;
}

template <typename T>
int basic_block(NetBuilder<T>& b, int x, const std::string& p, int cin, int cout, int stride) {
    int y = b.conv2d(x, p + ".conv1", ConvSpec::hw(stride, 1));
    y = b.relu(b.inorm(y, p + ".norm1"));
    y = b.conv2d(y, p + ".conv2", ConvSpec::hw(1, 1));
    y = b.inorm(y, p + ".norm2");
    int idn = x;
    if (stride != 1 || cin != cout) {
        idn = b.inorm(b.conv2d(x, p + ".down.conv", ConvSpec::hw(stride, 0)), p + ".down.norm");
    }
    return b.relu(b.add(y, idn));
}

template <typename T>
struct EncoderIds {
    int out = -1;
    std::array<int, 4> skips{-1, -1, -1, -1};
};

template <typename T>
EncoderIds<T> encoder(NetBuilder<T>& b, int x, int base) {
    int y = b.conv2d(x, "encoder.stem.conv", ConvSpec::hw(2, 3));
    y = b.relu(b.inorm(y, "encoder.stem.norm"));
    y = b.maxpool(y, 3, 2, 1);
    EncoderIds<T> ids;
    int cin = base;
    for (int s = 1; s <= 4; ++s) {
        const int cout = base << (s - 1);
        for (int blk = 0; blk < kStageBlocks[static_cast<size_t>(s - 1)]; ++blk) {
            const std::string p =
                "encoder.stage" + std::to_string(s) + ".block" + std::to_string(blk);
            const int bc_in = blk == 0 ? cin : cout;
            const int stride = (blk == 0 && s > 1) ? 2 : 1;
            y = basic_block(b, y, p, bc_in, cout, stride);
        }
        ids.skips[static_cast<size_t>(s - 1)] = y;
        cin = cout;
    }
    ids.out = y;
    return ids;
}

template <typename T>
int dac(NetBuilder<T>& b, int x) {
    auto ladder = [&](const std::string& branch, const std::vector<int>& dilations,
                      bool final_1x1) {
        int y = x;
        int i = 1;
        for (int d : dilations) {
            y = b.relu(b.conv2d(y, branch + ".conv" + std::to_string(i), ConvSpec::hw(1, d, d)));
            ++i;
        }
        if (final_1x1) {
            y = b.relu(b.conv2d(y, branch + ".conv" + std::to_string(i), ConvSpec::hw(1, 0)));
        }
        return y;
    };
    int b1 = ladder("dac.branch1", {1}, false);
    int b2 = ladder("dac.branch2", {1, 3}, false);
    int b3 = ladder("dac.branch3", {1, 3, 5}, false);
    int b4 = ladder("dac.branch4", {1, 3, 5}, true);
    return b.add(b.add(b.add(b.add(x, b1), b2), b3), b4);
}

template <typename T>
int rmp(NetBuilder<T>& b, int x) {
    const Tensor<T>& v = b.val(x);
    const int h = v.dim(2), w = v.dim(3);
    std::vector<int> parts{x};
    for (int size : {2, 3, 5, 6}) {
        // window clamped to the plane so tiny bottlenecks (64^2 input -> 2x2
        // plane) degrade to global pooling instead of failing
        const int k = std::min({size, h, w});
        int y = b.maxpool(x, k, k, 0);
        y = b.conv2d(y, "rmp.pool" + std::to_string(size) + ".conv", ConvSpec::hw(1, 0));
        y = b.upsample(y, h, w);
        parts.push_back(y);
    }
    return b.concat(parts);
}

template <typename T>
int decoder_block(NetBuilder<T>& b, int x, const std::string& p) {
    int y = b.conv2d(x, p + ".conv1", ConvSpec::hw(1, 0));
    y = b.relu(b.inorm(y, p + ".norm1"));
    y = b.deconv2d(y, p + ".deconv", ConvSpec::transposed(2, 1, 1));
    y = b.relu(b.inorm(y, p + ".norm2"));
    y = b.conv2d(y, p + ".conv2", ConvSpec::hw(1, 0));
    y = b.relu(b.inorm(y, p + ".norm3"));
    return y;
}

template <typename T>
int decoder(NetBuilder<T>& b, int bottleneck, const std::array<int, 4>& skips) {
    int y = bottleneck;
    for (int stage = 4; stage >= 1; --stage) {
        y = decoder_block(b, y, "decoder.block" + std::to_string(stage));
        if (stage >= 2) {
            const int skip = skips[static_cast<size_t>(stage - 2)];
            if (b.val(y).shape != b.val(skip).shape) {
                throw std::invalid_argument(
                    "decoder: stage " + std::to_string(stage) + " output " +
                    shape_str(b.val(y).shape) + " does not match encoder skip " +
                    std::to_string(stage - 1) + " " + shape_str(b.val(skip).shape));
            }
            y = b.add(y, skip);
        }
    }
    y = b.deconv2d(y, "decoder.final_deconv", ConvSpec::transposed(2, 1, 1));
    return b.relu(y);
}

template <typename T>
int head(NetBuilder<T>& b, int x) {
    int y = b.relu(b.conv2d(x, "head.conv1", ConvSpec::hw(1, 1)));
    y = b.conv2d(y, "head.conv2", ConvSpec::hw(1, 1));
    return b.sigmoid(y);
}

}  // namespace graph

// ---------------------------------------------------------------------------
// Public model surface.
// ---------------------------------------------------------------------------

template <typename T>
void validate_frames(const Tensor<T>& frames, const ArchDims& dims) {
    require_rank(frames, 5, "forward: frames");
    if (frames.dim(1) != 1) {
        throw std::invalid_argument("forward: frames must be single-channel, got " +
                                    std::to_string(frames.dim(1)) + " channels");
    }
    const int want = 2 * dims.n + 1;
    if (frames.dim(2) != want) {
        throw std::invalid_argument("forward: window holds " + std::to_string(frames.dim(2)) +
                                    " frames, network expects " + std::to_string(want) +
                                    " (N=" + std::to_string(dims.n) + ")");
    }
    if (frames.dim(3) % 32 || frames.dim(4) % 32 || frames.dim(3) < 32 || frames.dim(4) < 32) {
        throw std::invalid_argument("forward: resolution " + std::to_string(frames.dim(3)) + "x" +
                                    std::to_string(frames.dim(4)) + " must be divisible by 32");
    }
}

template <typename T>
struct ForwardResult {
    Tensor<T> prob;  // (B,1,H,W) in [0,1]
    ForwardTrace<T> trace;
};

template <typename T>
ForwardResult<T> forward(const Tensor<T>& frames, const ParamMap<T>& params) {
    const ArchDims dims = arch_from_params(params);
    validate_frames(frames, dims);
    ForwardResult<T> res;
    NetBuilder<T> b(res.trace, params);
    const int in = b.leaf(frames);
    res.trace.input_id = in;
    const int fused = graph::fusion(b, in);
    const auto enc = graph::encoder(b, fused, dims.base);
    res.trace.skip_ids = enc.skips;
    int y = graph::dac(b, enc.out);
    y = graph::rmp(b, y);
    res.trace.bottleneck_id = y;
    y = graph::decoder(b, y, enc.skips);
    y = graph::head(b, y);
    res.trace.output_id = y;
    res.prob = res.trace.output();
    return res;
}

// Standalone sub-network surfaces (each runs on a scratch trace).

template <typename T>
Tensor<T> fusion_forward(const Tensor<T>& frames, const ParamMap<T>& params) {
    const ArchDims dims = arch_from_params(params);
    require_rank(frames, 5, "fusion: frames");
    if (frames.dim(2) != 2 * dims.n + 1) {
        throw std::invalid_argument("fusion: window holds " + std::to_string(frames.dim(2)) +
                                    " frames, network expects " + std::to_string(2 * dims.n + 1));
    }
    ForwardTrace<T> tr;
    NetBuilder<T> b(tr, params);
    return tr.value(graph::fusion(b, b.leaf(frames)));
}

template <typename T>
struct EncoderResult {
    Tensor<T> bottleneck;
    std::array<Tensor<T>, 4> skips;
};

template <typename T>
EncoderResult<T> encoder_forward(const Tensor<T>& x, const ParamMap<T>& params) {
    const ArchDims dims = arch_from_params(params);
    ForwardTrace<T> tr;
    NetBuilder<T> b(tr, params);
    const auto ids = graph::encoder(b, b.leaf(x), dims.base);
    EncoderResult<T> r;
    r.bottleneck = tr.value(ids.out);
    for (int i = 0; i < 4; ++i) r.skips[static_cast<size_t>(i)] = tr.value(ids.skips[static_cast<size_t>(i)]);
    return r;
}

template <typename T>
Tensor<T> dac_forward(const Tensor<T>& x, const ParamMap<T>& params) {
    ForwardTrace<T> tr;
    NetBuilder<T> b(tr, params);
    return tr.value(graph::dac(b, b.leaf(x)));
}

template <typename T>
Tensor<T> rmp_forward(const Tensor<T>& x, const ParamMap<T>& params) {
    ForwardTrace<T> tr;
    NetBuilder<T> b(tr, params);
    return tr.value(graph::rmp(b, b.leaf(x)));
}

template <typename T>
Tensor<T> decoder_forward(const Tensor<T>& bottleneck, const std::array<Tensor<T>, 4>& skips,
                          const ParamMap<T>& params) {
    ForwardTrace<T> tr;
    NetBuilder<T> b(tr, params);
    const int bn = b.leaf(bottleneck);
    std::array<int, 4> skip_ids{};
    for (int i = 0; i < 4; ++i) skip_ids[static_cast<size_t>(i)] = b.leaf(skips[static_cast<size_t>(i)]);
    return tr.value(graph::decoder(b, bn, skip_ids));
}

// ---------------------------------------------------------------------------
// Whole-network finite-difference check: random (tensor, entry) samples,
// linear probe loss, central differences against backward().
// ---------------------------------------------------------------------------

struct NetworkGradcheckReport {
    double max_rel_err = 0.0;
    size_t entries_checked = 0;
    size_t kinks_skipped = 0;  // sample points where FD itself does not converge
    std::string worst_param;
};

inline NetworkGradcheckReport whole_network_gradcheck(const ModelConfig& cfg, size_t entries,
                                                      uint64_t seed, double eps = 1e-6,
                                                      double floor = 1e-2) {
    ParamMap<double> params = build_network<double>(cfg);
    std::mt19937_64 rng(mix_seed(seed, 0xfeed));
    // Check at a generic point: freshly built params leave size-1 norm planes
    // at exactly beta=0, parking ReLU inputs on the kink where central
    // differences and the subgradient legitimately disagree.
    {
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        for (auto& [name, p] : params) {
            for (auto& v : p.data) v += jitter(rng);
        }
    }
    Tensor64 frames =
        random_uniform<double>({1, 1, cfg.window(), cfg.height, cfg.width}, rng, 0.0, 1.0);

    ForwardResult<double> fr = forward(frames, params);
    Tensor64 probe = random_uniform<double>(fr.prob.shape, rng);
    BackwardResult<double> br = backward(fr.trace, params, probe);

    auto loss = [&]() {
        ForwardTrace<double> tr;
        NetBuilder<double> b(tr, params);
        const int in = b.leaf(frames);
        tr.input_id = in;
        const int fused = graph::fusion(b, in);
        const auto enc = graph::encoder(b, fused, cfg.base_channels);
        int y = graph::dac(b, enc.out);
        y = graph::rmp(b, y);
        y = graph::decoder(b, y, enc.skips);
        y = graph::head(b, y);
        const Tensor64& out = tr.value(y);
        double acc = 0.0;
        for (size_t i = 0; i < out.numel(); ++i) acc += out.data[i] * probe.data[i];
        return acc;
    };

    std::vector<std::string> names;
    for (const auto& [name, p] : params) names.push_back(name);
    std::set<std::pair<size_t, size_t>> picked;
    std::uniform_int_distribution<size_t> tensor_pick(0, names.size() - 1);

    auto central_fd = [&](Tensor<double>& p, size_t ei, double step) {
        const double saved = p.data[ei];
        p.data[ei] = saved + step;
        const double lp = loss();
        p.data[ei] = saved - step;
        const double lm = loss();
        p.data[ei] = saved;
        return (lp - lm) / (2.0 * step);
    };

    NetworkGradcheckReport rep;
    const size_t max_skips = entries / 2 + 16;
    while (rep.entries_checked < entries) {
        const size_t ti = tensor_pick(rng);
        Tensor<double>& p = params.at(names[ti]);
        std::uniform_int_distribution<size_t> entry_pick(0, p.numel() - 1);
        const size_t ei = entry_pick(rng);
        if (!picked.insert({ti, ei}).second) continue;

        const double step = eps * std::max(1.0, std::abs(p.data[ei]));
        const double an = br.param_grads.at(names[ti]).data[ei];
        double fd = central_fd(p, ei, step);
        double err = rel_err(fd, an, floor);
        if (err > 1e-4) {
            // The piecewise-linear net has ReLU kinks dense near zero (instance
            // norm centers activations); an inconsistent FD at a smaller step
            // means this sample sits on one, where central differences are
            // meaningless. Genuine backward bugs reproduce at both steps.
            const double fd2 = central_fd(p, ei, step / 4.0);
            if (rel_err(fd, fd2, floor) > 1e-6) {
                ++rep.kinks_skipped;
                if (rep.kinks_skipped > max_skips) {
                    throw std::runtime_error(
                        "whole_network_gradcheck: too many non-differentiable sample points");
                }
                continue;
            }
            err = rel_err(fd2, an, floor);
        }
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_param = names[ti];
        }
        ++rep.entries_checked;
    }
    return rep;
}

}  // namespace a3d2

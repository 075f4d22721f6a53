#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "a3d2/conv.hpp"
#include "a3d2/tensor.hpp"

namespace a3d2 {

// --------------------------------------------------------------------------
// Max pooling. Padding is -inf padding: padded positions never win, so the
// backward pass always routes the full gradient mass onto real pixels.
// Ties resolve to the first window position in row-major order.
// --------------------------------------------------------------------------

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<int32_t> argmax;  // per output element: iy*W+ix into the input plane
};

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& x, int kh, int kw, int sh, int sw, int ph = 0,
                                int pw = 0) {
    require_rank(x, 4, "maxpool2d: input");
    if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0) {
        throw std::invalid_argument("maxpool2d: kernel/stride must be >= 1, padding >= 0");
    }
    if (ph > kh / 2 || pw > kw / 2) {
        throw std::invalid_argument("maxpool2d: padding larger than half the kernel");
    }
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (kh > h + 2 * ph || kw > w + 2 * pw) {
        throw std::invalid_argument("maxpool2d: kernel " + std::to_string(kh) + "x" +
                                    std::to_string(kw) + " larger than padded input " +
                                    std::to_string(h + 2 * ph) + "x" + std::to_string(w + 2 * pw));
    }
    const int oh = (h + 2 * ph - kh) / sh + 1;
    const int ow = (w + 2 * pw - kw) / sw + 1;

    PoolResult<T> r;
    r.output = Tensor<T>({bsz, c, oh, ow});
    r.argmax.assign(r.output.numel(), -1);
    size_t oi = 0;
    for (int n = 0; n < bsz; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            const T* plane = x.data.data() + (static_cast<size_t>(n) * c + ci) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
                const int y0 = oy * sh - ph;
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    const int x0 = ox * sw - pw;
                    T best = -std::numeric_limits<T>::infinity();
                    int32_t best_idx = -1;
                    for (int u = 0; u < kh; ++u) {
                        const int iy = y0 + u;
                        if (iy < 0 || iy >= h) continue;
                        for (int v = 0; v < kw; ++v) {
                            const int ix = x0 + v;
                            if (ix < 0 || ix >= w) continue;
                            const T val = plane[static_cast<size_t>(iy) * w + ix];
                            if (val > best) {
                                best = val;
                                best_idx = static_cast<int32_t>(iy * w + ix);
                            }
                        }
                    }
                    r.output.data[oi] = best;
                    r.argmax[oi] = best_idx;
                }
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const std::vector<int>& input_shape,
                             const std::vector<int32_t>& argmax, const Tensor<T>& grad_out) {
    if (input_shape.size() != 4) {
        throw std::invalid_argument("maxpool2d backward: input shape must be rank 4");
    }
    if (argmax.size() != grad_out.numel()) {
        throw std::invalid_argument("maxpool2d backward: argmax/grad size mismatch");
    }
    Tensor<T> gx(input_shape);
    const int c = input_shape[1], h = input_shape[2], w = input_shape[3];
    const size_t plane = static_cast<size_t>(h) * w;
    const size_t out_plane = static_cast<size_t>(grad_out.dim(2)) * grad_out.dim(3);
    size_t oi = 0;
    for (int n = 0; n < input_shape[0]; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            T* gplane = gx.data.data() + (static_cast<size_t>(n) * c + ci) * plane;
            for (size_t i = 0; i < out_plane; ++i, ++oi) {
                gplane[argmax[oi]] += grad_out.data[oi];
            }
        }
    }
    return gx;
}

// --------------------------------------------------------------------------
// Bilinear resize with corner-aligned sampling (identity when sizes match).
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> upsample_bilinear_forward(const Tensor<T>& x, int oh, int ow) {
    require_rank(x, 4, "upsample_bilinear: input");
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("upsample_bilinear: output dims must be >= 1");
    }
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    Tensor<T> y({bsz, c, oh, ow});
    for (int n = 0; n < bsz; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            const T* plane = x.data.data() + (static_cast<size_t>(n) * c + ci) * h * w;
            T* out = y.data.data() + (static_cast<size_t>(n) * c + ci) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const double fy = oy * sy;
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, h - 1);
                const T wy = static_cast<T>(fy - y0);
                for (int ox = 0; ox < ow; ++ox) {
                    const double fx = ox * sx;
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const T wx = static_cast<T>(fx - x0);
                    const T v00 = plane[static_cast<size_t>(y0) * w + x0];
                    const T v01 = plane[static_cast<size_t>(y0) * w + x1];
                    const T v10 = plane[static_cast<size_t>(y1) * w + x0];
                    const T v11 = plane[static_cast<size_t>(y1) * w + x1];
                    out[static_cast<size_t>(oy) * ow + ox] =
                        (T(1) - wy) * ((T(1) - wx) * v00 + wx * v01) +
                        wy * ((T(1) - wx) * v10 + wx * v11);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> upsample_bilinear_backward(const std::vector<int>& input_shape,
                                     const Tensor<T>& grad_out) {
    if (input_shape.size() != 4) {
        throw std::invalid_argument("upsample_bilinear backward: input shape must be rank 4");
    }
    const int bsz = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    Tensor<T> gx(input_shape);
    for (int n = 0; n < bsz; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            T* gplane = gx.data.data() + (static_cast<size_t>(n) * c + ci) * h * w;
            const T* go = grad_out.data.data() + (static_cast<size_t>(n) * c + ci) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const double fy = oy * sy;
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, h - 1);
                const T wy = static_cast<T>(fy - y0);
                for (int ox = 0; ox < ow; ++ox) {
                    const double fx = ox * sx;
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const T wx = static_cast<T>(fx - x0);
                    const T g = go[static_cast<size_t>(oy) * ow + ox];
                    gplane[static_cast<size_t>(y0) * w + x0] += (T(1) - wy) * (T(1) - wx) * g;
                    gplane[static_cast<size_t>(y0) * w + x1] += (T(1) - wy) * wx * g;
                    gplane[static_cast<size_t>(y1) * w + x0] += wy * (T(1) - wx) * g;
                    gplane[static_cast<size_t>(y1) * w + x1] += wy * wx * g;
                }
            }
        }
    }
    return gx;
}

// --------------------------------------------------------------------------
// Instance normalization: per (sample, channel) plane standardization with
// learned affine. Biased variance, like the usual framework definition.
// --------------------------------------------------------------------------

inline constexpr double kInstanceNormEps = 1e-5;

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                                double eps = kInstanceNormEps) {
    require_rank(x, 4, "instance_norm: input");
    require_shape(gamma, {x.dim(1)}, "instance_norm: gamma");
    require_shape(beta, {x.dim(1)}, "instance_norm: beta");
    const int bsz = x.dim(0), c = x.dim(1);
    const size_t m = static_cast<size_t>(x.dim(2)) * x.dim(3);
    Tensor<T> y(x.shape);
    for (int n = 0; n < bsz; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            const T* plane = x.data.data() + (static_cast<size_t>(n) * c + ci) * m;
            T* out = y.data.data() + (static_cast<size_t>(n) * c + ci) * m;
            T mean = T(0);
            for (size_t i = 0; i < m; ++i) mean += plane[i];
            mean /= static_cast<T>(m);
            T var = T(0);
            for (size_t i = 0; i < m; ++i) {
                const T d = plane[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(m);
            const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
            const T g = gamma.data[static_cast<size_t>(ci)];
            const T b = beta.data[static_cast<size_t>(ci)];
            for (size_t i = 0; i < m; ++i) out[i] = g * (plane[i] - mean) * inv + b;
        }
    }
    return y;
}

template <typename T>
GradPair<T> instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& grad_out, double eps = kInstanceNormEps) {
    require_rank(x, 4, "instance_norm backward: input");
    require_shape(grad_out, x.shape, "instance_norm backward: grad_out");
    const int bsz = x.dim(0), c = x.dim(1);
    const size_t m = static_cast<size_t>(x.dim(2)) * x.dim(3);
    GradPair<T> g;
    g.input_grad = Tensor<T>(x.shape);
    Tensor<T> dgamma({c});
    Tensor<T> dbeta({c});
    for (int n = 0; n < bsz; ++n) {
        for (int ci = 0; ci < c; ++ci) {
            const T* plane = x.data.data() + (static_cast<size_t>(n) * c + ci) * m;
            const T* go = grad_out.data.data() + (static_cast<size_t>(n) * c + ci) * m;
            T* gx = g.input_grad.data.data() + (static_cast<size_t>(n) * c + ci) * m;
            T mean = T(0);
            for (size_t i = 0; i < m; ++i) mean += plane[i];
            mean /= static_cast<T>(m);
            T var = T(0);
            for (size_t i = 0; i < m; ++i) {
                const T d = plane[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(m);
            const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
            T sum_g = T(0), sum_gx = T(0);
            for (size_t i = 0; i < m; ++i) {
                const T xh = (plane[i] - mean) * inv;
                sum_g += go[i];
                sum_gx += go[i] * xh;
            }
            dbeta.data[static_cast<size_t>(ci)] += sum_g;
            dgamma.data[static_cast<size_t>(ci)] += sum_gx;
            const T gscale = gamma.data[static_cast<size_t>(ci)] * inv;
            const T mg = sum_g / static_cast<T>(m);
            const T mgx = sum_gx / static_cast<T>(m);
            for (size_t i = 0; i < m; ++i) {
                const T xh = (plane[i] - mean) * inv;
                gx[i] = gscale * (go[i] - mg - xh * mgx);
            }
        }
    }
    g.param_grads["gamma"] = std::move(dgamma);
    g.param_grads["beta"] = std::move(dbeta);
    return g;
}

// --------------------------------------------------------------------------
// Elementwise ops and channel concatenation.
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    require_shape(grad_out, x.shape, "relu backward: grad_out");
    Tensor<T> gx(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) gx.data[i] = x.data[i] > T(0) ? grad_out.data[i] : T(0);
    return gx;
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.data) {
        if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
    require_shape(grad_out, y.shape, "sigmoid backward: grad_out");
    Tensor<T> gx(y.shape);
    for (size_t i = 0; i < y.numel(); ++i) {
        gx.data[i] = grad_out.data[i] * y.data[i] * (T(1) - y.data[i]);
    }
    return gx;
}

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    }
    Tensor<T> y = a;
    for (size_t i = 0; i < y.numel(); ++i) y.data[i] += b.data[i];
    return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    const Tensor<T>& first = *xs.front();
    require_rank(first, 4, "concat: input");
    int ctotal = 0;
    for (const Tensor<T>* t : xs) {
        require_rank(*t, 4, "concat: input");
        if (t->dim(0) != first.dim(0) || t->dim(2) != first.dim(2) || t->dim(3) != first.dim(3)) {
            throw std::invalid_argument("concat: non-channel dims differ: " + shape_str(first.shape) +
                                        " vs " + shape_str(t->shape));
        }
        ctotal += t->dim(1);
    }
    const int bsz = first.dim(0), h = first.dim(2), w = first.dim(3);
    const size_t plane = static_cast<size_t>(h) * w;
    Tensor<T> y({bsz, ctotal, h, w});
    for (int n = 0; n < bsz; ++n) {
        size_t off = 0;
        for (const Tensor<T>* t : xs) {
            const size_t chunk = static_cast<size_t>(t->dim(1)) * plane;
            std::copy_n(t->data.data() + static_cast<size_t>(n) * chunk, chunk,
                        y.data.data() + static_cast<size_t>(n) * ctotal * plane + off);
            off += chunk;
        }
    }
    return y;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_channels<T>({&a, &b});
}

template <typename T>
std::vector<Tensor<T>> concat_channels_backward(const std::vector<std::vector<int>>& input_shapes,
                                                const Tensor<T>& grad_out) {
    std::vector<Tensor<T>> grads;
    grads.reserve(input_shapes.size());
    const int bsz = grad_out.dim(0);
    const size_t plane = static_cast<size_t>(grad_out.dim(2)) * grad_out.dim(3);
    const size_t ctotal = static_cast<size_t>(grad_out.dim(1));
    size_t off = 0;
    for (const auto& s : input_shapes) {
        Tensor<T> g(s);
        const size_t chunk = static_cast<size_t>(s[1]) * plane;
        for (int n = 0; n < bsz; ++n) {
            std::copy_n(grad_out.data.data() + static_cast<size_t>(n) * ctotal * plane + off, chunk,
                        g.data.data() + static_cast<size_t>(n) * chunk);
        }
        off += chunk;
        grads.push_back(std::move(g));
    }
    return grads;
}

// --------------------------------------------------------------------------
// SGD with decoupled L2 weight decay. Decay applies to tensors of rank >= 2
// (conv/deconv kernels), never to biases or norm affine parameters.
// --------------------------------------------------------------------------

template <typename T>
bool is_decayed_param(const Tensor<T>& p) {
    return p.ndim() >= 2;
}

template <typename T>
void sgd_step(std::map<std::string, Tensor<T>>& params,
              const std::map<std::string, Tensor<T>>& grads, double lr, double weight_decay) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("sgd_step: parameter/gradient key sets differ in size");
    }
    for (auto& [name, p] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw std::invalid_argument("sgd_step: missing gradient for parameter '" + name + "'");
        }
        const Tensor<T>& g = it->second;
        if (g.shape != p.shape) {
            throw std::invalid_argument("sgd_step: gradient shape " + shape_str(g.shape) +
                                        " != parameter shape " + shape_str(p.shape) + " for '" +
                                        name + "'");
        }
        const T wd = is_decayed_param(p) ? static_cast<T>(weight_decay) : T(0);
        const T step = static_cast<T>(lr);
        for (size_t i = 0; i < p.numel(); ++i) {
            p.data[i] -= step * (g.data[i] + wd * p.data[i]);
        }
    }
}

}  // namespace a3d2

#pragma once

#include <map>
#include <type_traits>

#include "a3d2/tensor.hpp"

namespace a3d2 {

// Kernel geometry shared by the 2D/3D convolutions and the transposed variant.
// The *_d components are the leading temporal axis, used by 3D ops only;
// out_pad_* is consumed by conv_transpose2d only.
struct ConvSpec {
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    int dil_h = 1, dil_w = 1;
    int stride_d = 1, pad_d = 0, dil_d = 1;
    int out_pad_h = 0, out_pad_w = 0;

    static ConvSpec hw(int stride, int pad, int dil = 1) {
        ConvSpec s;
        s.stride_h = s.stride_w = stride;
        s.pad_h = s.pad_w = pad;
        s.dil_h = s.dil_w = dil;
        return s;
    }

    static ConvSpec transposed(int stride, int pad, int out_pad) {
        ConvSpec s = hw(stride, pad, 1);
        s.out_pad_h = s.out_pad_w = out_pad;
        return s;
    }

    void validate() const {
        auto chk = [](int v, int lo, const char* what) {
            if (v < lo) {
                throw std::invalid_argument(std::string("conv spec: ") + what + "=" +
                                            std::to_string(v) + " below minimum " +
                                            std::to_string(lo));
            }
        };
        chk(stride_h, 1, "stride_h");
        chk(stride_w, 1, "stride_w");
        chk(stride_d, 1, "stride_d");
        chk(dil_h, 1, "dil_h");
        chk(dil_w, 1, "dil_w");
        chk(dil_d, 1, "dil_d");
        chk(pad_h, 0, "pad_h");
        chk(pad_w, 0, "pad_w");
        chk(pad_d, 0, "pad_d");
        chk(out_pad_h, 0, "out_pad_h");
        chk(out_pad_w, 0, "out_pad_w");
    }
};

template <typename T>
struct GradPair {
    Tensor<T> input_grad;
    std::map<std::string, Tensor<T>> param_grads;
};

namespace detail {

// Row-major GEMM: C = alpha*op(A)*op(B) + beta*C. Backed by cblas_sgemm when
// built with A3D2_USE_CBLAS, naive loops otherwise.
void sgemm_rm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
              const float* b, int ldb, float beta, float* c, int ldc);

inline int conv_out_dim(int in, int k, int stride, int pad, int dil, const char* axis) {
    const int eff = dil * (k - 1) + 1;
    const int out = (in + 2 * pad - eff) / stride + 1;
    if (in + 2 * pad < eff || out < 1) {
        throw std::invalid_argument(std::string("conv: non-positive output extent on axis ") + axis +
                                    " (in=" + std::to_string(in) + ", kernel=" + std::to_string(k) +
                                    ", stride=" + std::to_string(stride) + ", pad=" +
                                    std::to_string(pad) + ", dil=" + std::to_string(dil) + ")");
    }
    return out;
}

// Valid kernel-tap range [lo, hi] such that in-pixel = base + u*dil stays in [0, in).
inline void tap_range(int base, int dil, int k, int in, int& lo, int& hi) {
    lo = base < 0 ? (-base + dil - 1) / dil : 0;
    hi = (in - 1 - base) / dil;
    if (hi > k - 1) hi = k - 1;
}

template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, const ConvSpec& s, int oh, int ow,
            T* col) {
    const size_t plane = static_cast<size_t>(h) * w;
    size_t r = 0;
    for (int ci = 0; ci < cin; ++ci) {
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v, ++r) {
                T* dst = col + r * (static_cast<size_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * s.stride_h - s.pad_h + u * s.dil_h;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) *dst++ = T(0);
                        continue;
                    }
                    const T* src = x + ci * plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * s.stride_w - s.pad_w + v * s.dil_w;
                        *dst++ = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int cin, int h, int w, int kh, int kw, const ConvSpec& s, int oh, int ow,
            T* x) {
    const size_t plane = static_cast<size_t>(h) * w;
    size_t r = 0;
    for (int ci = 0; ci < cin; ++ci) {
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v, ++r) {
                const T* src = col + r * (static_cast<size_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * s.stride_h - s.pad_h + u * s.dil_h;
                    if (iy < 0 || iy >= h) {
                        src += ow;
                        continue;
                    }
                    T* dst = x + ci * plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox, ++src) {
                        const int ix = ox * s.stride_w - s.pad_w + v * s.dil_w;
                        if (ix >= 0 && ix < w) dst[ix] += *src;
                    }
                }
            }
        }
    }
}

}  // namespace detail

// --------------------------------------------------------------------------
// conv2d: cross-correlation with bias.
// x (B,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout) -> (B,Cout,OH,OW).
// float64 accumulates per output element in fixed (ci,u,v) order; float32 goes
// through im2col + GEMM.
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         const ConvSpec& spec) {
    spec.validate();
    require_rank(x, 4, "conv2d: input");
    require_rank(w, 4, "conv2d: weight");
    require_shape(b, {w.dim(0)}, "conv2d: bias");
    if (x.dim(1) != w.dim(1)) {
        throw std::invalid_argument("conv2d: input channel dim " + std::to_string(x.dim(1)) +
                                    " != weight channel dim " + std::to_string(w.dim(1)));
    }
    const int bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = detail::conv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h, "H");
    const int ow = detail::conv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w, "W");

    Tensor<T> y({bsz, cout, oh, ow});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t out_plane = static_cast<size_t>(oh) * ow;

    if constexpr (std::is_same_v<T, float>) {
        const int kdim = cin * kh * kw;
        std::vector<float> col(static_cast<size_t>(kdim) * out_plane);
        for (int n = 0; n < bsz; ++n) {
            const float* xn = x.data.data() + static_cast<size_t>(n) * cin * in_plane;
            float* yn = y.data.data() + static_cast<size_t>(n) * cout * out_plane;
            detail::im2col(xn, cin, h, wd, kh, kw, spec, oh, ow, col.data());
            detail::sgemm_rm(false, false, cout, static_cast<int>(out_plane), kdim, 1.0f,
                             w.data.data(), kdim, col.data(), static_cast<int>(out_plane), 0.0f, yn,
                             static_cast<int>(out_plane));
            for (int co = 0; co < cout; ++co) {
                const float bias = b.data[static_cast<size_t>(co)];
                float* row = yn + static_cast<size_t>(co) * out_plane;
                for (size_t i = 0; i < out_plane; ++i) row[i] += bias;
            }
        }
        return y;
    }

    for (int n = 0; n < bsz; ++n) {
        const T* xn = x.data.data() + static_cast<size_t>(n) * cin * in_plane;
        for (int co = 0; co < cout; ++co) {
            const T* wc = w.data.data() + static_cast<size_t>(co) * cin * kh * kw;
            T* yrow = y.data.data() + (static_cast<size_t>(n) * cout + co) * out_plane;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy0 = oy * spec.stride_h - spec.pad_h;
                int ulo, uhi;
                detail::tap_range(iy0, spec.dil_h, kh, h, ulo, uhi);
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix0 = ox * spec.stride_w - spec.pad_w;
                    int vlo, vhi;
                    detail::tap_range(ix0, spec.dil_w, kw, wd, vlo, vhi);
                    T acc = b.data[static_cast<size_t>(co)];
                    for (int ci = 0; ci < cin; ++ci) {
                        const T* xc = xn + ci * in_plane;
                        const T* wk = wc + static_cast<size_t>(ci) * kh * kw;
                        for (int u = ulo; u <= uhi; ++u) {
                            const T* xr = xc + static_cast<size_t>(iy0 + u * spec.dil_h) * wd + ix0;
                            const T* wr = wk + static_cast<size_t>(u) * kw;
                            for (int v = vlo; v <= vhi; ++v) {
                                acc += xr[v * spec.dil_w] * wr[v];
                            }
                        }
                    }
                    yrow[static_cast<size_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

template <typename T>
GradPair<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                            const Tensor<T>& grad_out) {
    spec.validate();
    require_rank(x, 4, "conv2d backward: input");
    require_rank(w, 4, "conv2d backward: weight");
    const int bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = detail::conv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h, "H");
    const int ow = detail::conv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w, "W");
    require_shape(grad_out, {bsz, cout, oh, ow}, "conv2d backward: grad_out");

    GradPair<T> g;
    g.input_grad = Tensor<T>({bsz, cin, h, wd});
    Tensor<T> dw({cout, cin, kh, kw});
    Tensor<T> db({cout});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t out_plane = static_cast<size_t>(oh) * ow;

    for (int n = 0; n < bsz; ++n) {
        const T* gy = grad_out.data.data() + static_cast<size_t>(n) * cout * out_plane;
        for (int co = 0; co < cout; ++co) {
            T acc = T(0);
            const T* row = gy + static_cast<size_t>(co) * out_plane;
            for (size_t i = 0; i < out_plane; ++i) acc += row[i];
            db.data[static_cast<size_t>(co)] += acc;
        }
    }

    if constexpr (std::is_same_v<T, float>) {
        const int kdim = cin * kh * kw;
        std::vector<float> col(static_cast<size_t>(kdim) * out_plane);
        for (int n = 0; n < bsz; ++n) {
            const float* xn = x.data.data() + static_cast<size_t>(n) * cin * in_plane;
            const float* gy = grad_out.data.data() + static_cast<size_t>(n) * cout * out_plane;
            detail::im2col(xn, cin, h, wd, kh, kw, spec, oh, ow, col.data());
            // dW += gY * col^T
            detail::sgemm_rm(false, true, cout, kdim, static_cast<int>(out_plane), 1.0f, gy,
                             static_cast<int>(out_plane), col.data(), static_cast<int>(out_plane),
                             1.0f, dw.data.data(), kdim);
            // col_g = W^T * gY, scattered back to the input grid
            detail::sgemm_rm(true, false, kdim, static_cast<int>(out_plane), cout, 1.0f,
                             w.data.data(), kdim, gy, static_cast<int>(out_plane), 0.0f, col.data(),
                             static_cast<int>(out_plane));
            detail::col2im(col.data(), cin, h, wd, kh, kw, spec, oh, ow,
                           g.input_grad.data.data() + static_cast<size_t>(n) * cin * in_plane);
        }
    } else {
        for (int n = 0; n < bsz; ++n) {
            const T* xn = x.data.data() + static_cast<size_t>(n) * cin * in_plane;
            const T* gy = grad_out.data.data() + static_cast<size_t>(n) * cout * out_plane;
            for (int co = 0; co < cout; ++co) {
                const T* grow = gy + static_cast<size_t>(co) * out_plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy0 = oy * spec.stride_h - spec.pad_h;
                    int ulo, uhi;
                    detail::tap_range(iy0, spec.dil_h, kh, h, ulo, uhi);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix0 = ox * spec.stride_w - spec.pad_w;
                        int vlo, vhi;
                        detail::tap_range(ix0, spec.dil_w, kw, wd, vlo, vhi);
                        const T gv = grow[static_cast<size_t>(oy) * ow + ox];
                        if (gv == T(0)) continue;
                        for (int ci = 0; ci < cin; ++ci) {
                            for (int u = ulo; u <= uhi; ++u) {
                                const int iy = iy0 + u * spec.dil_h;
                                for (int v = vlo; v <= vhi; ++v) {
                                    const int ix = ix0 + v * spec.dil_w;
                                    dw.at(co, ci, u, v) += gv * xn[ci * in_plane + iy * wd + ix];
                                }
                            }
                        }
                    }
                }
            }
            // dx[n,ci,iy,ix] accumulated in (co,u,v) order; conv_transpose2d_forward
            // walks the same order so the adjoint identity is exact.
            T* gx = g.input_grad.data.data() + static_cast<size_t>(n) * cin * in_plane;
            for (int ci = 0; ci < cin; ++ci) {
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < wd; ++ix) {
                        T acc = T(0);
                        for (int co = 0; co < cout; ++co) {
                            const T* grow = gy + static_cast<size_t>(co) * out_plane;
                            const T* wk = w.data.data() +
                                          (static_cast<size_t>(co) * cin + ci) * kh * kw;
                            for (int u = 0; u < kh; ++u) {
                                const int num_y = iy + spec.pad_h - u * spec.dil_h;
                                if (num_y < 0 || num_y % spec.stride_h) continue;
                                const int oy = num_y / spec.stride_h;
                                if (oy >= oh) continue;
                                for (int v = 0; v < kw; ++v) {
                                    const int num_x = ix + spec.pad_w - v * spec.dil_w;
                                    if (num_x < 0 || num_x % spec.stride_w) continue;
                                    const int ox = num_x / spec.stride_w;
                                    if (ox >= ow) continue;
                                    acc += grow[static_cast<size_t>(oy) * ow + ox] *
                                           wk[static_cast<size_t>(u) * kw + v];
                                }
                            }
                        }
                        gx[ci * in_plane + static_cast<size_t>(iy) * wd + ix] = acc;
                    }
                }
            }
        }
    }

    g.param_grads["weight"] = std::move(dw);
    g.param_grads["bias"] = std::move(db);
    return g;
}

// --------------------------------------------------------------------------
// conv3d: x (B,Cin,D,H,W), w (Cout,Cin,kd,kh,kw), b (Cout).
// --------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         const ConvSpec& spec) {
    spec.validate();
    require_rank(x, 5, "conv3d: input");
    require_rank(w, 5, "conv3d: weight");
    require_shape(b, {w.dim(0)}, "conv3d: bias");
    if (x.dim(1) != w.dim(1)) {
        throw std::invalid_argument("conv3d: input channel dim " + std::to_string(x.dim(1)) +
                                    " != weight channel dim " + std::to_string(w.dim(1)));
    }
    const int bsz = x.dim(0), cin = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    const int cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int od = detail::conv_out_dim(d, kd, spec.stride_d, spec.pad_d, spec.dil_d, "D");
    const int oh = detail::conv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h, "H");
    const int ow = detail::conv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w, "W");

    Tensor<T> y({bsz, cout, od, oh, ow});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t in_vol = static_cast<size_t>(d) * in_plane;
    for (int n = 0; n < bsz; ++n) {
        const T* xn = x.data.data() + static_cast<size_t>(n) * cin * in_vol;
        for (int co = 0; co < cout; ++co) {
            const T* wc = w.data.data() + static_cast<size_t>(co) * cin * kd * kh * kw;
            for (int oz = 0; oz < od; ++oz) {
                const int iz0 = oz * spec.stride_d - spec.pad_d;
                int qlo, qhi;
                detail::tap_range(iz0, spec.dil_d, kd, d, qlo, qhi);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy0 = oy * spec.stride_h - spec.pad_h;
                    int ulo, uhi;
                    detail::tap_range(iy0, spec.dil_h, kh, h, ulo, uhi);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix0 = ox * spec.stride_w - spec.pad_w;
                        int vlo, vhi;
                        detail::tap_range(ix0, spec.dil_w, kw, wd, vlo, vhi);
                        T acc = b.data[static_cast<size_t>(co)];
                        for (int ci = 0; ci < cin; ++ci) {
                            const T* xc = xn + ci * in_vol;
                            const T* wk = wc + static_cast<size_t>(ci) * kd * kh * kw;
                            for (int q = qlo; q <= qhi; ++q) {
                                const T* xz = xc + static_cast<size_t>(iz0 + q * spec.dil_d) * in_plane;
                                const T* wz = wk + static_cast<size_t>(q) * kh * kw;
                                for (int u = ulo; u <= uhi; ++u) {
                                    const T* xr = xz + static_cast<size_t>(iy0 + u * spec.dil_h) * wd + ix0;
                                    const T* wr = wz + static_cast<size_t>(u) * kw;
                                    for (int v = vlo; v <= vhi; ++v) {
                                        acc += xr[v * spec.dil_w] * wr[v];
                                    }
                                }
                            }
                        }
                        y.at(n, co, oz, oy, ox) = acc;
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
GradPair<T> conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                            const Tensor<T>& grad_out) {
    spec.validate();
    require_rank(x, 5, "conv3d backward: input");
    require_rank(w, 5, "conv3d backward: weight");
    const int bsz = x.dim(0), cin = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    const int cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int od = detail::conv_out_dim(d, kd, spec.stride_d, spec.pad_d, spec.dil_d, "D");
    const int oh = detail::conv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h, "H");
    const int ow = detail::conv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w, "W");
    require_shape(grad_out, {bsz, cout, od, oh, ow}, "conv3d backward: grad_out");

    GradPair<T> g;
    g.input_grad = Tensor<T>({bsz, cin, d, h, wd});
    Tensor<T> dw({cout, cin, kd, kh, kw});
    Tensor<T> db({cout});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t in_vol = static_cast<size_t>(d) * in_plane;

    for (int n = 0; n < bsz; ++n) {
        const T* xn = x.data.data() + static_cast<size_t>(n) * cin * in_vol;
        T* gx = g.input_grad.data.data() + static_cast<size_t>(n) * cin * in_vol;
        for (int co = 0; co < cout; ++co) {
            for (int oz = 0; oz < od; ++oz) {
                const int iz0 = oz * spec.stride_d - spec.pad_d;
                int qlo, qhi;
                detail::tap_range(iz0, spec.dil_d, kd, d, qlo, qhi);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy0 = oy * spec.stride_h - spec.pad_h;
                    int ulo, uhi;
                    detail::tap_range(iy0, spec.dil_h, kh, h, ulo, uhi);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix0 = ox * spec.stride_w - spec.pad_w;
                        int vlo, vhi;
                        detail::tap_range(ix0, spec.dil_w, kw, wd, vlo, vhi);
                        const T gv = grad_out.at(n, co, oz, oy, ox);
                        db.data[static_cast<size_t>(co)] += gv;
                        if (gv == T(0)) continue;
                        for (int ci = 0; ci < cin; ++ci) {
                            for (int q = qlo; q <= qhi; ++q) {
                                const int iz = iz0 + q * spec.dil_d;
                                for (int u = ulo; u <= uhi; ++u) {
                                    const int iy = iy0 + u * spec.dil_h;
                                    for (int v = vlo; v <= vhi; ++v) {
                                        const int ix = ix0 + v * spec.dil_w;
                                        const size_t xi =
                                            ci * in_vol + iz * in_plane + static_cast<size_t>(iy) * wd + ix;
                                        dw.at(co, ci, q, u, v) += gv * xn[xi];
                                        gx[xi] += gv * w.at(co, ci, q, u, v);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    g.param_grads["weight"] = std::move(dw);
    g.param_grads["bias"] = std::move(db);
    return g;
}

// --------------------------------------------------------------------------
// conv_transpose2d: adjoint of conv2d over the same spec.
// x (B,C1,H,W), w (C1,C2,kh,kw), b (C2) -> (B,C2,OH,OW) with
// OH = (H-1)*stride - 2*pad + dil*(kh-1) + 1 + out_pad.
// --------------------------------------------------------------------------

namespace detail {

inline int deconv_out_dim(int in, int k, int stride, int pad, int dil, int out_pad,
                          const char* axis) {
    if (out_pad >= stride) {
        throw std::invalid_argument(std::string("conv_transpose2d: out_pad on axis ") + axis +
                                    " must be < stride");
    }
    const int out = (in - 1) * stride - 2 * pad + dil * (k - 1) + 1 + out_pad;
    if (out < 1) {
        throw std::invalid_argument(std::string("conv_transpose2d: non-positive output extent on axis ") +
                                    axis);
    }
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                   const ConvSpec& spec) {
    spec.validate();
    require_rank(x, 4, "conv_transpose2d: input");
    require_rank(w, 4, "conv_transpose2d: weight");
    require_shape(b, {w.dim(1)}, "conv_transpose2d: bias");
    if (x.dim(1) != w.dim(0)) {
        throw std::invalid_argument("conv_transpose2d: input channel dim " +
                                    std::to_string(x.dim(1)) + " != weight leading dim " +
                                    std::to_string(w.dim(0)));
    }
    const int bsz = x.dim(0), c1 = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int c2 = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int oh = detail::deconv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h,
                                          spec.out_pad_h, "H");
    const int ow = detail::deconv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w,
                                          spec.out_pad_w, "W");

    Tensor<T> y({bsz, c2, oh, ow});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t out_plane = static_cast<size_t>(oh) * ow;

    if constexpr (std::is_same_v<T, float>) {
        const int kdim = c2 * kh * kw;
        std::vector<float> col(static_cast<size_t>(kdim) * in_plane);
        for (int n = 0; n < bsz; ++n) {
            const float* xn = x.data.data() + static_cast<size_t>(n) * c1 * in_plane;
            float* yn = y.data.data() + static_cast<size_t>(n) * c2 * out_plane;
            // col = W^T * x, scatter with x's grid acting as the conv output grid
            detail::sgemm_rm(true, false, kdim, static_cast<int>(in_plane), c1, 1.0f, w.data.data(),
                             kdim, xn, static_cast<int>(in_plane), 0.0f, col.data(),
                             static_cast<int>(in_plane));
            detail::col2im(col.data(), c2, oh, ow, kh, kw, spec, h, wd, yn);
            for (int co = 0; co < c2; ++co) {
                const float bias = b.data[static_cast<size_t>(co)];
                float* row = yn + static_cast<size_t>(co) * out_plane;
                for (size_t i = 0; i < out_plane; ++i) row[i] += bias;
            }
        }
        return y;
    }

    for (int n = 0; n < bsz; ++n) {
        const T* xn = x.data.data() + static_cast<size_t>(n) * c1 * in_plane;
        T* yn = y.data.data() + static_cast<size_t>(n) * c2 * out_plane;
        for (int co = 0; co < c2; ++co) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b.data[static_cast<size_t>(co)];
                    for (int ci = 0; ci < c1; ++ci) {
                        const T* xc = xn + ci * in_plane;
                        const T* wk = w.data.data() + (static_cast<size_t>(ci) * c2 + co) * kh * kw;
                        for (int u = 0; u < kh; ++u) {
                            const int num_y = oy + spec.pad_h - u * spec.dil_h;
                            if (num_y < 0 || num_y % spec.stride_h) continue;
                            const int iy = num_y / spec.stride_h;
                            if (iy >= h) continue;
                            for (int v = 0; v < kw; ++v) {
                                const int num_x = ox + spec.pad_w - v * spec.dil_w;
                                if (num_x < 0 || num_x % spec.stride_w) continue;
                                const int ix = num_x / spec.stride_w;
                                if (ix >= wd) continue;
                                acc += xc[static_cast<size_t>(iy) * wd + ix] *
                                       wk[static_cast<size_t>(u) * kw + v];
                            }
                        }
                    }
                    yn[co * out_plane + static_cast<size_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

template <typename T>
GradPair<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                                      const Tensor<T>& grad_out) {
    spec.validate();
    require_rank(x, 4, "conv_transpose2d backward: input");
    require_rank(w, 4, "conv_transpose2d backward: weight");
    const int bsz = x.dim(0), c1 = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int c2 = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int oh = detail::deconv_out_dim(h, kh, spec.stride_h, spec.pad_h, spec.dil_h,
                                          spec.out_pad_h, "H");
    const int ow = detail::deconv_out_dim(wd, kw, spec.stride_w, spec.pad_w, spec.dil_w,
                                          spec.out_pad_w, "W");
    require_shape(grad_out, {bsz, c2, oh, ow}, "conv_transpose2d backward: grad_out");

    GradPair<T> g;
    g.input_grad = Tensor<T>({bsz, c1, h, wd});
    Tensor<T> dw({c1, c2, kh, kw});
    Tensor<T> db({c2});
    const size_t in_plane = static_cast<size_t>(h) * wd;
    const size_t out_plane = static_cast<size_t>(oh) * ow;

    for (int n = 0; n < bsz; ++n) {
        const T* gy = grad_out.data.data() + static_cast<size_t>(n) * c2 * out_plane;
        for (int co = 0; co < c2; ++co) {
            T acc = T(0);
            const T* row = gy + static_cast<size_t>(co) * out_plane;
            for (size_t i = 0; i < out_plane; ++i) acc += row[i];
            db.data[static_cast<size_t>(co)] += acc;
        }
    }

    if constexpr (std::is_same_v<T, float>) {
        const int kdim = c2 * kh * kw;
        std::vector<float> col(static_cast<size_t>(kdim) * in_plane);
        for (int n = 0; n < bsz; ++n) {
            const float* xn = x.data.data() + static_cast<size_t>(n) * c1 * in_plane;
            const float* gy = grad_out.data.data() + static_cast<size_t>(n) * c2 * out_plane;
            float* gx = g.input_grad.data.data() + static_cast<size_t>(n) * c1 * in_plane;
            detail::im2col(gy, c2, oh, ow, kh, kw, spec, h, wd, col.data());
            // dx = W * im2col(gy)
            detail::sgemm_rm(false, false, c1, static_cast<int>(in_plane), kdim, 1.0f,
                             w.data.data(), kdim, col.data(), static_cast<int>(in_plane), 0.0f, gx,
                             static_cast<int>(in_plane));
            // dW += x * im2col(gy)^T
            detail::sgemm_rm(false, true, c1, kdim, static_cast<int>(in_plane), 1.0f, xn,
                             static_cast<int>(in_plane), col.data(), static_cast<int>(in_plane),
                             1.0f, dw.data.data(), kdim);
        }
    } else {
        for (int n = 0; n < bsz; ++n) {
            const T* xn = x.data.data() + static_cast<size_t>(n) * c1 * in_plane;
            const T* gy = grad_out.data.data() + static_cast<size_t>(n) * c2 * out_plane;
            T* gx = g.input_grad.data.data() + static_cast<size_t>(n) * c1 * in_plane;
            for (int ci = 0; ci < c1; ++ci) {
                for (int iy = 0; iy < h; ++iy) {
                    for (int ix = 0; ix < wd; ++ix) {
                        const T xv = xn[ci * in_plane + static_cast<size_t>(iy) * wd + ix];
                        T acc = T(0);
                        for (int co = 0; co < c2; ++co) {
                            const T* grow = gy + static_cast<size_t>(co) * out_plane;
                            for (int u = 0; u < kh; ++u) {
                                const int oy = iy * spec.stride_h - spec.pad_h + u * spec.dil_h;
                                if (oy < 0 || oy >= oh) continue;
                                for (int v = 0; v < kw; ++v) {
                                    const int ox = ix * spec.stride_w - spec.pad_w + v * spec.dil_w;
                                    if (ox < 0 || ox >= ow) continue;
                                    const T gv = grow[static_cast<size_t>(oy) * ow + ox];
                                    acc += gv * w.at(ci, co, u, v);
                                    dw.at(ci, co, u, v) += gv * xv;
                                }
                            }
                        }
                        gx[ci * in_plane + static_cast<size_t>(iy) * wd + ix] = acc;
                    }
                }
            }
        }
    }

    g.param_grads["weight"] = std::move(dw);
    g.param_grads["bias"] = std::move(db);
    return g;
}

}  // namespace a3d2

#pragma once

// Naive nested-loop reference implementations, kept independent of the engine
// kernels. Accumulation runs in (channel, ky, kx) order with a plain
// bounds/divisibility test per tap, which is the order the engine documents,
// so float64 comparisons can demand exact equality.

#include <limits>

#include "a3d2/conv.hpp"

namespace ref {

using a3d2::ConvSpec;
using a3d2::Tensor;

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& s) {
    const int bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * s.pad_h - s.dil_h * (kh - 1) - 1) / s.stride_h + 1;
    const int ow = (wd + 2 * s.pad_w - s.dil_w * (kw - 1) - 1) / s.stride_w + 1;
    Tensor<T> y({bsz, cout, oh, ow});
    for (int n = 0; n < bsz; ++n)
        for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b.at(co);
                    for (int ci = 0; ci < cin; ++ci)
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v) {
                                const int iy = oy * s.stride_h - s.pad_h + u * s.dil_h;
                                const int ix = ox * s.stride_w - s.pad_w + v * s.dil_w;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.at(n, ci, iy, ix) * w.at(co, ci, u, v);
                            }
                    y.at(n, co, oy, ox) = acc;
                }
    return y;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& s) {
    const int bsz = x.dim(0), cin = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    const int cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int od = (d + 2 * s.pad_d - s.dil_d * (kd - 1) - 1) / s.stride_d + 1;
    const int oh = (h + 2 * s.pad_h - s.dil_h * (kh - 1) - 1) / s.stride_h + 1;
    const int ow = (wd + 2 * s.pad_w - s.dil_w * (kw - 1) - 1) / s.stride_w + 1;
    Tensor<T> y({bsz, cout, od, oh, ow});
    for (int n = 0; n < bsz; ++n)
        for (int co = 0; co < cout; ++co)
            for (int oz = 0; oz < od; ++oz)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = b.at(co);
                        for (int ci = 0; ci < cin; ++ci)
                            for (int q = 0; q < kd; ++q)
                                for (int u = 0; u < kh; ++u)
                                    for (int v = 0; v < kw; ++v) {
                                        const int iz = oz * s.stride_d - s.pad_d + q * s.dil_d;
                                        const int iy = oy * s.stride_h - s.pad_h + u * s.dil_h;
                                        const int ix = ox * s.stride_w - s.pad_w + v * s.dil_w;
                                        if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 ||
                                            ix >= wd)
                                            continue;
                                        acc += x.at(n, ci, iz, iy, ix) * w.at(co, ci, q, u, v);
                                    }
                        y.at(n, co, oz, oy, ox) = acc;
                    }
    return y;
}

// Adjoint of conv2d, evaluated by scanning for the input pixel each tap maps
// from (no stride division shortcuts).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           const ConvSpec& s) {
    const int bsz = x.dim(0), c1 = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int c2 = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h - 1) * s.stride_h - 2 * s.pad_h + s.dil_h * (kh - 1) + 1 + s.out_pad_h;
    const int ow = (wd - 1) * s.stride_w - 2 * s.pad_w + s.dil_w * (kw - 1) + 1 + s.out_pad_w;
    Tensor<T> y({bsz, c2, oh, ow});
    for (int n = 0; n < bsz; ++n)
        for (int co = 0; co < c2; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b.at(co);
                    for (int ci = 0; ci < c1; ++ci)
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v)
                                for (int iy = 0; iy < h; ++iy)
                                    for (int ix = 0; ix < wd; ++ix) {
                                        if (iy * s.stride_h - s.pad_h + u * s.dil_h != oy) continue;
                                        if (ix * s.stride_w - s.pad_w + v * s.dil_w != ox) continue;
                                        acc += x.at(n, ci, iy, ix) * w.at(ci, co, u, v);
                                    }
                    y.at(n, co, oy, ox) = acc;
                }
    return y;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int kh, int kw, int sh, int sw, int ph, int pw) {
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * ph - kh) / sh + 1;
    const int ow = (w + 2 * pw - kw) / sw + 1;
    Tensor<T> y({bsz, c, oh, ow});
    for (int n = 0; n < bsz; ++n)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (int u = 0; u < kh; ++u)
                        for (int v = 0; v < kw; ++v) {
                            const int iy = oy * sh - ph + u;
                            const int ix = ox * sw - pw + v;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            best = std::max(best, x.at(n, ci, iy, ix));
                        }
                    y.at(n, ci, oy, ox) = best;
                }
    return y;
}

}  // namespace ref

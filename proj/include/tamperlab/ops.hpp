#pragma once

// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when a tape is active and an input requires grad, records a
// backward closure. Reductions run sequentially in row-major order; the only
// parallelism is over disjoint output rows (see gemm.hpp), so forward passes
// are bit-deterministic for a given build.
//
// Convolution uses the cross-correlation convention (no kernel flip).

#include <algorithm>
#include <cmath>
#include <vector>

#include "tamperlab/gemm.hpp"
#include "tamperlab/tensor.hpp"

namespace tlab {

// ---------------------------------------------------------------------------
// broadcasting helpers (trailing-dimension semantics)

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ai = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t bi = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ai != bi && ai != 1 && bi != 1)
            throw TensorError(std::string(op) + ": shapes " + shape_str(a) +
                              " and " + shape_str(b) + " are not broadcastable");
        out[i] = std::max(ai, bi);
    }
    return out;
}

// Row-major strides padded to rank r, zeroed on broadcast dimensions.
inline std::vector<std::size_t> bcast_strides(const Shape& s, const Shape& out) {
    const std::size_t r = out.size();
    std::vector<std::size_t> st(r, 0);
    std::size_t stride = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t d = s.size() - 1 - i;
        const std::size_t o = r - 1 - i;
        st[o] = (s[d] == 1 && out[o] != 1) ? 0 : stride;
        stride *= s[d];
    }
    return st;
}

// f(a_off, b_off, out_index) over every element of `out`, row-major.
template <typename F>
void bcast_iterate(const Shape& out, const std::vector<std::size_t>& sa,
                   const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t r = out.size();
    const std::size_t n = numel(out);
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(oa, ob, i);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise binary ops

enum class EwKind { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> elementwise(EwKind kind, const Tensor<T>& a, const Tensor<T>& b) {
    static const char* names[] = {"add", "sub", "mul", "div"};
    const char* op = names[static_cast<int>(kind)];
    const Shape os = broadcast_shape(a.shape(), b.shape(), op);
    Tensor<T> out = Tensor<T>::zeros(os);

    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    auto apply = [kind](T x, T y) -> T {
        switch (kind) {
            case EwKind::Add: return x + y;
            case EwKind::Sub: return x - y;
            case EwKind::Mul: return x * y;
            case EwKind::Div: return x / y;
        }
        return T(0);
    };

    if (a.shape() == b.shape()) {
        const std::size_t n = out.size();
        for (std::size_t i = 0; i < n; ++i) po[i] = apply(pa[i], pb[i]);
    } else {
        const auto sa = bcast_strides(a.shape(), os);
        const auto sb = bcast_strides(b.shape(), os);
        bcast_iterate(os, sa, sb, [&](std::size_t oa, std::size_t ob, std::size_t i) {
            po[i] = apply(pa[oa], pb[ob]);
        });
    }

    auto* tape = Tape<T>::active();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record(out, [kind, ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const Shape& os2 = oc.shape();
            const auto sa = bcast_strides(ac.shape(), os2);
            const auto sb = bcast_strides(bc.shape(), os2);
            const T* g = oc.grad().data();
            const T* va = ac.data();
            const T* vb = bc.data();
            T* ga = ac.requires_grad() ? ac.grad().data() : nullptr;
            T* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
            bcast_iterate(os2, sa, sb, [&](std::size_t oa, std::size_t ob, std::size_t i) {
                const T gi = g[i];
                switch (kind) {
                    case EwKind::Add:
                        if (ga) ga[oa] += gi;
                        if (gb) gb[ob] += gi;
                        break;
                    case EwKind::Sub:
                        if (ga) ga[oa] += gi;
                        if (gb) gb[ob] -= gi;
                        break;
                    case EwKind::Mul:
                        if (ga) ga[oa] += gi * vb[ob];
                        if (gb) gb[ob] += gi * va[oa];
                        break;
                    case EwKind::Div:
                        if (ga) ga[oa] += gi / vb[ob];
                        if (gb) gb[ob] -= gi * va[oa] / (vb[ob] * vb[ob]);
                        break;
                }
            });
        });
    }
    return out;
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwKind::Add, a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwKind::Sub, a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwKind::Mul, a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(EwKind::Div, a, b); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, double s) { return elementwise(EwKind::Add, a, Tensor<T>::scalar(T(s))); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, double s) { return elementwise(EwKind::Sub, a, Tensor<T>::scalar(T(s))); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, double s) { return elementwise(EwKind::Mul, a, Tensor<T>::scalar(T(s))); }
template <typename T>
Tensor<T> operator*(double s, const Tensor<T>& a) { return a * s; }

// ---------------------------------------------------------------------------
// matmul (batched, leading dims broadcast)

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw TensorError("matmul: operands must have rank >= 2, got " +
                          shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[a.rank() - 2];
    const std::size_t k1 = a.shape()[a.rank() - 1];
    const std::size_t k2 = b.shape()[b.rank() - 2];
    const std::size_t n = b.shape()[b.rank() - 1];
    if (k1 != k2)
        throw TensorError("matmul: inner dimensions mismatch: " + shape_str(a.shape()) +
                          " x " + shape_str(b.shape()));
    const Shape ba(a.shape().begin(), a.shape().end() - 2);
    const Shape bb(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shape(ba, bb, "matmul");
    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    Tensor<T> out = Tensor<T>::zeros(os);

    const auto sa = bcast_strides(ba, batch);
    const auto sb = bcast_strides(bb, batch);
    const std::size_t nb = numel(batch);
    const std::size_t a_sl = m * k1, b_sl = k1 * n, o_sl = m * n;

    // batch odometer; gemm per slice
    {
        std::vector<std::size_t> idx(batch.size(), 0);
        std::size_t oa = 0, ob = 0;
        for (std::size_t i = 0; i < nb; ++i) {
            gemm_nn(a.data() + oa * a_sl, b.data() + ob * b_sl, out.data() + i * o_sl,
                    m, k1, n, false);
            for (std::size_t d = batch.size(); d-- > 0;) {
                ++idx[d];
                oa += sa[d];
                ob += sb[d];
                if (idx[d] < batch[d]) break;
                idx[d] = 0;
                oa -= sa[d] * batch[d];
                ob -= sb[d] * batch[d];
            }
        }
    }

    auto* tape = Tape<T>::active();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record(out, [ac, bc, oc, batch, sa, sb, m, k1, n, nb, a_sl, b_sl, o_sl]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* ga = ac.requires_grad() ? ac.grad().data() : nullptr;
            T* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
            std::vector<T> bt(ga ? k1 * n : 0);
            std::vector<T> at(gb ? m * k1 : 0);
            std::vector<std::size_t> idx(batch.size(), 0);
            std::size_t oa = 0, ob = 0;
            for (std::size_t i = 0; i < nb; ++i) {
                const T* gslice = g + i * o_sl;
                if (ga) { // dA += dC * B^T
                    transpose2d(bc.data() + ob * b_sl, bt.data(), k1, n);
                    gemm_nn(gslice, bt.data(), ga + oa * a_sl, m, n, k1, true);
                }
                if (gb) { // dB += A^T * dC
                    transpose2d(ac.data() + oa * a_sl, at.data(), m, k1);
                    gemm_nn(at.data(), gslice, gb + ob * b_sl, k1, m, n, true);
                }
                for (std::size_t d = batch.size(); d-- > 0;) {
                    ++idx[d];
                    oa += sa[d];
                    ob += sb[d];
                    if (idx[d] < batch[d]) break;
                    idx[d] = 0;
                    oa -= sa[d] * batch[d];
                    ob -= sb[d] * batch[d];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d: x [c_in,h,w], k [c_out,c_in,kh,kw] -> [c_out,h',w']

enum class PadMode { Zero, Replicate };

namespace detail {

inline std::ptrdiff_t clamp_coord(std::ptrdiff_t v, std::ptrdiff_t n) {
    return v < 0 ? 0 : (v >= n ? n - 1 : v);
}

template <typename T>
void im2col(const T* x, std::size_t ci, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            PadMode mode, std::size_t oh, std::size_t ow, T* cols) {
    const std::size_t q = ci * kh * kw;
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    parallel_for(oh, 4, [=](std::size_t y0, std::size_t y1) {
        for (std::size_t oy = y0; oy < y1; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T* row = cols + (oy * ow + ox) * q;
                std::size_t qq = 0;
                for (std::size_t c = 0; c < ci; ++c) {
                    const T* plane = x + c * h * w;
                    for (std::size_t r = 0; r < kh; ++r) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride + r) -
                            static_cast<std::ptrdiff_t>(pad);
                        for (std::size_t s = 0; s < kw; ++s, ++qq) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + s) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                row[qq] = plane[iy * W + ix];
                            else if (mode == PadMode::Replicate)
                                row[qq] = plane[clamp_coord(iy, H) * W + clamp_coord(ix, W)];
                            else
                                row[qq] = T(0);
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
void col2im_add(const T* cols, std::size_t ci, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                PadMode mode, std::size_t oh, std::size_t ow, T* gx) {
    const std::size_t q = ci * kh * kw;
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* row = cols + (oy * ow + ox) * q;
            std::size_t qq = 0;
            for (std::size_t c = 0; c < ci; ++c) {
                T* plane = gx + c * h * w;
                for (std::size_t r = 0; r < kh; ++r) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + r) -
                                              static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t s = 0; s < kw; ++s, ++qq) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + s) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                            plane[iy * W + ix] += row[qq];
                        else if (mode == PadMode::Replicate)
                            plane[clamp_coord(iy, H) * W + clamp_coord(ix, W)] += row[qq];
                    }
                }
            }
        }
    }
}

// Materialized padded input [ci, h+2p, w+2p]; shared by the direct-conv
// forward and both backward passes.
template <typename T>
std::vector<T> pad_input(const T* x, std::size_t ci, std::size_t h, std::size_t w,
                         std::size_t pad, PadMode mode) {
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    std::vector<T> out(ci * hp * wp, T(0));
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t c = 0; c < ci; ++c) {
        const T* src = x + c * h * w;
        T* dst = out.data() + c * hp * wp;
        for (std::size_t y = 0; y < hp; ++y)
            for (std::size_t xx = 0; xx < wp; ++xx) {
                const std::ptrdiff_t iy = std::ptrdiff_t(y) - std::ptrdiff_t(pad);
                const std::ptrdiff_t ix = std::ptrdiff_t(xx) - std::ptrdiff_t(pad);
                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                    dst[y * wp + xx] = src[iy * W + ix];
                else if (mode == PadMode::Replicate)
                    dst[y * wp + xx] = src[clamp_coord(iy, H) * W + clamp_coord(ix, W)];
            }
    }
    return out;
}

} // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride = 1,
                 std::size_t pad = 0, PadMode pad_mode = PadMode::Zero) {
    if (x.rank() != 3 || k.rank() != 4)
        throw TensorError("conv2d: expected image (c,h,w) and kernel (co,ci,kh,kw), got " +
                          shape_str(x.shape()) + " and " + shape_str(k.shape()));
    const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t co = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
    if (k.shape()[1] != ci)
        throw TensorError("conv2d: kernel expects " + std::to_string(k.shape()[1]) +
                          " input channels, image has " + std::to_string(ci));
    if (kh % 2 == 0 || kw % 2 == 0)
        throw TensorError("conv2d: kernel extents must be odd, got " + shape_str(k.shape()));
    if (stride == 0) throw TensorError("conv2d: stride must be positive");
    if (h + 2 * pad < kh || w + 2 * pad < kw)
        throw TensorError("conv2d: kernel larger than padded image");
    if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0)
        throw TensorError("conv2d: non-integral output extent for image " +
                          shape_str(x.shape()) + ", kernel " + shape_str(k.shape()) +
                          ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
    const std::size_t np = oh * ow, q = ci * kh * kw;

    // stride-1 kernels run directly off a padded copy of the input; larger or
    // strided shapes go through im2col + gemm
    if (stride == 1 && kh >= 3 && kh * kw <= 49 && w + 2 * pad <= 320) {
        const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
        auto xpad = std::make_shared<std::vector<T>>(
            detail::pad_input(x.data(), ci, h, w, pad, pad_mode));
        Tensor<T> out = Tensor<T>::zeros({co, oh, ow});
        const T* kd = k.data();
        const T* xp = xpad->data();
        T* od = out.data();
        parallel_for(co, 1, [=](std::size_t c0, std::size_t c1) {
            T acc[320];
            for (std::size_t o = c0; o < c1; ++o) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t j = 0; j < ow; ++j) acc[j] = T(0);
                    for (std::size_t c = 0; c < ci; ++c) {
                        const T* kslice = kd + (o * ci + c) * kh * kw;
                        for (std::size_t r = 0; r < kh; ++r) {
                            const T* __restrict__ prow = xp + c * hp * wp + (y + r) * wp;
                            for (std::size_t s = 0; s < kw; ++s) {
                                const T av = kslice[r * kw + s];
                                for (std::size_t j = 0; j < ow; ++j)
                                    acc[j] += av * prow[j + s];
                            }
                        }
                    }
                    T* orow = od + o * oh * ow + y * ow;
                    for (std::size_t j = 0; j < ow; ++j) orow[j] = acc[j];
                }
            }
        });

        auto* tape = Tape<T>::active();
        if (tape && (x.requires_grad() || k.requires_grad())) {
            out.set_requires_grad(true);
            Tensor<T> xc = x, kc = k, oc = out;
            tape->record(out, [xc, kc, oc, xpad, ci, co, h, w, kh, kw, pad, pad_mode, oh,
                               ow, hp, wp]() mutable {
                if (!oc.has_grad()) return;
                const T* g = oc.grad().data();
                const T* kd2 = kc.data();
                const T* xp2 = xpad->data();
                if (kc.requires_grad()) {
                    // per-tap row accumulator keeps the inner loop a vector
                    // fma; the final per-tap reduction runs in fixed column
                    // order, so results stay bit-deterministic
                    T* gk = kc.grad().data();
                    parallel_for(co, 1, [=](std::size_t c0, std::size_t c1) {
                        T racc[320];
                        for (std::size_t o = c0; o < c1; ++o)
                            for (std::size_t c = 0; c < ci; ++c) {
                                T* gkk = gk + (o * ci + c) * kh * kw;
                                const T* prows = xp2 + c * hp * wp;
                                for (std::size_t r = 0; r < kh; ++r)
                                    for (std::size_t s = 0; s < kw; ++s) {
                                        for (std::size_t j = 0; j < ow; ++j) racc[j] = T(0);
                                        for (std::size_t y = 0; y < oh; ++y) {
                                            const T* __restrict__ grow = g + o * oh * ow + y * ow;
                                            const T* __restrict__ pr = prows + (y + r) * wp + s;
                                            for (std::size_t j = 0; j < ow; ++j)
                                                racc[j] += grow[j] * pr[j];
                                        }
                                        T acc = T(0);
                                        for (std::size_t j = 0; j < ow; ++j) acc += racc[j];
                                        gkk[r * kw + s] += acc;
                                    }
                            }
                    });
                }
                if (xc.requires_grad()) {
                    std::vector<T> dxpad(ci * hp * wp, T(0));
                    T* dx = dxpad.data();
                    T* gx = xc.grad().data();
                    parallel_for(ci, 1, [=](std::size_t ci0, std::size_t ci1) {
                        for (std::size_t c = ci0; c < ci1; ++c)
                            for (std::size_t o = 0; o < co; ++o) {
                                const T* kslice = kd2 + (o * ci + c) * kh * kw;
                                for (std::size_t y = 0; y < oh; ++y) {
                                    const T* grow = g + o * oh * ow + y * ow;
                                    for (std::size_t r = 0; r < kh; ++r) {
                                        T* __restrict__ drow = dx + c * hp * wp + (y + r) * wp;
                                        for (std::size_t s = 0; s < kw; ++s) {
                                            const T av = kslice[r * kw + s];
                                            for (std::size_t j = 0; j < ow; ++j)
                                                drow[j + s] += av * grow[j];
                                        }
                                    }
                                }
                            }
                    });
                    // fold padded gradients back onto the image
                    const auto H = std::ptrdiff_t(h), W = std::ptrdiff_t(w);
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t y = 0; y < hp; ++y)
                            for (std::size_t j = 0; j < wp; ++j) {
                                const std::ptrdiff_t iy = std::ptrdiff_t(y) - std::ptrdiff_t(pad);
                                const std::ptrdiff_t ix = std::ptrdiff_t(j) - std::ptrdiff_t(pad);
                                const T v = dx[c * hp * wp + y * wp + j];
                                if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    gx[c * h * w + iy * W + ix] += v;
                                else if (pad_mode == PadMode::Replicate)
                                    gx[c * h * w + detail::clamp_coord(iy, H) * W +
                                       detail::clamp_coord(ix, W)] += v;
                            }
                }
            });
        }
        return out;
    }

    auto cols = std::make_shared<std::vector<T>>(np * q);
    detail::im2col(x.data(), ci, h, w, kh, kw, stride, pad, pad_mode, oh, ow, cols->data());

    // out[p,co'] = cols[p,:] . k[co',:]  then transpose to [co,oh,ow]
    std::vector<T> kt(q * co);
    transpose2d(k.data(), kt.data(), co, q);
    std::vector<T> oput(np * co);
    gemm_nn(cols->data(), kt.data(), oput.data(), np, q, co, false);
    Tensor<T> out = Tensor<T>::zeros({co, oh, ow});
    transpose2d(oput.data(), out.data(), np, co);

    auto* tape = Tape<T>::active();
    if (tape && (x.requires_grad() || k.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, kc = k, oc = out;
        tape->record(out, [xc, kc, oc, cols, ci, h, w, kh, kw, stride, pad, pad_mode, oh,
                           ow, np, q, co]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data(); // [co, np] contiguous
            if (kc.requires_grad()) {      // dK[co,q] += dOut[co,:np] * cols[:np,q]
                gemm_nn(g, cols->data(), kc.grad().data(), co, np, q, true);
            }
            if (xc.requires_grad()) { // dcols = dOut^T * Kmat, scatter back
                std::vector<T> gt(np * co);
                transpose2d(g, gt.data(), co, np);
                std::vector<T> dcols(np * q);
                gemm_nn(gt.data(), kc.data(), dcols.data(), np, co, q, false);
                detail::col2im_add(dcols.data(), ci, h, w, kh, kw, stride, pad, pad_mode,
                                   oh, ow, xc.grad().data());
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// transposed convolution: x [c_in,h,w], k [c_in,c_out,kh,kw], output
// [c_out, (h-1)*stride+kh, (w-1)*stride+kw]

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride) {
    if (x.rank() != 3 || k.rank() != 4)
        throw TensorError("conv_transpose2d: expected (c,h,w) and (ci,co,kh,kw), got " +
                          shape_str(x.shape()) + " and " + shape_str(k.shape()));
    const std::size_t ci = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t co = k.shape()[1], kh = k.shape()[2], kw = k.shape()[3];
    if (k.shape()[0] != ci)
        throw TensorError("conv_transpose2d: kernel expects " + std::to_string(k.shape()[0]) +
                          " input channels, image has " + std::to_string(ci));
    if (stride == 0) throw TensorError("conv_transpose2d: stride must be positive");
    const std::size_t oh = (h - 1) * stride + kh;
    const std::size_t ow = (w - 1) * stride + kw;
    const std::size_t kk2 = kh * kw;
    if (kk2 > 64) throw TensorError("conv_transpose2d: kernel too large");
    Tensor<T> out = Tensor<T>::zeros({co, oh, ow});
    T* po = out.data();
    const T* px = x.data();
    const T* pk = k.data();
    for (std::size_t o = 0; o < co; ++o) {
        T* oplane = po + o * oh * ow;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xp = 0; xp < w; ++xp) {
                T acc[64] = {};
                for (std::size_t c = 0; c < ci; ++c) {
                    const T v = px[c * h * w + y * w + xp];
                    const T* kk = pk + (c * co + o) * kk2;
                    for (std::size_t t = 0; t < kk2; ++t) acc[t] += v * kk[t];
                }
                T* base = oplane + (y * stride) * ow + xp * stride;
                for (std::size_t r = 0; r < kh; ++r)
                    for (std::size_t s = 0; s < kw; ++s) base[r * ow + s] += acc[r * kw + s];
            }
    }

    auto* tape = Tape<T>::active();
    if (tape && (x.requires_grad() || k.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, kc = k, oc = out;
        tape->record(out, [xc, kc, oc, ci, co, h, w, kh, kw, stride, oh, ow]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            const T* px2 = xc.data();
            const T* pk2 = kc.data();
            T* gx = xc.requires_grad() ? xc.grad().data() : nullptr;
            T* gk = kc.requires_grad() ? kc.grad().data() : nullptr;
            const std::size_t kk2 = kh * kw;
            for (std::size_t c = 0; c < ci; ++c)
                for (std::size_t o = 0; o < co; ++o) {
                    const T* kk = pk2 + (c * co + o) * kk2;
                    const T* gplane = g + o * oh * ow;
                    T kacc[64] = {};
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xp = 0; xp < w; ++xp) {
                            const T xv = px2[c * h * w + y * w + xp];
                            const T* base = gplane + (y * stride) * ow + xp * stride;
                            T acc = T(0);
                            for (std::size_t r = 0; r < kh; ++r)
                                for (std::size_t s = 0; s < kw; ++s) {
                                    const T gv = base[r * ow + s];
                                    acc += gv * kk[r * kw + s];
                                    kacc[r * kw + s] += gv * xv;
                                }
                            if (gx) gx[c * h * w + y * w + xp] += acc;
                        }
                    if (gk) {
                        T* gkk = gk + (c * co + o) * kk2;
                        for (std::size_t t = 0; t < kk2; ++t) gkk[t] += kacc[t];
                    }
                }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_transposed_conv(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride) {
    return conv_transpose2d(x, k, stride);
}

// ---------------------------------------------------------------------------
// softmax over an axis (max-subtracted)

namespace detail {
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer,
                       std::size_t& n, std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    n = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
} // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank())
        throw TensorError("softmax: axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(x.shape()));
    std::size_t outer, n, inner;
    detail::axis_split(x.shape(), axis, outer, n, inner);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            T mx = px[base];
            for (std::size_t j = 1; j < n; ++j)
                mx = std::max(mx, px[base + j * inner]);
            T sum = T(0);
            for (std::size_t j = 0; j < n; ++j) {
                const T e = std::exp(px[base + j * inner] - mx);
                po[base + j * inner] = e;
                sum += e;
            }
            const T invs = T(1) / sum;
            for (std::size_t j = 0; j < n; ++j) po[base + j * inner] *= invs;
        }

    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, outer, n, inner]() mutable {
            if (!oc.has_grad()) return;
            const T* y = oc.data();
            const T* gy = oc.grad().data();
            T* gx = xc.grad().data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    T dot = T(0);
                    for (std::size_t j = 0; j < n; ++j)
                        dot += gy[base + j * inner] * y[base + j * inner];
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t p = base + j * inner;
                        gx[p] += y[p] * (gy[p] - dot);
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layer norm over the last axis, eps = 1e-5

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
    if (x.rank() < 1) throw TensorError("layer_norm: scalar input");
    const std::size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw TensorError("layer_norm: gain/bias must have " + std::to_string(d) +
                          " features, got " + shape_str(gain.shape()) + " and " +
                          shape_str(bias.shape()));
    const T eps = T(1e-5);
    const std::size_t rows = x.size() / d;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto rinv = std::make_shared<std::vector<T>>(rows);
    const T* px = x.data();
    const T* pg = gain.data();
    const T* pb = bias.data();
    T* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = px + r * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= T(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        (*rinv)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const T xh = (row[j] - mean) * inv;
            (*xhat)[r * d + j] = xh;
            po[r * d + j] = xh * pg[j] + pb[j];
        }
    }

    auto* tape = Tape<T>::active();
    if (tape && (x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, gc = gain, bc = bias, oc = out;
        tape->record(out, [xc, gc, bc, oc, xhat, rinv, rows, d]() mutable {
            if (!oc.has_grad()) return;
            const T* gy = oc.grad().data();
            const T* pg2 = gc.data();
            T* gx = xc.requires_grad() ? xc.grad().data() : nullptr;
            T* gg = gc.requires_grad() ? gc.grad().data() : nullptr;
            T* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* gyr = gy + r * d;
                const T* xh = xhat->data() + r * d;
                if (gg || gb)
                    for (std::size_t j = 0; j < d; ++j) {
                        if (gg) gg[j] += gyr[j] * xh[j];
                        if (gb) gb[j] += gyr[j];
                    }
                if (gx) {
                    T m1 = T(0), m2 = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxh = gyr[j] * pg2[j];
                        m1 += dxh;
                        m2 += dxh * xh[j];
                    }
                    m1 /= T(d);
                    m2 /= T(d);
                    const T inv = (*rinv)[r];
                    T* gxr = gx + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxh = gyr[j] * pg2[j];
                        gxr[j] += inv * (dxh - m1 - xh[j] * m2);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations

enum class Act { Relu, Gelu, Sigmoid };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* px = x.data();
    T* po = out.data();
    const std::size_t n = x.size();
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    switch (kind) {
        case Act::Relu:
            for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
            break;
        case Act::Gelu:
            for (std::size_t i = 0; i < n; ++i)
                po[i] = T(0.5) * px[i] * (T(1) + std::erf(px[i] * inv_sqrt2));
            break;
        case Act::Sigmoid:
            for (std::size_t i = 0; i < n; ++i)
                po[i] = T(1) / (T(1) + std::exp(-px[i]));
            break;
    }

    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, kind, n, inv_sqrt2, inv_sqrt2pi]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            const T* px2 = xc.data();
            const T* y = oc.data();
            T* gx = xc.grad().data();
            switch (kind) {
                case Act::Relu:
                    for (std::size_t i = 0; i < n; ++i)
                        if (px2[i] > T(0)) gx[i] += g[i];
                    break;
                case Act::Gelu:
                    for (std::size_t i = 0; i < n; ++i) {
                        const T cdf = T(0.5) * (T(1) + std::erf(px2[i] * inv_sqrt2));
                        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * px2[i] * px2[i]);
                        gx[i] += g[i] * (cdf + px2[i] * pdf);
                    }
                    break;
                case Act::Sigmoid:
                    for (std::size_t i = 0; i < n; ++i)
                        gx[i] += g[i] * y[i] * (T(1) - y[i]);
                    break;
            }
        });
    }
    return out;
}

template <typename T> Tensor<T> relu(const Tensor<T>& x) { return activation(x, Act::Relu); }
template <typename T> Tensor<T> gelu(const Tensor<T>& x) { return activation(x, Act::Gelu); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) { return activation(x, Act::Sigmoid); }

// ---------------------------------------------------------------------------
// reductions

enum class Reduce { Sum, Mean };

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& x, Reduce kind) {
    T acc = T(0);
    const T* px = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
    const T scale = kind == Reduce::Mean ? T(1) / T(x.size()) : T(1);
    Tensor<T> out = Tensor<T>::scalar(acc * scale);
    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, scale]() mutable {
            if (!oc.has_grad()) return;
            const T g = oc.grad()[0] * scale;
            T* gx = xc.grad().data();
            for (std::size_t i = 0; i < xc.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduce kind, std::size_t axis) {
    if (axis >= x.rank())
        throw TensorError("reduce: axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(x.shape()));
    std::size_t outer, n, inner;
    detail::axis_split(x.shape(), axis, outer, n, inner);
    Shape os;
    for (std::size_t i = 0; i < x.rank(); ++i)
        if (i != axis) os.push_back(x.shape()[i]);
    Tensor<T> out = Tensor<T>::zeros(os);
    const T scale = kind == Reduce::Mean ? T(1) / T(n) : T(1);
    const T* px = x.data();
    T* po = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += px[o * n * inner + j * inner + in];
            po[o * inner + in] = acc * scale;
        }
    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, outer, n, inner, scale]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gx = xc.grad().data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    const T gv = g[o * inner + in] * scale;
                    for (std::size_t j = 0; j < n; ++j)
                        gx[o * n * inner + j * inner + in] += gv;
                }
        });
    }
    return out;
}

template <typename T> Tensor<T> sum(const Tensor<T>& x) { return reduce_all(x, Reduce::Sum); }
template <typename T> Tensor<T> mean(const Tensor<T>& x) { return reduce_all(x, Reduce::Mean); }
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::size_t axis) { return reduce(x, Reduce::Sum, axis); }
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::size_t axis) { return reduce(x, Reduce::Mean, axis); }

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw TensorError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                          shape_str(shape));
    Tensor<T> out = Tensor<T>::from(std::move(shape),
                                    std::vector<T>(x.data(), x.data() + x.size()));
    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gx = xc.grad().data();
            for (std::size_t i = 0; i < xc.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    if (perm.size() != x.rank())
        throw TensorError("transpose: permutation rank mismatch for " + shape_str(x.shape()));
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p])
            throw TensorError("transpose: invalid permutation");
        seen[p] = true;
    }
    const std::size_t r = x.rank();
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) os[i] = x.shape()[perm[i]];
    // strides of x along output axes
    std::vector<std::size_t> xstr(r, 1);
    for (std::size_t i = r - 1; i-- > 0;) xstr[i] = xstr[i + 1] * x.shape()[i + 1];
    std::vector<std::size_t> ostr(r);
    for (std::size_t i = 0; i < r; ++i) ostr[i] = xstr[perm[i]];

    Tensor<T> out = Tensor<T>::zeros(os);
    const T* px = x.data();
    T* po = out.data();
    std::vector<std::size_t> idx(r, 0);
    std::size_t xoff = 0;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = px[xoff];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            xoff += ostr[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            xoff -= ostr[d] * os[d];
        }
    }

    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, os, ostr, r]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gx = xc.grad().data();
            std::vector<std::size_t> idx2(r, 0);
            std::size_t xoff2 = 0;
            const std::size_t n2 = oc.size();
            for (std::size_t i = 0; i < n2; ++i) {
                gx[xoff2] += g[i];
                for (std::size_t d = r; d-- > 0;) {
                    ++idx2[d];
                    xoff2 += ostr[d];
                    if (idx2[d] < os[d]) break;
                    idx2[d] = 0;
                    xoff2 -= ostr[d] * os[d];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw TensorError("concat: no inputs");
    const std::size_t r = parts[0].rank();
    if (axis >= r) throw TensorError("concat: axis out of range");
    Shape os = parts[0].shape();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != r)
            throw TensorError("concat: rank mismatch " + shape_str(p.shape()));
        for (std::size_t i = 0; i < r; ++i)
            if (i != axis && p.shape()[i] != os[i])
                throw TensorError("concat: shape mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(os));
        total += p.shape()[axis];
    }
    os[axis] = total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= os[i];
    for (std::size_t i = axis + 1; i < r; ++i) inner *= os[i];

    Tensor<T> out = Tensor<T>::zeros(os);
    T* po = out.data();
    std::size_t write_base = 0;
    for (const auto& p : parts) {
        const std::size_t an = p.shape()[axis];
        const T* pp = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(pp + o * an * inner, pp + (o + 1) * an * inner,
                      po + o * total * inner + write_base * inner);
        write_base += an;
    }

    auto* tape = Tape<T>::active();
    bool any_rg = false;
    for (const auto& p : parts) any_rg = any_rg || p.requires_grad();
    if (tape && any_rg) {
        out.set_requires_grad(true);
        std::vector<Tensor<T>> pc = parts;
        Tensor<T> oc = out;
        tape->record(out, [pc, oc, outer, inner, total, axis]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            std::size_t base = 0;
            for (auto& p : pc) {
                const std::size_t an = p.shape()[axis];
                if (p.requires_grad()) {
                    T* gp = p.grad().data();
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t j = 0; j < an * inner; ++j)
                            gp[o * an * inner + j] += g[o * total * inner + base * inner + j];
                }
                base += an;
            }
        });
    }
    return out;
}

// Rows [r0, r1) along axis 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t r1) {
    if (x.rank() < 1 || r1 > x.shape()[0] || r0 >= r1)
        throw TensorError("slice_rows: range [" + std::to_string(r0) + "," +
                          std::to_string(r1) + ") invalid for " + shape_str(x.shape()));
    Shape os = x.shape();
    os[0] = r1 - r0;
    const std::size_t inner = x.size() / x.shape()[0];
    Tensor<T> out = Tensor<T>::from(os, std::vector<T>(x.data() + r0 * inner,
                                                       x.data() + r1 * inner));
    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, r0, inner]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gx = xc.grad().data();
            for (std::size_t i = 0; i < oc.size(); ++i) gx[r0 * inner + i] += g[i];
        });
    }
    return out;
}

// Embedding-style row gather; backward scatter-adds (repeated ids fine).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
    if (table.rank() != 2)
        throw TensorError("gather_rows: table must be 2-d, got " + shape_str(table.shape()));
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    for (std::size_t id : ids)
        if (id >= v)
            throw TensorError("gather_rows: id " + std::to_string(id) + " >= table rows " +
                              std::to_string(v));
    Tensor<T> out = Tensor<T>::zeros({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(table.data() + ids[i] * d, table.data() + (ids[i] + 1) * d,
                  out.data() + i * d);
    auto* tape = Tape<T>::active();
    if (tape && table.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> tc = table, oc = out;
        tape->record(out, [tc, oc, ids, d]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gt = tc.grad().data();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
        });
    }
    return out;
}

// [c,h,w] -> [gh*gw, c*p*p] rows of non-overlapping patches.
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t p) {
    if (x.rank() != 3)
        throw TensorError("patchify: expected (c,h,w), got " + shape_str(x.shape()));
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (p == 0 || h % p != 0 || w % p != 0)
        throw TensorError("patchify: image extents " + shape_str(x.shape()) +
                          " not divisible by patch " + std::to_string(p));
    const std::size_t gh = h / p, gw = w / p;
    Tensor<T> out = Tensor<T>::zeros({gh * gw, c * p * p});
    const T* px = x.data();
    T* po = out.data();
    for (std::size_t gy = 0; gy < gh; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx) {
            T* row = po + (gy * gw + gx) * c * p * p;
            std::size_t q = 0;
            for (std::size_t cc = 0; cc < c; ++cc)
                for (std::size_t r = 0; r < p; ++r)
                    for (std::size_t s = 0; s < p; ++s, ++q)
                        row[q] = px[cc * h * w + (gy * p + r) * w + (gx * p + s)];
        }
    auto* tape = Tape<T>::active();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record(out, [xc, oc, c, h, w, p, gh, gw]() mutable {
            if (!oc.has_grad()) return;
            const T* g = oc.grad().data();
            T* gx2 = xc.grad().data();
            for (std::size_t gy = 0; gy < gh; ++gy)
                for (std::size_t gxx = 0; gxx < gw; ++gxx) {
                    const T* row = g + (gy * gw + gxx) * c * p * p;
                    std::size_t q = 0;
                    for (std::size_t cc = 0; cc < c; ++cc)
                        for (std::size_t r = 0; r < p; ++r)
                            for (std::size_t s = 0; s < p; ++s, ++q)
                                gx2[cc * h * w + (gy * p + r) * w + (gxx * p + s)] += row[q];
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// fused losses

// mean_i [ max(x,0) - x*t + log(1+exp(-|x|)) ]
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
    if (logits.shape() != target.shape())
        throw TensorError("bce_with_logits: shape mismatch " + shape_str(logits.shape()) +
                          " vs " + shape_str(target.shape()));
    const std::size_t n = logits.size();
    const T* px = logits.data();
    const T* pt = target.data();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = px[i];
        acc += std::max(x, T(0)) - x * pt[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor<T> out = Tensor<T>::scalar(acc / T(n));
    auto* tape = Tape<T>::active();
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = logits, tc = target, oc = out;
        tape->record(out, [xc, tc, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const T g = oc.grad()[0] / T(n);
            const T* px2 = xc.data();
            const T* pt2 = tc.data();
            T* gx = xc.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                const T s = T(1) / (T(1) + std::exp(-px2[i]));
                gx[i] += g * (s - pt2[i]);
            }
        });
    }
    return out;
}

// mean over rows of -log softmax(logits_row)[target_row]
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, const std::vector<std::size_t>& target) {
    if (logits.rank() != 2)
        throw TensorError("cross_entropy_rows: logits must be 2-d, got " +
                          shape_str(logits.shape()));
    const std::size_t rows = logits.shape()[0], v = logits.shape()[1];
    if (target.size() != rows)
        throw TensorError("cross_entropy_rows: " + std::to_string(rows) + " rows but " +
                          std::to_string(target.size()) + " targets");
    for (std::size_t t : target)
        if (t >= v)
            throw TensorError("cross_entropy_rows: target id " + std::to_string(t) +
                              " >= vocab size " + std::to_string(v));
    const T* px = logits.data();
    T acc = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = px + r * v;
        T mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        T se = T(0);
        for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
        acc += mx + std::log(se) - row[target[r]];
    }
    Tensor<T> out = Tensor<T>::scalar(acc / T(rows));
    auto* tape = Tape<T>::active();
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = logits, oc = out;
        tape->record(out, [xc, oc, target, rows, v]() mutable {
            if (!oc.has_grad()) return;
            const T g = oc.grad()[0] / T(rows);
            const T* px2 = xc.data();
            T* gx = xc.grad().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = px2 + r * v;
                T mx = row[0];
                for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                T se = T(0);
                for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
                for (std::size_t j = 0; j < v; ++j) {
                    const T p = std::exp(row[j] - mx) / se;
                    gx[r * v + j] += g * (p - (j == target[r] ? T(1) : T(0)));
                }
            }
        });
    }
    return out;
}

// Detached copy (constant w.r.t. the tape).
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>::from(x.shape(), std::vector<T>(x.data(), x.data() + x.size()));
}

} // namespace tlab

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "augvit/tensor.hpp"

namespace augvit {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Reverse-mode tape. Ops record a partial-derivative closure as they execute;
// backward() replays them in reverse and finally routes leaf gradients into
// their bound Parameters. One forward pass per tape; a second backward on the
// same tape is an error.
//
// Threaded loops assign each output element to exactly one thread with a
// fixed reduction order, so results are bitwise identical for any thread
// count.
template <typename T>
class Tape {
public:
    using Ref = int;

    Ref input(Tensor<T> v) { return make_slot(std::move(v)); }

    Ref param(Parameter<T>& p) {
        const Ref r = make_slot(p.value);
        param_links_.emplace_back(r, &p);
        return r;
    }

    const Tensor<T>& val(Ref r) const { return slots_[static_cast<size_t>(r)].value; }
    const Tensor<T>& grad(Ref r) const { return slots_[static_cast<size_t>(r)].grad; }

    void backward(Ref loss) {
        if (replayed_) throw std::logic_error("tape: backward called twice without re-recording");
        replayed_ = true;
        auto& g = slots_[static_cast<size_t>(loss)].grad;
        if (g.numel() != 1)
            throw std::invalid_argument("tape: backward seed must be a scalar");
        g.data[0] = T(1);
        for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)();
        for (auto& [ref, p] : param_links_) {
            const auto& src = slots_[static_cast<size_t>(ref)].grad;
            for (size_t i = 0; i < src.data.size(); ++i) p->grad.data[i] += src.data[i];
        }
    }

    // ------------------------------------------------------------------
    // elementwise / structural ops
    // ------------------------------------------------------------------

    Ref relu(Ref x) {
        const auto& xv = val(x);
        Tensor<T> out = xv;
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r] {
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            const auto& xv = slots_[static_cast<size_t>(x)].value;
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            for (size_t i = 0; i < dx.data.size(); ++i)
                if (xv.data[i] > T(0)) dx.data[i] += dr.data[i];
        });
        return r;
    }

    Ref add(Ref a, Ref b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.shape != bv.shape) throw std::invalid_argument("add: shape mismatch");
        Tensor<T> out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, a, b, r] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& da = slots_[static_cast<size_t>(a)].grad;
            auto& db = slots_[static_cast<size_t>(b)].grad;
            for (size_t i = 0; i < dr.data.size(); ++i) {
                da.data[i] += dr.data[i];
                db.data[i] += dr.data[i];
            }
        });
        return r;
    }

    Ref concat_channels(Ref a, Ref b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) ||
            av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
            throw std::invalid_argument("concat_channels: incompatible shapes");
        const int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
        Tensor<T> out({B, Ca + Cb, H, W});
        const size_t plane = static_cast<size_t>(H) * W;
        for (int n = 0; n < B; ++n) {
            std::copy_n(&av.data[static_cast<size_t>(n) * Ca * plane], Ca * plane,
                        &out.data[static_cast<size_t>(n) * (Ca + Cb) * plane]);
            std::copy_n(&bv.data[static_cast<size_t>(n) * Cb * plane], Cb * plane,
                        &out.data[(static_cast<size_t>(n) * (Ca + Cb) + Ca) * plane]);
        }
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, a, b, r, B, Ca, Cb, plane] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& da = slots_[static_cast<size_t>(a)].grad;
            auto& db = slots_[static_cast<size_t>(b)].grad;
            for (int n = 0; n < B; ++n) {
                const T* src = &dr.data[static_cast<size_t>(n) * (Ca + Cb) * plane];
                T* pa = &da.data[static_cast<size_t>(n) * Ca * plane];
                T* pb = &db.data[static_cast<size_t>(n) * Cb * plane];
                for (size_t i = 0; i < static_cast<size_t>(Ca) * plane; ++i) pa[i] += src[i];
                for (size_t i = 0; i < static_cast<size_t>(Cb) * plane; ++i)
                    pb[i] += src[static_cast<size_t>(Ca) * plane + i];
            }
        });
        return r;
    }

    Ref slice_channels(Ref x, int from, int to) {
        const auto& xv = val(x);
        if (xv.ndim() != 4 || from < 0 || to > xv.dim(1) || from >= to)
            throw std::invalid_argument("slice_channels: bad range");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Cs = to - from;
        const size_t plane = static_cast<size_t>(H) * W;
        Tensor<T> out({B, Cs, H, W});
        for (int n = 0; n < B; ++n)
            std::copy_n(&xv.data[(static_cast<size_t>(n) * C + from) * plane], Cs * plane,
                        &out.data[static_cast<size_t>(n) * Cs * plane]);
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r, B, C, Cs, from, plane] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            for (int n = 0; n < B; ++n) {
                const T* src = &dr.data[static_cast<size_t>(n) * Cs * plane];
                T* dst = &dx.data[(static_cast<size_t>(n) * C + from) * plane];
                for (size_t i = 0; i < static_cast<size_t>(Cs) * plane; ++i) dst[i] += src[i];
            }
        });
        return r;
    }

    // ------------------------------------------------------------------
    // convolution
    // ------------------------------------------------------------------

    // x: [B, Ci, H, W], w: [Co, Ci/groups, k, k], optional bias b: [Co]
    Ref conv2d(Ref x, Ref w, Ref b, int stride, int pad, int groups) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        if (xv.ndim() != 4 || wv.ndim() != 4) throw std::invalid_argument("conv2d: rank");
        const int B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Co = wv.dim(0), Cig = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
        if (Ci % groups != 0 || Co % groups != 0 || Cig != Ci / groups)
            throw std::invalid_argument("conv2d: channel/group mismatch");
        const int Ho = (H + 2 * pad - kh) / stride + 1;
        const int Wo = (W + 2 * pad - kw) / stride + 1;
        if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
        const int cog = Co / groups;

        Tensor<T> out({B, Co, Ho, Wo});
        const T* bias = b >= 0 ? val(b).data.data() : nullptr;

#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < B; ++n) {
            for (int co = 0; co < Co; ++co) {
                T* optr = &out.data[(static_cast<size_t>(n) * Co + co) *
                                    static_cast<size_t>(Ho) * Wo];
                if (bias) {
                    for (int i = 0; i < Ho * Wo; ++i) optr[i] = bias[co];
                }
                const int gi = co / cog;
                for (int cg = 0; cg < Cig; ++cg) {
                    const int ci = gi * Cig + cg;
                    const T* iptr = &xv.data[(static_cast<size_t>(n) * Ci + ci) *
                                             static_cast<size_t>(H) * W];
                    const T* wrow =
                        &wv.data[((static_cast<size_t>(co) * Cig + cg) * kh) * kw];
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const T wval = wrow[static_cast<size_t>(ky) * kw + kx];
                            if (wval == T(0)) continue;
                            for (int oy = 0; oy < Ho; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                // valid ox range for ix = ox*stride + kx - pad
                                int ox0 = 0;
                                while (ox0 * stride + kx - pad < 0) ++ox0;
                                int ox1 = Wo;
                                while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= W) --ox1;
                                const T* irow = iptr + static_cast<size_t>(iy) * W;
                                T* orow = optr + static_cast<size_t>(oy) * Wo;
                                if (stride == 1) {
                                    const T* in = irow + (kx - pad) + ox0;
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        orow[ox] += wval * in[ox - ox0];
                                } else {
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        orow[ox] += wval * irow[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }

        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, w, b, r, stride, pad, groups, B, Ci, H, W, Co, Cig, kh, kw,
                          Ho, Wo, cog] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            const auto& xv = slots_[static_cast<size_t>(x)].value;
            const auto& wv = slots_[static_cast<size_t>(w)].value;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            auto& dw = slots_[static_cast<size_t>(w)].grad;

            if (b >= 0) {
                auto& db = slots_[static_cast<size_t>(b)].grad;
#pragma omp parallel for schedule(static)
                for (int co = 0; co < Co; ++co) {
                    T acc = T(0);
                    for (int n = 0; n < B; ++n) {
                        const T* g = &dr.data[(static_cast<size_t>(n) * Co + co) *
                                              static_cast<size_t>(Ho) * Wo];
                        for (int i = 0; i < Ho * Wo; ++i) acc += g[i];
                    }
                    db.data[static_cast<size_t>(co)] += acc;
                }
            }

            // weight gradient: one thread per (co, cg), sequential over batch
#pragma omp parallel for collapse(2) schedule(static)
            for (int co = 0; co < Co; ++co) {
                for (int cg = 0; cg < Cig; ++cg) {
                    const int gi = co / cog;
                    const int ci = gi * Cig + cg;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            T acc = T(0);
                            for (int n = 0; n < B; ++n) {
                                const T* g = &dr.data[(static_cast<size_t>(n) * Co + co) *
                                                      static_cast<size_t>(Ho) * Wo];
                                const T* iptr = &xv.data[(static_cast<size_t>(n) * Ci + ci) *
                                                         static_cast<size_t>(H) * W];
                                for (int oy = 0; oy < Ho; ++oy) {
                                    const int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    int ox0 = 0;
                                    while (ox0 * stride + kx - pad < 0) ++ox0;
                                    int ox1 = Wo;
                                    while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= W)
                                        --ox1;
                                    const T* irow = iptr + static_cast<size_t>(iy) * W;
                                    const T* grow = g + static_cast<size_t>(oy) * Wo;
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        acc += grow[ox] * irow[ox * stride + kx - pad];
                                }
                            }
                            dw.data[((static_cast<size_t>(co) * Cig + cg) * kh + ky) * kw +
                                    kx] += acc;
                        }
                    }
                }
            }

            // input gradient: one thread per (n, ci)
#pragma omp parallel for collapse(2) schedule(static)
            for (int n = 0; n < B; ++n) {
                for (int ci = 0; ci < Ci; ++ci) {
                    const int gi = ci / Cig;
                    const int cg = ci % Cig;
                    T* dptr = &dx.data[(static_cast<size_t>(n) * Ci + ci) *
                                       static_cast<size_t>(H) * W];
                    for (int cog_idx = 0; cog_idx < cog; ++cog_idx) {
                        const int co = gi * cog + cog_idx;
                        const T* g = &dr.data[(static_cast<size_t>(n) * Co + co) *
                                              static_cast<size_t>(Ho) * Wo];
                        const T* wrow =
                            &wv.data[((static_cast<size_t>(co) * Cig + cg) * kh) * kw];
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                const T wval = wrow[static_cast<size_t>(ky) * kw + kx];
                                if (wval == T(0)) continue;
                                for (int oy = 0; oy < Ho; ++oy) {
                                    const int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    int ox0 = 0;
                                    while (ox0 * stride + kx - pad < 0) ++ox0;
                                    int ox1 = Wo;
                                    while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= W)
                                        --ox1;
                                    T* drow = dptr + static_cast<size_t>(iy) * W;
                                    const T* grow = g + static_cast<size_t>(oy) * Wo;
                                    for (int ox = ox0; ox < ox1; ++ox)
                                        drow[ox * stride + kx - pad] += wval * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
        return r;
    }

    // ------------------------------------------------------------------
    // batch normalization
    // ------------------------------------------------------------------

    // Training mode normalizes with batch statistics and updates the running
    // buffers; eval mode uses the running buffers (deterministic, per-sample
    // independent).
    Ref batchnorm(Ref x, Ref gamma, Ref beta, Tensor<T>* run_mean, Tensor<T>* run_var,
                  bool training, T momentum = T(0.1), T eps = T(1e-5)) {
        const auto& xv = val(x);
        if (xv.ndim() != 4) throw std::invalid_argument("batchnorm: rank");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const size_t plane = static_cast<size_t>(H) * W;
        const int64_t cnt = static_cast<int64_t>(B) * H * W;

        std::vector<T> mean(static_cast<size_t>(C)), inv_std(static_cast<size_t>(C));
        if (training) {
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                T sum = T(0);
                for (int n = 0; n < B; ++n) {
                    const T* p = &xv.data[(static_cast<size_t>(n) * C + c) * plane];
                    for (size_t i = 0; i < plane; ++i) sum += p[i];
                }
                const T m = sum / static_cast<T>(cnt);
                T var = T(0);
                for (int n = 0; n < B; ++n) {
                    const T* p = &xv.data[(static_cast<size_t>(n) * C + c) * plane];
                    for (size_t i = 0; i < plane; ++i) {
                        const T dlt = p[i] - m;
                        var += dlt * dlt;
                    }
                }
                var /= static_cast<T>(cnt);
                mean[static_cast<size_t>(c)] = m;
                inv_std[static_cast<size_t>(c)] = T(1) / std::sqrt(var + eps);
                run_mean->data[static_cast<size_t>(c)] =
                    (T(1) - momentum) * run_mean->data[static_cast<size_t>(c)] + momentum * m;
                run_var->data[static_cast<size_t>(c)] =
                    (T(1) - momentum) * run_var->data[static_cast<size_t>(c)] + momentum * var;
            }
        } else {
            for (int c = 0; c < C; ++c) {
                mean[static_cast<size_t>(c)] = run_mean->data[static_cast<size_t>(c)];
                inv_std[static_cast<size_t>(c)] =
                    T(1) / std::sqrt(run_var->data[static_cast<size_t>(c)] + eps);
            }
        }

        const auto& gv = val(gamma);
        const auto& bv = val(beta);
        Tensor<T> out(xv.shape);
        Tensor<T> xhat(xv.shape);
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < B; ++n) {
            for (int c = 0; c < C; ++c) {
                const T m = mean[static_cast<size_t>(c)];
                const T is = inv_std[static_cast<size_t>(c)];
                const T g = gv.data[static_cast<size_t>(c)];
                const T bb = bv.data[static_cast<size_t>(c)];
                const T* p = &xv.data[(static_cast<size_t>(n) * C + c) * plane];
                T* xh = &xhat.data[(static_cast<size_t>(n) * C + c) * plane];
                T* o = &out.data[(static_cast<size_t>(n) * C + c) * plane];
                for (size_t i = 0; i < plane; ++i) {
                    xh[i] = (p[i] - m) * is;
                    o[i] = g * xh[i] + bb;
                }
            }
        }

        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, gamma, beta, r, training, B, C, plane, cnt,
                          xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            const auto& gv = slots_[static_cast<size_t>(gamma)].value;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            auto& dg = slots_[static_cast<size_t>(gamma)].grad;
            auto& db = slots_[static_cast<size_t>(beta)].grad;
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                T sum_dy = T(0), sum_dy_xhat = T(0);
                for (int n = 0; n < B; ++n) {
                    const T* g = &dr.data[(static_cast<size_t>(n) * C + c) * plane];
                    const T* xh = &xhat.data[(static_cast<size_t>(n) * C + c) * plane];
                    for (size_t i = 0; i < plane; ++i) {
                        sum_dy += g[i];
                        sum_dy_xhat += g[i] * xh[i];
                    }
                }
                dg.data[static_cast<size_t>(c)] += sum_dy_xhat;
                db.data[static_cast<size_t>(c)] += sum_dy;
                const T gam = gv.data[static_cast<size_t>(c)];
                const T is = inv_std[static_cast<size_t>(c)];
                if (training) {
                    const T inv_cnt = T(1) / static_cast<T>(cnt);
                    for (int n = 0; n < B; ++n) {
                        const T* g = &dr.data[(static_cast<size_t>(n) * C + c) * plane];
                        const T* xh = &xhat.data[(static_cast<size_t>(n) * C + c) * plane];
                        T* d = &dx.data[(static_cast<size_t>(n) * C + c) * plane];
                        for (size_t i = 0; i < plane; ++i)
                            d[i] += gam * is * (g[i] - inv_cnt * sum_dy -
                                                xh[i] * inv_cnt * sum_dy_xhat);
                    }
                } else {
                    for (int n = 0; n < B; ++n) {
                        const T* g = &dr.data[(static_cast<size_t>(n) * C + c) * plane];
                        T* d = &dx.data[(static_cast<size_t>(n) * C + c) * plane];
                        for (size_t i = 0; i < plane; ++i) d[i] += gam * is * g[i];
                    }
                }
            }
        });
        return r;
    }

    // ------------------------------------------------------------------
    // resampling / pooling / linear
    // ------------------------------------------------------------------

    Ref upsample_bilinear2d(Ref x, int oh, int ow) {
        const auto& xv = val(x);
        if (xv.ndim() != 4) throw std::invalid_argument("upsample: rank");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        Tensor<T> out({B, C, oh, ow});

        // pixel-center alignment with edge clamping; precompute 1-d taps
        struct Tap {
            int i0, i1;
            T f;
        };
        auto taps = [](int in, int on) {
            std::vector<Tap> t(static_cast<size_t>(on));
            const double scale = static_cast<double>(in) / on;
            for (int o = 0; o < on; ++o) {
                double src = (o + 0.5) * scale - 0.5;
                src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
                const int i0 = static_cast<int>(std::floor(src));
                t[static_cast<size_t>(o)] = {i0, std::min(i0 + 1, in - 1),
                                             static_cast<T>(src - i0)};
            }
            return t;
        };
        const auto ty = taps(H, oh), tx = taps(W, ow);

        for (int n = 0; n < B; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* p = &xv.data[(static_cast<size_t>(n) * C + c) *
                                      static_cast<size_t>(H) * W];
                T* o = &out.data[(static_cast<size_t>(n) * C + c) *
                                 static_cast<size_t>(oh) * ow];
                for (int y = 0; y < oh; ++y) {
                    const auto& tpy = ty[static_cast<size_t>(y)];
                    for (int xo = 0; xo < ow; ++xo) {
                        const auto& tpx = tx[static_cast<size_t>(xo)];
                        const T v00 = p[static_cast<size_t>(tpy.i0) * W + tpx.i0];
                        const T v01 = p[static_cast<size_t>(tpy.i0) * W + tpx.i1];
                        const T v10 = p[static_cast<size_t>(tpy.i1) * W + tpx.i0];
                        const T v11 = p[static_cast<size_t>(tpy.i1) * W + tpx.i1];
                        o[static_cast<size_t>(y) * ow + xo] =
                            (T(1) - tpy.f) * ((T(1) - tpx.f) * v00 + tpx.f * v01) +
                            tpy.f * ((T(1) - tpx.f) * v10 + tpx.f * v11);
                    }
                }
            }
        }

        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r, B, C, H, W, oh, ow, ty, tx] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            for (int n = 0; n < B; ++n) {
                for (int c = 0; c < C; ++c) {
                    T* d = &dx.data[(static_cast<size_t>(n) * C + c) *
                                    static_cast<size_t>(H) * W];
                    const T* g = &dr.data[(static_cast<size_t>(n) * C + c) *
                                          static_cast<size_t>(oh) * ow];
                    for (int y = 0; y < oh; ++y) {
                        const auto& tpy = ty[static_cast<size_t>(y)];
                        for (int xo = 0; xo < ow; ++xo) {
                            const auto& tpx = tx[static_cast<size_t>(xo)];
                            const T gg = g[static_cast<size_t>(y) * ow + xo];
                            d[static_cast<size_t>(tpy.i0) * W + tpx.i0] +=
                                (T(1) - tpy.f) * (T(1) - tpx.f) * gg;
                            d[static_cast<size_t>(tpy.i0) * W + tpx.i1] +=
                                (T(1) - tpy.f) * tpx.f * gg;
                            d[static_cast<size_t>(tpy.i1) * W + tpx.i0] +=
                                tpy.f * (T(1) - tpx.f) * gg;
                            d[static_cast<size_t>(tpy.i1) * W + tpx.i1] +=
                                tpy.f * tpx.f * gg;
                        }
                    }
                }
            }
        });
        return r;
    }

    // [B, C, H, W] -> [B, C]
    Ref global_avg_pool(Ref x) {
        const auto& xv = val(x);
        if (xv.ndim() != 4) throw std::invalid_argument("gap: rank");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const size_t plane = static_cast<size_t>(H) * W;
        Tensor<T> out({B, C});
        for (int n = 0; n < B; ++n)
            for (int c = 0; c < C; ++c) {
                const T* p = &xv.data[(static_cast<size_t>(n) * C + c) * plane];
                T sum = T(0);
                for (size_t i = 0; i < plane; ++i) sum += p[i];
                out.at(n, c) = sum / static_cast<T>(plane);
            }
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r, B, C, plane] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            for (int n = 0; n < B; ++n)
                for (int c = 0; c < C; ++c) {
                    const T g = dr.at(n, c) / static_cast<T>(plane);
                    T* d = &dx.data[(static_cast<size_t>(n) * C + c) * plane];
                    for (size_t i = 0; i < plane; ++i) d[i] += g;
                }
        });
        return r;
    }

    // x: [B, Ci], w: [Co, Ci], b: [Co]
    Ref linear(Ref x, Ref w, Ref b) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
            throw std::invalid_argument("linear: shape mismatch");
        const int B = xv.dim(0), Ci = xv.dim(1), Co = wv.dim(0);
        const auto& bv = val(b);
        Tensor<T> out({B, Co});
        for (int n = 0; n < B; ++n)
            for (int o = 0; o < Co; ++o) {
                T acc = bv.data[static_cast<size_t>(o)];
                const T* xr = &xv.data[static_cast<size_t>(n) * Ci];
                const T* wr = &wv.data[static_cast<size_t>(o) * Ci];
                for (int i = 0; i < Ci; ++i) acc += xr[i] * wr[i];
                out.at(n, o) = acc;
            }
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, w, b, r, B, Ci, Co] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            const auto& xv = slots_[static_cast<size_t>(x)].value;
            const auto& wv = slots_[static_cast<size_t>(w)].value;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            auto& dw = slots_[static_cast<size_t>(w)].grad;
            auto& db = slots_[static_cast<size_t>(b)].grad;
            for (int n = 0; n < B; ++n)
                for (int o = 0; o < Co; ++o) {
                    const T g = dr.at(n, o);
                    db.data[static_cast<size_t>(o)] += g;
                    const T* xr = &xv.data[static_cast<size_t>(n) * Ci];
                    const T* wr = &wv.data[static_cast<size_t>(o) * Ci];
                    T* dxr = &dx.data[static_cast<size_t>(n) * Ci];
                    T* dwr = &dw.data[static_cast<size_t>(o) * Ci];
                    for (int i = 0; i < Ci; ++i) {
                        dxr[i] += g * wr[i];
                        dwr[i] += g * xr[i];
                    }
                }
        });
        return r;
    }

    // ------------------------------------------------------------------
    // attention
    // ------------------------------------------------------------------

    // [B, C, H, W] -> [B*heads, H*W, C/heads]
    Ref map_to_tokens(Ref x, int heads) {
        const auto& xv = val(x);
        if (xv.ndim() != 4 || xv.dim(1) % heads != 0)
            throw std::invalid_argument("map_to_tokens: channels not divisible by heads");
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int dh = C / heads;
        const int N = H * W;
        Tensor<T> out({B * heads, N, dh});
        for (int n = 0; n < B; ++n)
            for (int hh = 0; hh < heads; ++hh)
                for (int f = 0; f < dh; ++f) {
                    const T* src = &xv.data[((static_cast<size_t>(n) * C) + hh * dh + f) *
                                            static_cast<size_t>(N)];
                    T* dst = &out.data[(static_cast<size_t>(n) * heads + hh) *
                                       static_cast<size_t>(N) * dh + f];
                    for (int t = 0; t < N; ++t) dst[static_cast<size_t>(t) * dh] = src[t];
                }
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r, B, C, heads, dh, N] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            for (int n = 0; n < B; ++n)
                for (int hh = 0; hh < heads; ++hh)
                    for (int f = 0; f < dh; ++f) {
                        T* dst = &dx.data[((static_cast<size_t>(n) * C) + hh * dh + f) *
                                          static_cast<size_t>(N)];
                        const T* src = &dr.data[(static_cast<size_t>(n) * heads + hh) *
                                                static_cast<size_t>(N) * dh + f];
                        for (int t = 0; t < N; ++t) dst[t] += src[static_cast<size_t>(t) * dh];
                    }
        });
        return r;
    }

    // inverse of map_to_tokens
    Ref tokens_to_map(Ref t, int batch, int channels, int h, int w) {
        const auto& tv = val(t);
        if (tv.ndim() != 3) throw std::invalid_argument("tokens_to_map: rank");
        const int G = tv.dim(0), N = tv.dim(1), dh = tv.dim(2);
        const int heads = G / batch;
        if (G != batch * heads || heads * dh != channels || N != h * w)
            throw std::invalid_argument("tokens_to_map: shape mismatch");
        Tensor<T> out({batch, channels, h, w});
        for (int n = 0; n < batch; ++n)
            for (int hh = 0; hh < heads; ++hh)
                for (int f = 0; f < dh; ++f) {
                    const T* src = &tv.data[(static_cast<size_t>(n) * heads + hh) *
                                            static_cast<size_t>(N) * dh + f];
                    T* dst = &out.data[((static_cast<size_t>(n) * channels) + hh * dh + f) *
                                       static_cast<size_t>(N)];
                    for (int tok = 0; tok < N; ++tok)
                        dst[tok] = src[static_cast<size_t>(tok) * dh];
                }
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, t, r, batch, channels, heads, dh, N] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            auto& dt = slots_[static_cast<size_t>(t)].grad;
            for (int n = 0; n < batch; ++n)
                for (int hh = 0; hh < heads; ++hh)
                    for (int f = 0; f < dh; ++f) {
                        T* dst = &dt.data[(static_cast<size_t>(n) * heads + hh) *
                                          static_cast<size_t>(N) * dh + f];
                        const T* src =
                            &dr.data[((static_cast<size_t>(n) * channels) + hh * dh + f) *
                                     static_cast<size_t>(N)];
                        for (int tok = 0; tok < N; ++tok)
                            dst[static_cast<size_t>(tok) * dh] += src[tok];
                    }
        });
        return r;
    }

    // Batched ReLU linear attention over [G, N, d] stacks, factored form.
    Ref relu_linear_attention(Ref q, Ref k, Ref v, T eps = T(1e-6)) {
        const auto& qv = val(q);
        const auto& kv_in = val(k);
        const auto& vv = val(v);
        if (qv.ndim() != 3 || kv_in.shape != qv.shape || vv.shape != qv.shape)
            throw std::invalid_argument("relu_linear_attention: shape mismatch");
        const int G = qv.dim(0), N = qv.dim(1), d = qv.dim(2);

        Tensor<T> out(qv.shape);
        Tensor<T> denom({G, N});  // saved for backward
        std::vector<T> kvmat(static_cast<size_t>(G) * d * d, T(0));
        std::vector<T> zvec(static_cast<size_t>(G) * d, T(0));

#pragma omp parallel for schedule(static)
        for (int g = 0; g < G; ++g) {
            T* S = &kvmat[static_cast<size_t>(g) * d * d];
            T* z = &zvec[static_cast<size_t>(g) * d];
            const size_t base = static_cast<size_t>(g) * N * d;
            for (int j = 0; j < N; ++j) {
                const T* kj = &kv_in.data[base + static_cast<size_t>(j) * d];
                const T* vj = &vv.data[base + static_cast<size_t>(j) * d];
                for (int a = 0; a < d; ++a) {
                    const T ka = kj[a] > T(0) ? kj[a] : T(0);
                    if (ka == T(0)) continue;
                    z[a] += ka;
                    T* row = S + static_cast<size_t>(a) * d;
                    for (int bb = 0; bb < d; ++bb) row[bb] += ka * vj[bb];
                }
            }
            for (int i = 0; i < N; ++i) {
                const T* qi = &qv.data[base + static_cast<size_t>(i) * d];
                T* oi = &out.data[base + static_cast<size_t>(i) * d];
                T den = eps;
                for (int a = 0; a < d; ++a) {
                    const T ua = qi[a] > T(0) ? qi[a] : T(0);
                    if (ua == T(0)) continue;
                    den += ua * z[a];
                    const T* row = S + static_cast<size_t>(a) * d;
                    for (int bb = 0; bb < d; ++bb) oi[bb] += ua * row[bb];
                }
                for (int bb = 0; bb < d; ++bb) oi[bb] /= den;
                denom.at(g, i) = den;
            }
        }

        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, q, k, v, r, G, N, d, denom = std::move(denom),
                          kvmat = std::move(kvmat), zvec = std::move(zvec)] {
            const auto& dr = slots_[static_cast<size_t>(r)].grad;
            const auto& ov = slots_[static_cast<size_t>(r)].value;
            const auto& qv = slots_[static_cast<size_t>(q)].value;
            const auto& kv_in = slots_[static_cast<size_t>(k)].value;
            const auto& vv = slots_[static_cast<size_t>(v)].value;
            auto& dq = slots_[static_cast<size_t>(q)].grad;
            auto& dk = slots_[static_cast<size_t>(k)].grad;
            auto& dv = slots_[static_cast<size_t>(v)].grad;

#pragma omp parallel for schedule(static)
            for (int g = 0; g < G; ++g) {
                const size_t base = static_cast<size_t>(g) * N * d;
                const T* S = &kvmat[static_cast<size_t>(g) * d * d];
                const T* z = &zvec[static_cast<size_t>(g) * d];
                std::vector<T> dS(static_cast<size_t>(d) * d, T(0));
                std::vector<T> dz(static_cast<size_t>(d), T(0));

                for (int i = 0; i < N; ++i) {
                    const T* gi = &dr.data[base + static_cast<size_t>(i) * d];
                    const T* oi = &ov.data[base + static_cast<size_t>(i) * d];
                    const T* qi = &qv.data[base + static_cast<size_t>(i) * d];
                    T* dqi = &dq.data[base + static_cast<size_t>(i) * d];
                    const T den = denom.at(g, i);

                    T g_dot_o = T(0);
                    for (int bb = 0; bb < d; ++bb) g_dot_o += gi[bb] * oi[bb];
                    const T dden = -g_dot_o / den;

                    for (int a = 0; a < d; ++a) {
                        const T ua = qi[a] > T(0) ? qi[a] : T(0);
                        // du[a] = sum_b S[a][b] * gi[b] / den + dden * z[a]
                        const T* row = S + static_cast<size_t>(a) * d;
                        T acc = T(0);
                        for (int bb = 0; bb < d; ++bb) acc += row[bb] * gi[bb];
                        const T du = acc / den + dden * z[a];
                        if (qi[a] > T(0)) dqi[a] += du;
                        if (ua > T(0)) {
                            // dS[a][b] += ua * gi[b] / den;  dz[a] += dden * ua
                            T* dSrow = dS.data() + static_cast<size_t>(a) * d;
                            const T scale = ua / den;
                            for (int bb = 0; bb < d; ++bb) dSrow[bb] += scale * gi[bb];
                            dz[static_cast<size_t>(a)] += dden * ua;
                        }
                    }
                }

                for (int j = 0; j < N; ++j) {
                    const T* kj = &kv_in.data[base + static_cast<size_t>(j) * d];
                    const T* vj = &vv.data[base + static_cast<size_t>(j) * d];
                    T* dkj = &dk.data[base + static_cast<size_t>(j) * d];
                    T* dvj = &dv.data[base + static_cast<size_t>(j) * d];
                    for (int a = 0; a < d; ++a) {
                        const T ka = kj[a] > T(0) ? kj[a] : T(0);
                        const T* dSrow = dS.data() + static_cast<size_t>(a) * d;
                        if (ka > T(0)) {
                            // dv_j[b] += dS[a][b] * phi(k_j)[a]
                            for (int bb = 0; bb < d; ++bb) dvj[bb] += dSrow[bb] * ka;
                        }
                        if (kj[a] > T(0)) {
                            T acc = dz[static_cast<size_t>(a)];
                            for (int bb = 0; bb < d; ++bb) acc += dSrow[bb] * vj[bb];
                            dkj[a] += acc;
                        }
                    }
                }
            }
        });
        return r;
    }

    // ------------------------------------------------------------------
    // losses / scalars
    // ------------------------------------------------------------------

    // Mean cross entropy over the batch, log-sum-exp stabilized.
    Ref cross_entropy(Ref logits, const std::vector<int>& targets) {
        const auto& lv = val(logits);
        if (lv.ndim() != 2 || static_cast<size_t>(lv.dim(0)) != targets.size())
            throw std::invalid_argument("cross_entropy: logits/targets mismatch");
        const int B = lv.dim(0), C = lv.dim(1);
        for (int t : targets)
            if (t < 0 || t >= C) throw std::invalid_argument("cross_entropy: target out of range");

        Tensor<T> softmax({B, C});
        T loss = T(0);
        for (int n = 0; n < B; ++n) {
            const T* row = &lv.data[static_cast<size_t>(n) * C];
            T mx = row[0];
            for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
            T sum = T(0);
            for (int c = 0; c < C; ++c) {
                const T e = std::exp(row[c] - mx);
                softmax.at(n, c) = e;
                sum += e;
            }
            for (int c = 0; c < C; ++c) softmax.at(n, c) /= sum;
            loss += mx + std::log(sum) - row[targets[static_cast<size_t>(n)]];
        }
        loss /= static_cast<T>(B);

        Tensor<T> out({1});
        out.data[0] = loss;
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, logits, r, B, C, targets, softmax = std::move(softmax)] {
            const T g = slots_[static_cast<size_t>(r)].grad.data[0] / static_cast<T>(B);
            auto& dl = slots_[static_cast<size_t>(logits)].grad;
            for (int n = 0; n < B; ++n) {
                for (int c = 0; c < C; ++c) {
                    T sm = softmax.at(n, c);
                    if (c == targets[static_cast<size_t>(n)]) sm -= T(1);
                    dl.at(n, c) += g * sm;
                }
            }
        });
        return r;
    }

    // scalar pick out of a 2-d tensor (gradcam on a single logit)
    Ref select(Ref x, int row, int col) {
        const auto& xv = val(x);
        if (xv.ndim() != 2) throw std::invalid_argument("select: rank");
        Tensor<T> out({1});
        out.data[0] = xv.at(row, col);
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r, row, col] {
            slots_[static_cast<size_t>(x)].grad.at(row, col) +=
                slots_[static_cast<size_t>(r)].grad.data[0];
        });
        return r;
    }

    // sum of every element (test utility: loss = sum of parameters)
    Ref sum(Ref x) {
        const auto& xv = val(x);
        Tensor<T> out({1});
        T acc = T(0);
        for (T v : xv.data) acc += v;
        out.data[0] = acc;
        const Ref r = make_slot(std::move(out));
        backs_.push_back([this, x, r] {
            const T g = slots_[static_cast<size_t>(r)].grad.data[0];
            auto& dx = slots_[static_cast<size_t>(x)].grad;
            for (auto& v : dx.data) v += g;
        });
        return r;
    }

private:
    struct Slot {
        Tensor<T> value;
        Tensor<T> grad;
    };

    Ref make_slot(Tensor<T> v) {
        Slot s;
        s.grad = Tensor<T>(v.shape);
        s.value = std::move(v);
        slots_.push_back(std::move(s));
        return static_cast<Ref>(slots_.size() - 1);
    }

    std::deque<Slot> slots_;
    std::vector<std::pair<Ref, Parameter<T>*>> param_links_;
    std::vector<std::function<void()>> backs_;
    bool replayed_ = false;
};

}  // namespace augvit

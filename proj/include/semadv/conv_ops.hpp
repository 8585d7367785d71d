#pragma once

#include "semadv/ops.hpp"

// Convolution-family differentiable ops. Convolutions lower to im2col + GEMM;
// backward recomputes the column buffer per sample instead of caching it,
// trading a little compute for graph memory.
namespace semadv::ad {

namespace detail {

// x [C,H,W] -> cols [C*kh*kw, OH*OW]
template <class T>
void im2col(const T* x, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, T* cols) {
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                T* dst = cols + ((c * kh + ki) * kw + kj) * (oh * ow);
                for (int64_t i = 0; i < oh; ++i) {
                    int64_t src_i = i * stride - pad + ki;
                    if (src_i < 0 || src_i >= h) {
                        for (int64_t j = 0; j < ow; ++j) dst[i * ow + j] = T(0);
                        continue;
                    }
                    const T* src_row = x + (c * h + src_i) * w;
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t src_j = j * stride - pad + kj;
                        dst[i * ow + j] = (src_j >= 0 && src_j < w) ? src_row[src_j] : T(0);
                    }
                }
            }
        }
    }
}

// cols [C*kh*kw, OH*OW] accumulated back into x [C,H,W]
template <class T>
void col2im(const T* cols, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* x) {
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                const T* src = cols + ((c * kh + ki) * kw + kj) * (oh * ow);
                for (int64_t i = 0; i < oh; ++i) {
                    int64_t dst_i = i * stride - pad + ki;
                    if (dst_i < 0 || dst_i >= h) continue;
                    T* dst_row = x + (c * h + dst_i) * w;
                    for (int64_t j = 0; j < ow; ++j) {
                        int64_t dst_j = j * stride - pad + kj;
                        if (dst_j >= 0 && dst_j < w) dst_row[dst_j] += src[i * ow + j];
                    }
                }
            }
        }
    }
}

inline int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    int64_t n = xs[0], c_in = xs[1], h = xs[2], wd = xs[3];
    int64_t c_out = ws[0], kh = ws[2], kw = ws[3];
    if (ws[1] != c_in) throw std::invalid_argument("conv2d: channel mismatch");
    int64_t oh = detail::conv_out(h, kh, stride, pad), ow = detail::conv_out(wd, kw, stride, pad);
    int64_t k = c_in * kh * kw, p = oh * ow;

    Tensor<T> out({n, c_out, oh, ow});
    std::vector<T> cols(static_cast<size_t>(k * p));
    for (int64_t s = 0; s < n; ++s) {
        detail::im2col(x->value.data() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad, oh,
                       ow, cols.data());
        blas::gemm(false, false, static_cast<int>(c_out), static_cast<int>(p), static_cast<int>(k),
                   T(1), w->value.data(), static_cast<int>(k), cols.data(), static_cast<int>(p),
                   T(0), out.data() + s * c_out * p, static_cast<int>(p));
        for (int64_t c = 0; c < c_out; ++c) {
            T bias = b->value[c];
            T* dst = out.data() + (s * c_out + c) * p;
            for (int64_t i = 0; i < p; ++i) dst[i] += bias;
        }
    }

    auto bp = [n, c_in, h, wd, c_out, kh, kw, stride, pad, oh, ow, k, p](Node<T>& self) {
        const Var<T>& x = self.parents[0];
        const Var<T>& w = self.parents[1];
        const Var<T>& b = self.parents[2];
        std::vector<T> cols(static_cast<size_t>(k * p));
        std::vector<T> dcols(static_cast<size_t>(k * p));
        for (int64_t s = 0; s < n; ++s) {
            const T* dy = self.grad.data() + s * c_out * p;
            if (w->requires_grad) {
                detail::im2col(x->value.data() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride,
                               pad, oh, ow, cols.data());
                blas::gemm(false, true, static_cast<int>(c_out), static_cast<int>(k),
                           static_cast<int>(p), T(1), dy, static_cast<int>(p), cols.data(),
                           static_cast<int>(p), T(1), w->ensure_grad().data(),
                           static_cast<int>(k));
            }
            if (x->requires_grad) {
                blas::gemm(true, false, static_cast<int>(k), static_cast<int>(p),
                           static_cast<int>(c_out), T(1), w->value.data(), static_cast<int>(k), dy,
                           static_cast<int>(p), T(0), dcols.data(), static_cast<int>(p));
                detail::col2im(dcols.data(), c_in, h, wd, kh, kw, stride, pad, oh, ow,
                               x->ensure_grad().data() + s * c_in * h * wd);
            }
            if (b->requires_grad) {
                Tensor<T>& pg = b->ensure_grad();
                for (int64_t c = 0; c < c_out; ++c) {
                    T s2 = 0;
                    const T* row = dy + c * p;
                    for (int64_t i = 0; i < p; ++i) s2 += row[i];
                    pg[c] += s2;
                }
            }
        }
    };
    return make_op<T>(std::move(out), {x, w, b}, std::move(bp));
}

// Transposed convolution (fractionally strided). x [N,Cin,H,W],
// w [Cin,Cout,kh,kw], b [Cout]; OH = (H-1)*stride - 2*pad + kh.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    int64_t n = xs[0], c_in = xs[1], h = xs[2], wd = xs[3];
    int64_t c_out = ws[1], kh = ws[2], kw = ws[3];
    if (ws[0] != c_in) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    int64_t oh = (h - 1) * stride - 2 * pad + kh;
    int64_t ow = (wd - 1) * stride - 2 * pad + kw;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv_transpose2d: empty output");
    int64_t k = c_out * kh * kw, p = h * wd;

    // Forward is col2im(W^T x): the exact adjoint of conv2d's forward.
    Tensor<T> out({n, c_out, oh, ow});
    std::vector<T> cols(static_cast<size_t>(k * p));
    for (int64_t s = 0; s < n; ++s) {
        blas::gemm(true, false, static_cast<int>(k), static_cast<int>(p), static_cast<int>(c_in),
                   T(1), w->value.data(), static_cast<int>(k), x->value.data() + s * c_in * p,
                   static_cast<int>(p), T(0), cols.data(), static_cast<int>(p));
        T* dst = out.data() + s * c_out * oh * ow;
        detail::col2im(cols.data(), c_out, oh, ow, kh, kw, stride, pad, h, wd, dst);
        for (int64_t c = 0; c < c_out; ++c) {
            T bias = b->value[c];
            T* row = dst + c * oh * ow;
            for (int64_t i = 0; i < oh * ow; ++i) row[i] += bias;
        }
    }

    auto bp = [n, c_in, h, wd, c_out, kh, kw, stride, pad, oh, ow, k, p](Node<T>& self) {
        const Var<T>& x = self.parents[0];
        const Var<T>& w = self.parents[1];
        const Var<T>& b = self.parents[2];
        std::vector<T> dcols(static_cast<size_t>(k * p));
        for (int64_t s = 0; s < n; ++s) {
            const T* dy = self.grad.data() + s * c_out * oh * ow;
            if (x->requires_grad || w->requires_grad)
                detail::im2col(dy, c_out, oh, ow, kh, kw, stride, pad, h, wd, dcols.data());
            if (x->requires_grad) {
                blas::gemm(false, false, static_cast<int>(c_in), static_cast<int>(p),
                           static_cast<int>(k), T(1), w->value.data(), static_cast<int>(k),
                           dcols.data(), static_cast<int>(p), T(1),
                           x->ensure_grad().data() + s * c_in * p, static_cast<int>(p));
            }
            if (w->requires_grad) {
                blas::gemm(false, true, static_cast<int>(c_in), static_cast<int>(k),
                           static_cast<int>(p), T(1), x->value.data() + s * c_in * p,
                           static_cast<int>(p), dcols.data(), static_cast<int>(p), T(1),
                           w->ensure_grad().data(), static_cast<int>(k));
            }
            if (b->requires_grad) {
                Tensor<T>& pg = b->ensure_grad();
                for (int64_t c = 0; c < c_out; ++c) {
                    T s2 = 0;
                    const T* row = dy + c * oh * ow;
                    for (int64_t i = 0; i < oh * ow; ++i) s2 += row[i];
                    pg[c] += s2;
                }
            }
        }
    };
    return make_op<T>(std::move(out), {x, w, b}, std::move(bp));
}

// 2x2 stride-2 max pooling.
template <class T>
Var<T> maxpool2x2(const Var<T>& x) {
    const auto& xs = x->value.shape();
    int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    int64_t oh = h / 2, ow = w / 2;
    Tensor<T> out({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n * c * oh * ow));
    int64_t oi = 0;
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* plane = x->value.data() + (s * c + ch) * h * w;
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j, ++oi) {
                    int64_t base = 2 * i * w + 2 * j;
                    int64_t best = base;
                    T bv = plane[base];
                    for (auto off : {int64_t(1), w, w + 1}) {
                        if (plane[base + off] > bv) {
                            bv = plane[base + off];
                            best = base + off;
                        }
                    }
                    out[oi] = bv;
                    (*argmax)[oi] = (s * c + ch) * h * w + best;
                }
        }
    return make_op<T>(std::move(out), {x}, [argmax](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) pg[(*argmax)[i]] += self.grad[i];
    });
}

// Batch norm over (N,H,W) per channel. Running stats live outside the graph
// and are updated here when train=true; eval mode normalizes with them.
template <class T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                   T momentum = T(0.1), T eps = T(1e-5)) {
    const auto& xs = x->value.shape();
    int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    int64_t m = n * h * w;
    Tensor<T> out({n, c, h, w});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, c, h, w});
    auto invstd = std::make_shared<Tensor<T>>(std::vector<int64_t>{c});

    for (int64_t ch = 0; ch < c; ++ch) {
        T mu, var;
        if (train) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) {
                const T* plane = x->value.data() + (i * c + ch) * h * w;
                for (int64_t j = 0; j < h * w; ++j) s += plane[j];
            }
            mu = s / static_cast<T>(m);
            T sv = 0;
            for (int64_t i = 0; i < n; ++i) {
                const T* plane = x->value.data() + (i * c + ch) * h * w;
                for (int64_t j = 0; j < h * w; ++j) {
                    T d = plane[j] - mu;
                    sv += d * d;
                }
            }
            var = sv / static_cast<T>(m);
            running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
            running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * var;
        } else {
            mu = running_mean[ch];
            var = running_var[ch];
        }
        T is = T(1) / std::sqrt(var + eps);
        (*invstd)[ch] = is;
        T g = gamma->value[ch], bt = beta->value[ch];
        for (int64_t i = 0; i < n; ++i) {
            const T* src = x->value.data() + (i * c + ch) * h * w;
            T* xh = xhat->data() + (i * c + ch) * h * w;
            T* dst = out.data() + (i * c + ch) * h * w;
            for (int64_t j = 0; j < h * w; ++j) {
                xh[j] = (src[j] - mu) * is;
                dst[j] = g * xh[j] + bt;
            }
        }
    }

    auto bp = [n, c, h, w, m, xhat, invstd, train](Node<T>& self) {
        const Var<T>& x = self.parents[0];
        const Var<T>& gamma = self.parents[1];
        const Var<T>& beta = self.parents[2];
        for (int64_t ch = 0; ch < c; ++ch) {
            T sum_dy = 0, sum_dy_xhat = 0;
            for (int64_t i = 0; i < n; ++i) {
                const T* dy = self.grad.data() + (i * c + ch) * h * w;
                const T* xh = xhat->data() + (i * c + ch) * h * w;
                for (int64_t j = 0; j < h * w; ++j) {
                    sum_dy += dy[j];
                    sum_dy_xhat += dy[j] * xh[j];
                }
            }
            if (gamma->requires_grad) gamma->ensure_grad()[ch] += sum_dy_xhat;
            if (beta->requires_grad) beta->ensure_grad()[ch] += sum_dy;
            if (x->requires_grad) {
                Tensor<T>& pg = x->ensure_grad();
                T g = gamma->value[ch], is = (*invstd)[ch];
                if (train) {
                    T inv_m = T(1) / static_cast<T>(m);
                    for (int64_t i = 0; i < n; ++i) {
                        const T* dy = self.grad.data() + (i * c + ch) * h * w;
                        const T* xh = xhat->data() + (i * c + ch) * h * w;
                        T* dst = pg.data() + (i * c + ch) * h * w;
                        for (int64_t j = 0; j < h * w; ++j)
                            dst[j] +=
                                g * is * (dy[j] - inv_m * (sum_dy + xh[j] * sum_dy_xhat));
                    }
                } else {
                    for (int64_t i = 0; i < n; ++i) {
                        const T* dy = self.grad.data() + (i * c + ch) * h * w;
                        T* dst = pg.data() + (i * c + ch) * h * w;
                        for (int64_t j = 0; j < h * w; ++j) dst[j] += g * is * dy[j];
                    }
                }
            }
        }
    };
    return make_op<T>(std::move(out), {x, gamma, beta}, std::move(bp));
}

// Depthwise 1-D convolution with a fixed (non-learned) kernel, valid padding,
// along H (axis=2) or W (axis=3). Building block for Gaussian windows.
template <class T>
Var<T> blur1d(const Var<T>& x, const std::vector<T>& kernel, int axis) {
    const auto& xs = x->value.shape();
    int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    int64_t kl = static_cast<int64_t>(kernel.size());
    int64_t oh = (axis == 2) ? h - kl + 1 : h;
    int64_t ow = (axis == 3) ? w - kl + 1 : w;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("blur1d: kernel larger than image");
    Tensor<T> out({n, c, oh, ow});
    for (int64_t s = 0; s < n * c; ++s) {
        const T* src = x->value.data() + s * h * w;
        T* dst = out.data() + s * oh * ow;
        for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j) {
                T acc = 0;
                if (axis == 2)
                    for (int64_t t = 0; t < kl; ++t) acc += kernel[t] * src[(i + t) * w + j];
                else
                    for (int64_t t = 0; t < kl; ++t) acc += kernel[t] * src[i * w + j + t];
                dst[i * ow + j] = acc;
            }
    }
    return make_op<T>(std::move(out), {x}, [kernel, axis, h, w, oh, ow](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        int64_t kl = static_cast<int64_t>(kernel.size());
        int64_t planes = self.grad.numel() / (oh * ow);
        for (int64_t s = 0; s < planes; ++s) {
            const T* dy = self.grad.data() + s * oh * ow;
            T* dst = pg.data() + s * h * w;
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j) {
                    T g = dy[i * ow + j];
                    if (axis == 2)
                        for (int64_t t = 0; t < kl; ++t) dst[(i + t) * w + j] += kernel[t] * g;
                    else
                        for (int64_t t = 0; t < kl; ++t) dst[i * w + j + t] += kernel[t] * g;
                }
        }
    });
}

}  // namespace semadv::ad

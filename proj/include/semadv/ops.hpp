#pragma once

#include <algorithm>
#include <cmath>

#include "semadv/autodiff.hpp"
#include "semadv/blas.hpp"

// Differentiable operations on Vars: elementwise math, reductions, shape
// manipulation, dense linear algebra. Convolution-family ops live in
// conv_ops.hpp.
namespace semadv::ad {

namespace detail {
template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    shape_str(a->value.shape()) + " vs " +
                                    shape_str(b->value.shape()));
}

template <class T>
void accum(const Var<T>& p, const Tensor<T>& g) {
    if (!p->requires_grad) return;
    Tensor<T>& pg = p->ensure_grad();
    const T* src = g.data();
    T* dst = pg.data();
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}
}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "add");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        detail::accum(self.parents[0], self.grad);
        detail::accum(self.parents[1], self.grad);
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        detail::accum(self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor<T>& pg = self.parents[1]->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] -= self.grad[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        const Var<T>& a = self.parents[0];
        const Var<T>& b = self.parents[1];
        if (a->requires_grad) {
            Tensor<T>& pg = a->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor<T>& pg = b->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] * a->value[i];
        }
    });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "div");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        const Var<T>& a = self.parents[0];
        const Var<T>& b = self.parents[1];
        if (a->requires_grad) {
            Tensor<T>& pg = a->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] / b->value[i];
        }
        if (b->requires_grad) {
            Tensor<T>& pg = b->ensure_grad();
            for (int64_t i = 0; i < self.grad.numel(); ++i) {
                T bv = b->value[i];
                pg[i] -= self.grad[i] * a->value[i] / (bv * bv);
            }
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_op<T>(std::move(out), {a}, [s](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] * s;
    });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make_op<T>(std::move(out), {a},
                      [](Node<T>& self) { detail::accum(self.parents[0], self.grad); });
}

template <class T>
Var<T> neg(const Var<T>& a) {
    return scale(a, T(-1));
}

template <class T>
Var<T> log_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        const Tensor<T>& x = self.parents[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] / x[i];
    });
}

template <class T>
Var<T> exp_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i] * self.value[i];
    });
}

// sqrt(x + eps); eps keeps the derivative finite at zero.
template <class T>
Var<T> sqrt_op(const Var<T>& a, T eps = T(0)) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i] + eps);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            pg[i] += self.grad[i] * T(0.5) / self.value[i];
    });
}

// Clamp to [lo, hi]; gradient passes only where the input was interior.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
    return make_op<T>(std::move(out), {a}, [lo, hi](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        const Tensor<T>& x = self.parents[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (x[i] > lo && x[i] < hi) pg[i] += self.grad[i];
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) {
        T v = out[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            T y = self.value[i];
            pg[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

template <class T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(T(0), out[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        const Tensor<T>& x = self.parents[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (x[i] > T(0)) pg[i] += self.grad[i];
    });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < T(0)) out[i] *= slope;
    return make_op<T>(std::move(out), {a}, [slope](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        const Tensor<T>& x = self.parents[0]->value;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            pg[i] += self.grad[i] * (x[i] > T(0) ? T(1) : slope);
    });
}

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
    Tensor<T> out = a->value.reshaped(std::move(shape));
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i];
    });
}

// [N,C,H,W] -> [N, C*H*W]
template <class T>
Var<T> flatten(const Var<T>& a) {
    const auto& s = a->value.shape();
    int64_t n = s[0], f = a->value.numel() / std::max<int64_t>(1, s[0]);
    return reshape(a, {n, f});
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
    T s = 0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        T g = self.grad[0];
        for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
    });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
    int64_t n = a->value.numel();
    return scale(sum_all(a), T(1) / static_cast<T>(n));
}

// [N, F] -> [N], sum over columns.
template <class T>
Var<T> row_sum(const Var<T>& a) {
    int64_t n = a->value.dim(0), f = a->value.numel() / n;
    Tensor<T> out({n});
    for (int64_t r = 0; r < n; ++r) {
        T s = 0;
        const T* row = a->value.data() + r * f;
        for (int64_t c = 0; c < f; ++c) s += row[c];
        out[r] = s;
    }
    return make_op<T>(std::move(out), {a}, [f](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        int64_t n = self.grad.numel();
        for (int64_t r = 0; r < n; ++r) {
            T g = self.grad[r];
            T* row = pg.data() + r * f;
            for (int64_t c = 0; c < f; ++c) row[c] += g;
        }
    });
}

// Per-sample L2 norm of an arbitrary-rank tensor flattened per leading dim.
template <class T>
Var<T> row_l2norm(const Var<T>& a) {
    int64_t n = a->value.dim(0), f = a->value.numel() / n;
    Var<T> flat = reshape(a, {n, f});
    return sqrt_op(row_sum(mul(flat, flat)), T(1e-24));
}

// out[r] = x[r, idx[r]]
template <class T>
Var<T> gather_cols(const Var<T>& a, std::vector<int64_t> idx) {
    int64_t n = a->value.dim(0), k = a->value.dim(1);
    if (static_cast<int64_t>(idx.size()) != n)
        throw std::invalid_argument("gather_cols: index count mismatch");
    Tensor<T> out({n});
    for (int64_t r = 0; r < n; ++r) out[r] = a->value.at2(r, idx[r]);
    return make_op<T>(std::move(out), {a}, [idx, k](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t r = 0; r < self.grad.numel(); ++r) pg[r * k + idx[r]] += self.grad[r];
    });
}

// Column-wise concatenation of [N, Fi] blocks.
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    int64_t n = parts.at(0)->value.dim(0);
    int64_t ftot = 0;
    for (auto& p : parts) {
        if (p->value.dim(0) != n) throw std::invalid_argument("concat_cols: row mismatch");
        ftot += p->value.dim(1);
    }
    Tensor<T> out({n, ftot});
    int64_t off = 0;
    for (auto& p : parts) {
        int64_t f = p->value.dim(1);
        for (int64_t r = 0; r < n; ++r)
            std::copy_n(p->value.data() + r * f, f, out.data() + r * ftot + off);
        off += f;
    }
    return make_op<T>(std::move(out), parts, [ftot](Node<T>& self) {
        int64_t n = self.grad.dim(0);
        int64_t off = 0;
        for (auto& p : self.parents) {
            int64_t f = p->value.dim(1);
            if (p->requires_grad) {
                Tensor<T>& pg = p->ensure_grad();
                for (int64_t r = 0; r < n; ++r)
                    for (int64_t c = 0; c < f; ++c) pg[r * f + c] += self.grad[r * ftot + off + c];
            }
            off += f;
        }
    });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int64_t c0, int64_t c1) {
    int64_t n = a->value.dim(0), f = a->value.dim(1);
    if (c0 < 0 || c1 > f || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    int64_t w = c1 - c0;
    Tensor<T> out({n, w});
    for (int64_t r = 0; r < n; ++r)
        std::copy_n(a->value.data() + r * f + c0, w, out.data() + r * w);
    return make_op<T>(std::move(out), {a}, [c0, w, f](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        int64_t n = self.grad.dim(0);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t c = 0; c < w; ++c) pg[r * f + c0 + c] += self.grad[r * w + c];
    });
}

// y = x * W^T + b, with x [N,I], W [O,I], b [O].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    int64_t n = x->value.dim(0), in = x->value.dim(1), out_f = w->value.dim(0);
    if (w->value.dim(1) != in) throw std::invalid_argument("linear: weight shape mismatch");
    Tensor<T> out({n, out_f});
    blas::gemm(false, true, static_cast<int>(n), static_cast<int>(out_f), static_cast<int>(in),
               T(1), x->value.data(), static_cast<int>(in), w->value.data(), static_cast<int>(in),
               T(0), out.data(), static_cast<int>(out_f));
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < out_f; ++c) out[r * out_f + c] += b->value[c];
    return make_op<T>(std::move(out), {x, w, b}, [n, in, out_f](Node<T>& self) {
        const Var<T>& x = self.parents[0];
        const Var<T>& w = self.parents[1];
        const Var<T>& b = self.parents[2];
        if (x->requires_grad) {
            Tensor<T>& pg = x->ensure_grad();
            blas::gemm(false, false, static_cast<int>(n), static_cast<int>(in),
                       static_cast<int>(out_f), T(1), self.grad.data(), static_cast<int>(out_f),
                       w->value.data(), static_cast<int>(in), T(1), pg.data(),
                       static_cast<int>(in));
        }
        if (w->requires_grad) {
            Tensor<T>& pg = w->ensure_grad();
            blas::gemm(true, false, static_cast<int>(out_f), static_cast<int>(in),
                       static_cast<int>(n), T(1), self.grad.data(), static_cast<int>(out_f),
                       x->value.data(), static_cast<int>(in), T(1), pg.data(),
                       static_cast<int>(in));
        }
        if (b->requires_grad) {
            Tensor<T>& pg = b->ensure_grad();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < out_f; ++c) pg[c] += self.grad[r * out_f + c];
        }
    });
}

// Row-wise softmax with max subtraction.
template <class T>
Var<T> softmax_rows(const Var<T>& a) {
    int64_t n = a->value.dim(0), k = a->value.dim(1);
    Tensor<T> out({n, k});
    for (int64_t r = 0; r < n; ++r) {
        const T* row = a->value.data() + r * k;
        T mx = row[0];
        for (int64_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
        T s = 0;
        for (int64_t c = 0; c < k; ++c) {
            T e = std::exp(row[c] - mx);
            out[r * k + c] = e;
            s += e;
        }
        for (int64_t c = 0; c < k; ++c) out[r * k + c] /= s;
    }
    return make_op<T>(std::move(out), {a}, [n, k](Node<T>& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor<T>& pg = self.parents[0]->ensure_grad();
        for (int64_t r = 0; r < n; ++r) {
            const T* y = self.value.data() + r * k;
            const T* dy = self.grad.data() + r * k;
            T dot = 0;
            for (int64_t c = 0; c < k; ++c) dot += y[c] * dy[c];
            for (int64_t c = 0; c < k; ++c) pg[r * k + c] += y[c] * (dy[c] - dot);
        }
    });
}

}  // namespace semadv::ad

#pragma once

#include <vector>

#include "semadv/error.hpp"
#include "semadv/ops.hpp"
#include "semadv/rng.hpp"

// Latent-code data model: z1 (noise, Gaussian), z2 (label, one-hot or
// probability simplex), z3 (semantic, uniform in [a,b]).
namespace semadv::latent {

struct Dims {
    int64_t d1 = 132, d2 = 10, d3 = 2;
};

struct Bounds {
    double a = -1.0, b = 1.0;
};

// One latent code; batched variants below keep the three blocks as row
// matrices instead.
struct LatentCode {
    Tensor<float> z1, z2, z3;
};

struct BatchCodes {
    Tensor<float> z1;  // [m, D1]
    Tensor<float> z2;  // [m, D2]
    Tensor<float> z3;  // [m, D3]
};

struct GaussianParams {
    Tensor<float> mu, log_var;  // [m, D1]
};

// z1 ~ N(0, I), z3 ~ U(a, b) per component; z2 left zero (filled from labels).
inline BatchCodes sample_priors(int64_t m, const Dims& dims, const Bounds& bounds,
                                rng::Stream& rng) {
    BatchCodes c;
    c.z1 = Tensor<float>({m, dims.d1});
    for (int64_t i = 0; i < c.z1.numel(); ++i) c.z1[i] = static_cast<float>(rng.normal());
    c.z2 = Tensor<float>({m, dims.d2});
    c.z3 = Tensor<float>({m, dims.d3});
    for (int64_t i = 0; i < c.z3.numel(); ++i)
        c.z3[i] = static_cast<float>(rng.uniform(bounds.a, bounds.b));
    return c;
}

inline Tensor<float> one_hot(int64_t y, int64_t d2) {
    if (y < 0 || y >= d2)
        throw DataError("one_hot: class index " + std::to_string(y) + " out of range [0," +
                        std::to_string(d2) + ")");
    Tensor<float> v({d2});
    v[y] = 1.0f;
    return v;
}

inline Tensor<float> one_hot_batch(const std::vector<int64_t>& labels, int64_t d2) {
    Tensor<float> v({static_cast<int64_t>(labels.size()), d2});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= d2)
            throw DataError("one_hot: class index " + std::to_string(labels[i]) +
                            " out of range [0," + std::to_string(d2) + ")");
        v.at2(static_cast<int64_t>(i), labels[i]) = 1.0f;
    }
    return v;
}

// Value-level reparameterization: z1 = mu + exp(log_var / 2) * eps.
// Deterministic mode returns mu.
inline Tensor<float> reparameterize(const GaussianParams& p, rng::Stream& rng,
                                    bool deterministic = false) {
    Tensor<float> out = p.mu;
    if (deterministic) return out;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] += std::exp(p.log_var[i] * 0.5f) * static_cast<float>(rng.normal());
    return out;
}

// Graph-level reparameterization for training (gradients flow into mu and
// log_var; eps is a constant draw).
template <class T>
ad::Var<T> reparameterize_var(const ad::Var<T>& mu, const ad::Var<T>& log_var,
                              const Tensor<T>& eps) {
    ad::Var<T> std = ad::exp_op(ad::scale(log_var, T(0.5)));
    return ad::add(mu, ad::mul(std, ad::make_const(eps)));
}

template <class T>
Tensor<T> sample_eps(const std::vector<int64_t>& shape, rng::Stream& rng) {
    Tensor<T> eps(shape);
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<T>(rng.normal());
    return eps;
}

struct ClampResult {
    Tensor<float> value;
    bool clamped = false;
};

inline ClampResult clamp_z3(const Tensor<float>& z3, double a, double b) {
    if (!(a < b)) throw DataError("clamp_z3: requires a < b");
    ClampResult r{z3, false};
    for (int64_t i = 0; i < r.value.numel(); ++i) {
        float lo = static_cast<float>(a), hi = static_cast<float>(b);
        if (r.value[i] < lo) {
            r.value[i] = lo;
            r.clamped = true;
        } else if (r.value[i] > hi) {
            r.value[i] = hi;
            r.clamped = true;
        }
    }
    return r;
}

}  // namespace semadv::latent

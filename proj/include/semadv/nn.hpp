#pragma once

#include <string>
#include <utility>

#include "semadv/conv_ops.hpp"
#include "semadv/rng.hpp"

// Thin layer structs over the op library. Networks are plain structs with
// hand-written forward passes; layers only bundle parameters and their
// initialization. Parameter registration goes through ParamSet so that the
// optimizer and the checkpoint writer see one flat named list.
namespace semadv::nn {

using ad::Var;

template <class T>
struct ParamSet {
    std::vector<std::pair<std::string, Var<T>>> trainable;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;  // e.g. BN running stats

    void add(std::string name, const Var<T>& v) { trainable.emplace_back(std::move(name), v); }
    void add_buffer(std::string name, Tensor<T>* t) { buffers.emplace_back(std::move(name), t); }

    std::vector<Var<T>> vars() const {
        std::vector<Var<T>> out;
        out.reserve(trainable.size());
        for (auto& [n, v] : trainable) out.push_back(v);
        return out;
    }
};

template <class T>
Var<T> new_param(std::vector<int64_t> shape, rng::Stream& rng, double stddev, double mean = 0.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(mean + stddev * rng.normal());
    return ad::make_var(std::move(t), true);
}

template <class T>
struct Conv2d {
    Var<T> w, b;
    int64_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int64_t c_in, int64_t c_out, int64_t k, int64_t stride_, int64_t pad_,
           rng::Stream& rng, double stddev = 0.02)
        : w(new_param<T>({c_out, c_in, k, k}, rng, stddev)),
          b(ad::make_var(Tensor<T>::zeros({c_out}), true)),
          stride(stride_),
          pad(pad_) {}

    Var<T> operator()(const Var<T>& x) const { return ad::conv2d(x, w, b, stride, pad); }

    void collect(const std::string& prefix, ParamSet<T>& ps) {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <class T>
struct ConvTranspose2d {
    Var<T> w, b;
    int64_t stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int64_t c_in, int64_t c_out, int64_t k, int64_t stride_, int64_t pad_,
                    rng::Stream& rng, double stddev = 0.02)
        : w(new_param<T>({c_in, c_out, k, k}, rng, stddev)),
          b(ad::make_var(Tensor<T>::zeros({c_out}), true)),
          stride(stride_),
          pad(pad_) {}

    Var<T> operator()(const Var<T>& x) const { return ad::conv_transpose2d(x, w, b, stride, pad); }

    void collect(const std::string& prefix, ParamSet<T>& ps) {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <class T>
struct Linear {
    Var<T> w, b;

    Linear() = default;
    Linear(int64_t in, int64_t out, rng::Stream& rng, double stddev = 0.02)
        : w(new_param<T>({out, in}, rng, stddev)),
          b(ad::make_var(Tensor<T>::zeros({out}), true)) {}

    Var<T> operator()(const Var<T>& x) const { return ad::linear(x, w, b); }

    void collect(const std::string& prefix, ParamSet<T>& ps) {
        ps.add(prefix + ".w", w);
        ps.add(prefix + ".b", b);
    }
};

template <class T>
struct BatchNorm2d {
    Var<T> gamma, beta;
    Tensor<T> running_mean, running_var;

    BatchNorm2d() = default;
    BatchNorm2d(int64_t c, rng::Stream& rng)
        : gamma(new_param<T>({c}, rng, 0.02, 1.0)),
          beta(ad::make_var(Tensor<T>::zeros({c}), true)),
          running_mean(Tensor<T>::zeros({c})),
          running_var(Tensor<T>::full({c}, T(1))) {}

    Var<T> operator()(const Var<T>& x, bool train) {
        return ad::batchnorm2d(x, gamma, beta, running_mean, running_var, train);
    }

    void collect(const std::string& prefix, ParamSet<T>& ps) {
        ps.add(prefix + ".gamma", gamma);
        ps.add(prefix + ".beta", beta);
        ps.add_buffer(prefix + ".running_mean", &running_mean);
        ps.add_buffer(prefix + ".running_var", &running_var);
    }
};

}  // namespace semadv::nn

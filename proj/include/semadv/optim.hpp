#pragma once

#include <cmath>

#include "semadv/nn.hpp"

namespace semadv::nn {

// Adam over a fixed parameter list. Moment buffers are exposed by name so
// checkpoints can persist them and resumed runs continue bit-exactly.
template <class T>
class Adam {
public:
    Adam() = default;
    Adam(std::vector<std::pair<std::string, Var<T>>> params, double lr, double beta1,
         double beta2, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& [name, v] : params_) {
            m_.push_back(Tensor<T>::zeros(v->value.shape()));
            v_.push_back(Tensor<T>::zeros(v->value.shape()));
        }
    }

    void zero_grad() {
        for (auto& [name, v] : params_) ad::zero_grad(v);
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Var<T>& p = params_[i].second;
            if (p->grad.empty()) continue;
            T* w = p->value.data();
            const T* g = p->grad.data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (int64_t j = 0; j < p->value.numel(); ++j) {
                m[j] = static_cast<T>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
                v[j] = static_cast<T>(beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j]);
                double mhat = m[j] / bc1;
                double vhat = v[j] / bc2;
                w[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    // State exposure for checkpointing, keyed "<param>.m" / "<param>.v".
    void export_state(std::vector<std::pair<std::string, Tensor<T>*>>& out,
                      const std::string& prefix) {
        for (size_t i = 0; i < params_.size(); ++i) {
            out.emplace_back(prefix + "/" + params_[i].first + ".m", &m_[i]);
            out.emplace_back(prefix + "/" + params_[i].first + ".v", &v_[i]);
        }
    }
    int64_t& step_count() { return t_; }
    double& lr() { return lr_; }

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
    std::vector<Tensor<T>> m_, v_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

}  // namespace semadv::nn

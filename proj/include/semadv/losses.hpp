#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "semadv/conv_ops.hpp"

// Scalar training objectives. Every quantity here is written in minimized
// form: adversarial-game terms appear as negated (non-saturating) logs and
// similarity terms as dissimilarities, so a single gradient-descent loop can
// drive all of them. Interior clamping at LOG_EPS keeps every log finite.
namespace semadv::losses {

using ad::Var;

inline constexpr double LOG_EPS = 1e-6;

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;  // L for [0,1] images
    double c1 = 1e-4;            // (0.01 * L)^2
    double c2 = 9e-4;            // (0.03 * L)^2

    static SsimParams for_range(double range) {
        SsimParams p;
        p.dynamic_range = range;
        p.c1 = (0.01 * range) * (0.01 * range);
        p.c2 = (0.03 * range) * (0.03 * range);
        return p;
    }
};

// One loss = named unweighted terms plus the weighted total. The reported
// total is the exact weighted sum of the reported terms (by construction);
// the graph-side total used for gradients lives in `total_var`.
template <class T>
struct LossParts {
    struct Term {
        std::string name;
        double value;
        double weight;
    };
    std::vector<Term> terms;
    Var<T> total_var;

    void add(const std::string& name, const Var<T>& v, double weight) {
        terms.push_back({name, static_cast<double>(v->value[0]), weight});
        Var<T> scaled = ad::scale(v, static_cast<T>(weight));
        total_var = total_var ? ad::add(total_var, scaled) : scaled;
    }

    double total() const {
        double s = 0;
        for (auto& t : terms) s += t.weight * t.value;
        return s;
    }
};

template <class T>
std::vector<T> gaussian_kernel(int window, double sigma) {
    std::vector<T> k(static_cast<size_t>(window));
    double c = (window - 1) / 2.0, sum = 0;
    for (int i = 0; i < window; ++i) {
        double v = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        k[static_cast<size_t>(i)] = static_cast<T>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<T>(v / sum);
    return k;
}

// Mean SSIM over channels and sliding Gaussian windows (valid placement).
// Symmetric in its arguments; equals 1 exactly for identical inputs.
template <class T>
Var<T> ssim_index(const Var<T>& x1, const Var<T>& x2, const SsimParams& p = {}) {
    if (!x1->value.same_shape(x2->value))
        throw std::invalid_argument("ssim_index: shape mismatch");
    if (x1->value.rank() != 4) throw std::invalid_argument("ssim_index: expected NCHW");
    if (x1->value.dim(2) < p.window || x1->value.dim(3) < p.window)
        throw std::invalid_argument("ssim_index: image smaller than window");

    auto k = gaussian_kernel<T>(p.window, p.sigma);
    auto blur = [&](const Var<T>& v) { return ad::blur1d(ad::blur1d(v, k, 2), k, 3); };

    Var<T> mu1 = blur(x1), mu2 = blur(x2);
    Var<T> mu1sq = ad::mul(mu1, mu1), mu2sq = ad::mul(mu2, mu2);
    Var<T> mu12 = ad::mul(mu1, mu2);
    Var<T> var1 = ad::sub(blur(ad::mul(x1, x1)), mu1sq);
    Var<T> var2 = ad::sub(blur(ad::mul(x2, x2)), mu2sq);
    Var<T> cov = ad::sub(blur(ad::mul(x1, x2)), mu12);

    T c1 = static_cast<T>(p.c1), c2 = static_cast<T>(p.c2);
    Var<T> num = ad::mul(ad::add_scalar(ad::scale(mu12, T(2)), c1),
                         ad::add_scalar(ad::scale(cov, T(2)), c2));
    Var<T> den = ad::mul(ad::add_scalar(ad::add(mu1sq, mu2sq), c1),
                         ad::add_scalar(ad::add(var1, var2), c2));
    return ad::mean_all(ad::div(num, den));
}

// SSIM loss: 1 - mean SSIM. Zero for identical images, lower = more similar.
template <class T>
Var<T> sl(const Var<T>& x1, const Var<T>& x2, const SsimParams& p = {}) {
    return ad::add_scalar(ad::neg(ssim_index(x1, x2, p)), T(1));
}

template <class T>
double sl_value(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& p = {}) {
    return static_cast<double>(sl(ad::make_const(a), ad::make_const(b), p)->value[0]);
}

template <class T>
double l2_distance(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

// Mean over the batch of -sum_k t[k] * ln p[k]. Targets are constants.
template <class T>
Var<T> cross_entropy_mean(const Var<T>& probs, const Tensor<T>& targets) {
    Var<T> logp = ad::log_op(ad::clamp(probs, static_cast<T>(LOG_EPS), T(1)));
    Var<T> weighted = ad::mul(logp, ad::make_const(targets));
    return ad::mean_all(ad::neg(ad::row_sum(weighted)));
}

// KL( N(mu, diag exp(logvar)) || N(0, I) ), mean over the batch.
template <class T>
Var<T> kl_standard_normal(const Var<T>& mu, const Var<T>& logvar) {
    Var<T> term = ad::sub(ad::add(ad::mul(mu, mu), ad::exp_op(logvar)), logvar);
    Var<T> per_sample = ad::row_sum(ad::add_scalar(term, T(-1)));
    return ad::scale(ad::mean_all(per_sample), T(0.5));
}

namespace detail {
template <class T>
Var<T> mean_neg_log(const Var<T>& scores) {
    return ad::mean_all(
        ad::neg(ad::log_op(ad::clamp(scores, static_cast<T>(LOG_EPS), T(1) - static_cast<T>(LOG_EPS)))));
}
template <class T>
Var<T> mean_neg_log1m(const Var<T>& scores) {
    Var<T> one_minus = ad::add_scalar(ad::neg(scores), T(1));
    return mean_neg_log(one_minus);
}
}  // namespace detail

// Discriminator objective in minimized form:
//   -[ ln D(x) + ln sqrt((1 - D(x_R)) (1 - D(x_SO))) ]
// averaged over the batch. All-0.5 scores give 2 ln 2.
template <class T>
LossParts<T> loss_discriminator(const Var<T>& d_real, const Var<T>& d_recon,
                                const Var<T>& d_variant) {
    LossParts<T> parts;
    parts.add("d_real", detail::mean_neg_log(d_real), 1.0);
    parts.add("d_fake_recon", detail::mean_neg_log1m(d_recon), 0.5);
    parts.add("d_fake_variant", detail::mean_neg_log1m(d_variant), 0.5);
    return parts;
}

struct Weights {
    double lambda_a = 0, lambda_b = 0, lambda_c = 0, lambda_d = 0, lambda_e = 0, lambda_f = 0,
           lambda_g = 0, lambda_h = 0, lambda_k = 0;
};

// Generator reconstruction objective: non-saturating GAN term on the
// reconstruction plus feature matching, channel-mean SSIM dissimilarity and
// per-sample L2 distance to the raw image.
template <class T>
LossParts<T> loss_g_recon(const Var<T>& x, const Var<T>& x_recon, const Var<T>& feat_raw,
                          const Var<T>& feat_recon, const Var<T>& d_recon, const Weights& w,
                          const SsimParams& sp = {}) {
    LossParts<T> parts;
    parts.add("recon_gan", detail::mean_neg_log(d_recon), 1.0);
    parts.add("recon_feat", ad::mean_all(ad::row_l2norm(ad::sub(feat_recon, feat_raw))),
              w.lambda_a);
    parts.add("recon_ssim", sl(x_recon, x, sp), w.lambda_b);
    parts.add("recon_l2", ad::mean_all(ad::row_l2norm(ad::sub(x_recon, x))), w.lambda_c);
    return parts;
}

enum class Z3Target { sampled, decoded_recon };

// Mutual-information objective for semantic variants: non-saturating GAN
// term, label cross-entropy, and the L2 pull of the decoded semantic code
// toward its target (the sampled code by default).
template <class T>
LossParts<T> loss_g_info(const Var<T>& d_variant, const Var<T>& class_probs_variant,
                         const Tensor<T>& z2_target, const Var<T>& z3_decoded_variant,
                         const Tensor<T>& z3_target, const Weights& w) {
    LossParts<T> parts;
    parts.add("info_gan", detail::mean_neg_log(d_variant), 1.0);
    parts.add("info_ce", cross_entropy_mean(class_probs_variant, z2_target), w.lambda_e);
    parts.add("info_z3",
              ad::mean_all(ad::row_l2norm(ad::sub(z3_decoded_variant, ad::make_const(z3_target)))),
              w.lambda_d);
    return parts;
}

// Decoder objective: the info objective plus supervised cross-entropy on the
// raw image.
template <class T>
LossParts<T> loss_q(const LossParts<T>& info, const Var<T>& class_probs_raw,
                    const Tensor<T>& z2_target, const Weights& w) {
    LossParts<T> parts = info;
    parts.add("q_ce", cross_entropy_mean(class_probs_raw, z2_target), w.lambda_f);
    return parts;
}

// Encoder objective: the reconstruction objective plus the KL pull of the
// posterior toward the latent prior.
template <class T>
LossParts<T> loss_e(const LossParts<T>& recon, const Var<T>& mu, const Var<T>& logvar,
                    const Weights& w) {
    LossParts<T> parts = recon;
    parts.add("e_kl", kl_standard_normal(mu, logvar), w.lambda_g);
    return parts;
}

// Query-based attack objective. With p the victim's probability of the
// legitimate target label, the per-sample term is -ln(1 - p) (the exp of the
// negated cross-entropy collapses to p), clamped interior; plus the SSIM
// dissimilarity anchor to the raw image. Strictly decreasing in the victim's
// cross-entropy, so minimizing it drives the victim away from the target.
template <class T>
LossParts<T> loss_g_adv(const Var<T>& victim_probs, const std::vector<int64_t>& target_labels,
                        const Var<T>& x_variant, const Var<T>& x, const Weights& w,
                        const SsimParams& sp = {}) {
    LossParts<T> parts;
    Var<T> p_target = ad::gather_cols(victim_probs, target_labels);
    Var<T> clamped =
        ad::clamp(p_target, static_cast<T>(LOG_EPS), T(1) - static_cast<T>(LOG_EPS));
    Var<T> one_minus = ad::add_scalar(ad::neg(clamped), T(1));
    parts.add("adv_escape", ad::mean_all(ad::neg(ad::log_op(one_minus))), w.lambda_h);
    parts.add("adv_ssim", sl(x_variant, x, sp), w.lambda_k);
    return parts;
}

}  // namespace semadv::losses

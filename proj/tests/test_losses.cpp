#include "test_util.hpp"

#include "semadv/losses.hpp"

using namespace semadv;
using namespace testutil;
using ad::Var;
namespace L = semadv::losses;

namespace {

// Independent straight-from-formula SSIM oracle: explicit Gaussian-weighted
// window statistics, no shared code with the library implementation.
double ssim_oracle(const Tensor<double>& x1, const Tensor<double>& x2, int window, double sigma,
                   double c1, double c2) {
    int64_t n = x1.dim(0), c = x1.dim(1), h = x1.dim(2), w = x1.dim(3);
    std::vector<double> g(static_cast<size_t>(window) * window);
    double gsum = 0, center = (window - 1) / 2.0;
    for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
            double v = std::exp(-((i - center) * (i - center) + (j - center) * (j - center)) /
                                (2 * sigma * sigma));
            g[static_cast<size_t>(i * window + j)] = v;
            gsum += v;
        }
    for (auto& v : g) v /= gsum;

    double total = 0;
    int64_t count = 0;
    for (int64_t s = 0; s < n * c; ++s) {
        const double* p1 = x1.data() + s * h * w;
        const double* p2 = x2.data() + s * h * w;
        for (int64_t oy = 0; oy + window <= h; ++oy)
            for (int64_t ox = 0; ox + window <= w; ++ox) {
                double mu1 = 0, mu2 = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        double wt = g[static_cast<size_t>(i * window + j)];
                        mu1 += wt * p1[(oy + i) * w + ox + j];
                        mu2 += wt * p2[(oy + i) * w + ox + j];
                    }
                double v1 = 0, v2 = 0, cov = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        double wt = g[static_cast<size_t>(i * window + j)];
                        double a = p1[(oy + i) * w + ox + j];
                        double b = p2[(oy + i) * w + ox + j];
                        v1 += wt * a * a;
                        v2 += wt * b * b;
                        cov += wt * a * b;
                    }
                v1 -= mu1 * mu1;
                v2 -= mu2 * mu2;
                cov -= mu1 * mu2;
                total += ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) /
                         ((mu1 * mu1 + mu2 * mu2 + c1) * (v1 + v2 + c2));
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

Var<double> probs_of(const std::vector<double>& v) {
    return ad::make_var(Tensor<double>({static_cast<int64_t>(v.size())}, std::vector<double>(v)),
                        true);
}

}  // namespace

TEST_CASE("ssim: identity, constants, closed forms") {
    rng::Stream rs(1, "ssim");
    auto x = ad::make_const(random_tensor<double>({2, 1, 16, 16}, rs, 0.0, 1.0));
    CHECK(L::ssim_index(x, x)->value[0] == 1.0);  // exact
    CHECK(L::sl(x, x)->value[0] == 0.0);

    auto zeros = ad::make_const(Tensor<double>::zeros({1, 1, 16, 16}));
    auto ones = ad::make_const(Tensor<double>::full({1, 1, 16, 16}, 1.0));
    double s = L::ssim_index(zeros, ones)->value[0];
    CHECK(s == doctest::Approx(1e-4 / (1.0 + 1e-4)).epsilon(1e-9));  // c1/(1+c1)
    double sl01 = L::sl(zeros, ones)->value[0];
    CHECK(std::abs(sl01 - 0.9999) < 1e-6);
}

TEST_CASE("ssim matches the independent windowed oracle") {
    rng::Stream rs(2, "ssim");
    auto a = random_tensor<double>({2, 1, 16, 16}, rs, 0.0, 1.0);
    auto b = random_tensor<double>({2, 1, 16, 16}, rs, 0.0, 1.0);
    double lib = L::ssim_index(ad::make_const(a), ad::make_const(b))->value[0];
    double oracle = ssim_oracle(a, b, 11, 1.5, 1e-4, 9e-4);
    CHECK(std::abs(lib - oracle) < 1e-6);

    // multi-channel input
    auto a3 = random_tensor<double>({1, 3, 12, 12}, rs, 0.0, 1.0);
    auto b3 = random_tensor<double>({1, 3, 12, 12}, rs, 0.0, 1.0);
    double lib3 = L::ssim_index(ad::make_const(a3), ad::make_const(b3))->value[0];
    double oracle3 = ssim_oracle(a3, b3, 11, 1.5, 1e-4, 9e-4);
    CHECK(std::abs(lib3 - oracle3) < 1e-6);
}

TEST_CASE("ssim is symmetric to the last bit and errors on bad shapes") {
    rng::Stream rs(3, "ssim");
    auto a = ad::make_const(random_tensor<double>({1, 1, 16, 16}, rs, 0.0, 1.0));
    auto b = ad::make_const(random_tensor<double>({1, 1, 16, 16}, rs, 0.0, 1.0));
    double ab = L::ssim_index(a, b)->value[0];
    double ba = L::ssim_index(b, a)->value[0];
    CHECK(std::abs(ab - ba) <= 1e-12);

    auto c = ad::make_const(Tensor<double>::zeros({1, 1, 8, 16}));
    CHECK_THROWS_AS((void)L::ssim_index(a, c), std::invalid_argument);
    auto tiny = ad::make_const(Tensor<double>::zeros({1, 1, 8, 8}));
    CHECK_THROWS_AS((void)L::ssim_index(tiny, tiny), std::invalid_argument);
}

TEST_CASE("discriminator loss: closed forms and gradient") {
    auto half = [] { return probs_of({0.5, 0.5}); };
    auto d_real = half(), d_rec = half(), d_var = half();
    auto parts = L::loss_discriminator(d_real, d_rec, d_var);
    CHECK(parts.total() == doctest::Approx(1.3863).epsilon(1e-4));
    CHECK(std::abs(parts.total() - 2.0 * std::log(2.0)) < 1e-6);

    // optimum: real scored ~1, fakes scored ~0
    auto good = L::loss_discriminator(probs_of({1.0 - 1e-6}), probs_of({1e-6}), probs_of({1e-6}));
    CHECK(good.total() < 1e-5);

    rng::Stream rs(4, "dl");
    auto a = ad::make_var(random_tensor<double>({6}, rs, 0.2, 0.8), true);
    auto b = ad::make_var(random_tensor<double>({6}, rs, 0.2, 0.8), true);
    auto c = ad::make_var(random_tensor<double>({6}, rs, 0.2, 0.8), true);
    gradcheck([&] { return L::loss_discriminator(a, b, c).total_var; }, {a, b, c});
}

TEST_CASE("reconstruction loss: degenerate weights, perfect reconstruction, term oracle") {
    rng::Stream rs(5, "gr");
    auto x = ad::make_const(random_tensor<double>({2, 1, 16, 16}, rs, 0.0, 1.0));
    auto feat = ad::make_const(random_tensor<double>({2, 8}, rs));

    L::Weights w0;  // all lambdas zero
    auto parts0 = L::loss_g_recon(x, x, feat, feat, probs_of({0.5, 0.5}), w0);
    CHECK(parts0.total() == doctest::Approx(0.6931).epsilon(1e-4));

    L::Weights w;
    w.lambda_a = 1.0;
    w.lambda_b = 1.0;
    w.lambda_c = 1.5;
    auto perfect = L::loss_g_recon(x, x, feat, feat, probs_of({1.0 - 1e-6, 1.0 - 1e-6}), w);
    CHECK(perfect.total() < 1e-4);

    // term-by-term oracle on a random batch
    auto xr = ad::make_const(random_tensor<double>({2, 1, 16, 16}, rs, 0.0, 1.0));
    auto fr = ad::make_const(random_tensor<double>({2, 8}, rs));
    auto score = probs_of({0.3, 0.6});
    auto parts = L::loss_g_recon(x, xr, feat, fr, score, w);
    double gan = -(std::log(0.3) + std::log(0.6)) / 2.0;
    auto l2_of = [](const Tensor<double>& a, const Tensor<double>& b, int64_t m) {
        double acc = 0;
        int64_t sz = a.numel() / m;
        for (int64_t i = 0; i < m; ++i) {
            double s = 0;
            for (int64_t j = 0; j < sz; ++j) {
                double d = a[i * sz + j] - b[i * sz + j];
                s += d * d;
            }
            acc += std::sqrt(s + 1e-24);
        }
        return acc / static_cast<double>(m);
    };
    double feat_term = l2_of(fr->value, feat->value, 2);
    double ssim_term = 1.0 - ssim_oracle(xr->value, x->value, 11, 1.5, 1e-4, 9e-4);
    double l2_term = l2_of(xr->value, x->value, 2);
    double expected = gan + 1.0 * feat_term + 1.0 * ssim_term + 1.5 * l2_term;
    CHECK(parts.total() == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("mutual-information loss: closed forms and target modes") {
    L::Weights w;
    w.lambda_e = 0.0;
    w.lambda_d = 0.0;
    Tensor<double> z2({1, 10});
    z2.at2(0, 3) = 1.0;
    auto uniform = ad::make_var(Tensor<double>::full({1, 10}, 0.1), true);
    auto z3d = ad::make_var(Tensor<double>({1, 2}, {0.1, -0.2}), true);
    Tensor<double> z3t({1, 2}, {0.1, -0.2});

    auto parts = L::loss_g_info(probs_of({0.5}), uniform, z2, z3d, z3t, w);
    CHECK(parts.total() == doctest::Approx(0.6931).epsilon(1e-4));

    // uniform decoder output: cross-entropy is ln(10)
    L::Weights w2 = w;
    w2.lambda_e = 0.5;
    auto parts2 = L::loss_g_info(probs_of({0.5}), uniform, z2, z3d, z3t, w2);
    CHECK(parts2.total() == doctest::Approx(0.6931 + 0.5 * std::log(10.0)).epsilon(1e-4));
    CHECK(parts2.total() == doctest::Approx(1.8444).epsilon(1e-4));

    // the two target modes coincide when the decoded recon code equals the
    // sampled code
    L::Weights w3 = w;
    w3.lambda_d = 2.0;
    auto sampled = L::loss_g_info(probs_of({0.5}), uniform, z2, z3d, z3t, w3);
    Tensor<double> decoded_recon = z3t;  // coincidence case
    auto decoded = L::loss_g_info(probs_of({0.5}), uniform, z2, z3d, decoded_recon, w3);
    CHECK(sampled.total() == decoded.total());
}

TEST_CASE("decoder loss adds the supervised term") {
    L::Weights w;
    w.lambda_f = 1.0;
    Tensor<double> z2({1, 10});
    z2.at2(0, 0) = 1.0;
    auto uniform = ad::make_var(Tensor<double>::full({1, 10}, 0.1), true);
    L::LossParts<double> info;
    info.add("info_stub", ad::make_var(Tensor<double>::scalar(0.6931), false), 1.0);

    auto q = L::loss_q(info, uniform, z2, w);
    CHECK(q.total() == doctest::Approx(0.6931 + std::log(10.0)).epsilon(1e-4));
    CHECK(q.total() == doctest::Approx(2.9957).epsilon(1e-4));

    Tensor<double> onehot_probs({1, 10});
    onehot_probs.at2(0, 0) = 1.0;
    auto perfect = L::loss_q(info, ad::make_const(onehot_probs), z2, w);
    CHECK(perfect.total() == doctest::Approx(0.6931).epsilon(1e-6));

    L::Weights wz;  // lambda_f = 0 degenerates to the info loss
    auto degenerate = L::loss_q(info, uniform, z2, wz);
    CHECK(degenerate.total() == info.total());
}

TEST_CASE("encoder loss: KL closed forms") {
    L::Weights w;
    w.lambda_g = 1.0;
    L::LossParts<double> recon;
    recon.add("recon_stub", ad::make_var(Tensor<double>::scalar(0.6931), false), 1.0);

    auto mu0 = ad::make_var(Tensor<double>::zeros({1, 4}), true);
    auto lv0 = ad::make_var(Tensor<double>::zeros({1, 4}), true);
    auto e0 = L::loss_e(recon, mu0, lv0, w);
    CHECK(e0.total() == doctest::Approx(0.6931).epsilon(1e-9));  // prior match: KL = 0

    auto mu1 = ad::make_var(Tensor<double>({1, 1}, {1.0}), true);
    auto lv1 = ad::make_var(Tensor<double>({1, 1}, {0.0}), true);
    auto e1 = L::loss_e(recon, mu1, lv1, w);
    CHECK(e1.total() == doctest::Approx(1.1931).epsilon(1e-4));  // KL(N(1,1)||N(0,1)) = 0.5

    rng::Stream rs(6, "kl");
    for (int i = 0; i < 5; ++i) {
        auto mu = ad::make_var(random_tensor<double>({3, 4}, rs, -2, 2), false);
        auto lv = ad::make_var(random_tensor<double>({3, 4}, rs, -2, 2), false);
        CHECK(L::kl_standard_normal(mu, lv)->value[0] >= 0.0);
    }
}

TEST_CASE("attack loss: closed forms, clamp boundary, monotonicity") {
    L::Weights w;
    w.lambda_h = 1.0;
    w.lambda_k = 0.0;
    rng::Stream rs(7, "adv");
    auto img = ad::make_const(random_tensor<double>({1, 1, 16, 16}, rs, 0.0, 1.0));

    // CE = ln 2 means the victim gives the target probability 1/2
    auto probs = ad::make_var(Tensor<double>({1, 2}, {0.5, 0.5}), true);
    auto parts = L::loss_g_adv(probs, {0}, img, img, w);
    CHECK(parts.total() == doctest::Approx(0.6931).epsilon(1e-4));

    // victim certain of the target: the clamp bounds the singularity
    auto certain = ad::make_var(Tensor<double>({1, 2}, {1.0, 0.0}), true);
    auto clamped = L::loss_g_adv(certain, {0}, img, img, w);
    CHECK(clamped.total() == doctest::Approx(-std::log(1e-6)).epsilon(1e-4));

    // strictly decreasing in the cross-entropy over (0, inf)
    double prev = 1e18;
    for (double p : {0.999, 0.9, 0.6, 0.3, 0.1, 0.001}) {  // CE = -ln p increasing
        auto pv = ad::make_var(Tensor<double>({1, 2}, {p, 1 - p}), false);
        double v = L::loss_g_adv(pv, {0}, img, img, w).total();
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("loss gradients match finite differences (attack/info/recon)") {
    rng::Stream rs(8, "lg");
    L::Weights w;
    w.lambda_a = 1.0;
    w.lambda_b = 1.0;
    w.lambda_c = 1.5;
    w.lambda_d = 0.05;
    w.lambda_e = 0.5;
    w.lambda_f = 1.0;
    w.lambda_g = 1.0;
    w.lambda_h = 0.75;
    w.lambda_k = 1.0;

    auto x = ad::make_const(random_tensor<double>({2, 1, 16, 16}, rs, 0.05, 0.95));
    auto xr = ad::make_var(random_tensor<double>({2, 1, 16, 16}, rs, 0.05, 0.95), true);
    auto feat = ad::make_const(random_tensor<double>({2, 6}, rs));
    auto featr = ad::make_var(random_tensor<double>({2, 6}, rs), true);
    auto score = ad::make_var(random_tensor<double>({2}, rs, 0.2, 0.8), true);
    gradcheck([&] { return L::loss_g_recon(x, xr, feat, featr, score, w).total_var; },
              {xr, featr, score}, 1e-4, 1e-6);

    Tensor<double> z2({2, 4});
    z2.at2(0, 1) = 1.0;
    z2.at2(1, 3) = 1.0;
    auto logits = ad::make_var(random_tensor<double>({2, 4}, rs, -1, 1), true);
    auto z3d = ad::make_var(random_tensor<double>({2, 2}, rs), true);
    Tensor<double> z3t = random_tensor<double>({2, 2}, rs);
    gradcheck(
        [&] {
            return L::loss_g_info(score, ad::softmax_rows(logits), z2, z3d, z3t, w).total_var;
        },
        {score, logits, z3d}, 1e-4, 1e-6);

    // attack loss wrt victim logits, through softmax
    auto vlogits = ad::make_var(random_tensor<double>({2, 4}, rs, -1, 1), true);
    auto xso = ad::make_var(random_tensor<double>({2, 1, 16, 16}, rs, 0.05, 0.95), true);
    gradcheck(
        [&] {
            return L::loss_g_adv(ad::softmax_rows(vlogits), {1, 2}, xso, x, w).total_var;
        },
        {vlogits, xso}, 1e-4, 1e-6);

    auto s1 = ad::make_var(random_tensor<double>({2, 1, 16, 16}, rs, 0.05, 0.95), true);
    auto s2 = ad::make_var(random_tensor<double>({2, 1, 16, 16}, rs, 0.05, 0.95), true);
    gradcheck([&] { return L::ssim_index(s1, s2); }, {s1, s2}, 1e-4, 1e-6);
}

TEST_CASE("loss report total reconstructs exactly from parts") {
    rng::Stream rs(9, "parts");
    auto a = ad::make_var(random_tensor<double>({4}, rs, 0.2, 0.8), true);
    auto b = ad::make_var(random_tensor<double>({4}, rs, 0.2, 0.8), true);
    auto c = ad::make_var(random_tensor<double>({4}, rs, 0.2, 0.8), true);
    auto parts = L::loss_discriminator(a, b, c);
    double manual = 0;
    for (auto& t : parts.terms) manual += t.weight * t.value;
    CHECK(parts.total() == manual);  // bitwise: same accumulation order
}

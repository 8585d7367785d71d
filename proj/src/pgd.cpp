#include "semadv/pgd.hpp"

#include "semadv/error.hpp"
#include "semadv/losses.hpp"

namespace semadv::pgd {

namespace {

// Per-sample L2 norms of a [N,...] tensor.
std::vector<double> sample_norms(const Tensor<real>& t) {
    int64_t n = t.dim(0), sz = t.numel() / n;
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double s = 0;
        const real* p = t.data() + i * sz;
        for (int64_t j = 0; j < sz; ++j) s += static_cast<double>(p[j]) * p[j];
        out[static_cast<size_t>(i)] = std::sqrt(s);
    }
    return out;
}

void project_ball(Tensor<real>& delta, double radius) {
    auto norms = sample_norms(delta);
    int64_t n = delta.dim(0), sz = delta.numel() / n;
    for (int64_t i = 0; i < n; ++i) {
        if (norms[static_cast<size_t>(i)] > radius && norms[static_cast<size_t>(i)] > 0) {
            real scale = static_cast<real>(radius / norms[static_cast<size_t>(i)]);
            real* p = delta.data() + i * sz;
            for (int64_t j = 0; j < sz; ++j) p[j] *= scale;
        }
    }
}

}  // namespace

Tensor<real> pgd_l2(const Tensor<real>& x, const std::vector<int64_t>& labels,
                    GradClassifier& victim, const PgdConfig& cfg) {
    if (cfg.delta < 0) throw ConfigError("pgd: delta must be >= 0");
    if (cfg.delta == 0) return x;
    int64_t n = x.dim(0), sz = x.numel() / n;
    double alpha = cfg.step_size();

    Tensor<real> delta(x.shape());
    if (cfg.random_start) {
        // gaussian direction scaled to a uniform radius inside the ball
        rng::Stream rs(cfg.seed, "pgd/start");
        for (int64_t i = 0; i < delta.numel(); ++i)
            delta[i] = static_cast<real>(rs.normal());
        auto norms = sample_norms(delta);
        for (int64_t i = 0; i < n; ++i) {
            double u = rs.u01();
            double target = cfg.delta * std::pow(u, 1.0 / static_cast<double>(sz));
            real scale = norms[static_cast<size_t>(i)] > 0
                             ? static_cast<real>(target / norms[static_cast<size_t>(i)])
                             : 0.0f;
            real* p = delta.data() + i * sz;
            for (int64_t j = 0; j < sz; ++j) p[j] *= scale;
        }
        // keep x + delta feasible
        for (int64_t i = 0; i < delta.numel(); ++i)
            delta[i] = std::clamp(x[i] + delta[i], 0.0f, 1.0f) - x[i];
    }

    for (int64_t step = 0; step < cfg.steps; ++step) {
        Tensor<real> xt = x;
        for (int64_t i = 0; i < xt.numel(); ++i) xt[i] += delta[i];
        auto [loss, grad] = victim.loss_input_grad(xt, labels);
        auto norms = sample_norms(grad);
        for (int64_t i = 0; i < n; ++i) {
            double g = norms[static_cast<size_t>(i)];
            if (g <= 0) continue;
            real scale = static_cast<real>(alpha / g);
            real* d = delta.data() + i * sz;
            const real* gp = grad.data() + i * sz;
            for (int64_t j = 0; j < sz; ++j) d[j] += scale * gp[j];
        }
        project_ball(delta, cfg.delta);
        for (int64_t i = 0; i < delta.numel(); ++i)
            delta[i] = std::clamp(x[i] + delta[i], 0.0f, 1.0f) - x[i];
    }

    Tensor<real> out = x;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += delta[i];
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
    return out;
}

double match_budget(const std::vector<AdversarialRecord>& records) {
    double sum = 0;
    int64_t count = 0;
    for (auto& r : records)
        if (r.found) {
            sum += r.l2;
            ++count;
        }
    if (count == 0) throw DataError("match_budget: no found records");
    return sum / static_cast<double>(count);
}

std::vector<AdversarialRecord> batch_pgd(const data::ImageBatch& eval_images,
                                         const std::vector<Tensor<real>>& recons,
                                         VictimModel& victim,
                                         const std::vector<const Classifier*>& transfer,
                                         const PgdConfig& cfg) {
    int64_t n = eval_images.count();
    if (static_cast<int64_t>(recons.size()) != n)
        throw DataError("batch_pgd: reconstruction count mismatch");

    Tensor<real> adv = pgd_l2(eval_images.pixels, eval_images.labels, victim, cfg);

    std::vector<AdversarialRecord> out;
    out.reserve(static_cast<size_t>(n));
    int64_t csz = eval_images.pixels.numel() / n;
    QueryResult q_adv = query(victim, adv, QueryMode::soft);
    for (int64_t i = 0; i < n; ++i) {
        AdversarialRecord rec;
        rec.image_id = i;
        rec.attack = "pgd_l2";
        rec.label = eval_images.labels[static_cast<size_t>(i)];
        rec.raw = eval_images.image(i);
        rec.recon = recons[static_cast<size_t>(i)];
        Tensor<real> rb = rec.recon.reshaped({1, rec.recon.dim(0), rec.recon.dim(1), rec.recon.dim(2)});
        QueryResult qr = query(victim, rb, QueryMode::soft);
        VictimVerdict v;
        v.label_recon = qr.labels[0];
        v.conf_recon = qr.probs.at2(0, qr.labels[0]);
        rec.recon_correct = (qr.labels[0] == rec.label);

        rec.adversarial = Tensor<real>({rec.raw.dim(0), rec.raw.dim(1), rec.raw.dim(2)});
        std::copy_n(adv.data() + i * csz, csz, rec.adversarial.data());
        v.label_adv = q_adv.labels[static_cast<size_t>(i)];
        v.conf_adv = q_adv.probs.at2(i, v.label_adv);
        rec.found = (v.label_adv != rec.label);
        rec.l2 = losses::l2_distance(rec.adversarial, rec.raw);
        rec.sl = losses::sl_value(
            rec.adversarial.reshaped({1, rec.raw.dim(0), rec.raw.dim(1), rec.raw.dim(2)}),
            rec.raw.reshaped({1, rec.raw.dim(0), rec.raw.dim(1), rec.raw.dim(2)}));
        rec.victims[victim.id()] = v;
        out.push_back(std::move(rec));
    }

    for (const Classifier* tv : transfer) {
        for (auto& rec : out) {
            if (!rec.found) continue;
            VictimVerdict v;
            Tensor<real> rb =
                rec.recon.reshaped({1, rec.recon.dim(0), rec.recon.dim(1), rec.recon.dim(2)});
            QueryResult qr = query(*tv, rb, QueryMode::soft);
            v.label_recon = qr.labels[0];
            v.conf_recon = qr.probs.at2(0, qr.labels[0]);
            Tensor<real> ab = rec.adversarial.reshaped(
                {1, rec.adversarial.dim(0), rec.adversarial.dim(1), rec.adversarial.dim(2)});
            QueryResult qa = query(*tv, ab, QueryMode::soft);
            v.label_adv = qa.labels[0];
            v.conf_adv = qa.probs.at2(0, qa.labels[0]);
            rec.victims[tv->id()] = v;
        }
    }
    return out;
}

}  // namespace semadv::pgd

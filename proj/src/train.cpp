#include "semadv/train.hpp"

#include <fstream>

#include "semadv/checkpoint.hpp"
#include "semadv/losses.hpp"
#include "semadv/optim.hpp"

namespace semadv::train {

using losses::LossParts;

namespace {

void check_finite(const LossParts<real>& parts, const char* loss_name, int64_t epoch,
                  int64_t iter) {
    for (auto& t : parts.terms)
        if (!std::isfinite(t.value))
            throw TrainError(std::string("non-finite loss term '") + t.name + "' in " + loss_name +
                             " at epoch " + std::to_string(epoch) + " iter " +
                             std::to_string(iter));
}

nlohmann::json parts_to_json(const LossParts<real>& parts) {
    nlohmann::json terms = nlohmann::json::object();
    for (auto& t : parts.terms) terms[t.name] = {{"value", t.value}, {"weight", t.weight}};
    return {{"terms", terms}, {"total", parts.total()}};
}

struct StageOptimizers {
    nn::Adam<real> q_ce, d, e_kl, e_recon, g_recon, q_info, g_info, g_adv;

    static std::vector<std::pair<std::string, V>> merge(nn::ParamSet<real> a,
                                                        nn::ParamSet<real> b) {
        auto out = a.trainable;
        out.insert(out.end(), b.trainable.begin(), b.trainable.end());
        return out;
    }

    StageOptimizers(GenModel& m, const OptimizerConfig& oc, bool with_adv) {
        auto mk = [&](std::vector<std::pair<std::string, V>> params, double lr) {
            return nn::Adam<real>(std::move(params), lr, oc.beta1, oc.beta2);
        };
        q_ce = mk(merge(m.params_backbone(), m.params_q_heads()), oc.lr_decoder);
        d = mk(merge(m.params_backbone(), m.params_d_head()), oc.lr_discriminator);
        e_kl = mk(m.params_encoder().trainable, oc.lr_encoder);
        e_recon = mk(m.params_encoder().trainable, oc.lr_encoder);
        g_recon = mk(m.params_generator().trainable, oc.lr_generator);
        q_info = mk(merge(m.params_backbone(), m.params_q_heads()), oc.lr_decoder);
        g_info = mk(m.params_generator().trainable, oc.lr_generator);
        if (with_adv) g_adv = mk(m.params_generator().trainable, oc.lr_generator);
    }

    std::vector<std::pair<std::string, Tensor<real>*>> state_entries(bool with_adv) {
        std::vector<std::pair<std::string, Tensor<real>*>> out;
        q_ce.export_state(out, "opt_q_ce");
        d.export_state(out, "opt_d");
        e_kl.export_state(out, "opt_e_kl");
        e_recon.export_state(out, "opt_e_recon");
        g_recon.export_state(out, "opt_g_recon");
        q_info.export_state(out, "opt_q_info");
        g_info.export_state(out, "opt_g_info");
        if (with_adv) g_adv.export_state(out, "opt_g_adv");
        return out;
    }

    std::vector<std::pair<std::string, int64_t*>> step_counters(bool with_adv) {
        std::vector<std::pair<std::string, int64_t*>> out{
            {"opt_q_ce/t", &q_ce.step_count()},     {"opt_d/t", &d.step_count()},
            {"opt_e_kl/t", &e_kl.step_count()},     {"opt_e_recon/t", &e_recon.step_count()},
            {"opt_g_recon/t", &g_recon.step_count()}, {"opt_q_info/t", &q_info.step_count()},
            {"opt_g_info/t", &g_info.step_count()}};
        if (with_adv) out.emplace_back("opt_g_adv/t", &g_adv.step_count());
        return out;
    }
};

void save_optimizers(const std::filesystem::path& path, StageOptimizers& opts, bool with_adv) {
    auto entries = opts.state_entries(with_adv);
    std::vector<std::pair<std::string, const Tensor<real>*>> out;
    out.reserve(entries.size());
    for (auto& [name, t] : entries) out.emplace_back(name, t);
    std::vector<Tensor<real>> counters;
    counters.reserve(8);
    for (auto& [name, t] : opts.step_counters(with_adv)) {
        counters.push_back(Tensor<real>({1}, {static_cast<real>(*t)}));
        out.emplace_back(name, &counters.back());
    }
    save_tensors(path, out);
}

void load_optimizers(const std::filesystem::path& path, StageOptimizers& opts, bool with_adv) {
    auto state = load_tensors(path);
    for (auto& [name, t] : opts.state_entries(with_adv)) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("optimizer state: missing '" + name + "'");
        *t = it->second;
    }
    for (auto& [name, t] : opts.step_counters(with_adv)) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("optimizer state: missing '" + name + "'");
        *t = static_cast<int64_t>(it->second[0]);
    }
}

TrainResult run_stage(int stage, const ExperimentConfig& cfg, const data::Dataset& ds,
                      GenModel& model, VictimModel* victim, const TrainOptions& opt) {
    const std::string stage_name = stage == 1 ? "stage1" : "stage2";
    const LossWeights& lw = stage == 1 ? cfg.weights_stage1 : cfg.weights_stage2;
    const losses::Weights w = lw.as_loss_weights();
    const int64_t epochs = stage == 1 ? cfg.epochs_stage1 : cfg.epochs_stage2;
    const bool with_adv = stage == 2;
    if (with_adv && !victim) throw TrainError("stage 2 requires a trained victim");
    if (victim) victim->set_trainable(false);

    std::filesystem::create_directories(opt.out_dir);
    TrainResult res;
    res.log_path = opt.out_dir / ("loss_" + stage_name + ".jsonl");
    std::ofstream log(res.log_path, opt.resume_epoch >= 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("training: cannot open loss log " + res.log_path.string());

    model.train_mode = true;
    StageOptimizers opts(model, cfg.optimizer, with_adv);

    int64_t start_epoch = 0;
    if (opt.resume_epoch >= 0) {
        model.load_networks(opt.out_dir, stage_name, opt.resume_epoch);
        load_optimizers(opt.out_dir / checkpoint_name("optim", stage_name, opt.resume_epoch),
                        opts, with_adv);
        start_epoch = opt.resume_epoch + 1;
    }

    std::vector<int64_t> subset = data::balanced_train_subset(ds, cfg.train_limit, cfg.seed);
    const int64_t n = static_cast<int64_t>(subset.size());
    const int64_t m = cfg.batch_size;

    std::string victim_digest_before = victim ? victim->weights_digest() : "";
    int64_t iters_done = 0;
    bool stop = false;

    for (int64_t epoch = start_epoch; epoch < epochs && !stop; ++epoch) {
        // streams are keyed by epoch alone: a stage-2 epoch with the attack
        // weights zeroed replays the exact stage-1 updates
        std::vector<int64_t> order = subset;
        rng::Stream shuffle(cfg.seed, "shuffle/" + std::to_string(epoch));
        shuffle.shuffle(order.begin(), order.end());
        rng::Stream prior(cfg.seed, "prior/" + std::to_string(epoch));
        rng::Stream eps_stream(cfg.seed, "eps/" + std::to_string(epoch));

        for (int64_t start = 0; start < n && !stop; start += m) {
            std::vector<int64_t> idx(order.begin() + start,
                                     order.begin() + std::min<int64_t>(n, start + m));
            data::ImageBatch raw = ds.train.select(idx);
            Tensor<real> x = data::resize_bilinear(raw.pixels, cfg.image_size);
            const auto mb = static_cast<int64_t>(idx.size());

            // line 3: sample the semantic code, encode labels
            Tensor<real> z3_s({mb, cfg.d3});
            for (int64_t i = 0; i < z3_s.numel(); ++i)
                z3_s[i] = static_cast<real>(prior.uniform(cfg.z3_min, cfg.z3_max));
            Tensor<real> z2 = latent::one_hot_batch(raw.labels, cfg.d2);

            std::vector<std::string> audit;

            // lines 4-5: build the reconstruction and the semantic variant once
            V xv = ad::make_const(x);
            V feat_x = model.features(xv);
            auto [q_probs_x, q_z3_x] = model.decode_from_features(feat_x);
            V d_x = model.disc_from_features(feat_x);
            auto [mu, logvar] = model.encode(xv);
            Tensor<real> eps = latent::sample_eps<real>({mb, cfg.d1}, eps_stream);
            V z1 = latent::reparameterize_var(mu, logvar, eps);
            V x_recon = model.generate_from_codes(z1, ad::make_const(q_probs_x->value),
                                                  ad::make_const(q_z3_x->value));
            V x_variant = model.generate_from_codes(ad::detach(z1), ad::make_const(z2),
                                                    ad::make_const(z3_s));

            // line 6a: Q on the supervised decoupling anchor
            opts.q_ce.zero_grad();
            LossParts<real> q_parts;
            q_parts.add("q_ce", losses::cross_entropy_mean(q_probs_x, z2), w.lambda_f);
            check_finite(q_parts, "decoder update", epoch, iters_done);
            ad::backward(q_parts.total_var);
            opts.q_ce.step();
            audit.push_back("Q");

            // line 6b: D against real/reconstructed/variant images
            opts.d.zero_grad();
            V d_recon_det = model.disc_from_features(
                model.features(ad::make_const(x_recon->value)));
            V d_variant_det = model.disc_from_features(
                model.features(ad::make_const(x_variant->value)));
            LossParts<real> d_parts = losses::loss_discriminator(d_x, d_recon_det, d_variant_det);
            check_finite(d_parts, "discriminator update", epoch, iters_done);
            ad::backward(d_parts.total_var);
            opts.d.step();
            audit.push_back("D");

            // line 7: E posterior of the reconstruction pulled toward the prior
            opts.e_kl.zero_grad();
            auto [mu_r, logvar_r] = model.encode(ad::make_const(x_recon->value));
            LossParts<real> e_parts;
            e_parts.add("e_kl", losses::kl_standard_normal(mu_r, logvar_r), w.lambda_g);
            check_finite(e_parts, "encoder update", epoch, iters_done);
            ad::backward(e_parts.total_var);
            opts.e_kl.step();
            audit.push_back("E");

            // line 8: E and G on the reconstruction objective
            opts.e_recon.zero_grad();
            opts.g_recon.zero_grad();
            V feat_recon_live = model.features(x_recon);
            V d_recon_live = model.disc_from_features(feat_recon_live);
            LossParts<real> recon_parts =
                losses::loss_g_recon(xv, x_recon, ad::make_const(feat_x->value), feat_recon_live,
                                     d_recon_live, w);
            check_finite(recon_parts, "reconstruction update", epoch, iters_done);
            ad::backward(recon_parts.total_var);
            opts.e_recon.step();
            opts.g_recon.step();
            audit.push_back("E+G");

            // line 9: Q and G on the mutual-information objective
            opts.q_info.zero_grad();
            opts.g_info.zero_grad();
            V feat_variant_live = model.features(x_variant);
            V d_variant_live = model.disc_from_features(feat_variant_live);
            auto [q_probs_so, q_z3_so] = model.decode_from_features(feat_variant_live);
            Tensor<real> z3_target = z3_s;
            if (opt.z3_target == losses::Z3Target::decoded_recon) {
                auto [probs_r, z3_r] = model.decode(x_recon->value);
                z3_target = z3_r;
            }
            LossParts<real> info_parts =
                losses::loss_g_info(d_variant_live, q_probs_so, z2, q_z3_so, z3_target, w);
            check_finite(info_parts, "mutual-information update", epoch, iters_done);
            ad::backward(info_parts.total_var);
            opts.q_info.step();
            opts.g_info.step();
            audit.push_back("Q+G");

            // line 15 (stage 2): G alone on the attack objective; the target
            // label comes from Q's verdict on the reconstruction, detached
            LossParts<real> adv_parts;
            if (with_adv) {
                opts.g_adv.zero_grad();
                auto [probs_recon, z3_recon] = model.decode(x_recon->value);
                std::vector<int64_t> targets = argmax_rows(probs_recon);
                V victim_probs = ad::softmax_rows(victim->forward_logits(x_variant));
                res.victim_queries += mb;
                adv_parts = losses::loss_g_adv(victim_probs, targets, x_variant, xv, w);
                check_finite(adv_parts, "attack update", epoch, iters_done);
                ad::backward(adv_parts.total_var);
                opts.g_adv.step();
                audit.push_back("G(adv)");
            }

            if (static_cast<int64_t>(res.audit.size()) < opt.audit_iters)
                res.audit.push_back(audit);

            nlohmann::json rec{{"stage", stage},
                               {"epoch", epoch},
                               {"iter", iters_done},
                               {"batch", mb},
                               {"q", parts_to_json(q_parts)},
                               {"d", parts_to_json(d_parts)},
                               {"e_kl", parts_to_json(e_parts)},
                               {"recon", parts_to_json(recon_parts)},
                               {"info", parts_to_json(info_parts)}};
            if (with_adv) rec["adv"] = parts_to_json(adv_parts);
            log << rec.dump() << "\n";

            ++iters_done;
            if (opt.max_iters > 0 && iters_done >= opt.max_iters) stop = true;
        }

        res.checkpoint_files = model.save_networks(opt.out_dir, stage_name, epoch);
        std::string opt_file = checkpoint_name("optim", stage_name, epoch);
        save_optimizers(opt.out_dir / opt_file, opts, with_adv);
        res.checkpoint_files.push_back(opt_file);
        res.epochs_done = epoch + 1;

        RunManifest manifest = RunManifest::make(
            opt.run_id.empty() ? stage_name : opt.run_id,
            stage == 1 ? RunStage::stage1 : RunStage::stage2, epoch, cfg, res.checkpoint_files);
        write_manifest(manifest, opt.out_dir, /*force=*/true);
    }

    if (victim && victim->weights_digest() != victim_digest_before)
        throw TrainError("stage 2 must not modify the victim");

    res.iterations = iters_done;
    log.flush();
    return res;
}

}  // namespace

TrainResult train_stage1(const ExperimentConfig& cfg, const data::Dataset& ds, GenModel& model,
                         const TrainOptions& opt) {
    return run_stage(1, cfg, ds, model, nullptr, opt);
}

TrainResult train_stage2(const ExperimentConfig& cfg, const data::Dataset& ds, GenModel& model,
                         VictimModel& victim, const TrainOptions& opt) {
    return run_stage(2, cfg, ds, model, &victim, opt);
}

}  // namespace semadv::train

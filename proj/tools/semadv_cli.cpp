// Command-line surface: train victims and the generative model, search the
// semantic manifold for adversarial examples, run the PGD-L2 baseline,
// render manifold grids, train defenses, and compute/report metrics.
#include <CLI11.hpp>
#include <cblas.h>

#include <iostream>
#include <set>
#include <thread>

#include "semadv/checkpoint.hpp"
#include "semadv/pgd.hpp"
#include "semadv/report.hpp"
#include "semadv/train.hpp"

namespace sa = semadv;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "experiment config file (JSON)")->required();
    cmd->add_option("--out", c.out_dir, "output directory")->required();
    cmd->add_option("--seed", c.seed, "seed override")->each([&](const std::string&) {
        c.seed_set = true;
    });
}

sa::ExperimentConfig load_cfg(const Common& c) {
    sa::ExperimentConfig cfg = sa::load_config(c.config_path);
    if (c.seed_set) cfg.seed = c.seed;
    sa::rng::seed_all(cfg.seed);
    return cfg;
}

sa::data::Dataset load_dataset(const sa::ExperimentConfig& cfg) {
    if (cfg.dataset == sa::DatasetId::mnist) return sa::data::load_mnist(cfg.data_dir);
    return sa::data::load_folder_dataset(cfg.data_dir, cfg.channels, 0.2, cfg.seed);
}

// evaluation images at training resolution for one sampled repeat
sa::data::ImageBatch eval_batch(const sa::ExperimentConfig& cfg, const sa::data::Dataset& ds,
                                int64_t rep) {
    auto split = sa::data::make_split(ds);
    auto sets = sa::data::sample_eval_set(split, cfg.eval_per_class, cfg.eval_repeats, cfg.seed);
    if (rep < 0 || rep >= static_cast<int64_t>(sets.size()))
        throw sa::ConfigError("eval repeat out of range");
    auto picked = ds.test.select(sets[static_cast<size_t>(rep)]);
    picked.pixels = sa::data::resize_bilinear(picked.pixels, cfg.image_size);
    return picked;
}

sa::GenModel load_model_from_run(const sa::ExperimentConfig& cfg, const fs::path& run_dir) {
    sa::RunManifest m = sa::read_manifest(run_dir / "manifest.json");
    sa::GenModel model = sa::GenModel::build(cfg, cfg.seed);
    model.load_networks(run_dir, sa::to_string(m.stage), m.epoch);
    model.train_mode = false;
    return model;
}

sa::search::SearchConfig search_cfg(const sa::ExperimentConfig& cfg) {
    sa::search::SearchConfig sc;
    sc.step = cfg.search.step;
    sc.max_rings = cfg.search.max_rings;
    sc.bounds = {cfg.z3_min, cfg.z3_max};
    sc.selection = cfg.search.selection == "first_found" ? sa::search::Selection::first_found
                                                         : sa::search::Selection::min_l2;
    return sc;
}

std::vector<sa::Tensor<sa::real>> recons_for(sa::GenModel& model,
                                             const sa::data::ImageBatch& batch) {
    std::vector<sa::Tensor<sa::real>> out;
    out.reserve(static_cast<size_t>(batch.count()));
    for (int64_t i = 0; i < batch.count(); ++i) {
        auto x = batch.image(i);
        auto rr = model.reconstruct(x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
        out.push_back(rr.image.reshaped({x.dim(0), x.dim(1), x.dim(2)}));
    }
    return out;
}

int run_cli(int argc, char** argv) {
    openblas_set_num_threads(std::max(1u, std::thread::hardware_concurrency()));

    CLI::App app{"semantic-manifold adversarial example toolkit"};
    app.require_subcommand(1);

    // ---- train-victim ----
    Common c_victim;
    std::string victim_arch, victim_id;
    int64_t victim_epochs = -1;
    auto* cmd_victim = app.add_subcommand("train-victim", "train a classifier to attack");
    add_common(cmd_victim, c_victim);
    cmd_victim->add_option("--arch", victim_arch, "architecture tag (cnn4|cnn6)");
    cmd_victim->add_option("--epochs", victim_epochs, "override epoch count");
    cmd_victim->add_option("--id", victim_id, "victim id (defaults to arch)");
    cmd_victim->callback([&] {
        auto cfg = load_cfg(c_victim);
        auto ds = load_dataset(cfg);
        std::string arch = victim_arch.empty() ? cfg.victim.arch : victim_arch;
        int64_t epochs = victim_epochs > 0 ? victim_epochs : cfg.victim.epochs;
        auto res = sa::train_victim(ds, arch, epochs, cfg.victim.lr, cfg.victim.batch_size,
                                    cfg.image_size, cfg.seed, victim_id);
        fs::path dir = fs::path(c_victim.out_dir);
        sa::save_victim_bundle(dir, res.model, "victim", epochs, res.clean_accuracy);
        std::vector<std::string> files{sa::checkpoint_name(arch, "victim", epochs)};
        auto manifest = sa::RunManifest::make(res.model.id(), sa::RunStage::victim, epochs, cfg,
                                              files);
        sa::write_manifest(manifest, dir, true);
        std::cout << "victim " << res.model.id() << " clean accuracy "
                  << 100.0 * res.clean_accuracy << "%\n";
    });

    // ---- train-sstgm ----
    Common c_train;
    int64_t stage = 1, max_iters = 0, resume_epoch = -1;
    std::string victim_dir, from_run;
    auto* cmd_train = app.add_subcommand("train-sstgm", "train the generative model");
    add_common(cmd_train, c_train);
    cmd_train->add_option("--stage", stage, "training stage (1|2)")->required();
    cmd_train->add_option("--victim", victim_dir, "victim bundle dir (stage 2)");
    cmd_train->add_option("--from", from_run, "stage-1 run dir to initialize from (stage 2)");
    cmd_train->add_option("--max-iters", max_iters, "stop after N iterations (testing)");
    cmd_train->add_option("--resume-epoch", resume_epoch, "resume after this epoch's checkpoint");
    cmd_train->callback([&] {
        auto cfg = load_cfg(c_train);
        auto ds = load_dataset(cfg);
        sa::GenModel model = sa::GenModel::build(cfg, cfg.seed);
        sa::train::TrainOptions opt;
        opt.out_dir = c_train.out_dir;
        opt.max_iters = max_iters;
        opt.resume_epoch = resume_epoch;
        if (stage == 1) {
            auto res = sa::train::train_stage1(cfg, ds, model, opt);
            std::cout << "stage 1 done: " << res.iterations << " iterations, log at "
                      << res.log_path << "\n";
        } else if (stage == 2) {
            if (victim_dir.empty()) throw sa::ConfigError("stage 2 requires --victim");
            if (from_run.empty()) throw sa::ConfigError("stage 2 requires --from <stage1 run>");
            sa::RunManifest m1 = sa::read_manifest(fs::path(from_run) / "manifest.json");
            model.load_networks(from_run, sa::to_string(m1.stage), m1.epoch);
            sa::VictimModel victim = sa::load_victim_bundle(victim_dir);
            auto res = sa::train::train_stage2(cfg, ds, model, victim, opt);
            std::cout << "stage 2 done: " << res.iterations << " iterations, "
                      << res.victim_queries << " victim queries, log at " << res.log_path << "\n";
        } else {
            throw sa::ConfigError("--stage must be 1 or 2");
        }
    });

    // ---- search ----
    Common c_search;
    std::string run_dir, s_victim_dir;
    std::vector<std::string> transfer_dirs;
    int64_t rep = 0, pool_count = 0;
    double step_override = 0;
    int64_t rings_override = 0;
    auto* cmd_search = app.add_subcommand("search", "expanding-ring manifold search for AEs");
    add_common(cmd_search, c_search);
    cmd_search->add_option("--run", run_dir, "trained model run dir")->required();
    cmd_search->add_option("--victim", s_victim_dir, "search victim bundle dir")->required();
    cmd_search->add_option("--transfer", transfer_dirs, "transfer victim bundle dirs");
    cmd_search->add_option("--rep", rep, "evaluation repeat index");
    cmd_search->add_option("--step", step_override, "search step size");
    cmd_search->add_option("--max-rings", rings_override, "maximum ring count");
    cmd_search->add_option("--train-pool", pool_count,
                           "search over N training images instead (for defense pools)");
    cmd_search->callback([&] {
        auto cfg = load_cfg(c_search);
        if (step_override > 0) cfg.search.step = step_override;
        if (rings_override > 0) cfg.search.max_rings = rings_override;
        cfg.validate();
        auto ds = load_dataset(cfg);
        sa::GenModel model = load_model_from_run(cfg, run_dir);
        sa::VictimModel victim = sa::load_victim_bundle(s_victim_dir);
        std::vector<sa::VictimModel> transfer;
        std::vector<const sa::Classifier*> transfer_ptrs;
        for (auto& d : transfer_dirs) transfer.push_back(sa::load_victim_bundle(d));
        for (auto& t : transfer) transfer_ptrs.push_back(&t);

        sa::data::ImageBatch batch;
        if (pool_count > 0) {
            auto subset = sa::data::balanced_train_subset(ds, pool_count, cfg.seed ^ 0x9e37);
            batch = ds.train.select(subset);
            batch.pixels = sa::data::resize_bilinear(batch.pixels, cfg.image_size);
        } else {
            batch = eval_batch(cfg, ds, rep);
        }

        auto records = sa::search::batch_search(batch, model, victim, transfer_ptrs,
                                                search_cfg(cfg));
        sa::RecordsFile rf;
        rf.attack = "manifold";
        rf.search_victim = victim.id();
        rf.seed = cfg.seed;
        rf.records = std::move(records);
        fs::create_directories(c_search.out_dir);
        fs::path out = fs::path(c_search.out_dir) / "records_manifold.json";
        sa::save_records(out, rf);
        int64_t found = 0, eligible = 0;
        for (auto& r : rf.records) {
            if (r.recon_correct) ++eligible;
            if (r.found) ++found;
        }
        std::cout << "search: " << found << " AEs found over " << eligible
                  << " correctly-reconstructed images (of " << rf.records.size() << "); "
                  << out << "\n";
    });

    // ---- attack-pgd ----
    Common c_pgd;
    std::string p_victim_dir, p_run_dir, budget_from;
    std::vector<std::string> p_transfer_dirs;
    double delta = 0;
    int64_t p_rep = 0;
    auto* cmd_pgd = app.add_subcommand("attack-pgd", "PGD-L2 baseline at a matched budget");
    add_common(cmd_pgd, c_pgd);
    cmd_pgd->add_option("--victim", p_victim_dir, "victim bundle dir")->required();
    cmd_pgd->add_option("--run", p_run_dir, "model run dir (for reconstruction gating)")
        ->required();
    cmd_pgd->add_option("--transfer", p_transfer_dirs, "transfer victim bundle dirs");
    cmd_pgd->add_option("--budget-from", budget_from, "records file to match mean L2 against");
    cmd_pgd->add_option("--delta", delta, "explicit L2 budget");
    cmd_pgd->add_option("--rep", p_rep, "evaluation repeat index");
    cmd_pgd->callback([&] {
        auto cfg = load_cfg(c_pgd);
        auto ds = load_dataset(cfg);
        sa::GenModel model = load_model_from_run(cfg, p_run_dir);
        sa::VictimModel victim = sa::load_victim_bundle(p_victim_dir);
        std::vector<sa::VictimModel> transfer;
        std::vector<const sa::Classifier*> transfer_ptrs;
        for (auto& d : p_transfer_dirs) transfer.push_back(sa::load_victim_bundle(d));
        for (auto& t : transfer) transfer_ptrs.push_back(&t);

        if (!budget_from.empty()) {
            auto src = sa::load_records(budget_from);
            delta = sa::pgd::match_budget(src.records);
        }
        if (delta <= 0) throw sa::ConfigError("attack-pgd: provide --delta or --budget-from");

        auto batch = eval_batch(cfg, ds, p_rep);
        auto recons = recons_for(model, batch);
        sa::pgd::PgdConfig pc;
        pc.delta = delta;
        pc.steps = cfg.pgd.steps;
        pc.alpha = cfg.pgd.alpha_ratio * delta / static_cast<double>(cfg.pgd.steps);
        pc.random_start = cfg.pgd.random_start;
        pc.seed = cfg.seed;
        auto records = sa::pgd::batch_pgd(batch, recons, victim, transfer_ptrs, pc);
        sa::RecordsFile rf;
        rf.attack = "pgd_l2";
        rf.search_victim = victim.id();
        rf.seed = cfg.seed;
        rf.records = std::move(records);
        fs::create_directories(c_pgd.out_dir);
        fs::path out = fs::path(c_pgd.out_dir) / "records_pgd.json";
        sa::save_records(out, rf);
        std::cout << "pgd: budget " << delta << ", records at " << out << "\n";
    });

    // ---- grid ----
    Common c_grid;
    std::string g_run_dir, g_victim_dir;
    int64_t image_idx = 0, grid_n = 5;
    double span = 0.5;
    auto* cmd_grid = app.add_subcommand("grid", "render an n x n semantic grid with verdicts");
    add_common(cmd_grid, c_grid);
    cmd_grid->add_option("--run", g_run_dir, "model run dir")->required();
    cmd_grid->add_option("--victim", g_victim_dir, "victim bundle dir")->required();
    cmd_grid->add_option("--image", image_idx, "test-set image index");
    cmd_grid->add_option("--span", span, "half-width of the sweep per dimension");
    cmd_grid->add_option("--n", grid_n, "grid side length");
    cmd_grid->callback([&] {
        auto cfg = load_cfg(c_grid);
        auto ds = load_dataset(cfg);
        sa::GenModel model = load_model_from_run(cfg, g_run_dir);
        sa::VictimModel victim = sa::load_victim_bundle(g_victim_dir);
        auto img = ds.test.image(image_idx);
        auto x = sa::data::resize_bilinear(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}),
                                           cfg.image_size);
        auto grid = sa::search::build_grid(
            x.reshaped({cfg.channels, cfg.image_size, cfg.image_size}),
            ds.test.labels[static_cast<size_t>(image_idx)], model, victim, {0, 1}, span, grid_n);
        sa::report::emit_grid(c_grid.out_dir, "grid_" + std::to_string(image_idx), grid);
        std::cout << "grid written to " << c_grid.out_dir << "\n";
    });

    // ---- defend ----
    Common c_defend;
    std::string method, d_victim_dir, pool_path;
    double ratio = -1, temperature = -1;
    int64_t d_epochs = -1;
    auto* cmd_defend = app.add_subcommand("defend", "train a defended victim");
    add_common(cmd_defend, c_defend);
    cmd_defend->add_option("--method", method, "advtrain|distill")->required();
    cmd_defend->add_option("--victim", d_victim_dir, "victim bundle dir (teacher/arch source)")
        ->required();
    cmd_defend->add_option("--pool", pool_path, "records file with AEs (advtrain)");
    cmd_defend->add_option("--ratio", ratio, "adversarial fraction per batch (advtrain)");
    cmd_defend->add_option("--temperature", temperature, "distillation temperature");
    cmd_defend->add_option("--epochs", d_epochs, "defense training epochs");
    cmd_defend->callback([&] {
        auto cfg = load_cfg(c_defend);
        auto ds = load_dataset(cfg);
        sa::VictimModel base = sa::load_victim_bundle(d_victim_dir);
        fs::path dir = fs::path(c_defend.out_dir);
        int64_t epochs = d_epochs > 0 ? d_epochs : cfg.defense.advtrain_epochs;
        sa::VictimTrainResult res;
        if (method == "advtrain") {
            if (pool_path.empty()) throw sa::ConfigError("defend advtrain requires --pool");
            auto pool_records = sa::load_records(pool_path);
            sa::AttackPool pool;
            pool.cycle = true;
            for (auto& r : pool_records.records)
                if (r.found) pool.pool.emplace_back(r.adversarial, r.label);
            if (pool.pool.empty()) throw sa::ConfigError("defend advtrain: pool has no found AEs");
            double use_ratio = ratio >= 0 ? ratio : cfg.defense.advtrain_ratio;
            res = sa::defend_adversarial_training(ds, base.arch(), pool, use_ratio, epochs,
                                                  cfg.victim.lr, cfg.victim.batch_size,
                                                  cfg.image_size, cfg.seed,
                                                  base.id() + "+advtrain");
            sa::save_victim_bundle(dir, res.model, "defense", epochs, res.clean_accuracy,
                                   {{"method", "advtrain"},
                                    {"ratio", use_ratio},
                                    {"pool", pool_path},
                                    {"pool_size", pool.pool.size()}});
        } else if (method == "distill") {
            double t = temperature > 0 ? temperature : cfg.defense.distill_temperature;
            int64_t de = d_epochs > 0 ? d_epochs : cfg.defense.distill_epochs;
            res = sa::defend_distillation(base, base.arch(), ds, t, de, cfg.victim.lr,
                                          cfg.victim.batch_size, cfg.image_size, cfg.seed,
                                          base.id() + "+distill");
            sa::save_victim_bundle(dir, res.model, "defense", de, res.clean_accuracy,
                                   {{"method", "distill"}, {"temperature", t}});
        } else {
            throw sa::ConfigError("defend: --method must be advtrain or distill");
        }
        auto manifest = sa::RunManifest::make(res.model.id(), sa::RunStage::defense, epochs, cfg,
                                              {});
        sa::write_manifest(manifest, dir, true);
        std::cout << "defended victim " << res.model.id() << " clean accuracy "
                  << 100.0 * res.clean_accuracy << "%\n";
    });

    // ---- eval ----
    Common c_eval;
    std::string records_path, defended_dir;
    std::vector<std::string> e_transfer_ids;
    auto* cmd_eval = app.add_subcommand("eval", "compute metrics from an attack records file");
    add_common(cmd_eval, c_eval);
    cmd_eval->add_option("--records", records_path, "attack records file")->required();
    cmd_eval->add_option("--defended", defended_dir, "defended victim bundle dir (adds ASR-DM/ISR)");
    cmd_eval->callback([&] {
        load_cfg(c_eval);
        auto rf = sa::load_records(records_path);
        auto table = sa::metrics::table_from_records(rf);

        sa::metrics::AttackSummary s;
        s.attack = rf.attack;
        s.asr = sa::metrics::compute_asr(table, rf.search_victim);
        std::set<std::string> victims;
        for (auto& r : rf.records)
            for (auto& [id, v] : r.victims) victims.insert(id);
        for (auto& id : victims)
            if (id != rf.search_victim)
                s.atr[id] = sa::metrics::compute_atr(table, rf.search_victim, id);
        s.agg = sa::metrics::aggregate_found(table);

        if (!defended_dir.empty()) {
            sa::VictimModel defended = sa::load_victim_bundle(defended_dir);
            // re-query the defended model on every stored AE
            sa::RecordsFile def = rf;
            for (auto& r : def.records) {
                if (!r.found) continue;
                auto probs = defended.predict_probs(r.adversarial.reshaped(
                    {1, r.adversarial.dim(0), r.adversarial.dim(1), r.adversarial.dim(2)}));
                auto labels = sa::argmax_rows(probs);
                sa::VictimVerdict v;
                v.label_adv = labels[0];
                v.conf_adv = probs.at2(0, labels[0]);
                r.victims[defended.id()] = v;
            }
            auto def_table = sa::metrics::table_from_records(def);
            s.defenses[defended.id()] =
                sa::metrics::compute_isr(table, def_table, rf.search_victim, defended.id());
        }

        fs::create_directories(c_eval.out_dir);
        fs::path out = fs::path(c_eval.out_dir) / ("summary_" + rf.attack + ".json");
        sa::metrics::write_summaries(out, {s});
        std::cout << sa::metrics::render_report({s});
        std::cout << "summary at " << out << "\n";
    });

    // ---- report ----
    Common c_report;
    std::vector<std::string> summary_paths, record_paths;
    auto* cmd_report = app.add_subcommand("report", "render report text and figures");
    add_common(cmd_report, c_report);
    cmd_report->add_option("--summary", summary_paths, "summary files")->required();
    cmd_report->add_option("--records", record_paths, "records files for figures");
    cmd_report->callback([&] {
        load_cfg(c_report);
        std::vector<sa::metrics::AttackSummary> all;
        for (auto& p : summary_paths)
            for (auto& s : sa::metrics::read_summaries(p)) all.push_back(s);
        fs::create_directories(c_report.out_dir);
        std::string text = sa::metrics::render_report(all);
        std::ofstream out(fs::path(c_report.out_dir) / "report.txt");
        out << text;
        out.close();
        std::vector<sa::AdversarialRecord> manifold, pgd;
        for (auto& p : record_paths) {
            auto rf = sa::load_records(p);
            auto& dst = rf.attack == "pgd_l2" ? pgd : manifold;
            for (auto& r : rf.records) dst.push_back(r);
        }
        if (!manifold.empty() || !pgd.empty())
            sa::report::emit_figures(c_report.out_dir, manifold, pgd);
        std::cout << text;
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

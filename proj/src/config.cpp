#include "semadv/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "semadv/digest.hpp"
#include "semadv/error.hpp"

namespace semadv {

using nlohmann::json;

std::string to_string(DatasetId d) { return d == DatasetId::mnist ? "mnist" : "image_folder"; }

DatasetId dataset_from_string(const std::string& s) {
    if (s == "mnist") return DatasetId::mnist;
    if (s == "image_folder") return DatasetId::image_folder;
    throw ConfigError("dataset: unknown value '" + s + "' (expected mnist|image_folder)");
}

namespace {

json weights_to_json(const LossWeights& w, bool stage2) {
    json j{{"lambda_a", w.lambda_a}, {"lambda_b", w.lambda_b}, {"lambda_c", w.lambda_c},
           {"lambda_d", w.lambda_d}, {"lambda_e", w.lambda_e}, {"lambda_f", w.lambda_f},
           {"lambda_g", w.lambda_g}};
    if (stage2) {
        j["lambda_h"] = w.lambda_h;
        j["lambda_k"] = w.lambda_k;
    }
    return j;
}

// Stage defaults for both datasets; stage 2 raises lambda_e and adds the
// attack weights.
LossWeights default_weights(DatasetId d, int stage) {
    LossWeights w;
    w.lambda_a = 1.0;
    w.lambda_b = 1.0;
    w.lambda_c = 1.5;
    w.lambda_d = 0.05;
    w.lambda_e = stage == 1 ? 0.5 : 1.0;
    w.lambda_f = 1.0;
    w.lambda_g = 1.0;
    if (stage == 2) {
        if (d == DatasetId::mnist) {
            w.lambda_h = 0.75;
            w.lambda_k = 1.0;
        } else {
            w.lambda_h = 2.5;
            w.lambda_k = 0.01;
        }
    }
    return w;
}

void apply_dataset_defaults(ExperimentConfig& c) {
    if (c.dataset == DatasetId::mnist) {
        c.d1 = 132;
        c.d2 = 10;
        c.d3 = 2;
    } else {
        c.d1 = 100;
        c.d2 = 6;
        c.d3 = 2;
    }
    c.weights_stage1 = default_weights(c.dataset, 1);
    c.weights_stage2 = default_weights(c.dataset, 2);
}

double get_num(const json& j, const std::string& field) {
    if (!j.is_number()) throw ConfigError(field + ": expected a number");
    return j.get<double>();
}

int64_t get_int(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ConfigError(field + ": expected an integer");
    return j.get<int64_t>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + (scope.empty() ? it.key() : scope + "." + it.key()) +
                              "'");
}

LossWeights parse_weights(const json& j, LossWeights defaults, const std::string& scope) {
    check_keys(j,
               {"lambda_a", "lambda_b", "lambda_c", "lambda_d", "lambda_e", "lambda_f", "lambda_g",
                "lambda_h", "lambda_k"},
               scope);
    LossWeights w = defaults;
    auto grab = [&](const char* k, double& dst) {
        if (j.contains(k)) dst = get_num(j.at(k), scope + "." + k);
    };
    grab("lambda_a", w.lambda_a);
    grab("lambda_b", w.lambda_b);
    grab("lambda_c", w.lambda_c);
    grab("lambda_d", w.lambda_d);
    grab("lambda_e", w.lambda_e);
    grab("lambda_f", w.lambda_f);
    grab("lambda_g", w.lambda_g);
    grab("lambda_h", w.lambda_h);
    grab("lambda_k", w.lambda_k);
    return w;
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["dataset"] = to_string(dataset);
    j["data_dir"] = data_dir;
    j["image_size"] = image_size;
    j["channels"] = channels;
    j["latent"] = {{"d1", d1}, {"d2", d2}, {"d3", d3}, {"z3_min", z3_min}, {"z3_max", z3_max}};
    j["weights_stage1"] = weights_to_json(weights_stage1, false);
    j["weights_stage2"] = weights_to_json(weights_stage2, true);
    j["optimizer"] = {{"beta1", optimizer.beta1},
                      {"beta2", optimizer.beta2},
                      {"lr_encoder", optimizer.lr_encoder},
                      {"lr_generator", optimizer.lr_generator},
                      {"lr_discriminator", optimizer.lr_discriminator},
                      {"lr_decoder", optimizer.lr_decoder}};
    j["epochs_stage1"] = epochs_stage1;
    j["epochs_stage2"] = epochs_stage2;
    j["batch_size"] = batch_size;
    j["train_limit"] = train_limit;
    j["eval_per_class"] = eval_per_class;
    j["eval_repeats"] = eval_repeats;
    j["seed"] = seed;
    j["victim"] = {{"arch", victim.arch},
                   {"transfer_arch", victim.transfer_arch},
                   {"epochs", victim.epochs},
                   {"lr", victim.lr},
                   {"batch_size", victim.batch_size}};
    j["search"] = {{"step", search.step},
                   {"max_rings", search.max_rings},
                   {"selection", search.selection}};
    j["pgd"] = {{"steps", pgd.steps},
                {"alpha_ratio", pgd.alpha_ratio},
                {"random_start", pgd.random_start}};
    j["defense"] = {{"advtrain_ratio", defense.advtrain_ratio},
                    {"advtrain_epochs", defense.advtrain_epochs},
                    {"advtrain_pool", defense.advtrain_pool},
                    {"distill_temperature", defense.distill_temperature},
                    {"distill_epochs", defense.distill_epochs}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    check_keys(j,
               {"dataset", "data_dir", "image_size", "channels", "latent", "weights_stage1",
                "weights_stage2", "optimizer", "epochs_stage1", "epochs_stage2", "batch_size",
                "train_limit", "eval_per_class", "eval_repeats", "seed", "victim", "search", "pgd",
                "defense"},
               "");

    ExperimentConfig c;
    if (j.contains("dataset")) c.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    apply_dataset_defaults(c);

    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("image_size")) c.image_size = get_int(j.at("image_size"), "image_size");
    if (j.contains("channels")) c.channels = get_int(j.at("channels"), "channels");
    if (j.contains("latent")) {
        const json& l = j.at("latent");
        check_keys(l, {"d1", "d2", "d3", "z3_min", "z3_max"}, "latent");
        if (l.contains("d1")) c.d1 = get_int(l.at("d1"), "latent.d1");
        if (l.contains("d2")) c.d2 = get_int(l.at("d2"), "latent.d2");
        if (l.contains("d3")) c.d3 = get_int(l.at("d3"), "latent.d3");
        if (l.contains("z3_min")) c.z3_min = get_num(l.at("z3_min"), "latent.z3_min");
        if (l.contains("z3_max")) c.z3_max = get_num(l.at("z3_max"), "latent.z3_max");
    }
    if (j.contains("weights_stage1"))
        c.weights_stage1 = parse_weights(j.at("weights_stage1"), c.weights_stage1, "weights_stage1");
    if (j.contains("weights_stage2"))
        c.weights_stage2 = parse_weights(j.at("weights_stage2"), c.weights_stage2, "weights_stage2");
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, {"beta1", "beta2", "lr_encoder", "lr_generator", "lr_discriminator",
                       "lr_decoder"},
                   "optimizer");
        if (o.contains("beta1")) c.optimizer.beta1 = get_num(o.at("beta1"), "optimizer.beta1");
        if (o.contains("beta2")) c.optimizer.beta2 = get_num(o.at("beta2"), "optimizer.beta2");
        if (o.contains("lr_encoder"))
            c.optimizer.lr_encoder = get_num(o.at("lr_encoder"), "optimizer.lr_encoder");
        if (o.contains("lr_generator"))
            c.optimizer.lr_generator = get_num(o.at("lr_generator"), "optimizer.lr_generator");
        if (o.contains("lr_discriminator"))
            c.optimizer.lr_discriminator =
                get_num(o.at("lr_discriminator"), "optimizer.lr_discriminator");
        if (o.contains("lr_decoder"))
            c.optimizer.lr_decoder = get_num(o.at("lr_decoder"), "optimizer.lr_decoder");
    }
    if (j.contains("epochs_stage1")) c.epochs_stage1 = get_int(j.at("epochs_stage1"), "epochs_stage1");
    if (j.contains("epochs_stage2")) c.epochs_stage2 = get_int(j.at("epochs_stage2"), "epochs_stage2");
    if (j.contains("batch_size")) c.batch_size = get_int(j.at("batch_size"), "batch_size");
    if (j.contains("train_limit")) c.train_limit = get_int(j.at("train_limit"), "train_limit");
    if (j.contains("eval_per_class"))
        c.eval_per_class = get_int(j.at("eval_per_class"), "eval_per_class");
    if (j.contains("eval_repeats")) c.eval_repeats = get_int(j.at("eval_repeats"), "eval_repeats");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned())
            throw ConfigError("seed: expected an unsigned integer");
        c.seed = j.at("seed").get<uint64_t>();
    }
    if (j.contains("victim")) {
        const json& v = j.at("victim");
        check_keys(v, {"arch", "transfer_arch", "epochs", "lr", "batch_size"}, "victim");
        if (v.contains("arch")) c.victim.arch = v.at("arch").get<std::string>();
        if (v.contains("transfer_arch"))
            c.victim.transfer_arch = v.at("transfer_arch").get<std::string>();
        if (v.contains("epochs")) c.victim.epochs = get_int(v.at("epochs"), "victim.epochs");
        if (v.contains("lr")) c.victim.lr = get_num(v.at("lr"), "victim.lr");
        if (v.contains("batch_size"))
            c.victim.batch_size = get_int(v.at("batch_size"), "victim.batch_size");
    }
    if (j.contains("search")) {
        const json& s = j.at("search");
        check_keys(s, {"step", "max_rings", "selection"}, "search");
        if (s.contains("step")) c.search.step = get_num(s.at("step"), "search.step");
        if (s.contains("max_rings")) c.search.max_rings = get_int(s.at("max_rings"), "search.max_rings");
        if (s.contains("selection")) c.search.selection = s.at("selection").get<std::string>();
    }
    if (j.contains("pgd")) {
        const json& p = j.at("pgd");
        check_keys(p, {"steps", "alpha_ratio", "random_start"}, "pgd");
        if (p.contains("steps")) c.pgd.steps = get_int(p.at("steps"), "pgd.steps");
        if (p.contains("alpha_ratio"))
            c.pgd.alpha_ratio = get_num(p.at("alpha_ratio"), "pgd.alpha_ratio");
        if (p.contains("random_start")) {
            if (!p.at("random_start").is_boolean())
                throw ConfigError("pgd.random_start: expected a boolean");
            c.pgd.random_start = p.at("random_start").get<bool>();
        }
    }
    if (j.contains("defense")) {
        const json& d = j.at("defense");
        check_keys(d,
                   {"advtrain_ratio", "advtrain_epochs", "advtrain_pool", "distill_temperature",
                    "distill_epochs"},
                   "defense");
        if (d.contains("advtrain_ratio"))
            c.defense.advtrain_ratio = get_num(d.at("advtrain_ratio"), "defense.advtrain_ratio");
        if (d.contains("advtrain_epochs"))
            c.defense.advtrain_epochs = get_int(d.at("advtrain_epochs"), "defense.advtrain_epochs");
        if (d.contains("advtrain_pool"))
            c.defense.advtrain_pool = get_int(d.at("advtrain_pool"), "defense.advtrain_pool");
        if (d.contains("distill_temperature"))
            c.defense.distill_temperature =
                get_num(d.at("distill_temperature"), "defense.distill_temperature");
        if (d.contains("distill_epochs"))
            c.defense.distill_epochs = get_int(d.at("distill_epochs"), "defense.distill_epochs");
    }

    c.weights_stage1.m = c.batch_size;
    c.weights_stage2.m = c.batch_size;
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    auto positive = [](int64_t v, const char* field) {
        if (v <= 0) throw ConfigError(std::string(field) + ": must be positive");
    };
    positive(image_size, "image_size");
    if (channels != 1 && channels != 3) throw ConfigError("channels: must be 1 or 3");
    positive(d1, "latent.d1");
    positive(d2, "latent.d2");
    positive(d3, "latent.d3");
    if (image_size % 16 != 0)
        throw ConfigError("image_size: must be a multiple of 16 (four stride-2 stages)");
    if (!(z3_min < z3_max)) throw ConfigError("latent.z3_min: prior requires z3_min < z3_max");
    positive(epochs_stage1, "epochs_stage1");
    positive(epochs_stage2, "epochs_stage2");
    positive(batch_size, "batch_size");
    if (train_limit < 0) throw ConfigError("train_limit: must be >= 0");
    if (eval_per_class < 0) throw ConfigError("eval_per_class: must be >= 0");
    positive(eval_repeats, "eval_repeats");
    positive(victim.epochs, "victim.epochs");
    positive(victim.batch_size, "victim.batch_size");

    auto check_weights = [](const LossWeights& w, const char* scope) {
        const double vals[] = {w.lambda_a, w.lambda_b, w.lambda_c, w.lambda_d, w.lambda_e,
                               w.lambda_f, w.lambda_g, w.lambda_h, w.lambda_k};
        const char* names[] = {"lambda_a", "lambda_b", "lambda_c", "lambda_d", "lambda_e",
                               "lambda_f", "lambda_g", "lambda_h", "lambda_k"};
        for (int i = 0; i < 9; ++i)
            if (!std::isfinite(vals[i]) || vals[i] < 0)
                throw ConfigError(std::string(scope) + "." + names[i] +
                                  ": must be finite and >= 0");
    };
    check_weights(weights_stage1, "weights_stage1");
    check_weights(weights_stage2, "weights_stage2");
    if (weights_stage1.lambda_h != 0 || weights_stage1.lambda_k != 0)
        throw ConfigError("weights_stage1.lambda_h: attack weights belong to stage 2 only");

    if (optimizer.beta1 < 0 || optimizer.beta1 >= 1)
        throw ConfigError("optimizer.beta1: must be in [0,1)");
    if (optimizer.beta2 < 0 || optimizer.beta2 >= 1)
        throw ConfigError("optimizer.beta2: must be in [0,1)");
    for (auto [lr, name] : {std::pair{optimizer.lr_encoder, "optimizer.lr_encoder"},
                            {optimizer.lr_generator, "optimizer.lr_generator"},
                            {optimizer.lr_discriminator, "optimizer.lr_discriminator"},
                            {optimizer.lr_decoder, "optimizer.lr_decoder"}})
        if (!(lr > 0)) throw ConfigError(std::string(name) + ": must be positive");

    if (!(search.step > 0)) throw ConfigError("search.step: must be positive");
    positive(search.max_rings, "search.max_rings");
    if (search.selection != "min_l2" && search.selection != "first_found")
        throw ConfigError("search.selection: expected min_l2|first_found");
    if (static_cast<double>(search.max_rings) * search.step > (z3_max - z3_min) + 1e-12)
        throw ConfigError("search.max_rings: max_rings * step must not exceed the prior width");
    positive(pgd.steps, "pgd.steps");
    if (!(pgd.alpha_ratio > 0)) throw ConfigError("pgd.alpha_ratio: must be positive");
    if (defense.advtrain_ratio < 0 || defense.advtrain_ratio > 1)
        throw ConfigError("defense.advtrain_ratio: must be in [0,1]");
    if (defense.distill_temperature < 1)
        throw ConfigError("defense.distill_temperature: must be >= 1");
}

std::string ExperimentConfig::canonical() const { return to_json().dump(); }

std::string ExperimentConfig::digest() const { return sha256_hex(canonical()); }

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return ExperimentConfig::from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

}  // namespace semadv

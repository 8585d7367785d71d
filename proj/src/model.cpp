#include "semadv/model.hpp"

#include "semadv/checkpoint.hpp"
#include "semadv/digest.hpp"
#include "semadv/error.hpp"

namespace semadv {

namespace {
constexpr int64_t BASE_WIDTH = 16;  // conv widths: 16/32/64/128
constexpr real SCORE_EPS = 1e-6f;

nn::ParamSet<real> collect_of(auto& component) {
    nn::ParamSet<real> ps;
    component.collect(ps);
    return ps;
}

void load_into(nn::ParamSet<real>& ps, const std::map<std::string, Tensor<real>>& state,
               const std::string& where) {
    for (auto& [name, var] : ps.trainable) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("checkpoint: missing tensor '" + name + "' in " + where);
        if (it->second.shape() != var->value.shape())
            throw IoError("checkpoint: shape mismatch for '" + name + "' in " + where);
        var->value = it->second;
    }
    for (auto& [name, buf] : ps.buffers) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("checkpoint: missing tensor '" + name + "' in " + where);
        *buf = it->second;
    }
}

std::vector<std::pair<std::string, const Tensor<real>*>> to_entries(nn::ParamSet<real>& ps) {
    std::vector<std::pair<std::string, const Tensor<real>*>> out;
    for (auto& [name, var] : ps.trainable) out.emplace_back(name, &var->value);
    for (auto& [name, buf] : ps.buffers) out.emplace_back(name, buf);
    return out;
}
}  // namespace

// ---- Encoder ----

std::pair<V, V> Encoder::forward(const V& x, bool train) {
    const real slope = 0.2f;
    V h = ad::leaky_relu(c1(x), slope);
    h = ad::leaky_relu(b2(c2(h), train), slope);
    h = ad::leaky_relu(b3(c3(h), train), slope);
    h = ad::leaky_relu(b4(c4(h), train), slope);
    V flat = ad::flatten(h);
    return {mu_head(flat), logvar_head(flat)};
}

void Encoder::collect(nn::ParamSet<real>& ps) {
    c1.collect("enc.c1", ps);
    c2.collect("enc.c2", ps);
    c3.collect("enc.c3", ps);
    c4.collect("enc.c4", ps);
    b2.collect("enc.b2", ps);
    b3.collect("enc.b3", ps);
    b4.collect("enc.b4", ps);
    mu_head.collect("enc.mu", ps);
    logvar_head.collect("enc.logvar", ps);
}

// ---- Generator ----

V Generator::forward(const V& z, bool train) {
    V h = fc(z);
    h = ad::reshape(h, {z->value.dim(0), stem_channels, stem_spatial, stem_spatial});
    h = ad::relu(b0(h, train));
    h = ad::relu(b1(t1(h), train));
    h = ad::relu(b2(t2(h), train));
    h = ad::relu(b3(t3(h), train));
    return ad::sigmoid(t4(h));
}

void Generator::collect(nn::ParamSet<real>& ps) {
    fc.collect("gen.fc", ps);
    b0.collect("gen.b0", ps);
    b1.collect("gen.b1", ps);
    b2.collect("gen.b2", ps);
    b3.collect("gen.b3", ps);
    t1.collect("gen.t1", ps);
    t2.collect("gen.t2", ps);
    t3.collect("gen.t3", ps);
    t4.collect("gen.t4", ps);
}

// ---- Backbone ----

V Backbone::forward(const V& x, bool train) {
    const real slope = 0.2f;
    V h = ad::leaky_relu(c1(x), slope);
    h = ad::leaky_relu(b2(c2(h), train), slope);
    h = ad::leaky_relu(b3(c3(h), train), slope);
    h = ad::leaky_relu(b4(c4(h), train), slope);
    return ad::flatten(h);
}

void Backbone::collect(nn::ParamSet<real>& ps) {
    c1.collect("bb.c1", ps);
    c2.collect("bb.c2", ps);
    c3.collect("bb.c3", ps);
    c4.collect("bb.c4", ps);
    b2.collect("bb.b2", ps);
    b3.collect("bb.b3", ps);
    b4.collect("bb.b4", ps);
}

// ---- GenModel ----

GenModel GenModel::build(const ExperimentConfig& cfg, uint64_t init_seed) {
    if (cfg.image_size % 16 != 0) throw ConfigError("image_size: must be a multiple of 16");
    GenModel m;
    m.image_size = cfg.image_size;
    m.channels = cfg.channels;
    m.dims = {cfg.d1, cfg.d2, cfg.d3};
    m.bounds = {cfg.z3_min, cfg.z3_max};

    const int64_t w0 = BASE_WIDTH, w1 = 2 * w0, w2 = 4 * w0, w3 = 8 * w0;
    const int64_t spat = cfg.image_size / 16;
    const int64_t feat = w3 * spat * spat;

    rng::Stream re(init_seed, "init/encoder");
    m.enc.c1 = nn::Conv2d<real>(cfg.channels, w0, 4, 2, 1, re);
    m.enc.c2 = nn::Conv2d<real>(w0, w1, 4, 2, 1, re);
    m.enc.c3 = nn::Conv2d<real>(w1, w2, 4, 2, 1, re);
    m.enc.c4 = nn::Conv2d<real>(w2, w3, 4, 2, 1, re);
    m.enc.b2 = nn::BatchNorm2d<real>(w1, re);
    m.enc.b3 = nn::BatchNorm2d<real>(w2, re);
    m.enc.b4 = nn::BatchNorm2d<real>(w3, re);
    m.enc.mu_head = nn::Linear<real>(feat, cfg.d1, re);
    m.enc.logvar_head = nn::Linear<real>(feat, cfg.d1, re);

    rng::Stream rg(init_seed, "init/generator");
    m.gen.stem_channels = w3;
    m.gen.stem_spatial = spat;
    m.gen.fc = nn::Linear<real>(cfg.d1 + cfg.d2 + cfg.d3, feat, rg);
    m.gen.b0 = nn::BatchNorm2d<real>(w3, rg);
    m.gen.t1 = nn::ConvTranspose2d<real>(w3, w2, 4, 2, 1, rg);
    m.gen.b1 = nn::BatchNorm2d<real>(w2, rg);
    m.gen.t2 = nn::ConvTranspose2d<real>(w2, w1, 4, 2, 1, rg);
    m.gen.b2 = nn::BatchNorm2d<real>(w1, rg);
    m.gen.t3 = nn::ConvTranspose2d<real>(w1, w0, 4, 2, 1, rg);
    m.gen.b3 = nn::BatchNorm2d<real>(w0, rg);
    m.gen.t4 = nn::ConvTranspose2d<real>(w0, cfg.channels, 4, 2, 1, rg);

    rng::Stream rb(init_seed, "init/backbone");
    m.bb.c1 = nn::Conv2d<real>(cfg.channels, w0, 4, 2, 1, rb);
    m.bb.c2 = nn::Conv2d<real>(w0, w1, 4, 2, 1, rb);
    m.bb.c3 = nn::Conv2d<real>(w1, w2, 4, 2, 1, rb);
    m.bb.c4 = nn::Conv2d<real>(w2, w3, 4, 2, 1, rb);
    m.bb.b2 = nn::BatchNorm2d<real>(w1, rb);
    m.bb.b3 = nn::BatchNorm2d<real>(w2, rb);
    m.bb.b4 = nn::BatchNorm2d<real>(w3, rb);

    rng::Stream rh(init_seed, "init/heads");
    m.d_head = nn::Linear<real>(feat, 1, rh);
    m.q_class = nn::Linear<real>(feat, cfg.d2, rh);
    m.q_z3 = nn::Linear<real>(feat, cfg.d3, rh);
    return m;
}

V GenModel::disc_from_features(const V& f) {
    V score = ad::sigmoid(d_head(f));
    score = ad::clamp(score, SCORE_EPS, 1.0f - SCORE_EPS);
    return ad::reshape(score, {f->value.dim(0)});
}

std::pair<V, V> GenModel::decode_from_features(const V& f) {
    return {ad::softmax_rows(q_class(f)), q_z3(f)};
}

V GenModel::generate_from_codes(const V& z1, const V& z2, const V& z3) {
    return generate(ad::concat_cols<real>({z1, z2, z3}));
}

Tensor<real> GenModel::discriminate(const Tensor<real>& x) {
    return disc_from_features(features(ad::make_const(x)))->value;
}

std::pair<Tensor<real>, Tensor<real>> GenModel::decode(const Tensor<real>& x) {
    auto [probs, z3] = decode_from_features(features(ad::make_const(x)));
    return {probs->value, z3->value};
}

ReconResult GenModel::reconstruct(const Tensor<real>& x) {
    if (x.rank() != 4 || x.dim(1) != channels || x.dim(2) != image_size || x.dim(3) != image_size)
        throw DataError("reconstruct: expected [N," + std::to_string(channels) + "," +
                        std::to_string(image_size) + "," + std::to_string(image_size) +
                        "], got " + shape_str(x.shape()));
    V xv = ad::make_const(x);
    auto [mu, logvar] = encode(xv);
    auto [probs, z3] = decode_from_features(features(xv));
    ReconResult r;
    r.codes.z1 = mu->value;  // deterministic mode: posterior mean
    r.codes.z2 = probs->value;
    r.codes.z3 = z3->value;
    r.image = generate_from_codes(ad::make_const(r.codes.z1), ad::make_const(r.codes.z2),
                                  ad::make_const(r.codes.z3))
                  ->value;
    return r;
}

Tensor<real> GenModel::generate_images(const Tensor<real>& z1, const Tensor<real>& z2,
                                       const Tensor<real>& z3) {
    return generate_from_codes(ad::make_const(z1), ad::make_const(z2), ad::make_const(z3))->value;
}

Tensor<real> GenModel::generate_variant(const Tensor<real>& x, const std::vector<int64_t>& labels,
                                        const Tensor<real>& z3) {
    for (int64_t i = 0; i < z3.numel(); ++i)
        if (z3[i] < static_cast<real>(bounds.a) || z3[i] > static_cast<real>(bounds.b))
            throw DataError("generate_variant: z3 component outside [" +
                            std::to_string(bounds.a) + "," + std::to_string(bounds.b) +
                            "]; clamp first");
    V xv = ad::make_const(x);
    auto [mu, logvar] = encode(xv);
    Tensor<real> z2 = latent::one_hot_batch(labels, dims.d2);
    return generate_from_codes(mu, ad::make_const(z2), ad::make_const(z3))->value;
}

nn::ParamSet<real> GenModel::params_encoder() { return collect_of(enc); }
nn::ParamSet<real> GenModel::params_generator() { return collect_of(gen); }
nn::ParamSet<real> GenModel::params_backbone() { return collect_of(bb); }

nn::ParamSet<real> GenModel::params_d_head() {
    nn::ParamSet<real> ps;
    d_head.collect("dh.fc", ps);
    return ps;
}

nn::ParamSet<real> GenModel::params_q_heads() {
    nn::ParamSet<real> ps;
    q_class.collect("qh.class", ps);
    q_z3.collect("qh.z3", ps);
    return ps;
}

std::vector<std::string> GenModel::save_networks(const std::filesystem::path& dir,
                                                 const std::string& stage, int64_t epoch) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    auto save_one = [&](const char* net, nn::ParamSet<real> ps) {
        std::string name = checkpoint_name(net, stage, epoch);
        auto entries = to_entries(ps);
        save_tensors(dir / name, entries);
        files.push_back(name);
    };
    save_one("encoder", params_encoder());
    save_one("generator", params_generator());
    save_one("backbone", params_backbone());
    save_one("disc_head", params_d_head());
    save_one("dec_head", params_q_heads());
    return files;
}

void GenModel::load_networks(const std::filesystem::path& dir, const std::string& stage,
                             int64_t epoch) {
    auto load_one = [&](const char* net, nn::ParamSet<real> ps) {
        std::string name = checkpoint_name(net, stage, epoch);
        auto state = load_tensors(dir / name);
        load_into(ps, state, name);
    };
    load_one("encoder", params_encoder());
    load_one("generator", params_generator());
    load_one("backbone", params_backbone());
    load_one("disc_head", params_d_head());
    load_one("dec_head", params_q_heads());
}

std::string GenModel::weights_digest() {
    std::vector<std::pair<std::string, const Tensor<real>*>> entries;
    for (auto ps : {params_encoder(), params_generator(), params_backbone(), params_d_head(),
                    params_q_heads()}) {
        auto e = to_entries(ps);
        entries.insert(entries.end(), e.begin(), e.end());
    }
    return state_digest<real>(entries);
}

}  // namespace semadv

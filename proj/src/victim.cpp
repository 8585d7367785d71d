#include "semadv/victim.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "semadv/checkpoint.hpp"
#include "semadv/digest.hpp"
#include "semadv/error.hpp"
#include "semadv/losses.hpp"
#include "semadv/optim.hpp"

namespace semadv {

std::vector<int64_t> argmax_rows(const Tensor<real>& probs) {
    int64_t n = probs.dim(0), k = probs.dim(1);
    std::vector<int64_t> out(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        int64_t best = 0;
        for (int64_t c = 1; c < k; ++c)
            if (probs.at2(r, c) > probs.at2(r, best)) best = c;
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

VictimModel::VictimModel(std::string id, std::string arch, int64_t channels, int64_t image_size,
                         int64_t n_classes, uint64_t init_seed)
    : id_(std::move(id)), arch_(std::move(arch)), channels_(channels), image_size_(image_size),
      classes_(n_classes) {
    rng::Stream rs(init_seed, "init/victim/" + arch_);
    if (image_size_ % 16 != 0) throw ConfigError("victim: image_size must be a multiple of 16");
    int64_t spat = image_size_ / 16;
    if (arch_ == "cnn4") {
        convs_.emplace_back(channels_, 12, 3, 1, 1, rs, 0.05);
        convs_.emplace_back(12, 24, 3, 1, 1, rs, 0.05);
        convs_.emplace_back(24, 48, 3, 1, 1, rs, 0.05);
        convs_.emplace_back(48, 48, 3, 1, 1, rs, 0.05);
        pool_after_ = {0, 1, 2, 3};
        fcs_.emplace_back(48 * spat * spat, 96, rs, 0.05);
        fcs_.emplace_back(96, classes_, rs, 0.05);
    } else if (arch_ == "cnn6") {
        convs_.emplace_back(channels_, 10, 3, 1, 1, rs, 0.05);
        convs_.emplace_back(10, 20, 4, 2, 1, rs, 0.05);
        convs_.emplace_back(20, 20, 3, 1, 1, rs, 0.05);
        convs_.emplace_back(20, 40, 4, 2, 1, rs, 0.05);
        convs_.emplace_back(40, 40, 4, 2, 1, rs, 0.05);
        convs_.emplace_back(40, 80, 4, 2, 1, rs, 0.05);
        fcs_.emplace_back(80 * spat * spat, classes_, rs, 0.05);
    } else {
        throw ConfigError("victim: unknown architecture '" + arch_ + "' (expected cnn4|cnn6)");
    }
}

V VictimModel::forward_logits(const V& x) {
    V h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = ad::relu(convs_[i](h));
        for (int p : pool_after_)
            if (p == static_cast<int>(i)) h = ad::maxpool2x2(h);
    }
    h = ad::flatten(h);
    for (size_t i = 0; i + 1 < fcs_.size(); ++i) h = ad::relu(fcs_[i](h));
    return fcs_.back()(h);
}

Tensor<real> VictimModel::predict_probs(const Tensor<real>& images) const {
    auto* self = const_cast<VictimModel*>(this);
    V logits = self->forward_logits(ad::make_const(images));
    return ad::softmax_rows(logits)->value;
}

QueryResult VictimModel::query(const Tensor<real>& images, QueryMode mode) const {
    queries_ += images.dim(0);
    QueryResult r;
    r.probs = predict_probs(images);
    r.labels = argmax_rows(r.probs);
    if (mode == QueryMode::hard) r.probs = Tensor<real>();  // hard mode exposes labels only
    return r;
}

QueryResult query(const Classifier& victim, const Tensor<real>& images, QueryMode mode) {
    if (auto* vm = dynamic_cast<const VictimModel*>(&victim)) return vm->query(images, mode);
    QueryResult r;
    r.probs = victim.predict_probs(images);
    r.labels = argmax_rows(r.probs);
    if (mode == QueryMode::hard) r.probs = Tensor<real>();
    return r;
}

std::pair<double, Tensor<real>> VictimModel::loss_input_grad(const Tensor<real>& images,
                                                             const std::vector<int64_t>& labels) {
    set_trainable(false);
    V x = ad::make_var(images, true);
    V probs = ad::softmax_rows(forward_logits(x));
    Tensor<real> targets = latent::one_hot_batch(labels, classes_);
    V loss = losses::cross_entropy_mean(probs, targets);
    ad::backward(loss);
    return {static_cast<double>(loss->value[0]), x->grad};
}

nn::ParamSet<real> VictimModel::params() {
    nn::ParamSet<real> ps;
    for (size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect("victim.conv" + std::to_string(i), ps);
    for (size_t i = 0; i < fcs_.size(); ++i)
        fcs_[i].collect("victim.fc" + std::to_string(i), ps);
    return ps;
}

void VictimModel::set_trainable(bool trainable) {
    auto ps = params();
    for (auto& [name, v] : ps.trainable) v->requires_grad = trainable;
}

std::string VictimModel::weights_digest() {
    auto ps = params();
    std::vector<std::pair<std::string, const Tensor<real>*>> entries;
    for (auto& [name, v] : ps.trainable) entries.emplace_back(name, &v->value);
    return state_digest<real>(entries);
}

std::vector<std::string> VictimModel::save(const std::filesystem::path& dir,
                                           const std::string& stage, int64_t epoch) {
    std::filesystem::create_directories(dir);
    std::string name = checkpoint_name(arch_, stage, epoch);
    auto ps = params();
    std::vector<std::pair<std::string, const Tensor<real>*>> entries;
    for (auto& [pname, v] : ps.trainable) entries.emplace_back(pname, &v->value);
    save_tensors(dir / name, entries);
    return {name};
}

VictimModel VictimModel::load(const std::filesystem::path& dir, const std::string& file,
                              std::string id, std::string arch, int64_t channels,
                              int64_t image_size, int64_t n_classes) {
    VictimModel m(std::move(id), std::move(arch), channels, image_size, n_classes, 0);
    auto state = load_tensors(dir / file);
    auto ps = m.params();
    for (auto& [name, v] : ps.trainable) {
        auto it = state.find(name);
        if (it == state.end()) throw IoError("victim checkpoint: missing tensor '" + name + "'");
        if (it->second.shape() != v->value.shape())
            throw IoError("victim checkpoint: shape mismatch for '" + name + "'");
        v->value = it->second;
    }
    return m;
}

std::pair<Tensor<real>, int64_t> AttackPool::next() {
    if (pool.empty()) throw TrainError("attack pool exhausted: pool is empty");
    if (cursor >= pool.size()) {
        if (!cycle) throw TrainError("attack pool exhausted after " + std::to_string(pool.size()) +
                                     " draws");
        cursor = 0;
    }
    return pool[cursor++];
}

double clean_accuracy(const Classifier& victim, const data::ImageBatch& test, int64_t image_size,
                      int64_t batch_size) {
    int64_t n = test.count(), correct = 0;
    for (int64_t start = 0; start < n; start += batch_size) {
        std::vector<int64_t> idx;
        for (int64_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
        data::ImageBatch b = test.select(idx);
        Tensor<real> x = data::resize_bilinear(b.pixels, image_size);
        Tensor<real> probs = victim.predict_probs(x);
        auto labels = argmax_rows(probs);
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == b.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

// One classifier training loop serves plain victims, adversarial training
// and distillation, so the degenerate configurations coincide exactly.
VictimTrainResult train_classifier(const data::Dataset& ds, const std::string& arch,
                                   int64_t epochs, double lr, int64_t batch_size,
                                   int64_t image_size, uint64_t seed, const std::string& id,
                                   AttackPool* pool, double ratio, VictimModel* teacher,
                                   double temperature) {
    VictimTrainResult res{
        VictimModel(id.empty() ? arch : id, arch, ds.train.channels(), image_size, ds.n_classes,
                    seed),
        0.0, 0.0};
    VictimModel& m = res.model;
    nn::Adam<real> opt(m.params().trainable, lr, 0.9, 0.999);

    int64_t n = ds.train.count();
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int64_t epoch = 0; epoch < epochs; ++epoch) {
        rng::Stream shuffle(seed, "victim_shuffle/" + arch + "/" + std::to_string(epoch));
        shuffle.shuffle(order.begin(), order.end());
        double loss_sum = 0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += batch_size) {
            std::vector<int64_t> idx(order.begin() + start,
                                     order.begin() + std::min<int64_t>(n, start + batch_size));
            data::ImageBatch b = ds.train.select(idx);
            Tensor<real> x = data::resize_bilinear(b.pixels, image_size);
            std::vector<int64_t> labels = b.labels;

            if (pool && ratio > 0) {
                // replace the trailing fraction of the batch with pool draws
                int64_t m_total = x.dim(0);
                auto n_adv = static_cast<int64_t>(
                    std::llround(ratio * static_cast<double>(m_total)));
                int64_t sz = x.numel() / m_total;
                for (int64_t i = m_total - n_adv; i < m_total; ++i) {
                    auto [img, label] = pool->next();
                    if (img.numel() != sz)
                        throw TrainError("attack pool image shape mismatch");
                    std::copy_n(img.data(), sz, x.data() + i * sz);
                    labels[static_cast<size_t>(i)] = label;
                }
            }

            Tensor<real> targets;
            double t_used = 1.0;
            if (teacher) {
                V tl = teacher->forward_logits(ad::make_const(x));
                if (temperature == 1.0) {
                    // degenerate temperature: hard labels from the teacher
                    targets = latent::one_hot_batch(argmax_rows(ad::softmax_rows(tl)->value),
                                                    ds.n_classes);
                } else {
                    targets = ad::softmax_rows(ad::scale(tl, static_cast<real>(1.0 / temperature)))
                                  ->value;
                    t_used = temperature;
                }
            } else {
                targets = latent::one_hot_batch(labels, ds.n_classes);
            }

            opt.zero_grad();
            V logits = m.forward_logits(ad::make_const(x));
            if (t_used != 1.0) logits = ad::scale(logits, static_cast<real>(1.0 / t_used));
            V loss = losses::cross_entropy_mean(ad::softmax_rows(logits), targets);
            double lv = static_cast<double>(loss->value[0]);
            if (!std::isfinite(lv))
                throw TrainError("victim training diverged: non-finite cross-entropy at epoch " +
                                 std::to_string(epoch));
            ad::backward(loss);
            opt.step();
            loss_sum += lv;
            ++batches;
        }
        res.final_loss = loss_sum / std::max<int64_t>(1, batches);
    }
    res.clean_accuracy = clean_accuracy(m, ds.test, image_size);
    return res;
}

}  // namespace

VictimTrainResult train_victim(const data::Dataset& ds, const std::string& arch, int64_t epochs,
                               double lr, int64_t batch_size, int64_t image_size, uint64_t seed,
                               const std::string& id) {
    return train_classifier(ds, arch, epochs, lr, batch_size, image_size, seed, id, nullptr, 0,
                            nullptr, 1.0);
}

VictimTrainResult defend_adversarial_training(const data::Dataset& ds, const std::string& arch,
                                              AttackPool& pool, double ratio, int64_t epochs,
                                              double lr, int64_t batch_size, int64_t image_size,
                                              uint64_t seed, const std::string& id) {
    if (ratio < 0 || ratio > 1) throw ConfigError("adversarial training: ratio must be in [0,1]");
    return train_classifier(ds, arch, epochs, lr, batch_size, image_size, seed, id,
                            ratio > 0 ? &pool : nullptr, ratio, nullptr, 1.0);
}

VictimTrainResult defend_distillation(VictimModel& teacher, const std::string& student_arch,
                                      const data::Dataset& ds, double temperature, int64_t epochs,
                                      double lr, int64_t batch_size, int64_t image_size,
                                      uint64_t seed, const std::string& id) {
    if (temperature < 1.0) throw ConfigError("distillation: temperature must be >= 1");
    teacher.set_trainable(false);
    return train_classifier(ds, student_arch, epochs, lr, batch_size, image_size, seed, id,
                            nullptr, 0, &teacher, temperature);
}

void save_victim_bundle(const std::filesystem::path& dir, VictimModel& model,
                        const std::string& stage, int64_t epochs, double clean_acc,
                        const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    auto files = model.save(dir, stage, epochs);
    nlohmann::json j{{"schema", "semadv.victim/1"},
                     {"id", model.id()},
                     {"arch", model.arch()},
                     {"channels", 0},
                     {"image_size", model.image_size()},
                     {"n_classes", model.n_classes()},
                     {"clean_accuracy", clean_acc},
                     {"file", files.at(0)}};
    // channels are recoverable from the first conv weight; stored for clarity
    auto ps = model.params();
    j["channels"] = ps.trainable.at(0).second->value.dim(1);
    if (!extra.is_null() && !extra.empty()) j["extra"] = extra;
    std::ofstream out(dir / "victim.json");
    if (!out) throw IoError("victim bundle: cannot write " + (dir / "victim.json").string());
    out << j.dump(2) << "\n";
}

VictimModel load_victim_bundle(const std::filesystem::path& dir) {
    std::ifstream in(dir / "victim.json");
    if (!in) throw IoError("victim bundle: cannot open " + (dir / "victim.json").string());
    nlohmann::json j;
    in >> j;
    return VictimModel::load(dir, j.at("file").get<std::string>(), j.at("id").get<std::string>(),
                             j.at("arch").get<std::string>(), j.at("channels").get<int64_t>(),
                             j.at("image_size").get<int64_t>(), j.at("n_classes").get<int64_t>());
}

// ---- external victim adapter ----

ExternalVictim::ExternalVictim(std::string id, std::string command, int64_t n_classes,
                               std::filesystem::path workdir)
    : id_(std::move(id)), command_(std::move(command)), classes_(n_classes),
      workdir_(std::move(workdir)) {
    std::filesystem::create_directories(workdir_);
}

Tensor<real> ExternalVictim::predict_probs(const Tensor<real>& images) const {
    auto in_path = workdir_ / "query_batch.bin";
    auto out_path = workdir_ / "query_probs.bin";
    {
        std::ofstream out(in_path, std::ios::binary);
        if (!out) throw IoError("external victim: cannot write " + in_path.string());
        out.write("SVQB", 4);
        int64_t dims[4] = {images.dim(0), images.dim(1), images.dim(2), images.dim(3)};
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        out.write(reinterpret_cast<const char*>(images.data()),
                  static_cast<std::streamsize>(images.numel() * sizeof(real)));
    }
    std::error_code ec;
    std::filesystem::remove(out_path, ec);
    std::string cmd = command_ + " " + in_path.string() + " " + out_path.string();
    int rc = std::system(cmd.c_str());
    if (rc != 0)
        throw IoError("external victim: command failed with status " + std::to_string(rc));
    std::ifstream in(out_path, std::ios::binary);
    if (!in) throw IoError("external victim: no output at " + out_path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "SVQP")
        throw IoError("external victim: bad output magic");
    int64_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] != images.dim(0) || dims[1] != classes_)
        throw IoError("external victim: output shape mismatch");
    Tensor<real> probs({dims[0], dims[1]});
    in.read(reinterpret_cast<char*>(probs.data()),
            static_cast<std::streamsize>(probs.numel() * sizeof(real)));
    if (!in) throw IoError("external victim: truncated probability payload");
    return probs;
}

}  // namespace semadv

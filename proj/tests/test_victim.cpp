#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "synthetic_data.hpp"

#include "semadv/victim.hpp"

using namespace semadv;

namespace {
const data::Dataset& tiny_ds() {
    static data::Dataset ds = synthetic_dataset(160, 48, 4, 32, 21);
    return ds;
}
}  // namespace

TEST_CASE("victim training fits an easy synthetic task") {
    auto res = train_victim(tiny_ds(), "cnn4", 3, 1e-3, 16, 32, 1);
    CHECK(res.clean_accuracy >= 0.95);

    auto res6 = train_victim(tiny_ds(), "cnn6", 3, 1e-3, 16, 32, 1);
    CHECK(res6.clean_accuracy >= 0.95);

    CHECK_THROWS_AS(VictimModel("v", "resnet50", 1, 32, 4, 0), ConfigError);
}

TEST_CASE("two seeds produce two distinct weight digests") {
    auto a = train_victim(tiny_ds(), "cnn4", 1, 1e-3, 16, 32, 1);
    auto b = train_victim(tiny_ds(), "cnn4", 1, 1e-3, 16, 32, 2);
    auto a2 = train_victim(tiny_ds(), "cnn4", 1, 1e-3, 16, 32, 1);
    CHECK(a.model.weights_digest() != b.model.weights_digest());
    CHECK(a.model.weights_digest() == a2.model.weights_digest());  // and training is deterministic
}

TEST_CASE("query: hard equals argmax of soft, rows sum to one, counter counts images") {
    VictimModel m("v", "cnn4", 1, 32, 4, 3);
    rng::Stream rs(4, "q");
    Tensor<real> x({100, 1, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<real>(rs.u01());

    for (int round = 0; round < 3; ++round) {
        QueryResult soft = m.query(x, QueryMode::soft);
        QueryResult hard = m.query(x, QueryMode::hard);
        CHECK(hard.probs.empty());  // hard mode exposes labels only
        CHECK(hard.labels == soft.labels);
        CHECK(soft.labels == argmax_rows(soft.probs));
        for (int64_t r = 0; r < 100; ++r) {
            double s = 0;
            for (int64_t c = 0; c < 4; ++c) s += soft.probs.at2(r, c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    CHECK(m.query_count() == 600);  // 6 batches of 100

    // identical batches give identical probabilities (pure evaluation)
    auto p1 = m.predict_probs(x);
    auto p2 = m.predict_probs(x);
    CHECK(p1.vec() == p2.vec());
}

TEST_CASE("input gradient matches finite differences on a small victim") {
    VictimModel m("v", "cnn4", 1, 32, 4, 5);
    rng::Stream rs(6, "ig");
    Tensor<real> x({1, 1, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<real>(rs.uniform(0.2, 0.8));
    std::vector<int64_t> y{2};

    auto [loss, grad] = m.loss_input_grad(x, y);
    CHECK(std::isfinite(loss));
    REQUIRE(grad.shape() == x.shape());

    double h = 1e-3;  // float32 forward: keep h large enough to beat rounding
    for (int64_t i = 0; i < 24; ++i) {
        int64_t idx = (i * 41) % x.numel();
        Tensor<real> xp = x, xm = x;
        xp[idx] += static_cast<real>(h);
        xm[idx] -= static_cast<real>(h);
        double up = m.loss_input_grad(xp, y).first;
        double down = m.loss_input_grad(xm, y).first;
        double numeric = (up - down) / (2 * h);
        CHECK(std::abs(numeric - grad[idx]) < 2e-2 * std::max(1.0, std::abs(numeric)));
    }
}

TEST_CASE("adversarial training with ratio 0 reproduces plain training") {
    AttackPool pool;
    pool.pool.emplace_back(Tensor<real>::zeros({1, 32, 32}), 0);
    auto plain = train_victim(tiny_ds(), "cnn4", 1, 1e-3, 16, 32, 11);
    auto defended = defend_adversarial_training(tiny_ds(), "cnn4", pool, 0.0, 1, 1e-3, 16, 32, 11);
    CHECK(plain.model.weights_digest() == defended.model.weights_digest());
}

TEST_CASE("adversarial training mixes the pool and shifts the weights") {
    rng::Stream rs(12, "pool");
    AttackPool pool;
    for (int i = 0; i < 64; ++i) {
        Tensor<real> img({1, 32, 32});
        for (int64_t j = 0; j < img.numel(); ++j) img[j] = static_cast<real>(rs.u01());
        pool.pool.emplace_back(img, i % 4);
    }
    pool.cycle = true;
    auto plain = train_victim(tiny_ds(), "cnn4", 1, 1e-3, 16, 32, 11);
    auto defended =
        defend_adversarial_training(tiny_ds(), "cnn4", pool, 0.5, 1, 1e-3, 16, 32, 11);
    CHECK(plain.model.weights_digest() != defended.model.weights_digest());
    CHECK(defended.clean_accuracy >= 0.8);  // still learns the clean task
}

TEST_CASE("a non-cycling pool exhausts with an error") {
    AttackPool pool;
    pool.pool.emplace_back(Tensor<real>::zeros({1, 32, 32}), 0);
    pool.cycle = false;
    CHECK_NOTHROW(pool.next());
    CHECK_THROWS_WITH_AS(pool.next(), doctest::Contains("exhausted"), TrainError);
    CHECK_THROWS_AS(
        defend_adversarial_training(tiny_ds(), "cnn4", pool, 0.5, 1, 1e-3, 16, 32, 11),
        TrainError);
}

TEST_CASE("distillation: temperature bounds and the T=1 degenerate case") {
    auto teacher = train_victim(tiny_ds(), "cnn4", 2, 1e-3, 16, 32, 31);
    CHECK_THROWS_AS(defend_distillation(teacher.model, "cnn4", tiny_ds(), 0.5, 1, 1e-3, 16, 32, 32),
                    ConfigError);

    // T=1 degenerates to training on the teacher's argmax labels
    auto distilled = defend_distillation(teacher.model, "cnn4", tiny_ds(), 1.0, 1, 1e-3, 16, 32, 32);

    data::Dataset relabeled = tiny_ds();
    for (int64_t start = 0; start < relabeled.train.count(); start += 256) {
        std::vector<int64_t> idx;
        for (int64_t i = start; i < std::min<int64_t>(relabeled.train.count(), start + 256); ++i)
            idx.push_back(i);
        auto b = relabeled.train.select(idx);
        auto labels = argmax_rows(teacher.model.predict_probs(b.pixels));
        for (size_t i = 0; i < idx.size(); ++i)
            relabeled.train.labels[static_cast<size_t>(idx[i])] = labels[i];
    }
    auto plain = train_victim(relabeled, "cnn4", 1, 1e-3, 16, 32, 32);
    CHECK(distilled.model.weights_digest() == plain.model.weights_digest());

    // higher temperature trains and serves fine
    auto soft = defend_distillation(teacher.model, "cnn4", tiny_ds(), 20.0, 2, 1e-3, 16, 32, 33);
    CHECK(soft.clean_accuracy >= 0.9);
}

TEST_CASE("victim bundles round-trip through disk") {
    auto dir = std::filesystem::temp_directory_path() / "semadv_victim_bundle";
    std::filesystem::remove_all(dir);
    auto res = train_victim(tiny_ds(), "cnn6", 1, 1e-3, 16, 32, 41);
    save_victim_bundle(dir, res.model, "victim", 1, res.clean_accuracy);
    VictimModel back = load_victim_bundle(dir);
    CHECK(back.weights_digest() == res.model.weights_digest());
    CHECK(back.id() == res.model.id());
    CHECK(back.arch() == "cnn6");
}

TEST_CASE("external victim adapter speaks the batch file exchange") {
    // a tiny python program implementing the documented file contract
    const char* py = R"PY(
import struct, sys
inp, outp = sys.argv[1], sys.argv[2]
with open(inp, 'rb') as f:
    data = f.read()
assert data[:4] == b'SVQB'
n, c, h, w = struct.unpack('<4q', data[4:36])
with open(outp, 'wb') as f:
    f.write(b'SVQP')
    f.write(struct.pack('<2q', n, 3))
    for i in range(n):
        f.write(struct.pack('<3f', 0.2, 0.5, 0.3))
)PY";
    if (std::system("python3 -c 'pass' 2>/dev/null") != 0) {
        MESSAGE("python3 unavailable, skipping adapter test");
        return;
    }
    auto dir = std::filesystem::temp_directory_path() / "semadv_extvictim";
    std::filesystem::create_directories(dir);
    std::ofstream script(dir / "echo_victim.py");
    script << py;
    script.close();

    ExternalVictim ev("ext", "python3 " + (dir / "echo_victim.py").string(), 3, dir);
    Tensor<real> x({2, 1, 8, 8});
    auto probs = ev.predict_probs(x);
    REQUIRE(probs.shape() == std::vector<int64_t>{2, 3});
    CHECK(probs.at2(0, 1) == doctest::Approx(0.5));
    auto labels = query(ev, x, QueryMode::hard).labels;
    CHECK(labels == std::vector<int64_t>{1, 1});
}

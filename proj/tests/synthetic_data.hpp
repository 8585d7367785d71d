#pragma once

#include "semadv/data.hpp"

// Small synthetic labeled image set for fast training tests: each class is a
// bright band at a class-specific position plus mild noise.
inline semadv::data::Dataset synthetic_dataset(int64_t n_train, int64_t n_test,
                                               int64_t n_classes, int64_t size, uint64_t seed) {
    using namespace semadv;
    auto make = [&](int64_t n, const char* tag) {
        data::ImageBatch b;
        b.pixels = Tensor<float>({n, 1, size, size});
        rng::Stream rs(seed, std::string("synth/") + tag);
        int64_t band = size / n_classes;
        for (int64_t i = 0; i < n; ++i) {
            int64_t cls = i % n_classes;
            b.labels.push_back(cls);
            for (int64_t y = 0; y < size; ++y)
                for (int64_t x = 0; x < size; ++x) {
                    bool in_band = y >= cls * band && y < cls * band + band - 1;
                    float v = in_band ? 0.85f : 0.15f;
                    v += static_cast<float>(rs.uniform(-0.05, 0.05));
                    b.pixels.at4(i, 0, y, x) = std::clamp(v, 0.0f, 1.0f);
                }
        }
        return b;
    };
    data::Dataset ds;
    ds.train = make(n_train, "train");
    ds.test = make(n_test, "test");
    ds.n_classes = n_classes;
    for (int64_t c = 0; c < n_classes; ++c) ds.class_names.push_back(std::to_string(c));
    return ds;
}

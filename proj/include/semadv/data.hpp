#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semadv/rng.hpp"
#include "semadv/tensor.hpp"

namespace semadv::data {

// A batch (or full set) of images in [0,1], NCHW, with class labels.
struct ImageBatch {
    Tensor<float> pixels;        // [m, C, H, W]
    std::vector<int64_t> labels;  // in [0, n_classes)

    int64_t count() const { return pixels.empty() ? 0 : pixels.dim(0); }
    int64_t channels() const { return pixels.dim(1); }
    int64_t height() const { return pixels.dim(2); }
    int64_t width() const { return pixels.dim(3); }

    ImageBatch select(const std::vector<int64_t>& indices) const;
    Tensor<float> image(int64_t i) const;  // [C,H,W] copy
};

// ---- IDX (big-endian magic/counts, u8 payload) ----

struct IdxImages {
    int64_t count = 0, rows = 0, cols = 0;
    std::vector<uint8_t> pixels;  // count*rows*cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& data);
void write_idx_labels(const std::filesystem::path& path, const std::vector<uint8_t>& labels);

// Pairs image/label files into a batch; validates headers and counts.
ImageBatch parse_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

// ---- labeled image folder: root/<class>/<file>.{png,jpg,bmp} ----

struct FolderSet {
    ImageBatch batch;
    std::vector<std::string> class_names;  // sorted; label = index
};

FolderSet load_image_folder(const std::filesystem::path& root, int64_t channels);

// ---- preprocessing ----

// Bilinear resize (half-pixel centers) to target_size x target_size.
Tensor<float> resize_bilinear(const Tensor<float>& nchw, int64_t target_size);
ImageBatch preprocess(const ImageBatch& batch, int64_t target_size);

// ---- dataset + split ----

struct Dataset {
    ImageBatch train, test;
    int64_t n_classes = 0;
    std::vector<std::string> class_names;
};

Dataset load_mnist(const std::filesystem::path& dir);
Dataset load_folder_dataset(const std::filesystem::path& root, int64_t channels,
                            double test_fraction, uint64_t seed);

struct DatasetSplit {
    std::vector<int64_t> train;                       // indices into Dataset::train
    std::vector<int64_t> test;                        // indices into Dataset::test
    std::vector<std::vector<int64_t>> test_per_class;  // per-class test indices
};

DatasetSplit make_split(const Dataset& ds);

// Deterministic class-balanced subset of the train indices (limit 0 = all).
std::vector<int64_t> balanced_train_subset(const Dataset& ds, int64_t limit, uint64_t seed);

// `repeats` independent equal-per-class samples from the test set,
// class-major within each sample. Deterministic under seed.
std::vector<std::vector<int64_t>> sample_eval_set(const DatasetSplit& split, int64_t per_class,
                                                  int64_t repeats, uint64_t seed);

}  // namespace semadv::data

#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "semadv/data.hpp"
#include "semadv/error.hpp"

using namespace semadv;
using namespace semadv::data;

namespace {
std::filesystem::path tmp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("semadv_data_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::filesystem::path mnist_dir() {
    if (const char* env = std::getenv("SEMADV_MNIST_DIR")) return env;
    return "/root/data/mnist";
}

std::vector<uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("synthetic idx files round-trip byte-for-byte") {
    auto dir = tmp_dir("idx_rt");
    IdxImages imgs;
    imgs.count = 2;
    imgs.rows = 3;
    imgs.cols = 4;
    for (int i = 0; i < 24; ++i) imgs.pixels.push_back(static_cast<uint8_t>(i * 10 + 1));
    std::vector<uint8_t> labels{7, 2};
    write_idx_images(dir / "img", imgs);
    write_idx_labels(dir / "lbl", labels);

    IdxImages back = read_idx_images(dir / "img");
    CHECK(back.count == imgs.count);
    CHECK(back.rows == imgs.rows);
    CHECK(back.cols == imgs.cols);
    CHECK(back.pixels == imgs.pixels);
    CHECK(read_idx_labels(dir / "lbl") == labels);

    // writing back what was parsed reproduces identical bytes
    write_idx_images(dir / "img2", back);
    CHECK(read_file(dir / "img") == read_file(dir / "img2"));

    ImageBatch b = parse_idx(dir / "img", dir / "lbl");
    CHECK(b.count() == 2);
    CHECK(b.labels == std::vector<int64_t>{7, 2});
    CHECK(b.pixels.dim(2) == 3);
    CHECK(b.pixels[0] == doctest::Approx(1.0 / 255.0));
}

TEST_CASE("idx parsing rejects malformed files") {
    auto dir = tmp_dir("idx_bad");

    // bad magic
    {
        std::ofstream out(dir / "badmagic", std::ios::binary);
        const unsigned char hdr[] = {0, 0, 8, 100, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_WITH_AS(read_idx_images(dir / "badmagic"), doctest::Contains("bad magic"),
                         DataError);

    // labels magic on an image read
    {
        IdxImages imgs;
        imgs.count = 1;
        imgs.rows = 2;
        imgs.cols = 2;
        imgs.pixels = {1, 2, 3, 4};
        write_idx_images(dir / "img", imgs);
        write_idx_labels(dir / "lbl", {1});
    }
    CHECK_THROWS_AS(read_idx_images(dir / "lbl"), DataError);
    CHECK_THROWS_AS(read_idx_labels(dir / "img"), DataError);

    // truncated payload: header promises 10 images, payload has 9
    {
        std::ofstream out(dir / "trunc", std::ios::binary);
        const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 10, 0, 0, 0, 1, 0, 0, 0, 1};
        out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
        for (int i = 0; i < 9; ++i) out.put(static_cast<char>(i));
    }
    CHECK_THROWS_WITH_AS(read_idx_images(dir / "trunc"), doctest::Contains("truncated"),
                         DataError);

    // image/label count mismatch
    write_idx_labels(dir / "lbl2", {1, 2});
    CHECK_THROWS_WITH_AS(parse_idx(dir / "img", dir / "lbl2"), doctest::Contains("does not match"),
                         DataError);
}

TEST_CASE("parsed mnist has 60000 train and 10000 test samples in 10 classes") {
    if (!std::filesystem::exists(mnist_dir() / "train-images-idx3-ubyte")) {
        MESSAGE("mnist not present, skipping");
        return;
    }
    Dataset ds = load_mnist(mnist_dir());
    CHECK(ds.train.count() == 60000);
    CHECK(ds.test.count() == 10000);
    CHECK(ds.n_classes == 10);
    CHECK(ds.train.height() == 28);
    std::vector<int64_t> counts(10, 0);
    for (auto l : ds.train.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < 10);
        counts[static_cast<size_t>(l)]++;
    }
    for (auto c : counts) CHECK(c > 5000);
    for (int64_t i = 0; i < ds.train.pixels.numel(); i += 997) {
        CHECK(ds.train.pixels[i] >= 0.0f);
        CHECK(ds.train.pixels[i] <= 1.0f);
    }
}

TEST_CASE("bilinear resize: 28->64 stays in range, constants and identity preserved") {
    Tensor<float> img({1, 1, 28, 28});
    rng::Stream rs(3, "resize");
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rs.u01());
    ImageBatch b{img, {0}};

    ImageBatch up = preprocess(b, 64);
    CHECK(up.pixels.shape() == std::vector<int64_t>{1, 1, 64, 64});
    for (int64_t i = 0; i < up.pixels.numel(); ++i) {
        CHECK(up.pixels[i] >= 0.0f);
        CHECK(up.pixels[i] <= 1.0f);
    }

    ImageBatch flat{Tensor<float>::full({2, 1, 17, 17}, 0.5f), {0, 1}};
    ImageBatch flat_up = preprocess(flat, 40);
    for (int64_t i = 0; i < flat_up.pixels.numel(); ++i)
        CHECK(flat_up.pixels[i] == doctest::Approx(0.5f).epsilon(1e-6));

    ImageBatch same = preprocess(up, 64);
    CHECK(same.pixels.vec() == up.pixels.vec());

    CHECK_THROWS_AS(preprocess(b, 0), DataError);
}

TEST_CASE("image folder loading: sorted classes, duplicate names, error paths") {
    auto root = tmp_dir("folder");
    auto write_png = [&](const std::filesystem::path& p, uint8_t v) {
        cv::Mat m(10, 10, CV_8UC1, cv::Scalar(v));
        cv::imwrite(p.string(), m);
    };
    std::filesystem::create_directories(root / "b_class");
    std::filesystem::create_directories(root / "a_class");
    write_png(root / "a_class" / "same.png", 10);
    write_png(root / "a_class" / "x.png", 20);
    write_png(root / "b_class" / "same.png", 30);  // duplicate file name, distinct sample

    FolderSet fs = load_image_folder(root, 1);
    CHECK(fs.class_names == std::vector<std::string>{"a_class", "b_class"});
    CHECK(fs.batch.count() == 3);
    CHECK(fs.batch.labels == std::vector<int64_t>{0, 0, 1});
    CHECK(fs.batch.pixels[0] == doctest::Approx(10.0 / 255.0));

    std::filesystem::create_directories(root / "c_empty");
    CHECK_THROWS_WITH_AS(load_image_folder(root, 1), doctest::Contains("c_empty"), DataError);
    std::filesystem::remove_all(root / "c_empty");

    std::ofstream bad(root / "b_class" / "broken.png");
    bad << "not an image";
    bad.close();
    CHECK_THROWS_WITH_AS(load_image_folder(root, 1), doctest::Contains("broken.png"), DataError);
}

TEST_CASE("six class directories give a six-label space") {
    auto root = tmp_dir("folder6");
    for (int c = 0; c < 6; ++c) {
        auto d = root / ("class" + std::to_string(c));
        std::filesystem::create_directories(d);
        cv::Mat m(8, 8, CV_8UC1, cv::Scalar(40 * c));
        cv::imwrite((d / "img.png").string(), m);
    }
    FolderSet fs = load_image_folder(root, 1);
    CHECK(fs.class_names.size() == 6);
    int64_t max_label = *std::max_element(fs.batch.labels.begin(), fs.batch.labels.end());
    CHECK(max_label == 5);
}

TEST_CASE("eval sampling is class-balanced, repeatable and bounded") {
    Dataset ds;
    ds.n_classes = 10;
    int64_t per_cls = 30;
    ds.test.pixels = Tensor<float>({10 * per_cls, 1, 16, 16});
    for (int64_t c = 0; c < 10; ++c)
        for (int64_t i = 0; i < per_cls; ++i) ds.test.labels.push_back(c);
    ds.train = ds.test;

    DatasetSplit split = make_split(ds);
    CHECK(split.test_per_class.size() == 10);

    auto sets = sample_eval_set(split, 10, 5, 77);
    REQUIRE(sets.size() == 5);
    for (auto& s : sets) {
        REQUIRE(s.size() == 100);
        std::vector<int64_t> counts(10, 0);
        for (auto idx : s) counts[static_cast<size_t>(ds.test.labels[static_cast<size_t>(idx)])]++;
        for (auto c : counts) CHECK(c == 10);  // exactly balanced
        auto uniq = s;
        std::sort(uniq.begin(), uniq.end());
        CHECK(std::adjacent_find(uniq.begin(), uniq.end()) == uniq.end());
    }
    CHECK(sets[0] != sets[1]);  // repeats are independent draws

    auto sets2 = sample_eval_set(split, 10, 5, 77);
    CHECK(sets == sets2);  // deterministic under seed

    auto empty = sample_eval_set(split, 0, 5, 77);
    for (auto& s : empty) CHECK(s.empty());

    CHECK_THROWS_WITH_AS(sample_eval_set(split, per_cls + 1, 1, 0), doctest::Contains("only"),
                         DataError);
}

TEST_CASE("balanced train subset has equal class quotas") {
    Dataset ds;
    ds.n_classes = 4;
    ds.train.pixels = Tensor<float>({400, 1, 8, 8});
    for (int64_t i = 0; i < 400; ++i) ds.train.labels.push_back(i % 4);
    ds.test = ds.train;

    auto subset = balanced_train_subset(ds, 100, 9);
    CHECK(subset.size() == 100);
    std::vector<int64_t> counts(4, 0);
    for (auto i : subset) counts[static_cast<size_t>(ds.train.labels[static_cast<size_t>(i)])]++;
    for (auto c : counts) CHECK(c == 25);

    auto all = balanced_train_subset(ds, 0, 9);
    CHECK(all.size() == 400);
    auto same = balanced_train_subset(ds, 100, 9);
    CHECK(same == subset);
}

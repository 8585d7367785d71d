#include "semadv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semadv/error.hpp"

namespace semadv::data {

namespace fs = std::filesystem;

ImageBatch ImageBatch::select(const std::vector<int64_t>& indices) const {
    int64_t c = channels(), h = height(), w = width(), sz = c * h * w;
    ImageBatch out;
    out.pixels = Tensor<float>({static_cast<int64_t>(indices.size()), c, h, w});
    out.labels.reserve(indices.size());
    int64_t row = 0;
    for (int64_t idx : indices) {
        std::copy_n(pixels.data() + idx * sz, sz, out.pixels.data() + row * sz);
        out.labels.push_back(labels[static_cast<size_t>(idx)]);
        ++row;
    }
    return out;
}

Tensor<float> ImageBatch::image(int64_t i) const {
    int64_t sz = channels() * height() * width();
    Tensor<float> out({channels(), height(), width()});
    std::copy_n(pixels.data() + i * sz, sz, out.data());
    return out;
}

// ---- IDX ----

namespace {
constexpr uint32_t IMAGES_MAGIC = 2051;
constexpr uint32_t LABELS_MAGIC = 2049;

uint32_t read_be32(std::ifstream& in, const fs::path& path, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("idx: " + path.string() + ": truncated " + what);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}
}  // namespace

IdxImages read_idx_images(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("idx: cannot open " + path.string());
    uint32_t magic = read_be32(in, path, "magic");
    if (magic != IMAGES_MAGIC)
        throw DataError("idx: " + path.string() + ": bad magic " + std::to_string(magic) +
                        " (expected 2051)");
    IdxImages d;
    d.count = read_be32(in, path, "count");
    d.rows = read_be32(in, path, "rows");
    d.cols = read_be32(in, path, "cols");
    d.pixels.resize(static_cast<size_t>(d.count * d.rows * d.cols));
    in.read(reinterpret_cast<char*>(d.pixels.data()),
            static_cast<std::streamsize>(d.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(d.pixels.size()))
        throw DataError("idx: " + path.string() + ": truncated payload (header promises " +
                        std::to_string(d.count) + " images)");
    return d;
}

std::vector<uint8_t> read_idx_labels(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("idx: cannot open " + path.string());
    uint32_t magic = read_be32(in, path, "magic");
    if (magic != LABELS_MAGIC)
        throw DataError("idx: " + path.string() + ": bad magic " + std::to_string(magic) +
                        " (expected 2049)");
    uint32_t count = read_be32(in, path, "count");
    std::vector<uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (in.gcount() != static_cast<std::streamsize>(labels.size()))
        throw DataError("idx: " + path.string() + ": truncated payload (header promises " +
                        std::to_string(count) + " labels)");
    return labels;
}

void write_idx_images(const fs::path& path, const IdxImages& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("idx: cannot write " + path.string());
    write_be32(out, IMAGES_MAGIC);
    write_be32(out, static_cast<uint32_t>(d.count));
    write_be32(out, static_cast<uint32_t>(d.rows));
    write_be32(out, static_cast<uint32_t>(d.cols));
    out.write(reinterpret_cast<const char*>(d.pixels.data()),
              static_cast<std::streamsize>(d.pixels.size()));
    if (!out) throw DataError("idx: write failed for " + path.string());
}

void write_idx_labels(const fs::path& path, const std::vector<uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("idx: cannot write " + path.string());
    write_be32(out, LABELS_MAGIC);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!out) throw DataError("idx: write failed for " + path.string());
}

ImageBatch parse_idx(const fs::path& images_path, const fs::path& labels_path) {
    IdxImages imgs = read_idx_images(images_path);
    std::vector<uint8_t> labels = read_idx_labels(labels_path);
    if (static_cast<int64_t>(labels.size()) != imgs.count)
        throw DataError("idx: image count " + std::to_string(imgs.count) +
                        " does not match label count " + std::to_string(labels.size()));
    ImageBatch b;
    b.pixels = Tensor<float>({imgs.count, 1, imgs.rows, imgs.cols});
    for (size_t i = 0; i < imgs.pixels.size(); ++i)
        b.pixels[static_cast<int64_t>(i)] = static_cast<float>(imgs.pixels[i]) / 255.0f;
    b.labels.assign(labels.begin(), labels.end());
    return b;
}

// ---- image folder ----

FolderSet load_image_folder(const fs::path& root, int64_t channels) {
    if (!fs::is_directory(root)) throw DataError("image_folder: not a directory: " + root.string());
    std::vector<std::string> classes;
    for (auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw DataError("image_folder: no class subdirectories in " + root.string());

    static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp"};
    std::vector<std::pair<fs::path, int64_t>> files;
    for (size_t ci = 0; ci < classes.size(); ++ci) {
        std::vector<fs::path> in_class;
        for (auto& e : fs::directory_iterator(root / classes[ci])) {
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
            if (e.is_regular_file() && exts.count(ext)) in_class.push_back(e.path());
        }
        std::sort(in_class.begin(), in_class.end());
        if (in_class.empty())
            throw DataError("image_folder: class directory '" + classes[ci] + "' has no images");
        for (auto& p : in_class) files.emplace_back(p, static_cast<int64_t>(ci));
    }

    int64_t h = 0, w = 0;
    std::vector<cv::Mat> mats;
    mats.reserve(files.size());
    for (auto& [path, label] : files) {
        cv::Mat m = cv::imread(path.string(),
                               channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
        if (m.empty()) throw DataError("image_folder: cannot decode " + path.string());
        if (h == 0) {
            h = m.rows;
            w = m.cols;
        } else if (m.rows != h || m.cols != w) {
            // mixed sizes are fine pre-resize; normalize to the first size
            cv::Mat r;
            cv::resize(m, r, cv::Size(static_cast<int>(w), static_cast<int>(h)), 0, 0,
                       cv::INTER_LINEAR);
            m = r;
        }
        mats.push_back(m);
    }

    FolderSet out;
    out.class_names = classes;
    out.batch.pixels = Tensor<float>({static_cast<int64_t>(files.size()), channels, h, w});
    out.batch.labels.reserve(files.size());
    for (size_t i = 0; i < files.size(); ++i) {
        out.batch.labels.push_back(files[i].second);
        const cv::Mat& m = mats[i];
        for (int64_t c = 0; c < channels; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    uint8_t v = channels == 1
                                    ? m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x))
                                    : m.at<cv::Vec3b>(static_cast<int>(y),
                                                      static_cast<int>(x))[static_cast<int>(c)];
                    out.batch.pixels.at4(static_cast<int64_t>(i), c, y, x) =
                        static_cast<float>(v) / 255.0f;
                }
    }
    return out;
}

// ---- preprocessing ----

Tensor<float> resize_bilinear(const Tensor<float>& nchw, int64_t target) {
    int64_t n = nchw.dim(0), c = nchw.dim(1), h = nchw.dim(2), w = nchw.dim(3);
    if (h == target && w == target) return nchw;
    Tensor<float> out({n, c, target, target});
    double sy = static_cast<double>(h) / static_cast<double>(target);
    double sx = static_cast<double>(w) / static_cast<double>(target);
    for (int64_t s = 0; s < n * c; ++s) {
        const float* src = nchw.data() + s * h * w;
        float* dst = out.data() + s * target * target;
        for (int64_t y = 0; y < target; ++y) {
            double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
            int64_t y0 = static_cast<int64_t>(std::floor(fy));
            double wy = fy - static_cast<double>(y0);
            int64_t y0c = std::clamp<int64_t>(y0, 0, h - 1);
            int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, h - 1);
            for (int64_t x = 0; x < target; ++x) {
                double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                int64_t x0 = static_cast<int64_t>(std::floor(fx));
                double wx = fx - static_cast<double>(x0);
                int64_t x0c = std::clamp<int64_t>(x0, 0, w - 1);
                int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, w - 1);
                double top = (1.0 - wx) * src[y0c * w + x0c] + wx * src[y0c * w + x1c];
                double bot = (1.0 - wx) * src[y1c * w + x0c] + wx * src[y1c * w + x1c];
                dst[y * target + x] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

ImageBatch preprocess(const ImageBatch& batch, int64_t target_size) {
    if (target_size <= 0) throw DataError("preprocess: target size must be positive");
    ImageBatch out;
    out.pixels = resize_bilinear(batch.pixels, target_size);
    // bilinear interpolation of values in [0,1] stays in [0,1]; clamp anyway
    // to absorb float rounding
    for (int64_t i = 0; i < out.pixels.numel(); ++i)
        out.pixels[i] = std::clamp(out.pixels[i], 0.0f, 1.0f);
    out.labels = batch.labels;
    return out;
}

// ---- dataset / split / sampling ----

Dataset load_mnist(const fs::path& dir) {
    Dataset ds;
    ds.train = parse_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    ds.test = parse_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    ds.n_classes = 10;
    for (int i = 0; i < 10; ++i) ds.class_names.push_back(std::to_string(i));
    return ds;
}

Dataset load_folder_dataset(const fs::path& root, int64_t channels, double test_fraction,
                            uint64_t seed) {
    FolderSet fset = load_image_folder(root, channels);
    int64_t n_classes = static_cast<int64_t>(fset.class_names.size());

    // per-class deterministic shuffle, then split off the test fraction
    std::vector<std::vector<int64_t>> per_class(static_cast<size_t>(n_classes));
    for (int64_t i = 0; i < fset.batch.count(); ++i)
        per_class[static_cast<size_t>(fset.batch.labels[static_cast<size_t>(i)])].push_back(i);
    std::vector<int64_t> train_idx, test_idx;
    for (int64_t c = 0; c < n_classes; ++c) {
        auto& idx = per_class[static_cast<size_t>(c)];
        rng::Stream st(seed, "folder_split/" + std::to_string(c));
        st.shuffle(idx.begin(), idx.end());
        auto n_test = static_cast<int64_t>(std::floor(test_fraction * static_cast<double>(idx.size())));
        n_test = std::clamp<int64_t>(n_test, 1, static_cast<int64_t>(idx.size()) - 1);
        for (size_t i = 0; i < idx.size(); ++i)
            (static_cast<int64_t>(i) < n_test ? test_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Dataset ds;
    ds.train = fset.batch.select(train_idx);
    ds.test = fset.batch.select(test_idx);
    ds.n_classes = n_classes;
    ds.class_names = fset.class_names;
    return ds;
}

DatasetSplit make_split(const Dataset& ds) {
    DatasetSplit s;
    s.train.resize(static_cast<size_t>(ds.train.count()));
    for (size_t i = 0; i < s.train.size(); ++i) s.train[i] = static_cast<int64_t>(i);
    s.test.resize(static_cast<size_t>(ds.test.count()));
    for (size_t i = 0; i < s.test.size(); ++i) s.test[i] = static_cast<int64_t>(i);
    s.test_per_class.assign(static_cast<size_t>(ds.n_classes), {});
    for (int64_t i = 0; i < ds.test.count(); ++i)
        s.test_per_class[static_cast<size_t>(ds.test.labels[static_cast<size_t>(i)])].push_back(i);
    return s;
}

std::vector<int64_t> balanced_train_subset(const Dataset& ds, int64_t limit, uint64_t seed) {
    int64_t n = ds.train.count();
    if (limit <= 0 || limit >= n) {
        std::vector<int64_t> all(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
        return all;
    }
    std::vector<std::vector<int64_t>> per_class(static_cast<size_t>(ds.n_classes));
    for (int64_t i = 0; i < n; ++i)
        per_class[static_cast<size_t>(ds.train.labels[static_cast<size_t>(i)])].push_back(i);
    for (size_t c = 0; c < per_class.size(); ++c) {
        rng::Stream st(seed, "train_subset/" + std::to_string(c));
        st.shuffle(per_class[c].begin(), per_class[c].end());
    }
    // round-robin across classes until the limit is met
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(limit));
    size_t cursor = 0;
    while (static_cast<int64_t>(out.size()) < limit) {
        bool any = false;
        for (auto& cls : per_class) {
            if (cursor < cls.size() && static_cast<int64_t>(out.size()) < limit) {
                out.push_back(cls[cursor]);
                any = true;
            }
        }
        if (!any) break;
        ++cursor;
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<int64_t>> sample_eval_set(const DatasetSplit& split, int64_t per_class,
                                                  int64_t repeats, uint64_t seed) {
    for (size_t c = 0; c < split.test_per_class.size(); ++c)
        if (static_cast<int64_t>(split.test_per_class[c].size()) < per_class)
            throw DataError("sample_eval_set: class " + std::to_string(c) + " has only " +
                            std::to_string(split.test_per_class[c].size()) +
                            " test images (need " + std::to_string(per_class) + ")");
    std::vector<std::vector<int64_t>> out;
    out.reserve(static_cast<size_t>(repeats));
    for (int64_t r = 0; r < repeats; ++r) {
        std::vector<int64_t> sample;
        sample.reserve(static_cast<size_t>(per_class) * split.test_per_class.size());
        for (size_t c = 0; c < split.test_per_class.size(); ++c) {
            std::vector<int64_t> pool = split.test_per_class[c];
            rng::Stream st(seed, "eval/" + std::to_string(r) + "/" + std::to_string(c));
            st.shuffle(pool.begin(), pool.end());
            for (int64_t k = 0; k < per_class; ++k) sample.push_back(pool[static_cast<size_t>(k)]);
        }
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace semadv::data

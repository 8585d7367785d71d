#include "semadv/report.hpp"

#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "semadv/error.hpp"

namespace semadv::report {

namespace {
cv::Mat to_mat(const Tensor<real>& chw) {
    int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), c == 1 ? CV_8UC1 : CV_8UC3);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            if (c == 1) {
                m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) = static_cast<uint8_t>(
                    std::lround(std::clamp(chw[(0 * h + y) * w + x], 0.0f, 1.0f) * 255.0f));
            } else {
                cv::Vec3b px;  // tensor is RGB-ordered; OpenCV expects BGR
                for (int64_t ch = 0; ch < 3; ++ch)
                    px[static_cast<int>(2 - ch)] = static_cast<uint8_t>(
                        std::lround(std::clamp(chw[(ch * h + y) * w + x], 0.0f, 1.0f) * 255.0f));
                m.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x)) = px;
            }
        }
    return m;
}
}  // namespace

void save_image(const std::filesystem::path& path, const Tensor<real>& chw) {
    if (!cv::imwrite(path.string(), to_mat(chw)))
        throw IoError("figures: cannot write " + path.string());
}

Tensor<real> montage(const std::vector<Tensor<real>>& images, int64_t rows, int64_t cols) {
    if (images.empty()) throw DataError("montage: no images");
    const int64_t pad = 2;
    int64_t c = images[0].dim(0), h = images[0].dim(1), w = images[0].dim(2);
    Tensor<real> out = Tensor<real>::full(
        {c, rows * h + pad * (rows + 1), cols * w + pad * (cols + 1)}, 1.0f);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t col = 0; col < cols; ++col) {
            size_t idx = static_cast<size_t>(r * cols + col);
            if (idx >= images.size()) continue;
            const Tensor<real>& img = images[idx];
            int64_t oy = pad + r * (h + pad), ox = pad + col * (w + pad);
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x)
                        out[(ch * out.dim(1) + oy + y) * out.dim(2) + ox + x] =
                            img[(ch * h + y) * w + x];
        }
    return out;
}

void emit_grid(const std::filesystem::path& out_dir, const std::string& name,
               const search::ManifoldGrid& grid) {
    std::filesystem::create_directories(out_dir);
    save_image(out_dir / (name + ".png"), montage(grid.images, grid.n, grid.n));
    nlohmann::json cells = nlohmann::json::array();
    for (auto& c : grid.cells)
        cells.push_back({{"z3", {c.z3[0], c.z3[1]}},
                         {"label", c.victim_label},
                         {"confidence", c.victim_conf}});
    nlohmann::json j{{"schema", "semadv.grid/1"},
                     {"n", grid.n},
                     {"dims", {grid.dims.first, grid.dims.second}},
                     {"cells", cells}};
    std::ofstream out(out_dir / (name + ".json"));
    if (!out) throw IoError("figures: cannot write grid sidecar");
    out << j.dump(2) << "\n";
}

std::vector<std::filesystem::path> emit_figures(const std::filesystem::path& out_dir,
                                                const std::vector<AdversarialRecord>& manifold,
                                                const std::vector<AdversarialRecord>& pgd,
                                                int64_t max_rows) {
    std::vector<std::filesystem::path> written;
    std::filesystem::create_directories(out_dir);

    std::map<int64_t, const AdversarialRecord*> pgd_by_id;
    for (auto& r : pgd)
        if (r.found) pgd_by_id[r.image_id] = &r;

    // raw | perturbation AE | manifold AE triplets
    std::vector<Tensor<real>> triplet;
    int64_t rows = 0;
    for (auto& r : manifold) {
        if (!r.found) continue;
        auto it = pgd_by_id.find(r.image_id);
        if (it == pgd_by_id.end()) continue;
        triplet.push_back(r.raw);
        triplet.push_back(it->second->adversarial);
        triplet.push_back(r.adversarial);
        if (++rows >= max_rows) break;
    }
    if (!triplet.empty()) {
        auto p = out_dir / "attack_triplets.png";
        save_image(p, montage(triplet, rows, 3));
        written.push_back(p);
    }

    // raw | reconstruction | absolute difference panels
    std::vector<Tensor<real>> panels;
    rows = 0;
    for (auto& r : manifold) {
        if (r.raw.empty() || r.recon.empty()) continue;
        Tensor<real> diff(r.raw.shape());
        for (int64_t i = 0; i < diff.numel(); ++i) diff[i] = std::abs(r.raw[i] - r.recon[i]);
        panels.push_back(r.raw);
        panels.push_back(r.recon);
        panels.push_back(diff);
        if (++rows >= max_rows) break;
    }
    if (!panels.empty()) {
        auto p = out_dir / "reconstruction_panels.png";
        save_image(p, montage(panels, rows, 3));
        written.push_back(p);
    }
    return written;
}

}  // namespace semadv::report

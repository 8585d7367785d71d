#pragma once

#include "semadv/metrics.hpp"
#include "semadv/search.hpp"

namespace semadv::report {

// [C,H,W] float in [0,1] -> 8-bit image file (PNG by extension).
void save_image(const std::filesystem::path& path, const Tensor<real>& chw);

// Tile images (all same shape) into a rows x cols montage with a 2px gutter.
Tensor<real> montage(const std::vector<Tensor<real>>& images, int64_t rows, int64_t cols);

// 5x5-style grid montage plus a JSON sidecar with per-cell z3 values, labels
// and confidences.
void emit_grid(const std::filesystem::path& out_dir, const std::string& name,
               const search::ManifoldGrid& grid);

// Figure set for an evaluation run: raw|perturbation-AE|manifold-AE triplets
// (when both attacks are present), and raw|reconstruction|difference panels.
// Returns the list of files written; empty input produces none and a warning
// entry in the returned list is avoided by the caller checking emptiness.
std::vector<std::filesystem::path> emit_figures(const std::filesystem::path& out_dir,
                                                const std::vector<AdversarialRecord>& manifold,
                                                const std::vector<AdversarialRecord>& pgd,
                                                int64_t max_rows = 8);

}  // namespace semadv::report

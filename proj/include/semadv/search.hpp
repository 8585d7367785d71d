#pragma once

#include <array>
#include <functional>

#include "semadv/records.hpp"
#include "semadv/victim.hpp"

namespace semadv::search {

using Z3Point = std::array<float, 2>;

enum class Selection { min_l2, first_found };

struct SearchConfig {
    double step = 0.01;
    int64_t max_rings = 200;
    latent::Bounds bounds;
    Selection selection = Selection::min_l2;
    int64_t gen_chunk = 256;  // generator batch cap while scanning a ring
};

// Integer lattice offsets of the square ring of Chebyshev radius r, row-major
// (outer index ascending, inner ascending). r=0 yields {(0,0)}; |ring(r)|=8r.
std::vector<std::pair<int, int>> ring_offsets(int64_t r);

// Ring lattice mapped around `center` at spacing `step`, clamped into the
// prior box; clamp collisions are deduplicated (first occurrence kept).
std::vector<Z3Point> ring_points(const Z3Point& center, int64_t r, double step,
                                 const latent::Bounds& bounds);

// Generates images for a batch of semantic codes (z1/z2 fixed by the caller).
using BatchGenerator = std::function<Tensor<real>(const std::vector<Z3Point>&)>;

// Expanding-ring search around `center`; stops at the first ring containing a
// variant the victim labels differently from `label`, then selects within
// that ring per cfg.selection: minimal L2 distance to `raw`, ties by lowest
// row-major index. Exhaustion (max_rings or a fully clamped-away ring) is
// reported as found=false, not an error.
AdversarialRecord ring_search(const Tensor<real>& raw, int64_t label, const Tensor<real>& recon,
                              const Z3Point& center, const BatchGenerator& gen,
                              const Classifier& victim, const SearchConfig& cfg);

// Model-level entry: center = decoded semantic code of x, variants generated
// with z1 (posterior mean) and z2 (decoded class probabilities) held fixed.
// Requires eval mode for reproducibility.
AdversarialRecord rectangular_search(const Tensor<real>& x, int64_t label, GenModel& model,
                                     const Classifier& victim, const SearchConfig& cfg);

struct GridCell {
    Z3Point z3{};
    int64_t victim_label = -1;
    double victim_conf = 0;
};

struct ManifoldGrid {
    int64_t n = 0;
    std::pair<int, int> dims{0, 1};
    std::vector<Tensor<real>> images;  // row-major, n*n entries
    std::vector<GridCell> cells;
};

// n x n sweep of two z3 dimensions over [center-span, center+span] (clamped),
// cells row-major by ascending (dim_i, dim_j) values; each cell carries the
// generated image and the victim's (label, confidence).
ManifoldGrid build_grid(const Tensor<real>& x, int64_t label, GenModel& model,
                        const Classifier& victim, std::pair<int, int> dims, double span,
                        int64_t n);

// One record per evaluation image; transfer victims are evaluated on every
// found adversarial example and stored in the records.
std::vector<AdversarialRecord> batch_search(const data::ImageBatch& eval_images, GenModel& model,
                                            const Classifier& victim,
                                            const std::vector<const Classifier*>& transfer,
                                            const SearchConfig& cfg);

}  // namespace semadv::search

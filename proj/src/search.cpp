#include "semadv/search.hpp"

#include <set>

#include "semadv/losses.hpp"

namespace semadv::search {

std::vector<std::pair<int, int>> ring_offsets(int64_t r) {
    if (r == 0) return {{0, 0}};
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(8 * r));
    int ri = static_cast<int>(r);
    for (int i = -ri; i <= ri; ++i)
        for (int j = -ri; j <= ri; ++j)
            if (std::max(std::abs(i), std::abs(j)) == ri) out.emplace_back(i, j);
    return out;
}

std::vector<Z3Point> ring_points(const Z3Point& center, int64_t r, double step,
                                 const latent::Bounds& bounds) {
    auto offs = ring_offsets(r);
    std::vector<Z3Point> out;
    out.reserve(offs.size());
    std::set<std::pair<float, float>> seen;
    auto lo = static_cast<float>(bounds.a), hi = static_cast<float>(bounds.b);
    for (auto [i, j] : offs) {
        Z3Point p{center[0] + static_cast<float>(i * step),
                  center[1] + static_cast<float>(j * step)};
        p[0] = std::clamp(p[0], lo, hi);
        p[1] = std::clamp(p[1], lo, hi);
        if (seen.insert({p[0], p[1]}).second) out.push_back(p);
    }
    return out;
}

namespace {

struct Candidate {
    Z3Point point;
    std::pair<int, int> offset;
    size_t order;  // row-major index within the ring
};

// ring_points with lattice offsets attached and cross-ring dedup: points that
// clamp onto a cell visited by an earlier ring are re-tested never (the
// victim verdict cannot change).
std::vector<Candidate> ring_candidates(const Z3Point& center, int64_t r, double step,
                                       const latent::Bounds& bounds,
                                       std::set<std::pair<float, float>>& visited) {
    auto offs = ring_offsets(r);
    std::vector<Candidate> out;
    auto lo = static_cast<float>(bounds.a), hi = static_cast<float>(bounds.b);
    size_t order = 0;
    for (auto [i, j] : offs) {
        Z3Point p{center[0] + static_cast<float>(i * step),
                  center[1] + static_cast<float>(j * step)};
        p[0] = std::clamp(p[0], lo, hi);
        p[1] = std::clamp(p[1], lo, hi);
        if (visited.insert({p[0], p[1]}).second) out.push_back({p, {i, j}, order});
        ++order;
    }
    return out;
}

}  // namespace

AdversarialRecord ring_search(const Tensor<real>& raw, int64_t label, const Tensor<real>& recon,
                              const Z3Point& center, const BatchGenerator& gen,
                              const Classifier& victim, const SearchConfig& cfg) {
    AdversarialRecord rec;
    rec.attack = "manifold";
    rec.label = label;
    rec.raw = raw;
    rec.recon = recon;
    rec.center_z3 = {center[0], center[1]};
    rec.offset_z3 = {0.0f, 0.0f};

    // gate: the reconstruction must be classified correctly, else the search
    // has no legitimate anchor and the record is skipped
    Tensor<real> recon_batch = recon.reshaped({1, recon.dim(0), recon.dim(1), recon.dim(2)});
    QueryResult qr = query(victim, recon_batch, QueryMode::soft);
    VictimVerdict verdict;
    verdict.label_recon = qr.labels[0];
    verdict.conf_recon = qr.probs.at2(0, qr.labels[0]);
    rec.recon_correct = (qr.labels[0] == label);
    if (!rec.recon_correct) {
        rec.skipped = true;
        rec.victims[victim.id()] = verdict;
        return rec;
    }

    std::set<std::pair<float, float>> visited;
    for (int64_t r = 0; r <= cfg.max_rings; ++r) {
        auto cands = ring_candidates(center, r, cfg.step, cfg.bounds, visited);
        if (cands.empty()) {
            if (r > 0) break;  // prior box exhausted
            continue;
        }

        struct Hit {
            size_t cand;
            int64_t adv_label;
            double conf;
            double l2;
        };
        std::vector<Hit> hits;
        std::vector<Tensor<real>> images(cands.size());

        for (size_t start = 0; start < cands.size(); start += static_cast<size_t>(cfg.gen_chunk)) {
            size_t stop = std::min(cands.size(), start + static_cast<size_t>(cfg.gen_chunk));
            std::vector<Z3Point> pts;
            for (size_t i = start; i < stop; ++i) pts.push_back(cands[i].point);
            Tensor<real> batch = gen(pts);
            QueryResult q = query(victim, batch, QueryMode::soft);
            int64_t csz = batch.numel() / batch.dim(0);
            for (size_t i = start; i < stop; ++i) {
                Tensor<real> img({raw.dim(0), raw.dim(1), raw.dim(2)});
                std::copy_n(batch.data() + static_cast<int64_t>(i - start) * csz, csz, img.data());
                int64_t lab = q.labels[i - start];
                if (lab != label) {
                    double l2 = losses::l2_distance(img, raw);
                    hits.push_back({i, lab, static_cast<double>(q.probs.at2(
                                                static_cast<int64_t>(i - start), lab)),
                                    l2});
                }
                images[i] = std::move(img);
            }
        }

        if (!hits.empty()) {
            size_t best = 0;
            if (cfg.selection == Selection::min_l2) {
                for (size_t i = 1; i < hits.size(); ++i) {
                    if (hits[i].l2 < hits[best].l2 ||
                        (hits[i].l2 == hits[best].l2 &&
                         cands[hits[i].cand].order < cands[hits[best].cand].order))
                        best = i;
                }
            }  // first_found: hits are already in row-major order, take the first
            const Hit& h = hits[best];
            const Candidate& c = cands[h.cand];
            rec.found = true;
            rec.ring = r;
            rec.adversarial = images[h.cand];
            rec.offset_z3 = {static_cast<float>(c.offset.first * cfg.step),
                             static_cast<float>(c.offset.second * cfg.step)};
            rec.l2 = h.l2;
            rec.sl = losses::sl_value(
                rec.adversarial.reshaped({1, raw.dim(0), raw.dim(1), raw.dim(2)}),
                raw.reshaped({1, raw.dim(0), raw.dim(1), raw.dim(2)}));
            verdict.label_adv = h.adv_label;
            verdict.conf_adv = h.conf;
            rec.victims[victim.id()] = verdict;
            return rec;
        }
        rec.ring = r;  // last fully explored ring
    }
    rec.victims[victim.id()] = verdict;
    return rec;  // found = false
}

namespace {

// Fixed-code generator closure: z1/z2 broadcast to the candidate count.
BatchGenerator model_generator(GenModel& model, const Tensor<real>& z1_row,
                               const Tensor<real>& z2_row) {
    return [&model, z1_row, z2_row](const std::vector<Z3Point>& pts) {
        auto n = static_cast<int64_t>(pts.size());
        Tensor<real> z1({n, z1_row.numel()});
        Tensor<real> z2({n, z2_row.numel()});
        Tensor<real> z3({n, 2});
        for (int64_t i = 0; i < n; ++i) {
            std::copy_n(z1_row.data(), z1_row.numel(), z1.data() + i * z1_row.numel());
            std::copy_n(z2_row.data(), z2_row.numel(), z2.data() + i * z2_row.numel());
            z3.at2(i, 0) = pts[static_cast<size_t>(i)][0];
            z3.at2(i, 1) = pts[static_cast<size_t>(i)][1];
        }
        return model.generate_images(z1, z2, z3);
    };
}

}  // namespace

AdversarialRecord rectangular_search(const Tensor<real>& x, int64_t label, GenModel& model,
                                     const Classifier& victim, const SearchConfig& cfg) {
    if (model.dims.d3 != 2)
        throw ConfigError("rectangular_search: only a 2-dimensional semantic code is supported");
    ReconResult rr = model.reconstruct(x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
    Tensor<real> recon({x.dim(0), x.dim(1), x.dim(2)});
    std::copy_n(rr.image.data(), rr.image.numel(), recon.data());
    Z3Point center{rr.codes.z3.at2(0, 0), rr.codes.z3.at2(0, 1)};
    Tensor<real> z1_row = rr.codes.z1.reshaped({rr.codes.z1.numel()});
    Tensor<real> z2_row = rr.codes.z2.reshaped({rr.codes.z2.numel()});
    auto gen = model_generator(model, z1_row, z2_row);
    return ring_search(x, label, recon, center, gen, victim, cfg);
}

ManifoldGrid build_grid(const Tensor<real>& x, int64_t label, GenModel& model,
                        const Classifier& victim, std::pair<int, int> dims, double span,
                        int64_t n) {
    if (n < 2 && span != 0.0) throw ConfigError("build_grid: n must be >= 2");
    if (dims.first == dims.second) throw ConfigError("build_grid: dims must be distinct");
    (void)label;
    ReconResult rr = model.reconstruct(x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
    int64_t d3 = model.dims.d3;

    auto axis_values = [&](int dim) {
        std::vector<float> vals(static_cast<size_t>(n));
        float c = rr.codes.z3.at2(0, dim);
        double stepv = n > 1 ? 2.0 * span / static_cast<double>(n - 1) : 0.0;
        double half = static_cast<double>(n - 1) / 2.0;
        for (int64_t k = 0; k < n; ++k) {
            // offset form keeps the center cell bit-identical to the decoded code
            float v = c + static_cast<float>((static_cast<double>(k) - half) * stepv);
            vals[static_cast<size_t>(k)] =
                std::clamp(v, static_cast<float>(model.bounds.a), static_cast<float>(model.bounds.b));
        }
        return vals;
    };
    std::vector<float> vi = axis_values(dims.first), vj = axis_values(dims.second);

    ManifoldGrid grid;
    grid.n = n;
    grid.dims = dims;
    Tensor<real> z1({n * n, model.dims.d1});
    Tensor<real> z2({n * n, model.dims.d2});
    Tensor<real> z3({n * n, d3});
    for (int64_t a = 0; a < n; ++a)
        for (int64_t b = 0; b < n; ++b) {
            int64_t row = a * n + b;
            std::copy_n(rr.codes.z1.data(), model.dims.d1, z1.data() + row * model.dims.d1);
            std::copy_n(rr.codes.z2.data(), model.dims.d2, z2.data() + row * model.dims.d2);
            for (int64_t d = 0; d < d3; ++d) z3.at2(row, d) = rr.codes.z3.at2(0, d);
            z3.at2(row, dims.first) = vi[static_cast<size_t>(a)];
            z3.at2(row, dims.second) = vj[static_cast<size_t>(b)];
        }

    Tensor<real> imgs = model.generate_images(z1, z2, z3);
    QueryResult q = query(victim, imgs, QueryMode::soft);
    int64_t csz = imgs.numel() / imgs.dim(0);
    for (int64_t row = 0; row < n * n; ++row) {
        Tensor<real> img({x.dim(0), x.dim(1), x.dim(2)});
        std::copy_n(imgs.data() + row * csz, csz, img.data());
        grid.images.push_back(std::move(img));
        GridCell cell;
        cell.z3 = {z3.at2(row, dims.first), z3.at2(row, dims.second)};
        cell.victim_label = q.labels[static_cast<size_t>(row)];
        cell.victim_conf = q.probs.at2(row, cell.victim_label);
        grid.cells.push_back(cell);
    }
    return grid;
}

std::vector<AdversarialRecord> batch_search(const data::ImageBatch& eval_images, GenModel& model,
                                            const Classifier& victim,
                                            const std::vector<const Classifier*>& transfer,
                                            const SearchConfig& cfg) {
    std::vector<AdversarialRecord> out;
    out.reserve(static_cast<size_t>(eval_images.count()));
    for (int64_t i = 0; i < eval_images.count(); ++i) {
        Tensor<real> x = eval_images.image(i);
        AdversarialRecord rec =
            rectangular_search(x, eval_images.labels[static_cast<size_t>(i)], model, victim, cfg);
        rec.image_id = i;
        out.push_back(std::move(rec));
    }

    // transfer victims are evaluated only on found AEs; records without one
    // keep an empty transfer map
    for (const Classifier* tv : transfer) {
        for (auto& rec : out) {
            if (!rec.found) continue;
            VictimVerdict v;
            Tensor<real> rb =
                rec.recon.reshaped({1, rec.recon.dim(0), rec.recon.dim(1), rec.recon.dim(2)});
            QueryResult qr = query(*tv, rb, QueryMode::soft);
            v.label_recon = qr.labels[0];
            v.conf_recon = qr.probs.at2(0, qr.labels[0]);
            Tensor<real> ab = rec.adversarial.reshaped(
                {1, rec.adversarial.dim(0), rec.adversarial.dim(1), rec.adversarial.dim(2)});
            QueryResult qa = query(*tv, ab, QueryMode::soft);
            v.label_adv = qa.labels[0];
            v.conf_adv = qa.probs.at2(0, qa.labels[0]);
            rec.victims[tv->id()] = v;
        }
    }
    return out;
}

}  // namespace semadv::search

#pragma once

#include "semadv/records.hpp"
#include "semadv/victim.hpp"

namespace semadv::pgd {

struct PgdConfig {
    double delta = 1.0;        // L2 radius
    int64_t steps = 40;
    double alpha = 0;          // step size; 0 = 2.5 * delta / steps
    bool random_start = true;
    uint64_t seed = 0;

    double step_size() const { return alpha > 0 ? alpha : 2.5 * delta / static_cast<double>(steps); }
};

// Projected gradient ascent on the victim's cross-entropy under an L2 ball:
// per-sample normalized gradient steps, radial projection onto the ball,
// clamp of x+delta into [0,1]. Returns the final iterate.
Tensor<real> pgd_l2(const Tensor<real>& x, const std::vector<int64_t>& labels,
                    GradClassifier& victim, const PgdConfig& cfg);

// Mean L2 distance over found records: the matched perturbation budget.
double match_budget(const std::vector<AdversarialRecord>& records);

// Runs the baseline over an evaluation batch, gated on the same
// reconstructions as the manifold attack, and emits the shared record schema
// (attack tag "pgd_l2").
std::vector<AdversarialRecord> batch_pgd(const data::ImageBatch& eval_images,
                                         const std::vector<Tensor<real>>& recons,
                                         VictimModel& victim,
                                         const std::vector<const Classifier*>& transfer,
                                         const PgdConfig& cfg);

}  // namespace semadv::pgd

#pragma once

#include "semadv/manifest.hpp"
#include "semadv/model.hpp"
#include "semadv/victim.hpp"

namespace semadv::train {

struct TrainOptions {
    std::filesystem::path out_dir;
    std::string run_id;
    int64_t max_iters = 0;       // 0 = unlimited; used by determinism checks
    int64_t resume_epoch = -1;   // >=0: load epoch checkpoint and continue after it
    int64_t audit_iters = 4;     // how many leading iterations keep an update audit
    losses::Z3Target z3_target = losses::Z3Target::sampled;
    bool force_manifest = true;
};

struct TrainResult {
    int64_t epochs_done = 0;
    int64_t iterations = 0;
    std::filesystem::path log_path;
    std::vector<std::string> checkpoint_files;
    // parameter-update event names for the first audit_iters iterations,
    // in execution order
    std::vector<std::vector<std::string>> audit;
    int64_t victim_queries = 0;  // stage 2 only
};

// Stage 1: reconstruction + disentanglement. Per iteration, in order:
// update Q (supervised CE), update D, update E (KL), update E+G
// (reconstruction), update Q+G (mutual information). Checkpoints per epoch.
TrainResult train_stage1(const ExperimentConfig& cfg, const data::Dataset& ds, GenModel& model,
                         const TrainOptions& opt);

// Stage 2: repeats the stage-1 body with stage-2 weights, then updates G
// alone on the query-based attack objective against a frozen victim.
TrainResult train_stage2(const ExperimentConfig& cfg, const data::Dataset& ds, GenModel& model,
                         VictimModel& victim, const TrainOptions& opt);

}  // namespace semadv::train

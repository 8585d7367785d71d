#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semadv/config.hpp"

namespace semadv {

enum class RunStage { victim, stage1, stage2, defense };

std::string to_string(RunStage s);
RunStage stage_from_string(const std::string& s);

// The reproducibility anchor for every artifact directory: which config
// (by content hash), which seed, which stage/epoch, which files.
struct RunManifest {
    std::string run_id;
    RunStage stage = RunStage::stage1;
    int64_t epoch = 0;
    std::string config_digest;
    nlohmann::json config;  // embedded copy; digest is recomputed on load
    std::vector<std::string> checkpoint_files;
    uint64_t rng_seed = 0;
    std::string created_at;  // ISO-8601

    bool same_record(const RunManifest& o) const {
        return run_id == o.run_id && stage == o.stage && epoch == o.epoch &&
               config_digest == o.config_digest && config == o.config &&
               checkpoint_files == o.checkpoint_files && rng_seed == o.rng_seed &&
               created_at == o.created_at;
    }

    static RunManifest make(std::string run_id, RunStage stage, int64_t epoch,
                            const ExperimentConfig& cfg,
                            std::vector<std::string> checkpoint_files);
};

// Writes <run_dir>/manifest.json; refuses to overwrite an existing run
// unless force is set. Returns the manifest path.
std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& run_dir,
                                     bool force = false);

// Parses and integrity-checks (recomputed config digest must match).
RunManifest read_manifest(const std::filesystem::path& manifest_path);

}  // namespace semadv

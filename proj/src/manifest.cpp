#include "semadv/manifest.hpp"

#include <chrono>
#include <fstream>

#include "semadv/digest.hpp"
#include "semadv/error.hpp"

namespace semadv {

using nlohmann::json;

std::string to_string(RunStage s) {
    switch (s) {
        case RunStage::victim: return "victim";
        case RunStage::stage1: return "stage1";
        case RunStage::stage2: return "stage2";
        case RunStage::defense: return "defense";
    }
    return "stage1";
}

RunStage stage_from_string(const std::string& s) {
    if (s == "victim") return RunStage::victim;
    if (s == "stage1") return RunStage::stage1;
    if (s == "stage2") return RunStage::stage2;
    if (s == "defense") return RunStage::defense;
    throw IoError("manifest: unknown stage '" + s + "'");
}

namespace {
std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}
}  // namespace

RunManifest RunManifest::make(std::string run_id, RunStage stage, int64_t epoch,
                              const ExperimentConfig& cfg,
                              std::vector<std::string> checkpoint_files) {
    RunManifest m;
    m.run_id = std::move(run_id);
    m.stage = stage;
    m.epoch = epoch;
    m.config = cfg.to_json();
    m.config_digest = cfg.digest();
    m.checkpoint_files = std::move(checkpoint_files);
    m.rng_seed = cfg.seed;
    m.created_at = now_iso8601();
    return m;
}

std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& run_dir,
                                     bool force) {
    std::filesystem::create_directories(run_dir);
    std::filesystem::path path = run_dir / "manifest.json";
    if (!force && std::filesystem::exists(path))
        throw IoError("manifest: run '" + m.run_id + "' already exists at " + path.string() +
                      " (use force to overwrite)");
    json j{{"schema", "semadv.manifest/1"},
           {"run_id", m.run_id},
           {"stage", to_string(m.stage)},
           {"epoch", m.epoch},
           {"config_digest", m.config_digest},
           {"config", m.config},
           {"checkpoint_files", m.checkpoint_files},
           {"rng_seed", m.rng_seed},
           {"created_at", m.created_at}};
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("manifest: write failed for " + path.string());
    return path;
}

RunManifest read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("manifest: cannot open " + manifest_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError("manifest: parse error in " + manifest_path.string() + ": " + e.what());
    }
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.stage = stage_from_string(j.at("stage").get<std::string>());
        m.epoch = j.at("epoch").get<int64_t>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.config = j.at("config");
        m.checkpoint_files = j.at("checkpoint_files").get<std::vector<std::string>>();
        m.rng_seed = j.at("rng_seed").get<uint64_t>();
        m.created_at = j.at("created_at").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("manifest: missing or malformed field in " + manifest_path.string() + ": " +
                      e.what());
    }
    std::string recomputed = sha256_hex(m.config.dump());
    if (recomputed != m.config_digest)
        throw IoError("manifest: config digest mismatch in " + manifest_path.string() +
                      " (file corrupted or edited)");
    return m;
}

}  // namespace semadv

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "semadv/tensor.hpp"

namespace semadv {

using real = float;

// Predictions of one victim on a record's images.
struct VictimVerdict {
    int64_t label_recon = -1;
    double conf_recon = 0;
    int64_t label_adv = -1;  // -1 when no adversarial image exists
    double conf_adv = 0;
};

// One evaluated input image: its reconstruction, the adversarial example
// found for it (if any), distances, and per-victim predictions. Both attack
// paths (manifold search and the PGD baseline) emit this same schema.
struct AdversarialRecord {
    int64_t image_id = -1;
    std::string attack;  // "manifold" | "pgd_l2"
    int64_t label = -1;  // ground-truth class
    Tensor<real> raw, recon, adversarial;  // [C,H,W]; adversarial empty if !found
    std::vector<float> center_z3, offset_z3;
    int64_t ring = -1;
    double l2 = 0, sl = 0;
    bool recon_correct = false;  // search victim classified the reconstruction as `label`
    bool found = false;
    bool skipped = false;  // search not applicable (reconstruction already misclassified)
    std::map<std::string, VictimVerdict> victims;
};

struct RecordsFile {
    std::string schema = "semadv.records/1";
    std::string attack;
    std::string search_victim;  // victim the attack was run against
    uint64_t seed = 0;
    std::vector<AdversarialRecord> records;
};

nlohmann::json record_to_json(const AdversarialRecord& r);
AdversarialRecord record_from_json(const nlohmann::json& j);

void save_records(const std::filesystem::path& path, const RecordsFile& rf);
RecordsFile load_records(const std::filesystem::path& path);

}  // namespace semadv

#include "semadv/records.hpp"

#include <fstream>

#include "semadv/error.hpp"

namespace semadv {

using nlohmann::json;

namespace {
json tensor_to_json(const Tensor<real>& t) {
    if (t.empty()) return nullptr;
    json j;
    j["shape"] = t.shape();
    j["data"] = t.vec();
    return j;
}

Tensor<real> tensor_from_json(const json& j) {
    if (j.is_null()) return {};
    return Tensor<real>(j.at("shape").get<std::vector<int64_t>>(),
                        j.at("data").get<std::vector<real>>());
}
}  // namespace

json record_to_json(const AdversarialRecord& r) {
    json v = json::object();
    for (auto& [id, verdict] : r.victims)
        v[id] = {{"label_recon", verdict.label_recon},
                 {"conf_recon", verdict.conf_recon},
                 {"label_adv", verdict.label_adv},
                 {"conf_adv", verdict.conf_adv}};
    return {{"image_id", r.image_id},
            {"attack", r.attack},
            {"label", r.label},
            {"raw", tensor_to_json(r.raw)},
            {"recon", tensor_to_json(r.recon)},
            {"adversarial", tensor_to_json(r.adversarial)},
            {"center_z3", r.center_z3},
            {"offset_z3", r.offset_z3},
            {"ring", r.ring},
            {"l2", r.l2},
            {"sl", r.sl},
            {"recon_correct", r.recon_correct},
            {"found", r.found},
            {"skipped", r.skipped},
            {"victims", v}};
}

AdversarialRecord record_from_json(const json& j) {
    AdversarialRecord r;
    r.image_id = j.at("image_id").get<int64_t>();
    r.attack = j.at("attack").get<std::string>();
    r.label = j.at("label").get<int64_t>();
    r.raw = tensor_from_json(j.at("raw"));
    r.recon = tensor_from_json(j.at("recon"));
    r.adversarial = tensor_from_json(j.at("adversarial"));
    r.center_z3 = j.at("center_z3").get<std::vector<float>>();
    r.offset_z3 = j.at("offset_z3").get<std::vector<float>>();
    r.ring = j.at("ring").get<int64_t>();
    r.l2 = j.at("l2").get<double>();
    r.sl = j.at("sl").get<double>();
    r.recon_correct = j.at("recon_correct").get<bool>();
    r.found = j.at("found").get<bool>();
    r.skipped = j.at("skipped").get<bool>();
    for (auto it = j.at("victims").begin(); it != j.at("victims").end(); ++it) {
        VictimVerdict v;
        v.label_recon = it.value().at("label_recon").get<int64_t>();
        v.conf_recon = it.value().at("conf_recon").get<double>();
        v.label_adv = it.value().at("label_adv").get<int64_t>();
        v.conf_adv = it.value().at("conf_adv").get<double>();
        r.victims[it.key()] = v;
    }
    return r;
}

void save_records(const std::filesystem::path& path, const RecordsFile& rf) {
    json j;
    j["schema"] = rf.schema;
    j["attack"] = rf.attack;
    j["search_victim"] = rf.search_victim;
    j["seed"] = rf.seed;
    json arr = json::array();
    for (auto& r : rf.records) arr.push_back(record_to_json(r));
    j["records"] = std::move(arr);
    std::ofstream out(path);
    if (!out) throw IoError("records: cannot write " + path.string());
    out << j.dump() << "\n";
    if (!out) throw IoError("records: write failed for " + path.string());
}

RecordsFile load_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("records: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError("records: parse error in " + path.string() + ": " + e.what());
    }
    RecordsFile rf;
    rf.schema = j.at("schema").get<std::string>();
    if (rf.schema != "semadv.records/1")
        throw IoError("records: unsupported schema '" + rf.schema + "'");
    rf.attack = j.at("attack").get<std::string>();
    rf.search_victim = j.at("search_victim").get<std::string>();
    rf.seed = j.at("seed").get<uint64_t>();
    for (auto& rj : j.at("records")) rf.records.push_back(record_from_json(rj));
    return rf;
}

}  // namespace semadv

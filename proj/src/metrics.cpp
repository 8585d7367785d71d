#include "semadv/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "semadv/error.hpp"

namespace semadv::metrics {

using nlohmann::json;

EvalTable table_from_records(const RecordsFile& rf) {
    EvalTable t;
    t.search_victim = rf.search_victim;
    for (auto& r : rf.records) {
        EvalRow row;
        row.image_id = r.image_id;
        row.label = r.label;
        row.recon_correct = r.recon_correct;
        row.found = r.found;
        row.attack = r.attack;
        row.l2 = r.l2;
        row.sl = r.sl;
        for (auto& [id, v] : r.victims)
            if (v.label_adv >= 0) row.adv_labels[id] = v.label_adv;
        t.rows.push_back(std::move(row));
    }
    return t;
}

double Rate::value() const {
    if (den == 0) throw DataError("metric: zero denominator");
    return static_cast<double>(num) / static_cast<double>(den);
}

namespace {
// fooled = has an AE and the given victim labels it off the true class
bool fooled(const EvalRow& row, const std::string& victim_id) {
    auto it = row.adv_labels.find(victim_id);
    return row.found && it != row.adv_labels.end() && it->second != row.label;
}
}  // namespace

Rate compute_asr(const EvalTable& t, const std::string& victim_id) {
    Rate r;
    for (auto& row : t.rows) {
        if (!row.recon_correct) continue;
        ++r.den;
        if (fooled(row, victim_id)) ++r.num;
    }
    return r;
}

Rate compute_atr(const EvalTable& t, const std::string& f1, const std::string& f2) {
    Rate r;
    for (auto& row : t.rows) {
        if (!row.recon_correct) continue;
        ++r.den;
        if (fooled(row, f1) && fooled(row, f2)) ++r.num;
    }
    return r;
}

DefenseRates compute_isr(const EvalTable& undefended, const EvalTable& defended,
                         const std::string& victim_id, const std::string& defended_id) {
    std::map<int64_t, const EvalRow*> def_rows;
    for (auto& row : defended.rows) def_rows[row.image_id] = &row;

    DefenseRates out;
    for (auto& row : undefended.rows) {
        auto it = def_rows.find(row.image_id);
        if (it == def_rows.end())
            throw DataError("compute_isr: defended table is missing image " +
                            std::to_string(row.image_id));
        const EvalRow& drow = *it->second;

        if (row.recon_correct) {
            ++out.asr_dm.den;
            if (fooled(drow, defended_id)) ++out.asr_dm.num;
        }
        if (row.recon_correct && fooled(row, victim_id)) {
            ++out.isr.den;
            auto lt = drow.adv_labels.find(defended_id);
            bool corrected = lt != drow.adv_labels.end() && lt->second == row.label;
            if (corrected) ++out.isr.num;
        }
    }
    if (out.isr.den == 0)
        throw DataError("compute_isr: no undefended successes to intercept");
    return out;
}

Aggregates aggregate_found(const EvalTable& t) {
    Aggregates a;
    std::vector<double> sls;
    for (auto& row : t.rows) {
        if (!row.found) continue;
        ++a.found_count;
        a.mean_sl += row.sl;
        a.mean_l2 += row.l2;
        sls.push_back(row.sl);
    }
    if (a.found_count > 0) {
        a.mean_sl /= static_cast<double>(a.found_count);
        a.mean_l2 /= static_cast<double>(a.found_count);
        std::sort(sls.begin(), sls.end());
        size_t n = sls.size();
        a.median_sl = n % 2 ? sls[n / 2] : 0.5 * (sls[n / 2 - 1] + sls[n / 2]);
    }
    return a;
}

namespace {
json rate_to_json(const Rate& r) {
    json j{{"num", r.num}, {"den", r.den}};
    if (r.den > 0) j["value"] = r.value();
    return j;
}

Rate rate_from_json(const json& j) {
    return Rate{j.at("num").get<int64_t>(), j.at("den").get<int64_t>()};
}
}  // namespace

json summary_to_json(const AttackSummary& s) {
    json atr = json::object(), defenses = json::object();
    for (auto& [id, r] : s.atr) atr[id] = rate_to_json(r);
    for (auto& [id, d] : s.defenses)
        defenses[id] = {{"asr_dm", rate_to_json(d.asr_dm)}, {"isr", rate_to_json(d.isr)}};
    return {{"attack", s.attack},
            {"asr", rate_to_json(s.asr)},
            {"atr", atr},
            {"mean_sl", s.agg.mean_sl},
            {"median_sl", s.agg.median_sl},
            {"mean_l2", s.agg.mean_l2},
            {"found_count", s.agg.found_count},
            {"defenses", defenses}};
}

AttackSummary summary_from_json(const json& j) {
    AttackSummary s;
    s.attack = j.at("attack").get<std::string>();
    s.asr = rate_from_json(j.at("asr"));
    for (auto it = j.at("atr").begin(); it != j.at("atr").end(); ++it)
        s.atr[it.key()] = rate_from_json(it.value());
    s.agg.mean_sl = j.at("mean_sl").get<double>();
    s.agg.median_sl = j.at("median_sl").get<double>();
    s.agg.mean_l2 = j.at("mean_l2").get<double>();
    s.agg.found_count = j.at("found_count").get<int64_t>();
    for (auto it = j.at("defenses").begin(); it != j.at("defenses").end(); ++it) {
        DefenseRates d;
        d.asr_dm = rate_from_json(it.value().at("asr_dm"));
        d.isr = rate_from_json(it.value().at("isr"));
        s.defenses[it.key()] = d;
    }
    return s;
}

void write_summaries(const std::filesystem::path& path,
                     const std::vector<AttackSummary>& summaries) {
    json j;
    j["schema"] = "semadv.summary/1";
    json arr = json::array();
    for (auto& s : summaries) arr.push_back(summary_to_json(s));
    j["summaries"] = std::move(arr);
    std::ofstream out(path);
    if (!out) throw IoError("summary: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<AttackSummary> read_summaries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("summary: cannot open " + path.string());
    json j;
    in >> j;
    if (j.at("schema").get<std::string>() != "semadv.summary/1")
        throw IoError("summary: unsupported schema");
    std::vector<AttackSummary> out;
    for (auto& sj : j.at("summaries")) out.push_back(summary_from_json(sj));
    return out;
}

std::string render_report(const std::vector<AttackSummary>& summaries) {
    std::ostringstream os;
    auto pct = [](const Rate& r) {
        std::ostringstream s;
        if (r.den == 0) {
            s << "n/a (0 denom)";
        } else {
            s.precision(2);
            s << std::fixed << 100.0 * r.value() << "% (" << r.num << "/" << r.den << ")";
        }
        return s.str();
    };
    for (auto& s : summaries) {
        os << "== attack: " << s.attack << " ==\n";
        os << "  ASR:        " << pct(s.asr) << "\n";
        for (auto& [id, r] : s.atr) os << "  ATR -> " << id << ": " << pct(r) << "\n";
        os.precision(4);
        os << std::fixed;
        os << "  found:      " << s.agg.found_count << "\n";
        os << "  mean SL:    " << s.agg.mean_sl << "\n";
        os << "  median SL:  " << s.agg.median_sl << "\n";
        os << "  mean L2:    " << s.agg.mean_l2 << "\n";
        for (auto& [id, d] : s.defenses) {
            os << "  defense " << id << ": ASR-DM " << pct(d.asr_dm) << ", ISR " << pct(d.isr)
               << "\n";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace semadv::metrics

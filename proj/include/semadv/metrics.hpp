#pragma once

#include "semadv/records.hpp"

namespace semadv::metrics {

// One row per evaluated image, flattened from an AdversarialRecord; metric
// denominators are always computed from the flags, never from the row count.
struct EvalRow {
    int64_t image_id = -1;
    int64_t label = -1;
    bool recon_correct = false;
    bool found = false;
    std::string attack;
    double l2 = 0, sl = 0;
    std::map<std::string, int64_t> adv_labels;  // victim id -> label on x*
};

struct EvalTable {
    std::string search_victim;
    std::vector<EvalRow> rows;
};

EvalTable table_from_records(const RecordsFile& rf);

struct Rate {
    int64_t num = 0, den = 0;
    double value() const;  // throws on zero denominator
};

// ASR: share of correctly-reconstructed inputs whose AE flips the victim.
Rate compute_asr(const EvalTable& t, const std::string& victim_id);

// ATR: share of correctly-reconstructed inputs whose AE flips both the source
// victim and a second, unseen one. Always <= ASR on the same table.
Rate compute_atr(const EvalTable& t, const std::string& f1, const std::string& f2);

struct DefenseRates {
    Rate asr_dm;  // ASR recomputed with the defended model's labels on the same AEs
    Rate isr;     // share of previously-successful AEs the defense corrects
};

// `defended` carries the defended model's labels on the same AEs (rows
// matched by image_id; its adv_labels under `defended_id`).
DefenseRates compute_isr(const EvalTable& undefended, const EvalTable& defended,
                         const std::string& victim_id, const std::string& defended_id);

struct Aggregates {
    double mean_sl = 0, median_sl = 0, mean_l2 = 0;
    int64_t found_count = 0;
};

Aggregates aggregate_found(const EvalTable& t);

struct AttackSummary {
    std::string attack;
    Rate asr;
    std::map<std::string, Rate> atr;  // transfer victim id -> rate
    Aggregates agg;
    std::map<std::string, DefenseRates> defenses;  // defended victim id -> rates
};

nlohmann::json summary_to_json(const AttackSummary& s);
AttackSummary summary_from_json(const nlohmann::json& j);

// Machine-readable summary file plus per-attack human-readable table.
void write_summaries(const std::filesystem::path& path,
                     const std::vector<AttackSummary>& summaries);
std::vector<AttackSummary> read_summaries(const std::filesystem::path& path);
std::string render_report(const std::vector<AttackSummary>& summaries);

}  // namespace semadv::metrics

#pragma once

#include <cstdio>
#include <fstream>
#include <span>
#include <string>

#include <json.hpp>

#include "lookahead/corpus.hpp"
#include "lookahead/engine.hpp"
#include "lookahead/metrics.hpp"
#include "lookahead/types.hpp"

namespace lookahead {

// Fixed-precision rendering keeps CSV output byte-stable across reruns of a
// seeded experiment. CSVs therefore carry only deterministic columns; the
// JSON twin adds the wall-clock timings.
inline std::string csv_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

inline nlohmann::json config_json(const GenConfig& cfg) {
    nlohmann::json j;
    j["decoding_length"] = cfg.decoding_length;
    j["branch_length"] = cfg.branch_length;
    j["min_match_tokens"] = cfg.resolved_min_match();
    j["capacity_multiplier"] = cfg.capacity_multiplier;
    j["max_prefix_len"] = cfg.max_prefix_len;
    j["max_new_tokens"] = cfg.max_new_tokens;
    if (cfg.eos_token) {
        j["eos_token"] = *cfg.eos_token;
    } else {
        j["eos_token"] = nullptr;
    }
    j["mode"] = to_string(cfg.mode);
    j["draft_mode"] = to_string(cfg.draft_mode);
    j["insert_prompt"] = cfg.insert_prompt;
    j["insert_output"] = cfg.insert_output;
    j["prune_enabled"] = cfg.prune_enabled;
    j["eliminate_enabled"] = cfg.eliminate_enabled;
    j["seed"] = cfg.seed;
    return j;
}

inline nlohmann::json aggregate_json(const RunAggregate& agg) {
    nlohmann::json j;
    j["runs"] = agg.runs;
    j["steps"] = agg.steps;
    j["tokens"] = agg.tokens;
    j["draft_nodes"] = agg.draft_nodes;
    j["tokens_per_step"] = agg.tokens_per_step();
    j["mean_edl"] = agg.mean_edl();
    j["retrieve_micros"] = agg.retrieve_micros;
    j["update_micros"] = agg.update_micros;
    j["forward_micros"] = agg.forward_micros;
    j["retrieve_ms_per_step"] = agg.retrieve_ms_per_step();
    j["update_ms_per_step"] = agg.update_ms_per_step();
    j["forward_ms_per_step"] = agg.forward_ms_per_step();
    j["tokens_per_second"] = agg.tokens_per_second();
    return j;
}

namespace detail {

inline void append_aggregate_csv(std::string& out, const RunAggregate& agg) {
    out += std::to_string(agg.runs);
    out += ',';
    out += std::to_string(agg.steps);
    out += ',';
    out += std::to_string(agg.tokens);
    out += ',';
    out += csv_double(agg.tokens_per_step());
    out += '\n';
}

}  // namespace detail

inline std::string suite_csv(std::span<const SuiteCell> rows) {
    std::string out =
        "decoding_length,branch_length,draft_mode,runs,steps,tokens,"
        "tokens_per_step\n";
    for (const SuiteCell& row : rows) {
        out += std::to_string(row.decoding_length);
        out += ',';
        out += std::to_string(row.branch_length);
        out += ',';
        out += to_string(row.draft_mode);
        out += ',';
        detail::append_aggregate_csv(out, row.agg);
    }
    return out;
}

inline std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "variant,runs,steps,tokens,tokens_per_step\n";
    for (const AblationRow& row : rows) {
        out += row.label;
        out += ',';
        detail::append_aggregate_csv(out, row.agg);
    }
    return out;
}

inline std::string capacity_csv(std::span<const CapacityRow> rows) {
    std::string out = "capacity_multiplier,runs,steps,tokens,tokens_per_step\n";
    for (const CapacityRow& row : rows) {
        out += std::to_string(row.multiplier);
        out += ',';
        detail::append_aggregate_csv(out, row.agg);
    }
    return out;
}

inline nlohmann::json suite_json(const GenConfig& base,
                                 std::span<const SuiteCell> rows) {
    nlohmann::json j;
    j["report"] = "suite";
    j["config"] = config_json(base);
    j["rows"] = nlohmann::json::array();
    for (const SuiteCell& row : rows) {
        nlohmann::json r = aggregate_json(row.agg);
        r["decoding_length"] = row.decoding_length;
        r["branch_length"] = row.branch_length;
        r["draft_mode"] = to_string(row.draft_mode);
        j["rows"].push_back(std::move(r));
    }
    return j;
}

inline nlohmann::json ablation_json(const GenConfig& base,
                                    std::span<const AblationRow> rows) {
    nlohmann::json j;
    j["report"] = "ablation";
    j["config"] = config_json(base);
    j["rows"] = nlohmann::json::array();
    for (const AblationRow& row : rows) {
        nlohmann::json r = aggregate_json(row.agg);
        r["variant"] = row.label;
        j["rows"].push_back(std::move(r));
    }
    return j;
}

inline nlohmann::json capacity_json(const GenConfig& base,
                                    std::span<const CapacityRow> rows) {
    nlohmann::json j;
    j["report"] = "capacity_sweep";
    j["config"] = config_json(base);
    j["rows"] = nlohmann::json::array();
    for (const CapacityRow& row : rows) {
        nlohmann::json r = aggregate_json(row.agg);
        r["capacity_multiplier"] = row.multiplier;
        j["rows"].push_back(std::move(r));
    }
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("report: cannot open " + path + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("report: write failed for " + path);
    }
}

// "reports/run.csv" -> "reports/run.json"; a path without an extension just
// gains ".json".
inline std::string json_twin_path(const std::string& csv_path) {
    const std::size_t slash = csv_path.find_last_of('/');
    const std::size_t dot = csv_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
        return csv_path + ".json";
    }
    return csv_path.substr(0, dot) + ".json";
}

// Writes the CSV and its JSON twin next to each other.
inline void write_report(const std::string& csv_path, const std::string& csv,
                         const nlohmann::json& twin) {
    write_text_file(csv_path, csv);
    write_text_file(json_twin_path(csv_path), twin.dump(2) + "\n");
}

}  // namespace lookahead

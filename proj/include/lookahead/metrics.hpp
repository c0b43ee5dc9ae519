#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahead/engine.hpp"
#include "lookahead/model.hpp"
#include "lookahead/stats.hpp"
#include "lookahead/trie_cache.hpp"
#include "lookahead/types.hpp"

namespace lookahead {

// Corpus-level totals. Ratios are derived on demand from the raw sums so a
// report can never disagree with the per-step records it came from.
struct RunAggregate {
    int runs = 0;
    std::int64_t steps = 0;
    std::int64_t tokens = 0;
    std::int64_t draft_nodes = 0;
    std::int64_t retrieve_micros = 0;
    std::int64_t update_micros = 0;
    std::int64_t forward_micros = 0;

    void add(const RunStats& stats) {
        ++runs;
        steps += stats.steps;
        tokens += stats.tokens;
        for (const StepStats& st : stats.per_step) {
            draft_nodes += st.draft_node_count;
            retrieve_micros += st.retrieve_micros;
            update_micros += st.update_micros;
            forward_micros += st.forward_micros;
        }
    }

    double tokens_per_step() const {
        return steps > 0 ? static_cast<double>(tokens) / static_cast<double>(steps)
                         : 0.0;
    }

    // Per-step EDLs sum to the token count, so the mean EDL is the same
    // ratio; both names are kept because reports use both.
    double mean_edl() const { return tokens_per_step(); }

    double retrieve_ms_per_step() const { return ms_per_step(retrieve_micros); }
    double update_ms_per_step() const { return ms_per_step(update_micros); }
    double forward_ms_per_step() const { return ms_per_step(forward_micros); }

    // Wall-clock throughput proxy over the instrumented phases only. Real
    // speedups depend on the backing model's latency profile, so this number
    // is reported for orientation and never asserted on.
    double tokens_per_second() const {
        const std::int64_t total =
            retrieve_micros + update_micros + forward_micros;
        return total > 0 ? static_cast<double>(tokens) * 1e6 /
                               static_cast<double>(total)
                         : 0.0;
    }

private:
    double ms_per_step(std::int64_t micros) const {
        return steps > 0 ? static_cast<double>(micros) / 1000.0 /
                               static_cast<double>(steps)
                         : 0.0;
    }
};

// One cell of the decoding-length x branch-length x draft-mode suite.
struct SuiteCell {
    int decoding_length = 0;
    int branch_length = 0;
    DraftMode draft_mode = DraftMode::Hierarchical;
    RunAggregate agg;
};

struct AblationRow {
    std::string label;
    RunAggregate agg;
};

struct CapacityRow {
    int multiplier = 0;
    RunAggregate agg;
};

namespace detail {

// Shared measurement kernel: fresh cache, optional warm-up from references,
// then one lookahead run per corpus prompt.
template <PathPredictor M>
RunAggregate measure_cell(const M& model, std::span<const CorpusEntry> corpus,
                          const GenConfig& cfg, bool warm,
                          std::vector<TokenList>* outputs = nullptr) {
    TrieCache trie = make_trie(cfg);
    if (warm) {
        warmup(trie, corpus);
    }
    RunAggregate agg;
    for (const CorpusEntry& entry : corpus) {
        RunResult result = generate_lookahead(model, trie, entry.prompt, cfg);
        agg.add(result.stats);
        if (outputs != nullptr) {
            outputs->push_back(std::move(result.tokens));
        }
    }
    return agg;
}

}  // namespace detail

// Sweeps the cartesian grid of decoding lengths, branch lengths, and draft
// modes. Every cell decodes the whole corpus against its own warmed-up
// cache, so cells are independent and the table is reproducible per seed.
template <PathPredictor M>
std::vector<SuiteCell> run_suite(const M& model,
                                 std::span<const CorpusEntry> corpus,
                                 const GenConfig& base,
                                 std::span<const int> decoding_lengths,
                                 std::span<const int> branch_lengths,
                                 std::span<const DraftMode> draft_modes) {
    if (corpus.empty()) {
        throw std::invalid_argument("suite: corpus must not be empty");
    }
    if (decoding_lengths.empty() || branch_lengths.empty() ||
        draft_modes.empty()) {
        throw std::invalid_argument("suite: grid must not be empty");
    }
    std::vector<SuiteCell> cells;
    for (const int ld : decoding_lengths) {
        for (const int lb : branch_lengths) {
            for (const DraftMode mode : draft_modes) {
                GenConfig cfg = base;
                cfg.decoding_length = ld;
                cfg.branch_length = lb;
                cfg.draft_mode = mode;
                SuiteCell cell;
                cell.decoding_length = ld;
                cell.branch_length = lb;
                cell.draft_mode = mode;
                cell.agg = detail::measure_cell(model, corpus, cfg, true);
                cells.push_back(std::move(cell));
            }
        }
    }
    return cells;
}

// Maintenance ablation: the full configuration plus each procedure switched
// off on its own. Caches start cold here; a warmed cache would hand both
// insertion variants their branches for free and mask the toggle under test.
// Output tokens are decode-invariant across variants, and this asserts so.
template <PathPredictor M>
std::vector<AblationRow> run_ablation(const M& model,
                                      std::span<const CorpusEntry> corpus,
                                      const GenConfig& base) {
    if (corpus.empty()) {
        throw std::invalid_argument("ablation: corpus must not be empty");
    }
    GenConfig full = base;
    full.insert_prompt = true;
    full.insert_output = true;
    full.prune_enabled = true;
    full.eliminate_enabled = true;

    struct Variant {
        const char* label;
        bool GenConfig::* toggle;
    };
    const Variant variants[] = {
        {"full", nullptr},
        {"no-prompt-insert", &GenConfig::insert_prompt},
        {"no-output-insert", &GenConfig::insert_output},
        {"no-prune", &GenConfig::prune_enabled},
        {"no-eliminate", &GenConfig::eliminate_enabled},
    };

    std::vector<AblationRow> rows;
    std::vector<TokenList> reference_outputs;
    for (const Variant& variant : variants) {
        GenConfig cfg = full;
        if (variant.toggle != nullptr) {
            cfg.*(variant.toggle) = false;
        }
        std::vector<TokenList> outputs;
        AblationRow row;
        row.label = variant.label;
        row.agg = detail::measure_cell(model, corpus, cfg, false, &outputs);
        if (reference_outputs.empty()) {
            reference_outputs = std::move(outputs);
        } else if (outputs != reference_outputs) {
            throw std::logic_error(
                "ablation: cache maintenance toggles changed decode output");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Capacity sweep: same warmed-up workload at different cache budgets,
// expressed as multiples of the decoding length.
template <PathPredictor M>
std::vector<CapacityRow> run_capacity_sweep(const M& model,
                                            std::span<const CorpusEntry> corpus,
                                            const GenConfig& base,
                                            std::span<const int> multipliers) {
    if (corpus.empty()) {
        throw std::invalid_argument("capacity sweep: corpus must not be empty");
    }
    if (multipliers.empty()) {
        throw std::invalid_argument("capacity sweep: no multipliers given");
    }
    std::vector<CapacityRow> rows;
    for (const int multiplier : multipliers) {
        GenConfig cfg = base;
        cfg.capacity_multiplier = multiplier;
        cfg.prune_enabled = true;
        CapacityRow row;
        row.multiplier = multiplier;
        row.agg = detail::measure_cell(model, corpus, cfg, true);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace lookahead

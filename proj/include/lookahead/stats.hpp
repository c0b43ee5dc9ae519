#pragma once

#include <cstdint>
#include <vector>

#include "lookahead/types.hpp"

namespace lookahead {

// Per-decode-step measurements. edl is counted after boundary truncation, so
// summing it over a run gives exactly the run's token count.
struct StepStats {
    int draft_node_count = 0;
    int edl = 1;
    std::int64_t retrieve_micros = 0;
    std::int64_t update_micros = 0;
    std::int64_t forward_micros = 0;
};

struct RunStats {
    int steps = 0;
    int tokens = 0;
    double mean_edl = 0.0;
    double tokens_per_step = 0.0;
    std::vector<StepStats> per_step;

    // Aggregates are always recomputed from the per-step records; there is
    // deliberately no incremental accumulator to drift out of sync.
    static RunStats from_steps(std::vector<StepStats> steps_taken) {
        RunStats s;
        s.per_step = std::move(steps_taken);
        s.steps = static_cast<int>(s.per_step.size());
        for (const StepStats& st : s.per_step) s.tokens += st.edl;
        if (s.steps > 0) {
            s.tokens_per_step = static_cast<double>(s.tokens) / s.steps;
            s.mean_edl = s.tokens_per_step;  // equal because tokens is the sum of per-step edl
        }
        return s;
    }
};

struct RunResult {
    TokenList tokens;
    RunStats stats;
};

}  // namespace lookahead

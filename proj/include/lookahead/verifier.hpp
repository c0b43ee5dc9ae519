#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lookahead/draft.hpp"
#include "lookahead/model.hpp"
#include "lookahead/types.hpp"

namespace lookahead {

// Outcome of verifying one step input against the model's predictions.
struct AcceptResult {
    std::vector<int> accepted_indices;  // ancestor chain into the input, always starting at 0
    TokenList accepted_tokens;          // accepted draft tokens followed by one bonus token
    int edl = 1;                        // len(accepted_tokens): tokens committed by this step
};

// Walks the draft against the model's own next-token choices and accepts the
// longest root path that matches them, plus the bonus prediction at the end
// of that path. Greedy mode follows greedy predictions; sample mode draws
// through sample_next keyed by (seed, absolute output position), which is
// what keeps sampled generation reproducible across decoders.
//
// Tree-shaped inputs have distinct sibling tokens, so at most one child can
// match and the walk is a single cursor. Parallel-mode inputs duplicate
// shared prefixes across branches, so the walk tracks every input element
// whose root path equals the accepted tokens; all of them carry identical
// predictions (same ancestor path). The reported indices are the parent
// chain of the lowest-indexed element in the deepest accepted frontier,
// reconstructed at the end so they always form a coherent chain even when
// the accepted path hops between duplicated branches.
inline AcceptResult verify_accept(const DraftInput& input, const StepOutput& output,
                                  DecodeMode mode, std::size_t base_position,
                                  std::uint64_t seed) {
    const std::size_t n = input.size();
    if (n == 0) throw std::invalid_argument("verify: empty step input");
    if (output.greedy.size() != n)
        throw std::invalid_argument("verify: predictions do not cover the input");
    if (mode == DecodeMode::Sample && output.dists.size() != n)
        throw std::invalid_argument("verify: sample mode requires a distribution per element");
    for (std::size_t i = 0; i < n; ++i) {
        const int parent = input.parent[i];
        if ((i == 0 && parent != -1) || (i > 0 && (parent < 0 || parent >= static_cast<int>(i))))
            throw std::invalid_argument("verify: malformed parent structure");
    }

    std::vector<std::vector<int>> children(n);
    for (std::size_t i = 1; i < n; ++i)
        children[static_cast<std::size_t>(input.parent[i])].push_back(static_cast<int>(i));

    AcceptResult res;
    std::vector<int> frontier{0};
    std::size_t steps = 0;
    while (true) {
        const std::size_t rep = static_cast<std::size_t>(frontier.front());
        const TokenId target =
            mode == DecodeMode::Greedy
                ? output.greedy[rep]
                : sample_next(output.dists[rep], mix_key(seed, base_position + steps));
        ++steps;
        res.accepted_tokens.push_back(target);

        std::vector<int> next;
        for (const int f : frontier)
            for (const int c : children[static_cast<std::size_t>(f)])
                if (input.tokens[static_cast<std::size_t>(c)] == target) next.push_back(c);
        if (next.empty()) break;  // target was the bonus token
        std::sort(next.begin(), next.end());
        frontier = std::move(next);
    }
    for (int cur = frontier.front(); cur >= 0;
         cur = input.parent[static_cast<std::size_t>(cur)]) {
        res.accepted_indices.push_back(cur);
    }
    std::reverse(res.accepted_indices.begin(), res.accepted_indices.end());
    res.edl = static_cast<int>(res.accepted_tokens.size());
    return res;
}

}  // namespace lookahead

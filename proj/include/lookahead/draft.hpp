#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lookahead/types.hpp"

namespace lookahead {

// One node of a retrieved draft. Nodes are stored in depth-first preorder,
// so a parent always appears before its children and sibling branches stay
// contiguous in the list.
struct DraftNode {
    TokenId token = 0;
    int parent = -1;     // index into DraftTree::nodes; -1 for children of the match point
    int depth = 1;       // children of the match point have depth 1
    double eff_freq = 0.0;
};

struct DraftTree {
    std::vector<DraftNode> nodes;

    bool empty() const { return nodes.empty(); }
};

inline std::size_t tree_token_count(const DraftTree& tree) { return tree.nodes.size(); }

// Flat input for a single decode step: the committed next token (element 0)
// followed by the draft tokens, plus position ids and the draft-local
// attention mask. Rows implicitly see all context_len positions before the
// block; materializing only the local mask keeps the step O(draft^2), not
// O(context^2).
struct DraftInput {
    TokenList tokens;                // tokens[0] is the committed token
    std::vector<int> positions;      // positions[i] = context_len + depth of element i
    std::vector<int> parent;         // parent[0] = -1, otherwise an index into tokens
    std::size_t context_len = 0;
    std::vector<std::uint8_t> mask;  // row-major size() x size(); 1 = row attends to column

    std::size_t size() const { return tokens.size(); }

    bool visible(std::size_t row, std::size_t col) const {
        return mask[row * tokens.size() + col] != 0;
    }
};

namespace detail {

inline void push_masked_token(DraftInput& in, std::size_t n, TokenId token, int position,
                              int parent_index) {
    const std::size_t i = in.tokens.size();
    assert(parent_index >= -1 && (parent_index < 0 || static_cast<std::size_t>(parent_index) < i));
    in.tokens.push_back(token);
    in.positions.push_back(position);
    in.parent.push_back(parent_index);
    if (parent_index >= 0) {
        // ancestor closure: this row sees exactly what its parent sees, plus itself
        const std::size_t p = static_cast<std::size_t>(parent_index);
        for (std::size_t j = 0; j < n; ++j) in.mask[i * n + j] = in.mask[p * n + j];
    }
    in.mask[i * n + i] = 1;
}

}  // namespace detail

// Expands a draft tree into the flat step input. An empty tree yields the
// one-token input of a plain autoregressive step.
inline DraftInput linearize(const DraftTree& tree, TokenId committed, std::size_t context_len) {
    const std::size_t n = tree.nodes.size() + 1;
    DraftInput in;
    in.context_len = context_len;
    in.tokens.reserve(n);
    in.positions.reserve(n);
    in.parent.reserve(n);
    in.mask.assign(n * n, 0);

    detail::push_masked_token(in, n, committed, static_cast<int>(context_len), -1);
    for (const DraftNode& node : tree.nodes) {
        // tree parent -1 (match-point child) hangs off the committed token at slot 0
        detail::push_masked_token(in, n, node.token, static_cast<int>(context_len) + node.depth,
                                  node.parent + 1);
    }
    return in;
}

// Lays out explicit branches side by side without prefix merging; shared
// first tokens are duplicated and branches cannot see each other. Used for
// the single-branch and parallel draft modes.
inline DraftInput flatten_parallel(const std::vector<TokenList>& branches, TokenId committed,
                                   std::size_t context_len) {
    std::size_t n = 1;
    for (const TokenList& branch : branches) n += branch.size();

    DraftInput in;
    in.context_len = context_len;
    in.tokens.reserve(n);
    in.positions.reserve(n);
    in.parent.reserve(n);
    in.mask.assign(n * n, 0);

    detail::push_masked_token(in, n, committed, static_cast<int>(context_len), -1);
    for (const TokenList& branch : branches) {
        int parent = 0;
        int depth = 0;
        for (TokenId token : branch) {
            ++depth;
            detail::push_masked_token(in, n, token, static_cast<int>(context_len) + depth, parent);
            parent = static_cast<int>(in.tokens.size()) - 1;
        }
    }
    return in;
}

// Debug helper: the mask as a 0/1 grid, one row per line.
inline std::string render_mask(const DraftInput& in) {
    const std::size_t n = in.size();
    std::string out;
    out.reserve(n * (n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out += in.visible(i, j) ? '1' : '0';
        out += '\n';
    }
    return out;
}

}  // namespace lookahead

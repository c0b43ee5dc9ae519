#pragma once

// Independent reference implementations used to check the library. These are
// deliberately written over different data structures (flat path tables
// instead of linked nodes) so that structural bugs in the real code cannot
// cancel out here. Checker functions return an error string; empty means ok.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <lookahead/draft.hpp>
#include <lookahead/model.hpp>
#include <lookahead/trie_cache.hpp>
#include <lookahead/types.hpp>
#include <lookahead/verifier.hpp>

namespace testsupport {

using lookahead::TokenId;
using lookahead::TokenList;

struct FreqPair {
    double prompt = 0;
    double output = 0;
    double total() const { return prompt + output; }
    double& field(lookahead::BranchSource source) {
        return source == lookahead::BranchSource::Prompt ? prompt : output;
    }
};

using PathTable = std::map<TokenList, FreqPair>;

// Flat-table replica of the cache maintenance semantics: every path is an
// independent map entry keyed by its token sequence.
class TrieMirror {
public:
    explicit TrieMirror(lookahead::TrieConfig cfg) : cfg_(cfg) {}

    void insert_branch(std::span<const TokenId> tokens,
                       lookahead::BranchSource source) {
        if (tokens.empty()) return;
        const std::size_t len =
            std::min(tokens.size(), static_cast<std::size_t>(cfg_.branch_length));
        TokenList path;
        for (std::size_t k = 0; k < len; ++k) {
            path.push_back(tokens[k]);
            table_[path].field(source) += 1.0;
        }
        if (table_.size() > cfg_.capacity) prune();
    }

    void insert_sequence(std::span<const TokenId> tokens,
                         lookahead::BranchSource source) {
        if (tokens.empty()) return;
        const std::size_t starts = std::max<std::size_t>(tokens.size() - 1, 1);
        for (std::size_t i = 0; i < starts; ++i) {
            const std::size_t len = std::min<std::size_t>(
                static_cast<std::size_t>(cfg_.branch_length), tokens.size() - i);
            insert_branch(tokens.subspan(i, len), source);
        }
    }

    void eliminate_prompt(std::span<const TokenId> prompt) {
        if (prompt.empty()) return;
        const std::size_t starts = std::max<std::size_t>(prompt.size() - 1, 1);
        for (std::size_t i = 0; i < starts; ++i) {
            const std::size_t len = std::min<std::size_t>(
                static_cast<std::size_t>(cfg_.branch_length), prompt.size() - i);
            TokenList path;
            bool alive = true;
            for (std::size_t k = 0; k < len && alive; ++k) {
                path.push_back(prompt[i + k]);
                const auto it = table_.find(path);
                if (it == table_.end()) {
                    alive = false;
                } else {
                    it->second.prompt -= 1.0;
                    if (it->second.prompt < 0.0) it->second.prompt = 0.0;
                }
            }
        }
        erase_dead_subtrees([](const FreqPair& f) { return !(f.total() > 0.0); });
    }

    void prune() {
        while (table_.size() > cfg_.capacity) {
            ++decay_passes;
            bool survivor = false;
            for (auto& [path, freq] : table_) {
                freq.prompt *= cfg_.decay_factor;
                freq.output *= cfg_.decay_factor;
                if (freq.total() >= 1.0) survivor = true;
            }
            if (!survivor) {
                force_remove_leaves();
                return;
            }
            erase_dead_subtrees([](const FreqPair& f) { return f.total() < 1.0; });
        }
    }

    std::size_t node_count() const { return table_.size(); }
    const PathTable& table() const { return table_; }

    // Decay applications so far. Callers that must avoid clamped
    // eliminations watch this to learn when balanced bookkeeping ended.
    std::uint64_t decay_passes = 0;

private:
    // The cache removes whole subtrees rooted at a dead node, so a path dies
    // either on its own total or because its parent died. Lexicographic map
    // order visits parents before children, letting the cascade run in one
    // ascending sweep.
    template <typename DeadFn>
    void erase_dead_subtrees(DeadFn dead) {
        for (auto it = table_.begin(); it != table_.end();) {
            const TokenList& path = it->first;
            bool orphan = false;
            if (path.size() > 1) {
                const TokenList parent(path.begin(), std::prev(path.end()));
                orphan = table_.find(parent) == table_.end();
            }
            it = (orphan || dead(it->second)) ? table_.erase(it) : std::next(it);
        }
    }

    bool is_leaf(const TokenList& path) const {
        auto it = table_.upper_bound(path);
        if (it == table_.end()) return true;
        const TokenList& next = it->first;
        return !(next.size() > path.size() &&
                 std::equal(path.begin(), path.end(), next.begin()));
    }

    void force_remove_leaves() {
        while (table_.size() > cfg_.capacity) {
            struct Leaf {
                TokenList path;
                double total;
            };
            std::vector<Leaf> leaves;
            for (const auto& [path, freq] : table_) {
                if (is_leaf(path)) leaves.push_back({path, freq.total()});
            }
            if (leaves.empty()) return;
            std::sort(leaves.begin(), leaves.end(),
                      [](const Leaf& a, const Leaf& b) {
                          if (a.path.size() != b.path.size())
                              return a.path.size() > b.path.size();
                          if (a.total != b.total) return a.total < b.total;
                          return a.path < b.path;
                      });
            for (const Leaf& leaf : leaves) {
                if (table_.size() <= cfg_.capacity) return;
                table_.erase(leaf.path);
            }
        }
    }

    lookahead::TrieConfig cfg_;
    PathTable table_;
};

// Flattens a real cache into the mirror's representation.
inline PathTable trie_table(const lookahead::TrieCache& trie) {
    PathTable out;
    TokenList path;
    const auto walk = [&](const auto& self,
                          const lookahead::TrieCache::Node& node) -> void {
        for (const auto& [token, child] : node.children) {
            path.push_back(token);
            out[path] = FreqPair{child->prompt_freq, child->output_freq};
            self(self, *child);
            path.pop_back();
        }
    };
    walk(walk, trie.root());
    return out;
}

inline std::string dump_path(const TokenList& path) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) os << " ";
        os << path[i];
    }
    os << "]";
    return os.str();
}

// Structural comparison: node set and both frequency fields must agree.
inline std::string compare_tables(const PathTable& actual,
                                  const PathTable& expected) {
    if (actual.size() != expected.size()) {
        return "node count " + std::to_string(actual.size()) + " vs expected " +
               std::to_string(expected.size());
    }
    for (const auto& [path, freq] : expected) {
        const auto it = actual.find(path);
        if (it == actual.end()) {
            return "missing path " + dump_path(path);
        }
        const double dp = it->second.prompt - freq.prompt;
        const double dq = it->second.output - freq.output;
        if (dp > 1e-9 || dp < -1e-9 || dq > 1e-9 || dq < -1e-9) {
            return "freq mismatch at " + dump_path(path);
        }
    }
    return {};
}

// Invariants every reachable cache state must satisfy: per-field parent
// dominance, depth bound, and the capacity bound.
inline std::string check_trie_invariants(const lookahead::TrieCache& trie) {
    std::string err;
    std::size_t count = 0;
    const auto walk = [&](const auto& self, const lookahead::TrieCache::Node& node,
                          int depth) -> void {
        for (const auto& [token, child] : node.children) {
            ++count;
            if (child->token != token) {
                err = "child token disagrees with its map key";
                return;
            }
            if (child->prompt_freq < 0 || child->output_freq < 0) {
                err = "negative frequency";
                return;
            }
            if (child->prompt_freq + child->output_freq <= 0) {
                err = "zero-total node retained";
                return;
            }
            if (depth + 1 > trie.config().branch_length) {
                err = "node deeper than branch_length";
                return;
            }
            self(self, *child, depth + 1);
            if (!err.empty()) return;
        }
    };
    walk(walk, trie.root(), 0);
    if (!err.empty()) return err;
    if (count != trie.node_count()) {
        return "node_count() disagrees with traversal";
    }
    if (count > trie.config().capacity) {
        return "capacity exceeded";
    }
    return {};
}

// Insert and prune touch a node only together with all of its ancestors, so
// workloads made of those ops keep each frequency field monotone along every
// path. eliminate_prompt can break this (clamped parents under still-positive
// children), so the check is separate from the structural invariants.
inline std::string check_field_dominance(const lookahead::TrieCache& trie) {
    std::string err;
    const auto walk = [&](const auto& self, const lookahead::TrieCache::Node& node,
                          bool is_root) -> void {
        for (const auto& [token, child] : node.children) {
            if (!is_root && (node.prompt_freq < child->prompt_freq - 1e-9 ||
                             node.output_freq < child->output_freq - 1e-9)) {
                err = "child frequency exceeds its parent at " + std::to_string(token);
                return;
            }
            self(self, *child, false);
            if (!err.empty()) return;
        }
    };
    walk(walk, trie.root(), true);
    return err;
}

// Expected retrieval result, computed the slow way: enumerate the matched
// subtree, sort, cut at the budget.
struct OracleDraftNode {
    TokenList path;  // relative to the matched prefix
    double eff = 0;
};

struct OracleDraft {
    TokenList prefix;
    std::vector<OracleDraftNode> nodes;
};

inline OracleDraft oracle_retrieve(const PathTable& table,
                                   const lookahead::TrieConfig& cfg,
                                   std::span<const TokenId> context,
                                   std::size_t budget) {
    const std::size_t longest =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.max_prefix_len),
                              context.size());
    const auto subtree_of = [&](const TokenList& prefix) {
        std::vector<std::pair<TokenList, double>> out;  // lexicographic
        for (const auto& [path, freq] : table) {
            if (path.size() > prefix.size() &&
                std::equal(prefix.begin(), prefix.end(), path.begin())) {
                out.emplace_back(
                    TokenList(path.begin() + static_cast<long>(prefix.size()),
                              path.end()),
                    freq.prompt * cfg.prompt_boost + freq.output);
            }
        }
        return out;
    };

    TokenList best_prefix;
    std::vector<std::pair<TokenList, double>> best;
    bool chosen = false;
    for (std::size_t len = longest; len >= 1 && !chosen; --len) {
        const TokenList prefix(context.end() - static_cast<long>(len),
                               context.end());
        auto subtree = subtree_of(prefix);
        if (subtree.size() >= static_cast<std::size_t>(cfg.min_match_tokens)) {
            best_prefix = prefix;
            best = std::move(subtree);
            chosen = true;
        } else if (subtree.size() > best.size()) {
            best_prefix = prefix;
            best = std::move(subtree);
        }
    }

    OracleDraft draft;
    draft.prefix = best_prefix;
    if (best.empty()) return draft;

    // stable sort over lexicographic enumeration = the cache's preorder
    // tie-break
    std::stable_sort(best.begin(), best.end(),
                     [](const auto& a, const auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         if (a.first.size() != b.first.size())
                             return a.first.size() < b.first.size();
                         return a.first.back() < b.first.back();
                     });
    const std::size_t take = std::min(budget, best.size());
    for (std::size_t i = 0; i < take; ++i) {
        draft.nodes.push_back({best[i].first, best[i].second});
    }
    return draft;
}

// Reconstructs each tree node's relative path through the parent links.
inline std::vector<TokenList> tree_paths(const lookahead::DraftTree& tree) {
    std::vector<TokenList> paths(tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& node = tree.nodes[i];
        if (node.parent >= 0) paths[i] = paths[static_cast<std::size_t>(node.parent)];
        paths[i].push_back(node.token);
    }
    return paths;
}

// Checks a retrieved draft tree against the oracle: same (path, eff) set,
// prefix-closed, structurally consistent, siblings ordered heaviest-first.
inline std::string check_retrieval(const lookahead::DraftTree& tree,
                                   const OracleDraft& expected) {
    const std::vector<TokenList> paths = tree_paths(tree);
    if (paths.size() != expected.nodes.size()) {
        return "draft size " + std::to_string(paths.size()) + " vs oracle " +
               std::to_string(expected.nodes.size());
    }
    std::map<TokenList, double> expected_set;
    for (const auto& node : expected.nodes) {
        expected_set[node.path] = node.eff;
    }
    // oracle selection must itself be prefix-closed, or the sort key logic
    // has regressed
    for (const auto& [path, eff] : expected_set) {
        if (path.size() > 1) {
            const TokenList parent(path.begin(), path.end() - 1);
            if (!expected_set.count(parent)) {
                return "oracle selection not prefix-closed at " + dump_path(path);
            }
        }
        (void)eff;
    }
    std::map<TokenList, std::size_t> seen;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto it = expected_set.find(paths[i]);
        if (it == expected_set.end()) {
            return "unexpected draft path " + dump_path(paths[i]);
        }
        const double d = tree.nodes[i].eff_freq - it->second;
        if (d > 1e-9 || d < -1e-9) {
            return "eff mismatch at " + dump_path(paths[i]);
        }
        if (!seen.emplace(paths[i], i).second) {
            return "duplicate draft path " + dump_path(paths[i]);
        }
        const int depth = tree.nodes[i].depth;
        if (static_cast<std::size_t>(depth) != paths[i].size()) {
            return "depth field disagrees with parent chain at " +
                   dump_path(paths[i]);
        }
        if (paths[i].size() > 1) {
            const TokenList parent_path(paths[i].begin(), paths[i].end() - 1);
            const auto pit = seen.find(parent_path);
            if (pit == seen.end() ||
                static_cast<int>(pit->second) != tree.nodes[i].parent) {
                return "parent link does not point at the parent path for " +
                       dump_path(paths[i]);
            }
        } else if (tree.nodes[i].parent != -1) {
            return "depth-1 node with a parent link";
        }
    }
    // sibling order: heavier first, then smaller token
    std::map<int, std::vector<std::size_t>> by_parent;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        by_parent[tree.nodes[i].parent].push_back(i);
    }
    for (const auto& [parent, kids] : by_parent) {
        for (std::size_t k = 1; k < kids.size(); ++k) {
            const auto& prev = tree.nodes[kids[k - 1]];
            const auto& cur = tree.nodes[kids[k]];
            const bool ordered =
                prev.eff_freq > cur.eff_freq ||
                (prev.eff_freq == cur.eff_freq && prev.token < cur.token);
            if (!ordered) {
                return "sibling order violated under parent " +
                       std::to_string(parent);
            }
        }
    }
    return {};
}

// Draft input structural oracle: positions and mask must encode exactly the
// ancestor closure implied by the parent links.
inline std::string check_draft_input(const lookahead::DraftInput& input,
                                     std::size_t context_len) {
    const std::size_t n = input.size();
    if (n == 0) return "empty input";
    if (input.positions.size() != n || input.parent.size() != n ||
        input.mask.size() != n * n) {
        return "field sizes disagree";
    }
    if (input.context_len != context_len) return "context_len mismatch";
    if (input.parent[0] != -1) return "element 0 must have no parent";
    for (std::size_t i = 1; i < n; ++i) {
        if (input.parent[i] < 0 || input.parent[i] >= static_cast<int>(i)) {
            return "parent of " + std::to_string(i) + " out of range";
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<bool> ancestor(n, false);
        std::size_t depth = 0;
        int cur = static_cast<int>(i);
        while (cur >= 0) {
            ancestor[static_cast<std::size_t>(cur)] = true;
            ++depth;
            cur = input.parent[static_cast<std::size_t>(cur)];
        }
        if (input.positions[i] != static_cast<int>(context_len + depth) - 1) {
            return "position of " + std::to_string(i) +
                   " disagrees with its depth";
        }
        for (std::size_t j = 0; j < n; ++j) {
            const bool visible = input.mask[i * n + j] != 0;
            if (visible != ancestor[j]) {
                return "mask(" + std::to_string(i) + "," + std::to_string(j) +
                       ") should be " + (ancestor[j] ? "1" : "0");
            }
        }
    }
    return {};
}

// Autoregressive acceptance oracle: compute the baseline continuation first,
// then find the longest draft root path that matches it. The library result
// must be that prefix plus the next continuation token.
template <lookahead::PathPredictor M>
std::string check_verify(const M& model, const TokenList& context_before_root,
                         const lookahead::DraftInput& input,
                         const lookahead::StepOutput& output,
                         lookahead::DecodeMode mode, std::size_t base_position,
                         std::uint64_t seed,
                         const lookahead::AcceptResult& actual) {
    const bool sample = mode == lookahead::DecodeMode::Sample;
    int max_depth = 0;
    std::vector<int> depth(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        depth[i] = input.parent[i] < 0
                       ? 0
                       : depth[static_cast<std::size_t>(input.parent[i])] + 1;
        max_depth = std::max(max_depth, depth[i]);
    }

    TokenList path = context_before_root;
    path.push_back(input.tokens[0]);
    TokenList continuation;
    for (int t = 0; t <= max_depth; ++t) {
        const lookahead::Prediction pred = model.predict(path, sample);
        const TokenId target =
            sample ? lookahead::sample_next(
                         pred.dist,
                         lookahead::mix_key(seed, base_position +
                                                      static_cast<std::size_t>(t)))
                   : pred.greedy;
        continuation.push_back(target);
        path.push_back(target);
    }

    // root paths of every element, tokens below the committed root
    std::vector<TokenList> below_root(input.size());
    for (std::size_t i = 1; i < input.size(); ++i) {
        below_root[i] = below_root[static_cast<std::size_t>(input.parent[i])];
        below_root[i].push_back(input.tokens[i]);
    }

    // deepest element whose root path is a prefix of the continuation;
    // lowest index breaks ties at that depth
    std::size_t accepted = 0;
    std::size_t final_index = 0;
    for (std::size_t i = 1; i < input.size(); ++i) {
        const std::size_t d = static_cast<std::size_t>(depth[i]);
        if (d > accepted &&
            std::equal(below_root[i].begin(), below_root[i].end(),
                       continuation.begin())) {
            accepted = d;
            final_index = i;
        }
    }

    TokenList expected_tokens(continuation.begin(),
                              continuation.begin() +
                                  static_cast<long>(accepted + 1));
    if (actual.accepted_tokens != expected_tokens) {
        return "accepted tokens disagree with the autoregressive prefix";
    }
    if (actual.edl != static_cast<int>(expected_tokens.size())) {
        return "edl is not len(accepted_tokens)";
    }
    std::vector<int> expected_indices;
    for (int cur = static_cast<int>(final_index); cur >= 0;
         cur = input.parent[static_cast<std::size_t>(cur)]) {
        expected_indices.push_back(cur);
    }
    std::reverse(expected_indices.begin(), expected_indices.end());
    if (actual.accepted_indices != expected_indices) {
        return "accepted indices are not the matched chain";
    }
    (void)output;
    return {};
}

}  // namespace testsupport

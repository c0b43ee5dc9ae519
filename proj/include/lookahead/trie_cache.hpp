#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lookahead/draft.hpp"
#include "lookahead/types.hpp"

namespace lookahead {

struct TrieConfig {
    std::size_t capacity = 256;   // node budget; the usual sizing is 16x the decoding length
    double decay_factor = 0.5;    // multiplier applied to both frequency fields per prune pass
    double prompt_boost = 100.0;  // retrieval weight of prompt_freq relative to output_freq
    int branch_length = 8;        // window length used by sequence insertion and elimination
    int min_match_tokens = 8;     // subtree size at which the multi-stage search stops early
    int max_prefix_len = 4;       // longest context suffix the multi-stage search tries
};

// Counters for tolerated-but-noteworthy inputs. None of these indicate a
// failure; they let callers notice misuse or degenerate workloads.
struct TrieEvents {
    std::uint64_t degenerate_inserts = 0;    // empty sequences passed to insert
    std::uint64_t clamped_eliminations = 0;  // prompt_freq decrements that would have gone negative
    std::uint64_t forced_leaf_removals = 0;  // leaves dropped because decay alone stopped converging
};

// Frequency-annotated token trie shared by all generation sessions. Branches
// arrive from prompts and generated outputs (tracked in separate per-node
// counters so prompt contributions can be eliminated exactly when a query
// finishes), and drafts leave through retrieve_draft().
//
// Thread contract: retrieval and all other const operations may run
// concurrently; mutating operations need exclusive access. The engine
// serializes mutations at step boundaries.
class TrieCache {
public:
    struct Node {
        TokenId token = -1;
        double prompt_freq = 0.0;
        double output_freq = 0.0;
        std::map<TokenId, std::unique_ptr<Node>> children;

        double total_freq() const { return prompt_freq + output_freq; }

        double& freq(BranchSource source) {
            return source == BranchSource::Prompt ? prompt_freq : output_freq;
        }
    };

    struct SubtreeMatch {
        const Node* node = nullptr;
        std::size_t token_count = 0;  // nodes strictly below the matched node
    };

    TrieCache() : TrieCache(TrieConfig{}) {}

    explicit TrieCache(TrieConfig cfg) : cfg_(cfg) {
        if (cfg_.capacity < 1) throw std::invalid_argument("trie: capacity must be positive");
        if (!(cfg_.decay_factor > 0.0) || !(cfg_.decay_factor < 1.0))
            throw std::invalid_argument("trie: decay_factor must lie in (0,1)");
        if (!(cfg_.prompt_boost >= 1.0))
            throw std::invalid_argument("trie: prompt_boost must be >= 1");
        if (cfg_.branch_length < 1)
            throw std::invalid_argument("trie: branch_length must be positive");
        if (cfg_.min_match_tokens < 1)
            throw std::invalid_argument("trie: min_match_tokens must be positive");
        if (cfg_.max_prefix_len < 1)
            throw std::invalid_argument("trie: max_prefix_len must be positive");
    }

    const TrieConfig& config() const { return cfg_; }
    const TrieEvents& events() const { return events_; }
    std::size_t node_count() const { return node_count_; }
    const Node& root() const { return root_; }

    // Retrieval knobs may be adjusted after construction (e.g. on a cache
    // restored from a snapshot, which stores only the structural fields).
    void set_retrieval_params(int min_match_tokens, int max_prefix_len) {
        if (min_match_tokens < 1 || max_prefix_len < 1)
            throw std::invalid_argument("trie: retrieval params must be positive");
        cfg_.min_match_tokens = min_match_tokens;
        cfg_.max_prefix_len = max_prefix_len;
    }

    void clear() {
        root_.children.clear();
        node_count_ = 0;
    }

    // Adds one branch, incrementing the source's frequency field along the
    // whole path. Branches longer than branch_length are cut at that depth.
    void insert_branch(std::span<const TokenId> tokens, BranchSource source) {
        if (tokens.empty()) {
            ++events_.degenerate_inserts;
            return;
        }
        if (tokens.size() > static_cast<std::size_t>(cfg_.branch_length))
            tokens = tokens.first(static_cast<std::size_t>(cfg_.branch_length));

        Node* cur = &root_;
        for (TokenId token : tokens) {
            auto [it, created] = cur->children.try_emplace(token, nullptr);
            if (created) {
                it->second = std::make_unique<Node>();
                it->second->token = token;
                ++node_count_;
            }
            cur = it->second.get();
            cur->freq(source) += 1.0;
        }
        if (node_count_ > cfg_.capacity) prune();
    }

    // Slides a branch_length window over the sequence and inserts every
    // window. Start positions cover [0, len-1); a one-token sequence still
    // contributes its single branch, and tail windows shorter than
    // branch_length are inserted as-is.
    void insert_sequence(std::span<const TokenId> tokens, BranchSource source) {
        if (tokens.empty()) {
            ++events_.degenerate_inserts;
            return;
        }
        const std::size_t n = tokens.size();
        const std::size_t window = static_cast<std::size_t>(cfg_.branch_length);
        const std::size_t starts = std::max<std::size_t>(n - 1, 1);
        for (std::size_t i = 0; i < starts; ++i)
            insert_branch(tokens.subspan(i, std::min(window, n - i)), source);
    }

    // Exact inverse of insert_sequence(prompt, Prompt): walks the same
    // windows decrementing prompt_freq, then removes subtrees whose total
    // frequency reached zero. Decrements clamp at zero (counted as events)
    // so eliminating a never-inserted prompt cannot corrupt the trie.
    void eliminate_prompt(std::span<const TokenId> prompt) {
        if (prompt.empty()) {
            ++events_.degenerate_inserts;
            return;
        }
        const std::size_t n = prompt.size();
        const std::size_t window = static_cast<std::size_t>(cfg_.branch_length);
        const std::size_t starts = std::max<std::size_t>(n - 1, 1);
        for (std::size_t i = 0; i < starts; ++i) {
            Node* cur = &root_;
            const std::size_t end = std::min(i + window, n);
            for (std::size_t j = i; j < end; ++j) {
                auto it = cur->children.find(prompt[j]);
                if (it == cur->children.end()) break;  // path already pruned away
                cur = it->second.get();
                cur->prompt_freq -= 1.0;
                if (cur->prompt_freq < 0.0) {
                    cur->prompt_freq = 0.0;
                    ++events_.clamped_eliminations;
                }
            }
        }
        node_count_ -= remove_subtrees_below(root_, kZeroThreshold);
    }

    // Decays all frequencies and removes sub-unit nodes until the capacity
    // bound holds. When one more decay pass would remove every remaining
    // node (all frequencies equal and already low), falls back to shedding
    // the deepest, least frequent leaves instead of emptying the cache.
    void prune() {
        while (node_count_ > cfg_.capacity) {
            const bool any_survivor = decay(root_);
            if (!any_survivor) {
                force_remove_leaves();
                return;
            }
            node_count_ -= remove_subtrees_below(root_, 1.0);
        }
    }

    // Walks prefix from the root; returns the reached node and the count of
    // nodes strictly below it, or nothing when the walk fails.
    std::optional<SubtreeMatch> match_subtree(std::span<const TokenId> prefix) const {
        if (prefix.empty()) return std::nullopt;
        const Node* cur = &root_;
        for (TokenId token : prefix) {
            auto it = cur->children.find(token);
            if (it == cur->children.end()) return std::nullopt;
            cur = it->second.get();
        }
        return SubtreeMatch{cur, subtree_size(*cur)};
    }

    // Multi-stage draft retrieval. Tries context suffixes from
    // min(max_prefix_len, len) down to 1 token and stops at the first stage
    // whose subtree holds at least min_match_tokens nodes; if no stage does,
    // the largest non-empty match wins (ties go to the longer suffix). From
    // the chosen subtree, keeps the `budget` nodes with the highest
    // effective frequency
    //     eff(n) = output_freq(n) + prompt_boost * prompt_freq(n),
    // ties broken toward shallower depth, then smaller token id. Because
    // both frequency fields are monotone along every path, a node never
    // outranks its parent, so the kept set is automatically prefix-closed.
    DraftTree retrieve_draft(std::span<const TokenId> context, int budget) const {
        DraftTree draft;
        if (context.empty() || budget < 1 || root_.children.empty()) return draft;

        const Node* anchor = nullptr;
        std::size_t anchor_count = 0;
        const int longest = std::min<int>(cfg_.max_prefix_len, static_cast<int>(context.size()));
        for (int p = longest; p >= 1; --p) {
            const auto m = match_subtree(context.subspan(context.size() - static_cast<std::size_t>(p)));
            if (!m || m->token_count == 0) continue;
            if (m->token_count >= static_cast<std::size_t>(cfg_.min_match_tokens)) {
                anchor = m->node;
                anchor_count = m->token_count;
                break;
            }
            if (m->token_count > anchor_count) {
                anchor = m->node;
                anchor_count = m->token_count;
            }
        }
        if (anchor == nullptr) return draft;

        // candidates in path-lexicographic order (preorder, children ascending)
        std::vector<Candidate> cands;
        cands.reserve(anchor_count);
        collect_candidates(*anchor, -1, 1, cands);

        std::vector<int> order(cands.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (cands[a].eff != cands[b].eff) return cands[a].eff > cands[b].eff;
            if (cands[a].depth != cands[b].depth) return cands[a].depth < cands[b].depth;
            return cands[a].node->token < cands[b].node->token;
        });

        const std::size_t take = std::min(static_cast<std::size_t>(budget), cands.size());
        std::vector<std::uint8_t> selected(cands.size(), 0);
        for (std::size_t k = 0; k < take; ++k) selected[static_cast<std::size_t>(order[k])] = 1;

        // group the kept nodes under their parents, strongest child first
        std::vector<std::vector<int>> kept_children(cands.size());
        std::vector<int> kept_roots;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (!selected[i]) continue;
            if (cands[i].parent < 0)
                kept_roots.push_back(static_cast<int>(i));
            else
                kept_children[static_cast<std::size_t>(cands[i].parent)].push_back(static_cast<int>(i));
        }
        const auto heavier = [&](int a, int b) {
            if (cands[a].eff != cands[b].eff) return cands[a].eff > cands[b].eff;
            return cands[a].node->token < cands[b].node->token;
        };
        std::sort(kept_roots.begin(), kept_roots.end(), heavier);
        for (auto& siblings : kept_children) std::sort(siblings.begin(), siblings.end(), heavier);

        // emit in preorder; stack entries are (candidate, emitted parent slot)
        draft.nodes.reserve(take);
        std::vector<std::pair<int, int>> stack;
        for (auto it = kept_roots.rbegin(); it != kept_roots.rend(); ++it) stack.emplace_back(*it, -1);
        while (!stack.empty()) {
            const auto [ci, parent_slot] = stack.back();
            stack.pop_back();
            const int slot = static_cast<int>(draft.nodes.size());
            const Candidate& c = cands[static_cast<std::size_t>(ci)];
            draft.nodes.push_back(DraftNode{c.node->token, parent_slot, c.depth, c.eff});
            const auto& siblings = kept_children[static_cast<std::size_t>(ci)];
            for (auto it = siblings.rbegin(); it != siblings.rend(); ++it) stack.emplace_back(*it, slot);
        }
        return draft;
    }

    // Versioned JSON snapshot: structural config plus all nodes in preorder.
    // Byte-stable: identical caches serialize to identical strings.
    std::string save_snapshot() const {
        nlohmann::json j;
        j["version"] = kSnapshotVersion;
        j["capacity"] = cfg_.capacity;
        j["decay_factor"] = cfg_.decay_factor;
        j["prompt_boost"] = cfg_.prompt_boost;
        j["branch_length"] = cfg_.branch_length;
        nlohmann::json nodes = nlohmann::json::array();
        append_snapshot_nodes(root_, 0, nodes);
        j["nodes"] = std::move(nodes);
        return j.dump();
    }

    static TrieCache load_snapshot(const std::string& text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(std::string("snapshot: not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw std::runtime_error("snapshot: top-level value must be an object");
        if (!j.contains("version") || !j["version"].is_number_integer())
            throw std::runtime_error("snapshot: missing integer version field");
        if (const int version = j["version"].get<int>(); version != kSnapshotVersion)
            throw std::runtime_error("snapshot: unsupported version " + std::to_string(version) +
                                     " (expected " + std::to_string(kSnapshotVersion) + ")");
        try {
            TrieConfig cfg;
            cfg.capacity = j.at("capacity").get<std::size_t>();
            cfg.decay_factor = j.at("decay_factor").get<double>();
            cfg.prompt_boost = j.at("prompt_boost").get<double>();
            cfg.branch_length = j.at("branch_length").get<int>();
            TrieCache cache(cfg);

            std::vector<Node*> path;  // nodes above the insertion point, root excluded
            for (const auto& entry : j.at("nodes")) {
                const TokenId token = entry.at("token").get<TokenId>();
                const int depth = entry.at("depth").get<int>();
                const double prompt_freq = entry.at("prompt_freq").get<double>();
                const double output_freq = entry.at("output_freq").get<double>();
                if (depth < 1 || static_cast<std::size_t>(depth) > path.size() + 1)
                    throw std::runtime_error("snapshot: nodes are not a valid preorder sequence");
                if (prompt_freq < 0.0 || output_freq < 0.0 || !(prompt_freq + output_freq > 0.0))
                    throw std::runtime_error("snapshot: node frequencies out of range");
                path.resize(static_cast<std::size_t>(depth) - 1);
                Node* parent = path.empty() ? &cache.root_ : path.back();
                auto [it, created] = parent->children.try_emplace(token, nullptr);
                if (!created) throw std::runtime_error("snapshot: duplicate sibling token");
                it->second = std::make_unique<Node>();
                it->second->token = token;
                it->second->prompt_freq = prompt_freq;
                it->second->output_freq = output_freq;
                ++cache.node_count_;
                path.push_back(it->second.get());
            }
            if (cache.node_count_ > cache.cfg_.capacity)
                throw std::runtime_error("snapshot: node count exceeds the stored capacity");
            return cache;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(std::string("snapshot: malformed field: ") + e.what());
        }
    }

private:
    struct Candidate {
        const Node* node;
        int parent;  // index into the candidate vector, -1 for anchor children
        int depth;   // 1 for anchor children
        double eff;
    };

    static constexpr int kSnapshotVersion = 1;
    // threshold for "total frequency reached zero"; frequencies are sums of
    // decayed unit increments, so exact comparison against 0 is safe
    static constexpr double kZeroThreshold = 0.0;

    static std::size_t subtree_size(const Node& node) {
        std::size_t count = 0;
        for (const auto& [token, child] : node.children) count += 1 + subtree_size(*child);
        return count;
    }

    // removes every child subtree whose root total is <= threshold for the
    // zero sweep (exact) or < 1 for prune passes; returns nodes removed
    std::size_t remove_subtrees_below(Node& node, double threshold) {
        std::size_t removed = 0;
        for (auto it = node.children.begin(); it != node.children.end();) {
            Node& child = *it->second;
            const bool dead = threshold == kZeroThreshold ? !(child.total_freq() > 0.0)
                                                          : child.total_freq() < threshold;
            if (dead) {
                removed += 1 + subtree_size(child);
                it = node.children.erase(it);
            } else {
                removed += remove_subtrees_below(child, threshold);
                ++it;
            }
        }
        return removed;
    }

    // multiplies both fields everywhere; true if any node keeps total >= 1
    bool decay(Node& node) {
        bool survivor = false;
        for (auto& [token, child] : node.children) {
            child->prompt_freq *= cfg_.decay_factor;
            child->output_freq *= cfg_.decay_factor;
            if (child->total_freq() >= 1.0) survivor = true;
            if (decay(*child)) survivor = true;
        }
        return survivor;
    }

    struct LeafRef {
        std::vector<TokenId> path;
        double total = 0.0;
    };

    void collect_leaves(const Node& node, std::vector<TokenId>& path, std::vector<LeafRef>& out) const {
        for (const auto& [token, child] : node.children) {
            path.push_back(token);
            if (child->children.empty())
                out.push_back(LeafRef{path, child->total_freq()});
            else
                collect_leaves(*child, path, out);
            path.pop_back();
        }
    }

    void erase_path(std::span<const TokenId> path) {
        Node* cur = &root_;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) cur = cur->children.at(path[i]).get();
        cur->children.erase(path.back());
        --node_count_;
    }

    // deepest first, lowest total first, then lexicographically smallest
    // path; removing a leaf can expose its parent, so sweep in passes
    void force_remove_leaves() {
        while (node_count_ > cfg_.capacity) {
            std::vector<LeafRef> leaves;
            std::vector<TokenId> path;
            collect_leaves(root_, path, leaves);
            std::sort(leaves.begin(), leaves.end(), [](const LeafRef& a, const LeafRef& b) {
                if (a.path.size() != b.path.size()) return a.path.size() > b.path.size();
                if (a.total != b.total) return a.total < b.total;
                return a.path < b.path;
            });
            for (const LeafRef& leaf : leaves) {
                if (node_count_ <= cfg_.capacity) return;
                erase_path(leaf.path);
                ++events_.forced_leaf_removals;
            }
        }
    }

    void collect_candidates(const Node& node, int parent, int depth, std::vector<Candidate>& out) const {
        for (const auto& [token, child] : node.children) {
            const double eff = child->output_freq + cfg_.prompt_boost * child->prompt_freq;
            out.push_back(Candidate{child.get(), parent, depth, eff});
            collect_candidates(*child, static_cast<int>(out.size()) - 1, depth + 1, out);
        }
    }

    static void append_snapshot_nodes(const Node& node, int depth, nlohmann::json& out) {
        for (const auto& [token, child] : node.children) {
            out.push_back({{"token", child->token},
                           {"depth", depth + 1},
                           {"prompt_freq", child->prompt_freq},
                           {"output_freq", child->output_freq}});
            append_snapshot_nodes(*child, depth + 1, out);
        }
    }

    TrieConfig cfg_;
    TrieEvents events_;
    Node root_;
    std::size_t node_count_ = 0;
};

}  // namespace lookahead

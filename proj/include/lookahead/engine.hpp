#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lookahead/draft.hpp"
#include "lookahead/model.hpp"
#include "lookahead/stats.hpp"
#include "lookahead/trie_cache.hpp"
#include "lookahead/types.hpp"
#include "lookahead/verifier.hpp"

namespace lookahead {

// Knobs for one generation run. The defaults mirror the cache defaults so a
// default-constructed config and a default-constructed TrieCache agree.
struct GenConfig {
    int decoding_length = 16;    // draft token budget per step
    int branch_length = 8;       // cache branch depth, also the insert window
    int min_match_tokens = 0;    // 0 resolves to half the decoding length
    int capacity_multiplier = 16;
    int max_prefix_len = 4;
    int max_new_tokens = 64;
    std::optional<TokenId> eos_token;
    DecodeMode mode = DecodeMode::Greedy;
    DraftMode draft_mode = DraftMode::Hierarchical;
    bool insert_prompt = true;
    bool insert_output = true;
    bool prune_enabled = true;
    bool eliminate_enabled = true;
    std::uint64_t seed = 0;

    int resolved_min_match() const {
        return min_match_tokens > 0 ? min_match_tokens
                                    : std::max(1, decoding_length / 2);
    }

    void validate() const {
        if (decoding_length < 1 || branch_length < 1 || max_new_tokens < 1 ||
            capacity_multiplier < 1 || max_prefix_len < 1 || min_match_tokens < 0) {
            throw std::invalid_argument("generation config: counts must be positive");
        }
    }

    // A disabled pruner is modeled as a budget no realistic run reaches, so
    // the cache keeps enforcing its own capacity invariant unconditionally.
    static constexpr std::size_t kUnboundedCapacity = std::size_t{1} << 62;

    TrieConfig trie_config() const {
        TrieConfig trie;
        trie.capacity = prune_enabled
                            ? static_cast<std::size_t>(capacity_multiplier) *
                                  static_cast<std::size_t>(decoding_length)
                            : kUnboundedCapacity;
        trie.branch_length = branch_length;
        trie.min_match_tokens = resolved_min_match();
        trie.max_prefix_len = max_prefix_len;
        return trie;
    }
};

inline TrieCache make_trie(const GenConfig& cfg) {
    cfg.validate();
    return TrieCache(cfg.trie_config());
}

// Seeds a cache from reference continuations before any decoding happens.
inline void warmup(TrieCache& trie, std::span<const CorpusEntry> corpus) {
    for (const CorpusEntry& entry : corpus) {
        if (!entry.reference.empty()) {
            trie.insert_sequence(entry.reference, BranchSource::Output);
        }
    }
}

namespace detail {

inline std::chrono::steady_clock::time_point now() {
    return std::chrono::steady_clock::now();
}

inline std::int64_t micros_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::microseconds>(now() - start)
        .count();
}

// A committed token followed by one linear continuation, as a draft input.
// Used for prefill (whole prompt as the chain) and for plain decode steps.
inline DraftInput chain_input(std::span<const TokenId> tokens,
                              std::size_t context_len) {
    std::vector<TokenList> branch;
    if (tokens.size() > 1) {
        branch.emplace_back(tokens.begin() + 1, tokens.end());
    }
    return flatten_parallel(branch, tokens.front(), context_len);
}

// Root-to-leaf paths of a draft tree, in preorder leaf order.
inline std::vector<TokenList> tree_branches(const DraftTree& tree) {
    std::vector<TokenList> paths(tree.nodes.size());
    std::vector<char> has_child(tree.nodes.size(), 0);
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const DraftNode& node = tree.nodes[i];
        if (node.parent >= 0) {
            paths[i] = paths[static_cast<std::size_t>(node.parent)];
            has_child[static_cast<std::size_t>(node.parent)] = 1;
        }
        paths[i].push_back(node.token);
    }
    std::vector<TokenList> branches;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        if (!has_child[i]) {
            branches.push_back(std::move(paths[i]));
        }
    }
    return branches;
}

// Branch selection for the non-tree draft modes. Single keeps the best
// branch, clipped to the budget. Parallel packs whole branches in order
// until one no longer fits; only a lone oversized first branch is clipped.
inline std::vector<TokenList> shape_branches(const DraftTree& tree,
                                             std::size_t budget,
                                             DraftMode mode) {
    std::vector<TokenList> branches = tree_branches(tree);
    std::vector<TokenList> packed;
    std::size_t used = 0;
    for (TokenList& branch : branches) {
        if (used + branch.size() > budget) {
            if (packed.empty()) {
                branch.resize(budget);
                packed.push_back(std::move(branch));
            }
            break;
        }
        used += branch.size();
        packed.push_back(std::move(branch));
        if (mode == DraftMode::Single) {
            break;
        }
    }
    return packed;
}

}  // namespace detail

// Reference decoder: one token per forward pass, no cache involved. The
// speculative path below must reproduce this output bit for bit.
template <PathPredictor M>
RunResult generate_baseline(const M& model, std::span<const TokenId> prompt,
                            const GenConfig& cfg) {
    cfg.validate();
    if (prompt.empty()) {
        throw std::invalid_argument("generate: prompt must not be empty");
    }
    const bool want_dist = cfg.mode == DecodeMode::Sample;

    ModelState state;
    TokenList out;
    std::vector<StepStats> steps;
    while (true) {
        StepStats st;
        const DraftInput input =
            out.empty() ? detail::chain_input(prompt, 0)
                        : detail::chain_input(std::span(&out.back(), 1),
                                              state.size());
        const auto t0 = detail::now();
        const StepOutput step_out = forward(model, state, input, want_dist);
        st.forward_micros = detail::micros_since(t0);

        const std::size_t last = input.size() - 1;
        const TokenId next =
            want_dist ? sample_next(step_out.dists[last],
                                    mix_key(cfg.seed, out.size()))
                      : step_out.greedy[last];
        out.push_back(next);
        steps.push_back(st);
        if ((cfg.eos_token && next == *cfg.eos_token) ||
            static_cast<int>(out.size()) >= cfg.max_new_tokens) {
            break;
        }
    }
    return RunResult{std::move(out), RunStats::from_steps(std::move(steps))};
}

// One in-flight speculative decode. Kept as an object so batched generation
// can interleave steps from several sequences against a shared cache.
//
// Step accounting: the prefill pass counts as the first step and commits one
// token, so after m steps the committed context holds prompt + m deltas and
// the model state holds everything except the newest token. Each decode step
// re-feeds that token as the root of the next draft.
template <PathPredictor M>
class LookaheadSession {
public:
    LookaheadSession(const M& model, TrieCache& trie, TokenList prompt,
                     const GenConfig& cfg)
        : model_(model), trie_(trie), prompt_(std::move(prompt)), cfg_(cfg) {
        cfg_.validate();
        if (prompt_.empty()) {
            throw std::invalid_argument("generate: prompt must not be empty");
        }
        want_dist_ = cfg_.mode == DecodeMode::Sample;
        context_ = prompt_;
        if (cfg_.insert_prompt) {
            const auto t0 = detail::now();
            trie_.insert_sequence(prompt_, BranchSource::Prompt);
            pending_update_micros_ = detail::micros_since(t0);
        }
    }

    bool done() const { return done_; }
    const TokenList& generated() const { return generated_; }

    StepStats step() {
        if (done_) {
            throw std::logic_error("generation session: step after completion");
        }
        StepStats st;
        st.update_micros = pending_update_micros_;  // prompt insertion cost
        pending_update_micros_ = 0;
        if (generated_.empty()) {
            prefill(st);
        } else {
            decode_step(st);
        }
        per_step_.push_back(st);
        return st;
    }

    // Flushes the cache updates that had to wait for the final length (tail
    // windows and prompt elimination) and hands back the run. The session is
    // spent afterwards.
    RunResult finish() {
        if (!done_) {
            throw std::logic_error("generation session: finish before completion");
        }
        if (finished_) {
            throw std::logic_error("generation session: finish called twice");
        }
        finished_ = true;
        const auto t0 = detail::now();
        if (cfg_.insert_output) {
            flush_output_windows(true);
        }
        if (cfg_.eliminate_enabled) {
            trie_.eliminate_prompt(prompt_);
        }
        per_step_.back().update_micros += detail::micros_since(t0);
        return RunResult{std::move(generated_),
                         RunStats::from_steps(std::move(per_step_))};
    }

private:
    void prefill(StepStats& st) {
        const DraftInput input = detail::chain_input(prompt_, 0);
        const auto t0 = detail::now();
        const StepOutput step_out = forward(model_, state_, input, want_dist_);
        st.forward_micros = detail::micros_since(t0);
        commit_token(pick(step_out, input.size() - 1, 0));
        st.draft_node_count = 0;
        st.edl = 1;
        check_done();
        insert_settled_windows(st);
    }

    void decode_step(StepStats& st) {
        auto t0 = detail::now();
        const DraftInput input = build_step_input();
        st.retrieve_micros = detail::micros_since(t0);
        st.draft_node_count = static_cast<int>(input.size()) - 1;

        t0 = detail::now();
        const StepOutput step_out = forward(model_, state_, input, want_dist_);
        const AcceptResult acc = verify_accept(input, step_out, cfg_.mode,
                                               generated_.size(), cfg_.seed);

        // Clip the accepted run at the generation boundary: nothing past
        // max_new_tokens, nothing past the first end-of-sequence token.
        int take = acc.edl;
        take = std::min(take,
                        cfg_.max_new_tokens - static_cast<int>(generated_.size()));
        if (cfg_.eos_token) {
            for (int i = 0; i < take; ++i) {
                if (acc.accepted_tokens[static_cast<std::size_t>(i)] ==
                    *cfg_.eos_token) {
                    take = i + 1;
                    break;
                }
            }
        }
        for (int i = 0; i < take; ++i) {
            commit_token(acc.accepted_tokens[static_cast<std::size_t>(i)]);
        }
        st.edl = take;

        // Keep the staged root plus the matched draft elements behind the
        // committed run. The bonus token was never staged: it becomes the
        // committed root of the next step instead.
        rearrange(state_, std::span(acc.accepted_indices.data(),
                                    static_cast<std::size_t>(take)));
        st.forward_micros = detail::micros_since(t0);

        check_done();
        insert_settled_windows(st);
    }

    DraftInput build_step_input() const {
        const DraftTree tree =
            trie_.retrieve_draft(context_,
                                 static_cast<std::size_t>(cfg_.decoding_length));
        const TokenId committed = generated_.back();
        const std::size_t context_len = state_.size();
        if (cfg_.draft_mode == DraftMode::Hierarchical) {
            return linearize(tree, committed, context_len);
        }
        const std::vector<TokenList> branches = detail::shape_branches(
            tree, static_cast<std::size_t>(cfg_.decoding_length),
            cfg_.draft_mode);
        return flatten_parallel(branches, committed, context_len);
    }

    TokenId pick(const StepOutput& step_out, std::size_t index,
                 std::size_t output_position) const {
        return want_dist_
                   ? sample_next(step_out.dists[index],
                                 mix_key(cfg_.seed, output_position))
                   : step_out.greedy[index];
    }

    void commit_token(TokenId token) {
        generated_.push_back(token);
        context_.push_back(token);
    }

    void check_done() {
        if (static_cast<int>(generated_.size()) >= cfg_.max_new_tokens ||
            (cfg_.eos_token && generated_.back() == *cfg_.eos_token)) {
            done_ = true;
        }
    }

    void insert_settled_windows(StepStats& st) {
        if (!cfg_.insert_output) {
            return;
        }
        const auto t0 = detail::now();
        flush_output_windows(false);
        st.update_micros += detail::micros_since(t0);
    }

    // Streams output windows into the cache as soon as they can no longer
    // change. Mid-run that means full windows whose start a whole-sequence
    // insertion would also enumerate (start <= len - 2 guards the unknown
    // final length); the final flush adds the remaining shorter tails. The
    // cumulative effect equals one insert_sequence over the finished output.
    void flush_output_windows(bool final_flush) {
        const std::size_t window = static_cast<std::size_t>(cfg_.branch_length);
        const std::size_t len = generated_.size();
        const std::span<const TokenId> gen(generated_);
        if (!final_flush) {
            while (next_window_start_ + window <= len &&
                   next_window_start_ + 2 <= len) {
                trie_.insert_branch(gen.subspan(next_window_start_, window),
                                    BranchSource::Output);
                ++next_window_start_;
            }
            return;
        }
        const std::size_t starts = std::max<std::size_t>(len - 1, 1);
        for (; next_window_start_ < starts; ++next_window_start_) {
            trie_.insert_branch(
                gen.subspan(next_window_start_,
                            std::min(window, len - next_window_start_)),
                BranchSource::Output);
        }
    }

    const M& model_;
    TrieCache& trie_;
    TokenList prompt_;
    GenConfig cfg_;
    bool want_dist_ = false;

    ModelState state_;
    TokenList context_;    // prompt followed by everything generated
    TokenList generated_;
    std::vector<StepStats> per_step_;
    std::size_t next_window_start_ = 0;
    std::int64_t pending_update_micros_ = 0;
    bool done_ = false;
    bool finished_ = false;
};

template <PathPredictor M>
RunResult generate_lookahead(const M& model, TrieCache& trie,
                             std::span<const TokenId> prompt,
                             const GenConfig& cfg) {
    LookaheadSession<M> session(model, trie,
                                TokenList(prompt.begin(), prompt.end()), cfg);
    while (!session.done()) {
        session.step();
    }
    return session.finish();
}

// Round-robin batched decoding against one shared cache. Prompts are
// inserted in index order up front; each loop pass advances every live
// sequence once, and a sequence flushes its deferred cache updates at the
// moment it completes, not at the end of the batch.
template <PathPredictor M>
std::vector<RunResult> generate_batch(const M& model, TrieCache& trie,
                                      const std::vector<TokenList>& prompts,
                                      const GenConfig& cfg) {
    if (prompts.empty()) {
        throw std::invalid_argument("generate: batch must not be empty");
    }
    std::vector<std::unique_ptr<LookaheadSession<M>>> sessions;
    sessions.reserve(prompts.size());
    for (const TokenList& prompt : prompts) {
        sessions.push_back(
            std::make_unique<LookaheadSession<M>>(model, trie, prompt, cfg));
    }

    std::vector<RunResult> results(prompts.size());
    std::vector<std::uint8_t> finished(prompts.size(), 0);
    bool live = true;
    while (live) {
        live = false;
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            if (finished[i]) {
                continue;
            }
            sessions[i]->step();
            if (sessions[i]->done()) {
                results[i] = sessions[i]->finish();
                finished[i] = 1;
            } else {
                live = true;
            }
        }
    }
    return results;
}

}  // namespace lookahead

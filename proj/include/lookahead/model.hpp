#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lookahead/draft.hpp"
#include "lookahead/types.hpp"

namespace lookahead {

// Next-token prediction after a token path. dist is filled only when the
// caller asked for it; greedy is always the argmax with ties broken toward
// the smaller token id (the baseline decoder and the verifier must agree on
// tie-breaking or exact output equality falls apart).
struct Prediction {
    TokenId greedy = 0;
    std::vector<double> dist;
};

// Contract for the toy backends: a pure function from an ancestor token path
// to the next-token prediction. Purity is what makes tree-shaped inputs
// equivalent to autoregressive replay.
template <typename M>
concept PathPredictor = requires(const M& m, std::span<const TokenId> path, bool want_dist) {
    { m.predict(path, want_dist) } -> std::convertible_to<Prediction>;
    { m.vocab_size() } -> std::convertible_to<int>;
};

// Per-element predictions for one step input.
struct StepOutput {
    std::vector<TokenId> greedy;
    std::vector<std::vector<double>> dists;  // empty unless distributions were requested
};

// Committed (token, position) history of one generation sequence, standing
// in for a KV cache. forward() appends everything it was fed; rearrange()
// keeps only an accepted ancestor chain of the latest step, after which the
// state is indistinguishable from one that was only ever fed that chain.
class ModelState {
public:
    const TokenList& tokens() const { return tokens_; }
    const std::vector<int>& positions() const { return positions_; }
    std::size_t size() const { return tokens_.size(); }

    void stage(const DraftInput& input) {
        if (input.size() == 0) throw std::invalid_argument("model state: empty step input");
        if (input.context_len != tokens_.size() ||
            input.positions[0] != static_cast<int>(tokens_.size()))
            throw std::invalid_argument("model state: step input does not continue this sequence");
        last_start_ = tokens_.size();
        last_parent_ = input.parent;
        staged_ = true;
        tokens_.insert(tokens_.end(), input.tokens.begin(), input.tokens.end());
        positions_.insert(positions_.end(), input.positions.begin(), input.positions.end());
    }

    // keep: ascending indices into the latest forward's input, forming an
    // ancestor chain starting at its root (element 0).
    void rearrange(std::span<const int> keep) {
        if (!staged_) throw std::logic_error("model state: rearrange without a preceding forward");
        int prev = -1;
        for (const int index : keep) {
            if (index < 0 || static_cast<std::size_t>(index) >= last_parent_.size())
                throw std::invalid_argument("model state: rearrange index out of range");
            if (last_parent_[static_cast<std::size_t>(index)] != prev)
                throw std::invalid_argument("model state: kept indices are not an ancestor chain");
            prev = index;
        }
        TokenList kept_tokens;
        std::vector<int> kept_positions;
        kept_tokens.reserve(keep.size());
        kept_positions.reserve(keep.size());
        for (const int index : keep) {
            kept_tokens.push_back(tokens_[last_start_ + static_cast<std::size_t>(index)]);
            kept_positions.push_back(static_cast<int>(last_start_) + static_cast<int>(kept_tokens.size()) - 1);
        }
        tokens_.resize(last_start_);
        positions_.resize(last_start_);
        tokens_.insert(tokens_.end(), kept_tokens.begin(), kept_tokens.end());
        positions_.insert(positions_.end(), kept_positions.begin(), kept_positions.end());
        staged_ = false;
        last_parent_.clear();
    }

private:
    TokenList tokens_;
    std::vector<int> positions_;
    std::size_t last_start_ = 0;
    std::vector<int> last_parent_;
    bool staged_ = false;
};

// Runs the model over one step input. The prediction for element i is
// exactly the autoregressive prediction after the committed tokens followed
// by i's ancestor path inside the input; the mask never needs consulting
// here because the path walk realizes the same visibility set.
template <PathPredictor M>
StepOutput forward(const M& model, ModelState& state, const DraftInput& input, bool want_dist) {
    const std::size_t n = input.size();
    if (n == 0) throw std::invalid_argument("forward: empty step input");
    for (std::size_t i = 0; i < n; ++i) {
        const int parent = input.parent[i];
        if ((i == 0 && parent != -1) || (i > 0 && (parent < 0 || parent >= static_cast<int>(i))))
            throw std::invalid_argument("forward: malformed parent structure");
    }

    std::vector<TokenId> path = state.tokens();
    const std::size_t base = path.size();
    std::vector<TokenId> chain;

    StepOutput out;
    out.greedy.resize(n);
    if (want_dist) out.dists.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        chain.clear();
        for (int j = static_cast<int>(i); j >= 0; j = input.parent[static_cast<std::size_t>(j)])
            chain.push_back(input.tokens[static_cast<std::size_t>(j)]);
        path.resize(base);
        path.insert(path.end(), chain.rbegin(), chain.rend());

        Prediction p = model.predict(path, want_dist);
        out.greedy[i] = p.greedy;
        if (want_dist) {
            if (p.dist.empty())
                throw std::logic_error("forward: model returned no distribution in sample mode");
            out.dists[i] = std::move(p.dist);
        }
    }
    state.stage(input);
    return out;
}

inline void rearrange(ModelState& state, std::span<const int> keep) { state.rearrange(keep); }

// Deterministic categorical draw: the key (derived from seed and absolute
// output position) fully determines the result, so any two decoders that
// agree on positions consume identical randomness.
inline TokenId sample_next(std::span<const double> dist, std::uint64_t rng_key) {
    if (dist.empty()) throw std::invalid_argument("sample_next: empty distribution");
    double sum = 0.0;
    for (const double p : dist) {
        if (!(p >= 0.0)) throw std::invalid_argument("sample_next: negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("sample_next: probabilities do not sum to 1");

    const double u = to_unit_double(splitmix64(rng_key));
    double acc = 0.0;
    TokenId last_positive = -1;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > 0.0) last_positive = static_cast<TokenId>(i);
        acc += dist[i];
        if (u < acc) return static_cast<TokenId>(i);
    }
    return last_positive;  // u landed in the rounding slack past the last bucket
}

// Pseudorandom but deterministic toy LM: the next token is a hash of the
// last `window` path tokens. With eos_modulus E > 0, paths whose hash is
// divisible by E predict eos_token instead, giving runs a natural end.
class HashModel {
public:
    HashModel(int window, int vocab, std::uint64_t seed = 0x5eed,
              std::optional<TokenId> eos_token = std::nullopt, std::uint64_t eos_modulus = 0)
        : window_(window), vocab_(vocab), seed_(seed), eos_(eos_token), eos_modulus_(eos_modulus) {
        if (window_ < 1) throw std::invalid_argument("hash model: window must be positive");
        if (vocab_ < 2) throw std::invalid_argument("hash model: vocab must be at least 2");
    }

    int vocab_size() const { return vocab_; }

    Prediction predict(std::span<const TokenId> path, bool want_dist) const {
        std::uint64_t acc = splitmix64(seed_);
        const std::size_t take = std::min(path.size(), static_cast<std::size_t>(window_));
        for (std::size_t i = path.size() - take; i < path.size(); ++i)
            acc = splitmix64(acc ^ static_cast<std::uint64_t>(path[i] + 1));

        Prediction p;
        const std::uint64_t v = static_cast<std::uint64_t>(vocab_);
        if (eos_ && eos_modulus_ > 0 && acc % eos_modulus_ == 0) {
            p.greedy = *eos_;
            if (want_dist) {
                p.dist.assign(static_cast<std::size_t>(vocab_), 0.0);
                p.dist[static_cast<std::size_t>(*eos_)] = 1.0;
            }
            return p;
        }
        p.greedy = static_cast<TokenId>(acc % v);
        if (want_dist) {
            // spread mass over three hash-derived candidates so sample mode
            // genuinely diverges from greedy once in a while
            p.dist.assign(static_cast<std::size_t>(vocab_), 0.0);
            p.dist[static_cast<std::size_t>(p.greedy)] += 0.6;
            p.dist[static_cast<std::size_t>((acc >> 17) % v)] += 0.25;
            p.dist[static_cast<std::size_t>((acc >> 31) % v)] += 0.15;
        }
        return p;
    }

private:
    int window_;
    int vocab_;
    std::uint64_t seed_;
    std::optional<TokenId> eos_;
    std::uint64_t eos_modulus_;
};

// Backoff maximum-likelihood n-gram model. Prediction uses the longest
// trained context ending the path; an entirely untrained model is uniform.
class NgramModel {
public:
    NgramModel(int order, int vocab) : order_(order), vocab_(vocab), tables_(static_cast<std::size_t>(order)) {
        if (order_ < 1) throw std::invalid_argument("ngram model: order must be positive");
        if (vocab_ < 2) throw std::invalid_argument("ngram model: vocab must be at least 2");
    }

    int vocab_size() const { return vocab_; }

    void train(std::span<const TokenId> text) {
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] < 0 || text[i] >= vocab_)
                throw std::invalid_argument("ngram model: training token out of vocabulary");
            for (int k = 0; k < order_; ++k) {
                if (static_cast<std::size_t>(k) > i) break;
                const TokenList context(text.begin() + static_cast<std::ptrdiff_t>(i - static_cast<std::size_t>(k)),
                                        text.begin() + static_cast<std::ptrdiff_t>(i));
                tables_[static_cast<std::size_t>(k)][context][text[i]] += 1.0;
            }
        }
    }

    Prediction predict(std::span<const TokenId> path, bool want_dist) const {
        for (int k = std::min<int>(order_ - 1, static_cast<int>(path.size())); k >= 0; --k) {
            const TokenList context(path.end() - k, path.end());
            const auto& table = tables_[static_cast<std::size_t>(k)];
            const auto it = table.find(context);
            if (it == table.end()) continue;
            return from_counts(it->second, want_dist);
        }
        // untrained: uniform over the vocabulary
        Prediction p;
        p.greedy = 0;
        if (want_dist) p.dist.assign(static_cast<std::size_t>(vocab_), 1.0 / vocab_);
        return p;
    }

private:
    Prediction from_counts(const std::map<TokenId, double>& counts, bool want_dist) const {
        Prediction p;
        double best = -1.0;
        double total = 0.0;
        for (const auto& [token, count] : counts) {
            total += count;
            if (count > best) {  // map order makes ties land on the smallest id
                best = count;
                p.greedy = token;
            }
        }
        if (want_dist) {
            p.dist.assign(static_cast<std::size_t>(vocab_), 0.0);
            for (const auto& [token, count] : counts)
                p.dist[static_cast<std::size_t>(token)] = count / total;
        }
        return p;
    }

    int order_;
    int vocab_;
    std::vector<std::map<TokenList, std::map<TokenId, double>>> tables_;
};

// Explicit (path suffix -> next token) lookup for worked examples; the
// longest matching suffix wins and unmatched paths fall back to a default.
class ScriptedModel {
public:
    ScriptedModel(int vocab, TokenId default_token) : vocab_(vocab), default_(default_token) {
        if (vocab_ < 2) throw std::invalid_argument("scripted model: vocab must be at least 2");
    }

    void add_rule(TokenList suffix, TokenId next) {
        max_suffix_ = std::max(max_suffix_, suffix.size());
        rules_[std::move(suffix)] = next;
    }

    int vocab_size() const { return vocab_; }

    Prediction predict(std::span<const TokenId> path, bool want_dist) const {
        TokenId next = default_;
        const std::size_t longest = std::min(max_suffix_, path.size());
        for (std::size_t len = longest; len > 0; --len) {
            const TokenList suffix(path.end() - static_cast<std::ptrdiff_t>(len), path.end());
            if (const auto it = rules_.find(suffix); it != rules_.end()) {
                next = it->second;
                break;
            }
        }
        Prediction p;
        p.greedy = next;
        if (want_dist) {
            p.dist.assign(static_cast<std::size_t>(vocab_), 0.0);
            p.dist[static_cast<std::size_t>(next)] = 1.0;
        }
        return p;
    }

private:
    int vocab_;
    TokenId default_;
    std::size_t max_suffix_ = 0;
    std::map<TokenList, TokenId> rules_;
};

}  // namespace lookahead

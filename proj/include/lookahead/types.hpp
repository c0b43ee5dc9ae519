#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lookahead {

using TokenId = std::int32_t;
using TokenList = std::vector<TokenId>;

// Where a branch came from. Retrieval weights prompt-sourced frequency much
// higher than output-sourced frequency, so the trie tracks them separately.
enum class BranchSource { Prompt, Output };

// Draft shapes fed to the model in one step:
//   Single       one linear continuation
//   Parallel     several continuations, common prefixes duplicated
//   Hierarchical several continuations merged on common prefixes (a tree)
enum class DraftMode { Single, Parallel, Hierarchical };

enum class DecodeMode { Greedy, Sample };

inline const char* to_string(DraftMode m) {
    switch (m) {
        case DraftMode::Single: return "single";
        case DraftMode::Parallel: return "parallel";
        case DraftMode::Hierarchical: return "hierarchical";
    }
    return "?";
}

inline const char* to_string(DecodeMode m) {
    return m == DecodeMode::Greedy ? "greedy" : "sample";
}

inline DraftMode parse_draft_mode(std::string_view s) {
    if (s == "single") return DraftMode::Single;
    if (s == "parallel") return DraftMode::Parallel;
    if (s == "hierarchical") return DraftMode::Hierarchical;
    throw std::invalid_argument("unknown draft mode: " + std::string(s));
}

inline DecodeMode parse_decode_mode(std::string_view s) {
    if (s == "greedy") return DecodeMode::Greedy;
    if (s == "sample") return DecodeMode::Sample;
    throw std::invalid_argument("unknown decode mode: " + std::string(s));
}

// One tokenized corpus record: a prompt to decode from and an optional
// reference continuation (used for trie warm-up, never fed to the decoder).
struct CorpusEntry {
    TokenList prompt;
    TokenList reference;
};

// Deterministic 64-bit mixer (splitmix64 finalizer). Every pseudo-random
// choice in the library derives from this, keyed by (seed, position), so a
// given seed yields the same stream no matter how steps are batched.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_key(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Top 53 bits -> [0, 1).
constexpr double to_unit_double(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace lookahead

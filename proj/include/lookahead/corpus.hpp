#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lookahead/types.hpp"

namespace lookahead {

// Unreadable or malformed external files (corpora, snapshots, reports).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Built-in tokenizations. Ids passes token-id arrays through untouched;
// Bytes maps UTF-8 text byte-for-byte onto ids 0..255 with 256 reserved as
// an end-of-sequence marker.
enum class Tokenizer { Ids, Bytes };

constexpr TokenId kByteEos = 256;
constexpr int kByteVocab = 257;

inline const char* to_string(Tokenizer t) {
    return t == Tokenizer::Ids ? "ids" : "bytes";
}

inline Tokenizer parse_tokenizer(const std::string& name) {
    if (name == "ids") return Tokenizer::Ids;
    if (name == "bytes") return Tokenizer::Bytes;
    throw std::invalid_argument("unknown tokenizer: " + name);
}

inline TokenList bytes_to_tokens(const std::string& text) {
    TokenList out;
    out.reserve(text.size());
    for (const char c : text) {
        out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
    }
    return out;
}

// Renders byte-mode tokens back to text, stopping at the first eos marker.
inline std::string tokens_to_bytes(std::span<const TokenId> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (const TokenId t : tokens) {
        if (t == kByteEos) break;
        if (t < 0 || t > 255) {
            throw std::invalid_argument(
                "byte rendering: token id outside byte range");
        }
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

namespace detail {

inline TokenList decode_corpus_field(const nlohmann::json& field,
                                     Tokenizer tokenizer,
                                     std::size_t line_no) {
    const std::string where = " at line " + std::to_string(line_no);
    if (field.is_array()) {
        TokenList out;
        out.reserve(field.size());
        for (const auto& value : field) {
            if (!value.is_number_integer()) {
                throw IoError("corpus: non-integer token id" + where);
            }
            const auto id = value.get<std::int64_t>();
            if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
                throw IoError("corpus: token id out of range" + where);
            }
            out.push_back(static_cast<TokenId>(id));
        }
        return out;
    }
    if (field.is_string()) {
        if (tokenizer != Tokenizer::Bytes) {
            throw IoError("corpus: text fields require the bytes tokenizer" +
                          where);
        }
        return bytes_to_tokens(field.get<std::string>());
    }
    throw IoError("corpus: field must be a string or token-id array" + where);
}

}  // namespace detail

// Reads a JSON Lines corpus: one object per line with a required "prompt"
// and an optional "reference" continuation, each either a token-id array or
// (bytes tokenizer only) a text string. Blank lines are skipped.
inline std::vector<CorpusEntry> load_corpus(const std::string& path,
                                            Tokenizer tokenizer) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("corpus: cannot open " + path);
    }
    std::vector<CorpusEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const nlohmann::json record =
            nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (record.is_discarded() || !record.is_object()) {
            throw IoError("corpus: invalid JSON at line " +
                          std::to_string(line_no));
        }
        if (!record.contains("prompt")) {
            throw IoError("corpus: missing prompt at line " +
                          std::to_string(line_no));
        }
        CorpusEntry entry;
        entry.prompt =
            detail::decode_corpus_field(record["prompt"], tokenizer, line_no);
        if (entry.prompt.empty()) {
            throw IoError("corpus: empty prompt at line " +
                          std::to_string(line_no));
        }
        if (record.contains("reference") && !record["reference"].is_null()) {
            entry.reference = detail::decode_corpus_field(record["reference"],
                                                          tokenizer, line_no);
        }
        entries.push_back(std::move(entry));
    }
    if (entries.empty()) {
        throw IoError("corpus: no records in " + path);
    }
    return entries;
}

}  // namespace lookahead

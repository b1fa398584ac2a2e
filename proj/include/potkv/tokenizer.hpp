#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace potkv {

// Byte-level tokenizer. Token 0 is reserved for BOS; byte b maps to id b + 1.
inline constexpr int kBosId = 0;
inline constexpr int kByteVocabSize = 257;

inline constexpr int byte_token(unsigned char b) { return static_cast<int>(b) + 1; }

inline constexpr int newline_token() { return byte_token('\n'); }

inline std::vector<int> encode_bytes(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(byte_token(c));
    return ids;
}

// BOS-prefixed stream, the form every task feeds to the engine.
inline std::vector<int> encode_stream(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    ids.push_back(kBosId);
    for (unsigned char c : text) ids.push_back(byte_token(c));
    return ids;
}

// Inverse of encode; BOS and out-of-range ids are skipped.
inline std::string decode_bytes(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id >= 1 && id <= 256) out.push_back(static_cast<char>(id - 1));
    }
    return out;
}

}  // namespace potkv

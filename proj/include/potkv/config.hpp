#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "potkv/error.hpp"

namespace potkv {

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int d_model = 32;
    int d_head = 16;        // must equal d_model / n_heads, and be even
    int d_ff = 64;
    int vocab_size = 257;
    float rope_base = 10000.0f;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (n_layers < 1) throw ConfigError("model.n_layers: must be >= 1");
        if (n_heads < 1) throw ConfigError("model.n_heads: must be >= 1");
        if (d_model < 1 || d_ff < 1) throw ConfigError("model.d_model/d_ff: must be >= 1");
        if (d_model % n_heads != 0)
            throw ConfigError("model.d_model: must be divisible by n_heads (got " +
                              std::to_string(d_model) + " / " + std::to_string(n_heads) + ")");
        if (d_head != d_model / n_heads)
            throw ConfigError("model.d_head: must equal d_model / n_heads");
        if (d_head % 2 != 0)
            throw ConfigError("model.d_head: must be even (rotary pairs dimensions)");
        if (vocab_size < 2) throw ConfigError("model.vocab_size: must be >= 2");
        if (!(rope_base > 0.0f)) throw ConfigError("model.rope_base: must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

enum class CapPreset { P, U, Q, G, G1, G2, Custom };

inline std::string cap_preset_name(CapPreset p) {
    switch (p) {
        case CapPreset::P: return "P";
        case CapPreset::U: return "U";
        case CapPreset::Q: return "Q";
        case CapPreset::G: return "G";
        case CapPreset::G1: return "G1";
        case CapPreset::G2: return "G2";
        case CapPreset::Custom: return "custom";
    }
    return "?";
}

inline CapPreset cap_preset_from_name(const std::string& s) {
    if (s == "P") return CapPreset::P;
    if (s == "U") return CapPreset::U;
    if (s == "Q") return CapPreset::Q;
    if (s == "G") return CapPreset::G;
    if (s == "G1") return CapPreset::G1;
    if (s == "G2") return CapPreset::G2;
    if (s == "custom") return CapPreset::Custom;
    throw ConfigError("pot.cap_preset: unknown preset '" + s + "'");
}

// All distillation hyper-parameters. capacity is the hard per-head entry
// bound; cap_len slots are permanently reserved for the catalyst prompt.
struct PotConfig {
    int capacity = 64;        // |M|
    int compressed_size = 16; // |C|
    int cap_len = 4;          // |P|
    double nuc_ratio = 0.5;   // alpha
    int chunk_size = 0;       // 0 -> default intake window (capacity - cap_len)
    CapPreset cap_preset = CapPreset::G;
    std::string cap_payload;  // question text for Q, literal text for custom

    int nuc_slots() const {   // T = round(alpha * |C|)
        return static_cast<int>(std::llround(nuc_ratio * compressed_size));
    }

    int intake_window() const { return capacity - cap_len; }

    int effective_chunk() const { return chunk_size > 0 ? chunk_size : intake_window(); }

    void validate() const {
        if (capacity < 2) throw ConfigError("pot.capacity: must be >= 2");
        if (cap_len < 1) throw ConfigError("pot.cap_len: must be >= 1");
        if (compressed_size < 1) throw ConfigError("pot.compressed_size: must be >= 1");
        if (compressed_size >= capacity - cap_len)
            throw ConfigError("pot.compressed_size: must satisfy compressed_size < capacity - cap_len (got " +
                              std::to_string(compressed_size) + " >= " + std::to_string(capacity) + " - " +
                              std::to_string(cap_len) + ")");
        if (nuc_ratio < 0.0 || nuc_ratio > 1.0)
            throw ConfigError("pot.nuc_ratio: must lie in [0, 1]");
        const int t = nuc_slots();
        if (t < 0 || t > compressed_size)
            throw ConfigError("pot.nuc_slots: must lie in [0, compressed_size]");
        if (chunk_size < 0) throw ConfigError("pot.chunk_size: must be >= 0");
    }

    bool operator==(const PotConfig&) const = default;
};

}  // namespace potkv

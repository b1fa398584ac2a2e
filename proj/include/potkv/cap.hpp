#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "potkv/config.hpp"
#include "potkv/error.hpp"
#include "potkv/tokenizer.hpp"

namespace potkv {

// Volatile scoring prompt, encoded to exactly cap_len ids.
struct CatalystPrompt {
    CapPreset preset = CapPreset::G;
    std::vector<int> token_ids;
    std::string question_text;
};

inline std::string cap_template_text(CapPreset preset, std::string_view question,
                                     std::string_view custom_text) {
    switch (preset) {
        case CapPreset::P:
            return "\n";  // repeated up to length by padding
        case CapPreset::U:
            return "The sky is blue. The sun is yellow. Here we go. There and back again.";
        case CapPreset::Q:
            return "Considering the following question, summarize the critical points "
                   "highlighted in this section. Question: " +
                   std::string(question);
        case CapPreset::G:
            return "Summarize the critical points highlighted in this section.";
        case CapPreset::G1:
            return "Summarize this section.";
        case CapPreset::G2:
            return "Highlight the critical points from this section.";
        case CapPreset::Custom:
            return std::string(custom_text);
    }
    throw ConfigError("cap: unknown preset");
}

// Encodes the preset's template to exactly cap_len ids: right-truncate when
// long, left-pad with the newline token when short.
inline CatalystPrompt build_cap(CapPreset preset, int cap_len,
                                std::optional<std::string_view> question = std::nullopt,
                                std::string_view custom_text = {}) {
    if (cap_len < 1) throw ConfigError("cap: cap_len must be >= 1");
    if (preset == CapPreset::Q && (!question || question->empty()))
        throw ArgumentError("cap: preset Q requires question_text");
    if (preset == CapPreset::Custom && custom_text.empty())
        throw ArgumentError("cap: custom preset requires text");

    CatalystPrompt cap;
    cap.preset = preset;
    if (question) cap.question_text = std::string(*question);

    std::vector<int> ids = encode_bytes(cap_template_text(preset, cap.question_text, custom_text));
    if (static_cast<int>(ids.size()) > cap_len) {
        ids.resize(static_cast<std::size_t>(cap_len));
    } else if (static_cast<int>(ids.size()) < cap_len) {
        std::vector<int> padded(static_cast<std::size_t>(cap_len) - ids.size(), newline_token());
        padded.insert(padded.end(), ids.begin(), ids.end());
        ids = std::move(padded);
    }
    cap.token_ids = std::move(ids);
    return cap;
}

inline CatalystPrompt build_cap_from_config(const PotConfig& config) {
    if (config.cap_preset == CapPreset::Q)
        return build_cap(CapPreset::Q, config.cap_len, config.cap_payload);
    if (config.cap_preset == CapPreset::Custom)
        return build_cap(CapPreset::Custom, config.cap_len, std::nullopt, config.cap_payload);
    return build_cap(config.cap_preset, config.cap_len);
}

}  // namespace potkv

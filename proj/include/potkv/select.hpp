#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "potkv/error.hpp"

namespace potkv {

// Indices 0..n-1 ranked by (score desc, index asc); first k returned.
inline std::vector<int> top_k_by_score(std::span<const float> scores, int k) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

// Two-step retention rule. Step 1 picks the global top-T columns by the
// shared novelty score; step 2 force-includes those picks in every head and
// fills the remaining |C|-T slots per head by the head's attention score.
// Ties always break toward the lower index. Returns ascending index sets,
// one per head; nullopt when there are no more candidates than slots.
inline std::optional<std::vector<std::vector<int>>> select_tokens(
    const std::vector<std::vector<float>>& cap_scores, const std::vector<float>& nuc_scores,
    int compressed_size, int nuc_slots) {
    if (cap_scores.empty()) throw SelectionError("select_tokens: no head score vectors");
    const int n = static_cast<int>(nuc_scores.size());
    for (const auto& head : cap_scores) {
        if (static_cast<int>(head.size()) != n)
            throw SelectionError("select_tokens: cap/nuc score vectors must cover the same candidates");
    }
    if (compressed_size < 1) throw SelectionError("select_tokens: compressed_size must be >= 1");
    if (nuc_slots < 0 || nuc_slots > compressed_size)
        throw SelectionError("select_tokens: nuc_slots outside [0, compressed_size]");
    if (n <= compressed_size) return std::nullopt;  // nothing to evict

    const std::vector<int> nuc_picks = top_k_by_score(nuc_scores, nuc_slots);
    std::vector<char> is_pick(static_cast<std::size_t>(n), 0);
    for (int i : nuc_picks) is_pick[static_cast<std::size_t>(i)] = 1;

    std::vector<std::vector<int>> retained;
    retained.reserve(cap_scores.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (const auto& head : cap_scores) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (head[static_cast<std::size_t>(a)] != head[static_cast<std::size_t>(b)])
                return head[static_cast<std::size_t>(a)] > head[static_cast<std::size_t>(b)];
            return a < b;
        });
        std::vector<int> keep(nuc_picks);
        for (int idx : order) {
            if (static_cast<int>(keep.size()) == compressed_size) break;
            if (!is_pick[static_cast<std::size_t>(idx)]) keep.push_back(idx);
        }
        std::sort(keep.begin(), keep.end());
        retained.push_back(std::move(keep));
    }
    return retained;
}

}  // namespace potkv

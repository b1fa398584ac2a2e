#pragma once

#include <span>
#include <vector>

#include "potkv/cap.hpp"
#include "potkv/error.hpp"
#include "potkv/forward.hpp"
#include "potkv/linalg.hpp"
#include "potkv/mempot.hpp"
#include "potkv/model.hpp"

namespace potkv {

// Scores for one distillation cycle. cap_scores is indexed [layer*heads + h]
// over pot columns; nuc_scores has one shared value per column.
struct ScoreSheet {
    std::vector<std::vector<float>> cap_scores;
    std::vector<float> nuc_scores;
};

// Per-token cross-entropy: row t of `logits` predicts target_ids[t].
// This is the novelty score n_t = -log P(target | prefix).
inline std::vector<float> score_nuc(const Matrix& logits, std::span<const int> target_ids) {
    if (static_cast<int>(target_ids.size()) != logits.rows)
        throw ArgumentError("score_nuc: one logit row per target required");
    std::vector<float> out(target_ids.size());
    for (int t = 0; t < logits.rows; ++t) {
        const int target = target_ids[static_cast<std::size_t>(t)];
        if (target < 0 || target >= logits.cols) throw ArgumentError("score_nuc: target outside vocab");
        const std::span<const float> row(logits.row(t), static_cast<std::size_t>(logits.cols));
        const double lse = log_sum_exp(row);
        out[static_cast<std::size_t>(t)] = static_cast<float>(lse - static_cast<double>(row[static_cast<std::size_t>(target)]));
    }
    return out;
}

// Runs the catalyst prompt at positions capacity-|P| .. capacity-1 against a
// pot in trigger state, collects the per-head attention column sums over the
// existing columns, then removes the catalyst K/V again. Pot content is
// unchanged on return.
inline std::vector<std::vector<float>> score_cap(const Model& model, MemoryPot& pot,
                                                 const CatalystPrompt& cap) {
    const PotConfig& pc = pot.config();
    if (!pot.at_trigger())
        throw StateError("score_cap: pot must be at trigger state (occupancy " +
                         std::to_string(pot.occupancy()) + ", intake window " +
                         std::to_string(pc.intake_window()) + ")");
    if (static_cast<int>(cap.token_ids.size()) != pc.cap_len)
        throw ArgumentError("score_cap: catalyst prompt length != cap_len");

    const int before = pot.occupancy();
    std::vector<int> positions(static_cast<std::size_t>(pc.cap_len));
    std::vector<long long> origins(static_cast<std::size_t>(pc.cap_len));
    for (int i = 0; i < pc.cap_len; ++i) {
        positions[static_cast<std::size_t>(i)] = pc.capacity - pc.cap_len + i;
        origins[static_cast<std::size_t>(i)] = -1;  // volatile rows, never retained
    }
    ChunkOutput out = forward_chunk(model, pot, cap.token_ids, positions, origins,
                                    /*cap_row_count=*/pc.cap_len);
    pot.truncate_to(before);

    std::vector<std::vector<float>> flat;
    flat.reserve(static_cast<std::size_t>(pot.head_sets()));
    for (auto& layer : out.cap_attn_sums)
        for (auto& head : layer) flat.push_back(std::move(head));
    return flat;
}

}  // namespace potkv

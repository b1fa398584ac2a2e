#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "potkv/error.hpp"
#include "potkv/linalg.hpp"
#include "potkv/mempot.hpp"
#include "potkv/model.hpp"

namespace potkv {

// Optional per-chunk attention capture for the score-based eviction
// policies and the global-scoring analysis.
struct AttnCapture {
    // [layer][head][column]: attention probability column sums over every
    // chunk row, columns spanning prior cache entries then chunk entries.
    std::vector<std::vector<std::vector<float>>> column_sums;
    // [layer][head][column]: the last chunk row's attention distribution.
    std::vector<std::vector<std::vector<float>>> last_row;
};

struct ChunkOutput {
    Matrix logits;  // chunk_len x vocab
    // [layer][head][column]: attention column sums from the trailing
    // cap_row_count rows, catalyst columns excluded. Empty when
    // cap_row_count == 0.
    std::vector<std::vector<std::vector<float>>> cap_attn_sums;
};

// Causal attention over (pot entries ++ chunk). Pot keys are stored
// pre-rotation and rotated here at their current slots; chunk queries and
// keys rotate at `positions`. New K/V are appended pre-rotation. When
// cap_row_count > 0 the trailing rows are treated as catalyst rows and
// their attention mass onto non-catalyst columns is summed per head.
inline ChunkOutput forward_chunk(const Model& model, MemoryPot& pot, std::span<const int> token_ids,
                                 std::span<const int> positions, std::span<const long long> origins,
                                 int cap_row_count = 0, AttnCapture* capture = nullptr) {
    const ModelConfig& cfg = model.config;
    const int chunk = static_cast<int>(token_ids.size());
    if (chunk == 0) throw ArgumentError("forward_chunk: empty chunk");
    if (positions.size() != token_ids.size() || origins.size() != token_ids.size())
        throw ArgumentError("forward_chunk: token_ids, positions, origins must have equal length");
    if (cap_row_count < 0 || cap_row_count > chunk)
        throw ArgumentError("forward_chunk: cap_row_count outside [0, chunk]");
    pot.check_append(chunk);
    for (int i = 0; i < chunk; ++i) {
        if (i > 0 && positions[i] <= positions[i - 1])
            throw PositionError("forward_chunk: positions must be strictly increasing");
        pot.note_rope_position(positions[i]);  // also rejects positions >= capacity
        if (token_ids[i] < 0 || token_ids[i] >= cfg.vocab_size)
            throw ArgumentError("forward_chunk: token id outside vocab");
    }
    const int n_prior = pot.occupancy();
    if (n_prior > 0) {
        const int last_slot = pot.slots(0, 0).back();
        if (positions[0] <= last_slot)
            throw PositionError("forward_chunk: position overlaps an occupied slot");
    }

    const int dm = cfg.d_model;
    const int dh = cfg.d_head;
    const int nh = cfg.n_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    const int total_cols = n_prior + chunk;
    const int n_cap_cols = chunk - cap_row_count;  // chunk columns that are not catalyst rows

    ChunkOutput out;
    if (cap_row_count > 0) {
        out.cap_attn_sums.assign(static_cast<std::size_t>(cfg.n_layers),
                                 std::vector<std::vector<float>>(
                                     static_cast<std::size_t>(nh),
                                     std::vector<float>(static_cast<std::size_t>(n_prior + n_cap_cols), 0.0f)));
    }
    if (capture) {
        capture->column_sums.assign(static_cast<std::size_t>(cfg.n_layers),
                                    std::vector<std::vector<float>>(
                                        static_cast<std::size_t>(nh),
                                        std::vector<float>(static_cast<std::size_t>(total_cols), 0.0f)));
        capture->last_row = capture->column_sums;
    }

    Matrix x(chunk, dm);
    for (int i = 0; i < chunk; ++i) {
        const float* emb = model.tok_embedding.data.data() + static_cast<std::size_t>(token_ids[i]) * dm;
        std::copy_n(emb, dm, x.row(i));
    }

    Matrix xn(chunk, dm), q(chunk, dm), k_pre(chunk, dm), k_rot(chunk, dm), v(chunk, dm);
    Matrix attn_out(chunk, dm);
    std::vector<float> prior_keys;   // rotated prior keys, n_prior x dh per head
    std::vector<float> scores(static_cast<std::size_t>(total_cols));
    std::vector<float> ffn_hidden(static_cast<std::size_t>(cfg.d_ff));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const Model::Layer& lay = model.layers[static_cast<std::size_t>(l)];

        for (int i = 0; i < chunk; ++i) rmsnorm(x.row(i), lay.attn_norm.data.data(), xn.row(i), dm);
        for (int i = 0; i < chunk; ++i) {
            matvec(lay.wq.data.data(), xn.row(i), q.row(i), dm, dm);
            matvec(lay.wk.data.data(), xn.row(i), k_pre.row(i), dm, dm);
            matvec(lay.wv.data.data(), xn.row(i), v.row(i), dm, dm);
        }
        k_rot.data = k_pre.data;
        for (int i = 0; i < chunk; ++i) {
            for (int h = 0; h < nh; ++h) {
                model.rope.rotate(std::span<float>(q.row(i) + h * dh, static_cast<std::size_t>(dh)),
                                  positions[i]);
                model.rope.rotate(std::span<float>(k_rot.row(i) + h * dh, static_cast<std::size_t>(dh)),
                                  positions[i]);
            }
        }

        for (int h = 0; h < nh; ++h) {
            // Rotate this head's prior keys at their stored slots.
            prior_keys.assign(pot.keys(l, h).begin(), pot.keys(l, h).end());
            const auto& slots = pot.slots(l, h);
            for (int j = 0; j < n_prior; ++j) {
                pot.note_rope_position(slots[static_cast<std::size_t>(j)]);
                model.rope.rotate(
                    std::span<float>(prior_keys.data() + static_cast<std::size_t>(j) * dh, static_cast<std::size_t>(dh)),
                    slots[static_cast<std::size_t>(j)]);
            }
            const float* prior_vals = pot.values(l, h).data();

            for (int i = 0; i < chunk; ++i) {
                const float* qi = q.row(i) + h * dh;
                const int cols = n_prior + i + 1;
                for (int j = 0; j < n_prior; ++j)
                    scores[static_cast<std::size_t>(j)] =
                        dot(qi, prior_keys.data() + static_cast<std::size_t>(j) * dh, dh) * scale;
                for (int j = 0; j <= i; ++j)
                    scores[static_cast<std::size_t>(n_prior + j)] =
                        dot(qi, k_rot.row(j) + h * dh, dh) * scale;
                softmax_inplace(scores.data(), cols);

                float* oi = attn_out.row(i) + h * dh;
                std::fill_n(oi, dh, 0.0f);
                for (int j = 0; j < n_prior; ++j) {
                    const float p = scores[static_cast<std::size_t>(j)];
                    const float* vj = prior_vals + static_cast<std::size_t>(j) * dh;
                    for (int d = 0; d < dh; ++d) oi[d] += p * vj[d];
                }
                for (int j = 0; j <= i; ++j) {
                    const float p = scores[static_cast<std::size_t>(n_prior + j)];
                    const float* vj = v.row(j) + h * dh;
                    for (int d = 0; d < dh; ++d) oi[d] += p * vj[d];
                }

                if (cap_row_count > 0 && i >= chunk - cap_row_count) {
                    auto& sums = out.cap_attn_sums[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
                    const int scored = std::min(cols, n_prior + n_cap_cols);
                    for (int j = 0; j < scored; ++j) sums[static_cast<std::size_t>(j)] += scores[static_cast<std::size_t>(j)];
                }
                if (capture) {
                    auto& colsum = capture->column_sums[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
                    for (int j = 0; j < cols; ++j) colsum[static_cast<std::size_t>(j)] += scores[static_cast<std::size_t>(j)];
                    if (i == chunk - 1) {
                        auto& lr = capture->last_row[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
                        std::copy_n(scores.data(), cols, lr.data());
                    }
                }
            }
        }

        for (int i = 0; i < chunk; ++i) {
            float* xi = x.row(i);
            // residual add of the output projection
            for (int o = 0; o < dm; ++o)
                xi[o] += dot(lay.wo.data.data() + static_cast<std::size_t>(o) * dm, attn_out.row(i), dm);
            rmsnorm(xi, lay.ffn_norm.data.data(), xn.row(i), dm);
            matvec(lay.w_in.data.data(), xn.row(i), ffn_hidden.data(), cfg.d_ff, dm);
            for (int j = 0; j < cfg.d_ff; ++j) ffn_hidden[static_cast<std::size_t>(j)] = gelu(ffn_hidden[static_cast<std::size_t>(j)]);
            for (int o = 0; o < dm; ++o)
                xi[o] += dot(lay.w_out.data.data() + static_cast<std::size_t>(o) * cfg.d_ff, ffn_hidden.data(), cfg.d_ff);
        }

        for (int i = 0; i < chunk; ++i)
            pot.append_token(l, std::span<const float>(k_pre.row(i), static_cast<std::size_t>(dm)),
                             std::span<const float>(v.row(i), static_cast<std::size_t>(dm)), token_ids[i],
                             origins[i], positions[i]);
    }

    out.logits = Matrix(chunk, cfg.vocab_size);
    std::vector<float> xf(static_cast<std::size_t>(dm));
    for (int i = 0; i < chunk; ++i) {
        rmsnorm(x.row(i), model.final_norm.data.data(), xf.data(), dm);
        matvec(model.lm_head.data.data(), xf.data(), out.logits.row(i), cfg.vocab_size, dm);
    }
    return out;
}

}  // namespace potkv

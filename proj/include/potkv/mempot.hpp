#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "potkv/config.hpp"
#include "potkv/error.hpp"

namespace potkv {

// One entry as seen by callers; storage underneath is struct-of-arrays.
struct PotEntryView {
    int token_id;
    long long original_position;
    int slot;
    float nuc_score;
};

// Fixed-capacity per-layer, per-head KV store. Keys are held pre-rotation
// and rotated lazily at each entry's current slot, so a compaction only
// renumbers slots. Occupancy moves in lockstep across heads (appends are
// uniform; retention sets must be equal-sized), while entry contents may
// diverge per head after a distillation.
class MemoryPot {
public:
    MemoryPot(const PotConfig& config, const ModelConfig& model_config)
        : config_(config),
          n_layers_(model_config.n_layers),
          n_heads_(model_config.n_heads),
          d_head_(model_config.d_head) {
        config.validate();
        model_config.validate();
        heads_.resize(static_cast<std::size_t>(n_layers_) * n_heads_);
        for (auto& h : heads_) {
            h.keys.reserve(static_cast<std::size_t>(config_.capacity) * d_head_);
            h.values.reserve(static_cast<std::size_t>(config_.capacity) * d_head_);
        }
    }

    const PotConfig& config() const { return config_; }
    int n_layers() const { return n_layers_; }
    int n_heads() const { return n_heads_; }
    int head_sets() const { return n_layers_ * n_heads_; }
    int d_head() const { return d_head_; }

    int occupancy() const { return occ_; }

    // New context tokens acceptable before a distillation must trigger;
    // the catalyst prompt's slots stay reserved.
    int remaining_intake() const { return config_.intake_window() - occ_; }

    bool at_trigger() const { return remaining_intake() == 0; }

    long long cycle_counter() const { return cycle_counter_; }
    long long rope_recompute_counter() const { return rope_recompute_counter_; }
    int peak_occupancy() const { return peak_occ_; }
    long long max_rope_position() const { return max_rope_position_; }

    // Reserves room for `count` new entries in every head; the transient
    // catalyst rows are bounded by the full capacity, not the intake window.
    void check_append(int count) const {
        if (occ_ + count > config_.capacity)
            throw CapacityError("pot: append of " + std::to_string(count) + " entries would exceed capacity " +
                                std::to_string(config_.capacity) + " (occupancy " + std::to_string(occ_) + ")");
    }

    // Appends one entry to every head of one layer. Keys/values are
    // [n_heads][d_head] for this token; `slot` is its cache position.
    void append_token(int layer, std::span<const float> keys_pre_rope, std::span<const float> values,
                      int token_id, long long original_position, int slot) {
        if (slot < 0 || slot >= config_.capacity)
            throw PositionError("pot: slot " + std::to_string(slot) + " outside [0, capacity)");
        for (int h = 0; h < n_heads_; ++h) {
            HeadStore& hs = head(layer, h);
            hs.keys.insert(hs.keys.end(), keys_pre_rope.begin() + h * d_head_,
                           keys_pre_rope.begin() + (h + 1) * d_head_);
            hs.values.insert(hs.values.end(), values.begin() + h * d_head_,
                             values.begin() + (h + 1) * d_head_);
            hs.token_ids.push_back(token_id);
            hs.origins.push_back(original_position);
            hs.nuc.push_back(0.0f);
            hs.slots.push_back(slot);
        }
        if (layer == n_layers_ - 1) {
            ++occ_;
            peak_occ_ = std::max(peak_occ_, occ_);
        }
    }

    // Writes novelty scores onto the newest `values.size()` columns of every
    // head (scores are computed from the logits, after the forward pass).
    void set_tail_nuc(std::span<const float> values) {
        const int n = static_cast<int>(values.size());
        if (n > occ_) throw ArgumentError("pot: nuc tail longer than occupancy");
        for (float v : values) {
            if (!(v >= 0.0f) || !std::isfinite(v))
                throw ArgumentError("pot: nuc scores must be finite and >= 0");
        }
        for (auto& hs : heads_) {
            for (int i = 0; i < n; ++i) hs.nuc[static_cast<std::size_t>(occ_ - n + i)] = values[static_cast<std::size_t>(i)];
        }
    }

    // Drops every column with index >= n (catalyst rows are removed this way
    // after scoring). Counters are untouched; peak occupancy keeps the record.
    void truncate_to(int n) {
        if (n < 0 || n > occ_) throw ArgumentError("pot: truncate_to out of range");
        for (auto& hs : heads_) {
            hs.keys.resize(static_cast<std::size_t>(n) * d_head_);
            hs.values.resize(static_cast<std::size_t>(n) * d_head_);
            hs.token_ids.resize(static_cast<std::size_t>(n));
            hs.origins.resize(static_cast<std::size_t>(n));
            hs.nuc.resize(static_cast<std::size_t>(n));
            hs.slots.resize(static_cast<std::size_t>(n));
        }
        occ_ = n;
    }

    // Distillation compaction: per head, keep exactly |C| columns (given as
    // ascending in-order indices), renumber slots 0..|C|-1, drop the rest.
    // Survivor novelty scores ride along untouched.
    void compact(const std::vector<std::vector<int>>& retained) {
        if (static_cast<int>(retained.size()) != head_sets())
            throw SelectionError("compact: expected one retained set per (layer, head)");
        for (const auto& set : retained) {
            if (static_cast<int>(set.size()) != config_.compressed_size)
                throw SelectionError("compact: retained set size " + std::to_string(set.size()) +
                                     " != compressed_size " + std::to_string(config_.compressed_size));
        }
        apply_retention(retained);
        ++cycle_counter_;
        ++rope_recompute_counter_;
    }

    // Generic eviction used by the baseline policies: keep the given columns
    // (ascending, unique, equal count across heads), renumber slots. Counts
    // one rotary recompute event whenever any slot actually changes.
    void retain(const std::vector<std::vector<int>>& retained) {
        if (static_cast<int>(retained.size()) != head_sets())
            throw SelectionError("retain: expected one retained set per (layer, head)");
        const std::size_t n = retained.front().size();
        for (const auto& set : retained) {
            if (set.size() != n) throw SelectionError("retain: retained sets must be equal-sized across heads");
        }
        const bool moved = apply_retention(retained);
        if (moved) ++rope_recompute_counter_;
    }

    // Rotation-site instrumentation; every position the engine rotates at
    // flows through here.
    void note_rope_position(long long pos) {
        if (pos < 0 || pos >= config_.capacity)
            throw PositionError("rope position " + std::to_string(pos) + " outside [0, " +
                                std::to_string(config_.capacity) + ")");
        max_rope_position_ = std::max(max_rope_position_, pos);
    }

    std::span<const float> keys(int layer, int h) const { return head(layer, h).keys; }
    std::span<const float> values(int layer, int h) const { return head(layer, h).values; }

    PotEntryView entry(int layer, int h, int i) const {
        const HeadStore& hs = head(layer, h);
        return {hs.token_ids[static_cast<std::size_t>(i)], hs.origins[static_cast<std::size_t>(i)],
                hs.slots[static_cast<std::size_t>(i)], hs.nuc[static_cast<std::size_t>(i)]};
    }

    const std::vector<int>& token_ids(int layer, int h) const { return head(layer, h).token_ids; }
    const std::vector<long long>& origins(int layer, int h) const { return head(layer, h).origins; }
    const std::vector<float>& nuc_scores(int layer, int h) const { return head(layer, h).nuc; }
    const std::vector<int>& slots(int layer, int h) const { return head(layer, h).slots; }

    // Debug snapshot used by the analysis tooling and tests.
    nlohmann::json snapshot() const {
        nlohmann::json layers = nlohmann::json::array();
        for (int l = 0; l < n_layers_; ++l) {
            nlohmann::json heads = nlohmann::json::array();
            for (int h = 0; h < n_heads_; ++h) {
                nlohmann::json entries = nlohmann::json::array();
                for (int i = 0; i < occ_; ++i) {
                    const PotEntryView e = entry(l, h, i);
                    entries.push_back({{"token_id", e.token_id},
                                       {"original_position", e.original_position},
                                       {"slot", e.slot},
                                       {"nuc_score", e.nuc_score}});
                }
                heads.push_back(std::move(entries));
            }
            layers.push_back(std::move(heads));
        }
        return {{"capacity", config_.capacity},
                {"occupancy", occ_},
                {"cycle_counter", cycle_counter_},
                {"rope_recompute_counter", rope_recompute_counter_},
                {"peak_occupancy", peak_occ_},
                {"layers", std::move(layers)}};
    }

private:
    struct HeadStore {
        std::vector<float> keys;    // occ x d_head, pre-rotation
        std::vector<float> values;  // occ x d_head
        std::vector<int> token_ids;
        std::vector<long long> origins;
        std::vector<float> nuc;
        std::vector<int> slots;
    };

    HeadStore& head(int layer, int h) { return heads_[static_cast<std::size_t>(layer) * n_heads_ + h]; }
    const HeadStore& head(int layer, int h) const {
        return heads_[static_cast<std::size_t>(layer) * n_heads_ + h];
    }

    bool apply_retention(const std::vector<std::vector<int>>& retained) {
        const int keep = static_cast<int>(retained.front().size());
        bool moved = false;
        for (int lh = 0; lh < head_sets(); ++lh) {
            const auto& set = retained[static_cast<std::size_t>(lh)];
            int prev = -1;
            for (int idx : set) {
                if (idx <= prev || idx >= occ_)
                    throw SelectionError("retention set must be ascending, unique, and < occupancy");
                prev = idx;
            }
            HeadStore& hs = heads_[static_cast<std::size_t>(lh)];
            for (int j = 0; j < keep; ++j) {
                const int src = set[static_cast<std::size_t>(j)];
                if (src != j) {
                    std::copy_n(hs.keys.begin() + static_cast<std::size_t>(src) * d_head_, d_head_,
                                hs.keys.begin() + static_cast<std::size_t>(j) * d_head_);
                    std::copy_n(hs.values.begin() + static_cast<std::size_t>(src) * d_head_, d_head_,
                                hs.values.begin() + static_cast<std::size_t>(j) * d_head_);
                    hs.token_ids[static_cast<std::size_t>(j)] = hs.token_ids[static_cast<std::size_t>(src)];
                    hs.origins[static_cast<std::size_t>(j)] = hs.origins[static_cast<std::size_t>(src)];
                    hs.nuc[static_cast<std::size_t>(j)] = hs.nuc[static_cast<std::size_t>(src)];
                }
                if (hs.slots[static_cast<std::size_t>(src)] != j) moved = true;
                hs.slots[static_cast<std::size_t>(j)] = j;
            }
            hs.keys.resize(static_cast<std::size_t>(keep) * d_head_);
            hs.values.resize(static_cast<std::size_t>(keep) * d_head_);
            hs.token_ids.resize(static_cast<std::size_t>(keep));
            hs.origins.resize(static_cast<std::size_t>(keep));
            hs.nuc.resize(static_cast<std::size_t>(keep));
            hs.slots.resize(static_cast<std::size_t>(keep));
        }
        occ_ = keep;
        return moved;
    }

    PotConfig config_;
    int n_layers_;
    int n_heads_;
    int d_head_;
    int occ_ = 0;
    int peak_occ_ = 0;
    long long cycle_counter_ = 0;
    long long rope_recompute_counter_ = 0;
    long long max_rope_position_ = 0;
    std::vector<HeadStore> heads_;
};

// Factory mirroring the construction contract.
inline MemoryPot pot_new(const PotConfig& config, const ModelConfig& model_config) {
    return MemoryPot(config, model_config);
}

}  // namespace potkv

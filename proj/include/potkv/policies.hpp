#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "potkv/ccd.hpp"
#include "potkv/error.hpp"
#include "potkv/forward.hpp"
#include "potkv/mempot.hpp"
#include "potkv/select.hpp"

namespace potkv {

enum class PolicyKind { Ccd, Swa, Streaming, H2O, Tova, SirLlm, Truncate, Random };

inline std::string policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::Ccd: return "ccd";
        case PolicyKind::Swa: return "swa";
        case PolicyKind::Streaming: return "streaming";
        case PolicyKind::H2O: return "h2o";
        case PolicyKind::Tova: return "tova";
        case PolicyKind::SirLlm: return "sirllm";
        case PolicyKind::Truncate: return "truncate";
        case PolicyKind::Random: return "random";
    }
    return "?";
}

inline PolicyKind policy_from_name(const std::string& s) {
    if (s == "ccd") return PolicyKind::Ccd;
    if (s == "swa") return PolicyKind::Swa;
    if (s == "streaming") return PolicyKind::Streaming;
    if (s == "h2o") return PolicyKind::H2O;
    if (s == "tova") return PolicyKind::Tova;
    if (s == "sirllm") return PolicyKind::SirLlm;
    if (s == "truncate") return PolicyKind::Truncate;
    if (s == "random") return PolicyKind::Random;
    throw ConfigError("policy.kind: unknown policy '" + s + "'");
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::Ccd;
    int budget = 0;           // retained entries for the baselines; unused by CCD
    int sink_count = 4;       // streaming
    int heavy_count = 4;      // h2o
    std::uint64_t seed = 0;   // random policy

    void validate(const PotConfig& pot) const {
        if (kind == PolicyKind::Ccd) return;
        if (budget < 1) throw ConfigError("policy.budget: must be >= 1");
        if (budget > pot.capacity - 1)
            throw ConfigError("policy.budget: must leave one slot of headroom below pot.capacity");
        if (kind == PolicyKind::Streaming && sink_count >= budget)
            throw ConfigError("policy.sink_count: must be < budget");
        if (kind == PolicyKind::Streaming && sink_count < 0)
            throw ConfigError("policy.sink_count: must be >= 0");
        if (kind == PolicyKind::H2O && (heavy_count < 0 || heavy_count > budget))
            throw ConfigError("policy.heavy_count: must lie in [0, budget]");
    }
};

// ---- closed-form retention rules (ascending index sets over occ columns) ----

// Keep the most recent `budget` entries.
inline std::vector<int> swa_retained(int occ, int budget) {
    std::vector<int> keep;
    const int start = std::max(0, occ - budget);
    for (int i = start; i < occ; ++i) keep.push_back(i);
    return keep;
}

// Keep the first sink_count entries plus the most recent budget - sink_count.
inline std::vector<int> streaming_retained(int occ, int budget, int sink_count) {
    if (occ <= budget) return swa_retained(occ, budget);
    std::vector<int> keep;
    for (int i = 0; i < sink_count && i < occ; ++i) keep.push_back(i);
    const int recent = budget - sink_count;
    for (int i = occ - recent; i < occ; ++i) keep.push_back(i);
    return keep;
}

// Keep the budget - heavy_count most recent entries plus the heavy_count
// non-recent columns with the highest accumulated attention.
inline std::vector<int> h2o_retained(std::span<const double> acc, int budget, int heavy_count) {
    const int occ = static_cast<int>(acc.size());
    if (occ <= budget) return swa_retained(occ, budget);
    const int recent = budget - heavy_count;
    const int recent_start = occ - recent;
    std::vector<int> order;
    for (int i = 0; i < recent_start; ++i) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (acc[static_cast<std::size_t>(a)] != acc[static_cast<std::size_t>(b)])
            return acc[static_cast<std::size_t>(a)] > acc[static_cast<std::size_t>(b)];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(std::min(heavy_count, recent_start)));
    for (int i = recent_start; i < occ; ++i) order.push_back(i);
    std::sort(order.begin(), order.end());
    return order;
}

// Keep the budget entries with the highest attention from the newest token.
inline std::vector<int> tova_retained(std::span<const float> last_attn, int budget) {
    const int occ = static_cast<int>(last_attn.size());
    if (occ <= budget) return swa_retained(occ, budget);
    std::vector<int> keep = top_k_by_score(last_attn, budget);
    std::sort(keep.begin(), keep.end());
    return keep;
}

// Keep the budget entries with the highest novelty score (shared across heads).
inline std::vector<int> sirllm_retained(std::span<const float> nuc, int budget) {
    const int occ = static_cast<int>(nuc.size());
    if (occ <= budget) return swa_retained(occ, budget);
    std::vector<int> keep = top_k_by_score(nuc, budget);
    std::sort(keep.begin(), keep.end());
    return keep;
}

// Offline truncation: first ceil(budget/2) and last floor(budget/2) stream
// positions.
inline std::vector<int> truncate_keep_indices(long long stream_len, int budget) {
    std::vector<int> keep;
    if (stream_len <= budget) {
        for (long long i = 0; i < stream_len; ++i) keep.push_back(static_cast<int>(i));
        return keep;
    }
    const long long head = (budget + 1) / 2;
    const long long tail = budget / 2;
    for (long long i = 0; i < head; ++i) keep.push_back(static_cast<int>(i));
    for (long long i = stream_len - tail; i < stream_len; ++i) keep.push_back(static_cast<int>(i));
    return keep;
}

// Streaming-style baseline engine: one forward per token, retention rule
// applied after each append. Per-head rules (H2O, TOVA) may diverge across
// heads; the others retain shared index sets.
class BaselineRun : public StreamEngine {
public:
    BaselineRun(const Model& model, const PotConfig& pot_config, const PolicySpec& spec)
        : model_(model), pot_(pot_config, model.config), spec_(spec), rng_(spec.seed) {
        spec.validate(pot_config);
        if (spec.kind == PolicyKind::Ccd || spec.kind == PolicyKind::Truncate)
            throw ConfigError("baseline run: kind must be a streaming eviction policy");
        if (spec.kind == PolicyKind::H2O)
            acc_attn_.assign(static_cast<std::size_t>(pot_.head_sets()), {});
    }

    void consume(std::span<const int> tokens, const LogitsSink& sink = {}) override {
        for (int tok : tokens) {
            step(tok);
            if (sink) sink(consumed_ - 1, std::span<const float>(last_row_));
        }
    }

    std::vector<int> generate(int max_new) override {
        std::vector<int> out;
        if (max_new <= 0) return out;
        if (!has_last_) throw StateError("generate: no context has been consumed");
        for (int i = 0; i < max_new; ++i) {
            const int next = static_cast<int>(
                std::max_element(last_row_.begin(), last_row_.end()) - last_row_.begin());
            step(next);
            out.push_back(next);
        }
        return out;
    }

    const MemoryPot& pot() const override { return pot_; }

private:
    void step(int token) {
        const bool needs_attn = spec_.kind == PolicyKind::H2O || spec_.kind == PolicyKind::Tova;
        AttnCapture capture;
        const float nuc = has_last_ ? cross_entropy_row(last_row_, token) : 0.0f;
        const int pos = pot_.occupancy();
        const long long origin = consumed_;
        const ChunkOutput out = forward_chunk(model_, pot_, std::span<const int>(&token, 1),
                                              std::span<const int>(&pos, 1),
                                              std::span<const long long>(&origin, 1), 0,
                                              needs_attn ? &capture : nullptr);
        pot_.set_tail_nuc(std::span<const float>(&nuc, 1));
        last_row_.assign(out.logits.row(0), out.logits.row(0) + out.logits.cols);
        has_last_ = true;
        ++consumed_;

        if (spec_.kind == PolicyKind::H2O) {
            for (int lh = 0; lh < pot_.head_sets(); ++lh) {
                const auto& sums = capture.column_sums[static_cast<std::size_t>(lh / pot_.n_heads())]
                                                      [static_cast<std::size_t>(lh % pot_.n_heads())];
                auto& acc = acc_attn_[static_cast<std::size_t>(lh)];
                acc.resize(sums.size(), 0.0);
                for (std::size_t c = 0; c < sums.size(); ++c) acc[c] += sums[c];
            }
        }
        if (spec_.kind == PolicyKind::Tova) last_capture_ = std::move(capture.last_row);

        if (pot_.occupancy() > spec_.budget) evict();
    }

    void evict() {
        const int occ = pot_.occupancy();
        std::vector<std::vector<int>> sets;
        sets.reserve(static_cast<std::size_t>(pot_.head_sets()));
        switch (spec_.kind) {
            case PolicyKind::Swa: {
                sets.assign(static_cast<std::size_t>(pot_.head_sets()), swa_retained(occ, spec_.budget));
                break;
            }
            case PolicyKind::Streaming: {
                sets.assign(static_cast<std::size_t>(pot_.head_sets()),
                            streaming_retained(occ, spec_.budget, spec_.sink_count));
                break;
            }
            case PolicyKind::H2O: {
                for (int lh = 0; lh < pot_.head_sets(); ++lh)
                    sets.push_back(h2o_retained(acc_attn_[static_cast<std::size_t>(lh)], spec_.budget,
                                                spec_.heavy_count));
                break;
            }
            case PolicyKind::Tova: {
                for (int lh = 0; lh < pot_.head_sets(); ++lh)
                    sets.push_back(tova_retained(last_capture_[static_cast<std::size_t>(lh / pot_.n_heads())]
                                                              [static_cast<std::size_t>(lh % pot_.n_heads())],
                                                 spec_.budget));
                break;
            }
            case PolicyKind::SirLlm: {
                sets.assign(static_cast<std::size_t>(pot_.head_sets()),
                            sirllm_retained(pot_.nuc_scores(0, 0), spec_.budget));
                break;
            }
            case PolicyKind::Random: {
                const int victim = static_cast<int>(rng_() % static_cast<std::uint64_t>(occ));
                std::vector<int> keep;
                keep.reserve(static_cast<std::size_t>(occ - 1));
                for (int i = 0; i < occ; ++i)
                    if (i != victim) keep.push_back(i);
                sets.assign(static_cast<std::size_t>(pot_.head_sets()), keep);
                break;
            }
            default:
                throw StateError("baseline run: unexpected policy kind");
        }
        pot_.retain(sets);
        if (spec_.kind == PolicyKind::H2O) {
            for (int lh = 0; lh < pot_.head_sets(); ++lh) {
                auto& acc = acc_attn_[static_cast<std::size_t>(lh)];
                const auto& keep = sets[static_cast<std::size_t>(lh)];
                std::vector<double> next(keep.size());
                for (std::size_t j = 0; j < keep.size(); ++j) next[j] = acc[static_cast<std::size_t>(keep[j])];
                acc = std::move(next);
            }
        }
    }

    const Model& model_;
    MemoryPot pot_;
    PolicySpec spec_;
    std::mt19937_64 rng_;
    std::vector<std::vector<double>> acc_attn_;                    // h2o: [lh][col]
    std::vector<std::vector<std::vector<float>>> last_capture_;   // tova: [layer][head][col]
    std::vector<float> last_row_;
    bool has_last_ = false;
    long long consumed_ = 0;
};

// Builds the engine for a policy. Truncate is offline: callers slice the
// stream with truncate_keep_indices() and drive the returned plain engine.
inline std::unique_ptr<StreamEngine> make_engine(const Model& model, const PotConfig& pot_config,
                                                 const PolicySpec& spec, const CatalystPrompt& cap) {
    if (spec.kind == PolicyKind::Ccd) return std::make_unique<Session>(model, pot_config, cap);
    if (spec.kind == PolicyKind::Truncate) {
        PolicySpec swa = spec;
        swa.kind = PolicyKind::Swa;
        swa.budget = pot_config.capacity - 1;  // effectively no eviction at desk scale
        return std::make_unique<BaselineRun>(model, pot_config, swa);
    }
    return std::make_unique<BaselineRun>(model, pot_config, spec);
}

}  // namespace potkv

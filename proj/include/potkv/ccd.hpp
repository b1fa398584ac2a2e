#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "potkv/cap.hpp"
#include "potkv/forward.hpp"
#include "potkv/mempot.hpp"
#include "potkv/model.hpp"
#include "potkv/scoring.hpp"
#include "potkv/select.hpp"

namespace potkv {

// Cross-entropy of one logits row against a target id.
inline float cross_entropy_row(std::span<const float> logits_row, int target) {
    if (target < 0 || target >= static_cast<int>(logits_row.size()))
        throw ArgumentError("cross_entropy: target outside vocab");
    return static_cast<float>(log_sum_exp(logits_row) -
                              static_cast<double>(logits_row[static_cast<std::size_t>(target)]));
}

// One record per completed distillation.
struct DistillReport {
    long long cycle = 0;             // 0-based
    long long consumed_through = 0;  // stream tokens consumed when triggered
    std::vector<std::vector<long long>> retained_origins;  // [layer*heads][|C|]
    double mean_cap = 0.0;  // mean survivor attention score over all heads
    double sum_nuc = 0.0;   // per-head survivor novelty sum, averaged over heads

    nlohmann::json to_json() const {
        return {{"cycle", cycle},
                {"consumed_through", consumed_through},
                {"retained", retained_origins},
                {"mean_cap", mean_cap},
                {"sum_nuc", sum_nuc}};
    }
};

// (stream position, logits row) visitor; consume() reports every token through it.
using LogitsSink = std::function<void(long long, std::span<const float>)>;

// Common surface for the CCD session and the baseline policy runs.
class StreamEngine {
public:
    virtual ~StreamEngine() = default;
    virtual void consume(std::span<const int> tokens, const LogitsSink& sink = {}) = 0;
    virtual std::vector<int> generate(int max_new) = 0;
    virtual const MemoryPot& pot() const = 0;
    virtual const std::vector<DistillReport>* distill_reports() const { return nullptr; }
};

// Continual-distillation session: stream tokens through the pot, inject the
// catalyst prompt whenever the intake window fills, select survivors and
// compact, then keep going. Generation runs under the same trigger rule.
class Session : public StreamEngine {
public:
    Session(const Model& model, const PotConfig& pot_config, CatalystPrompt cap)
        : model_(model), pot_(pot_config, model.config), cap_(std::move(cap)) {
        if (static_cast<int>(cap_.token_ids.size()) != pot_config.cap_len)
            throw ConfigError("session: catalyst prompt length != pot.cap_len");
    }

    void consume(std::span<const int> tokens, const LogitsSink& sink = {}) override {
        std::size_t i = 0;
        std::vector<float> nuc;
        while (i < tokens.size()) {
            if (pot_.remaining_intake() == 0) distill();
            const int take = static_cast<int>(std::min<std::size_t>(
                {tokens.size() - i, static_cast<std::size_t>(pot_.remaining_intake()),
                 static_cast<std::size_t>(pot_.config().effective_chunk())}));
            std::vector<int> positions(static_cast<std::size_t>(take));
            std::vector<long long> origins(static_cast<std::size_t>(take));
            for (int j = 0; j < take; ++j) {
                positions[static_cast<std::size_t>(j)] = pot_.occupancy() + j;
                origins[static_cast<std::size_t>(j)] = consumed_ + j;
            }
            const ChunkOutput out =
                forward_chunk(model_, pot_, tokens.subspan(i, static_cast<std::size_t>(take)), positions, origins);

            nuc.resize(static_cast<std::size_t>(take));
            for (int j = 0; j < take; ++j) {
                const int tok = tokens[i + static_cast<std::size_t>(j)];
                if (j == 0) {
                    nuc[0] = has_last_ ? cross_entropy_row(last_row_, tok) : 0.0f;
                } else {
                    nuc[static_cast<std::size_t>(j)] = cross_entropy_row(
                        std::span<const float>(out.logits.row(j - 1), static_cast<std::size_t>(out.logits.cols)), tok);
                }
            }
            pot_.set_tail_nuc(nuc);

            if (sink) {
                for (int j = 0; j < take; ++j)
                    sink(consumed_ + j,
                         std::span<const float>(out.logits.row(j), static_cast<std::size_t>(out.logits.cols)));
            }
            last_row_.assign(out.logits.row(take - 1), out.logits.row(take - 1) + out.logits.cols);
            has_last_ = true;
            consumed_ += take;
            i += static_cast<std::size_t>(take);
        }
    }

    // Scores the pot at trigger, selects survivors, compacts. Exposed for
    // tests; consume()/generate() call it on their own.
    DistillReport distill() {
        if (!pot_.at_trigger()) throw StateError("distill: pot not at trigger state");
        ScoreSheet sheet;
        sheet.cap_scores = score_cap(model_, pot_, cap_);
        sheet.nuc_scores = pot_.nuc_scores(0, 0);  // canonical shared novelty track
        auto retained = select_tokens(sheet.cap_scores, sheet.nuc_scores,
                                      pot_.config().compressed_size, pot_.config().nuc_slots());
        if (!retained) throw StateError("distill: nothing to evict");

        DistillReport report;
        report.cycle = pot_.cycle_counter();
        report.consumed_through = consumed_;
        report.retained_origins.reserve(retained->size());
        double cap_sum = 0.0;
        double nuc_sum = 0.0;
        std::size_t cap_n = 0;
        for (int lh = 0; lh < pot_.head_sets(); ++lh) {
            const int l = lh / pot_.n_heads();
            const int h = lh % pot_.n_heads();
            const auto& set = (*retained)[static_cast<std::size_t>(lh)];
            std::vector<long long> origins;
            origins.reserve(set.size());
            for (int idx : set) {
                origins.push_back(pot_.origins(l, h)[static_cast<std::size_t>(idx)]);
                cap_sum += sheet.cap_scores[static_cast<std::size_t>(lh)][static_cast<std::size_t>(idx)];
                nuc_sum += pot_.nuc_scores(l, h)[static_cast<std::size_t>(idx)];
                ++cap_n;
            }
            report.retained_origins.push_back(std::move(origins));
        }
        report.mean_cap = cap_n ? cap_sum / static_cast<double>(cap_n) : 0.0;
        report.sum_nuc = nuc_sum / static_cast<double>(pot_.head_sets());

        pot_.compact(*retained);
        reports_.push_back(report);
        return report;
    }

    std::vector<int> generate(int max_new) override {
        std::vector<int> out;
        if (max_new <= 0) return out;
        if (!has_last_) throw StateError("generate: no context has been consumed");
        out.reserve(static_cast<std::size_t>(max_new));
        for (int step = 0; step < max_new; ++step) {
            // first of equal maxima, i.e. the lowest token id
            const int next = static_cast<int>(
                std::max_element(last_row_.begin(), last_row_.end()) - last_row_.begin());
            const float nuc = cross_entropy_row(last_row_, next);
            if (pot_.remaining_intake() == 0) distill();
            const int pos = pot_.occupancy();
            const long long origin = consumed_;
            const ChunkOutput o = forward_chunk(model_, pot_, std::span<const int>(&next, 1),
                                                std::span<const int>(&pos, 1),
                                                std::span<const long long>(&origin, 1));
            pot_.set_tail_nuc(std::span<const float>(&nuc, 1));
            last_row_.assign(o.logits.row(0), o.logits.row(0) + o.logits.cols);
            ++consumed_;
            out.push_back(next);
        }
        return out;
    }

    const MemoryPot& pot() const override { return pot_; }
    MemoryPot& pot_mut() { return pot_; }
    long long consumed() const { return consumed_; }
    std::span<const float> last_logits() const { return last_row_; }
    const std::vector<DistillReport>* distill_reports() const override { return &reports_; }

private:
    const Model& model_;
    MemoryPot pot_;
    CatalystPrompt cap_;
    std::vector<float> last_row_;
    bool has_last_ = false;
    long long consumed_ = 0;
    std::vector<DistillReport> reports_;
};

}  // namespace potkv

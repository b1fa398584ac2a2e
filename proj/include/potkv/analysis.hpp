#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "potkv/bench.hpp"
#include "potkv/oracle.hpp"
#include "potkv/policies.hpp"

namespace potkv {

// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
inline double sign_test_p(int wins, int n) {
    if (n <= 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(n - k + 1.0) + n * std::log(0.5);
        p += std::exp(log_term);
    }
    return p < 1.0 ? p : 1.0;
}

// Seeded random byte stream (BOS-prefixed), the generic input for the
// retention analyses.
inline std::vector<int> random_stream(long long length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> stream;
    stream.reserve(static_cast<std::size_t>(length));
    stream.push_back(kBosId);
    for (long long i = 1; i < length; ++i) stream.push_back(1 + static_cast<int>(rng() % 256));
    return stream;
}

// Oracle-set construction modes for the analysis: each pot layer compared
// against that layer's own oracle attention (default), the layer average, or
// one fixed layer.
inline constexpr int kOracleLayerMatched = std::numeric_limits<int>::min();
inline constexpr int kOracleLayerAverage = -1;

struct HitrateParams {
    std::vector<PolicySpec> policies;   // compared on the same streams
    long long length = 0;               // 0 -> 4 * intake window
    std::vector<std::uint64_t> seeds;
    int layer = kOracleLayerMatched;
    int top_k = 0;                      // 0 -> |C|
};

// Per-head retained original positions at the engine's current state.
inline std::vector<std::vector<long long>> retained_sets(const MemoryPot& pot) {
    std::vector<std::vector<long long>> sets;
    sets.reserve(static_cast<std::size_t>(pot.head_sets()));
    for (int l = 0; l < pot.n_layers(); ++l)
        for (int h = 0; h < pot.n_heads(); ++h) sets.push_back(pot.origins(l, h));
    return sets;
}

// One oracle reference set per (layer, head). In matched mode each layer's
// sets come from that layer's own attention; otherwise a single per-head set
// (fixed layer or layer average) is replicated across layers.
inline std::vector<std::vector<long long>> expand_oracle_sets(const GlobalScore& gs, int k, int layer,
                                                              int n_layers) {
    std::vector<std::vector<long long>> out;
    if (layer == kOracleLayerMatched) {
        for (int l = 0; l < n_layers; ++l) {
            auto per_head = gs.topk_sets(k, l);
            for (auto& s : per_head) out.push_back(std::move(s));
        }
        return out;
    }
    const auto per_head = gs.topk_sets(k, layer);
    out.reserve(per_head.size() * static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l)
        for (const auto& s : per_head) out.push_back(s);
    return out;
}

// The per-head sets a policy is judged on: the last compacted selection when
// the engine distills (sets of size |C|, like the reference), otherwise the
// end-state pot content.
inline std::vector<std::vector<long long>> judged_sets(const StreamEngine& engine) {
    if (const auto* reports = engine.distill_reports(); reports && !reports->empty())
        return reports->back().retained_origins;
    return retained_sets(engine.pot());
}

// Runs every policy plus the unconstrained oracle on the same seeded streams
// and aggregates the overlap statistics.
inline nlohmann::json hitrate_analysis(const Model& model, const PotConfig& pot_config,
                                       const HitrateParams& params) {
    PotConfig pc = pot_config;
    pc.validate();
    const long long length = params.length > 0 ? params.length : 4LL * pc.intake_window();
    const int top_k = params.top_k > 0 ? params.top_k : pc.compressed_size;
    const int layer = params.layer;
    if (params.seeds.empty()) throw ConfigError("hitrate.seeds: at least one seed required");

    struct Agg {
        std::vector<double> hit_per_seed;
        std::vector<double> per_head_sum;  // [layer*heads]
        std::vector<double> entropy_ratio_per_seed;
        std::map<long long, std::vector<long long>> cycle_hits;  // cycle -> hits per seed
        std::vector<std::vector<long long>> freq;  // [lh][position] counts (ccd only)
        std::vector<double> cycle_hit_sum;         // indexed by cycle
        std::vector<long long> cycle_hit_n;
    };
    std::map<std::string, Agg> agg;

    const int lh_count = model.config.n_layers * model.config.n_heads;
    for (std::uint64_t seed : params.seeds) {
        const std::vector<int> stream = random_stream(length, seed);
        const GlobalScore gs = global_scoring(model, stream, {});
        const auto oracle_sets = expand_oracle_sets(gs, top_k, layer, model.config.n_layers);

        for (const PolicySpec& spec : params.policies) {
            const std::string name = policy_name(spec.kind);
            Agg& a = agg[name];
            if (a.per_head_sum.empty()) a.per_head_sum.assign(static_cast<std::size_t>(lh_count), 0.0);

            const CatalystPrompt cap = build_cap_from_config(pc);
            auto engine = make_engine(model, pc, spec, cap);
            if (spec.kind == PolicyKind::Truncate) {
                const auto keep = truncate_keep_indices(static_cast<long long>(stream.size()), spec.budget);
                std::vector<int> sliced;
                for (int idx : keep) sliced.push_back(stream[static_cast<std::size_t>(idx)]);
                engine->consume(sliced);
            } else {
                engine->consume(stream);
            }

            const auto sets = judged_sets(*engine);
            a.hit_per_seed.push_back(hit_rate(sets, oracle_sets));
            for (int i = 0; i < lh_count; ++i) {
                a.per_head_sum[static_cast<std::size_t>(i)] +=
                    hit_rate({sets[static_cast<std::size_t>(i)]}, {oracle_sets[static_cast<std::size_t>(i)]});
            }
            const EntropySummary es = entropy_sum(sets, gs.exact_novelty, pc.compressed_size);
            double mean_head = 0.0;
            for (double v : es.per_head) mean_head += v;
            mean_head /= static_cast<double>(es.per_head.size());
            a.entropy_ratio_per_seed.push_back(es.ceiling > 0.0 ? mean_head / es.ceiling : 0.0);

            if (const auto* reports = engine->distill_reports()) {
                for (const DistillReport& r : *reports) {
                    const double hit = hit_rate(r.retained_origins, oracle_sets);
                    if (static_cast<std::size_t>(r.cycle) >= a.cycle_hit_sum.size()) {
                        a.cycle_hit_sum.resize(static_cast<std::size_t>(r.cycle) + 1, 0.0);
                        a.cycle_hit_n.resize(static_cast<std::size_t>(r.cycle) + 1, 0);
                    }
                    a.cycle_hit_sum[static_cast<std::size_t>(r.cycle)] += hit;
                    a.cycle_hit_n[static_cast<std::size_t>(r.cycle)] += 1;
                }
                if (a.freq.empty())
                    a.freq.assign(static_cast<std::size_t>(lh_count),
                                  std::vector<long long>(static_cast<std::size_t>(length), 0));
                for (int i = 0; i < lh_count; ++i)
                    for (long long pos : sets[static_cast<std::size_t>(i)])
                        if (pos >= 0 && pos < length) a.freq[static_cast<std::size_t>(i)][static_cast<std::size_t>(pos)] += 1;
            }
        }
    }

    nlohmann::json out;
    out["length"] = length;
    out["top_k"] = top_k;
    if (layer == kOracleLayerMatched)
        out["oracle_layers"] = "matched";
    else if (layer == kOracleLayerAverage)
        out["oracle_layers"] = "average";
    else
        out["oracle_layers"] = layer;
    out["seeds"] = params.seeds.size();
    nlohmann::json policies = nlohmann::json::object();
    for (auto& [name, a] : agg) {
        nlohmann::json p;
        double mean = 0.0;
        for (double v : a.hit_per_seed) mean += v;
        mean /= static_cast<double>(a.hit_per_seed.size());
        p["hit_rate"] = mean;
        nlohmann::json per_head = nlohmann::json::array();
        for (double v : a.per_head_sum) per_head.push_back(v / static_cast<double>(a.hit_per_seed.size()));
        p["per_head_hit"] = per_head;
        double er = 0.0;
        for (double v : a.entropy_ratio_per_seed) er += v;
        p["entropy_ratio"] = er / static_cast<double>(a.entropy_ratio_per_seed.size());
        nlohmann::json series = nlohmann::json::array();
        for (std::size_t c = 0; c < a.cycle_hit_sum.size(); ++c)
            series.push_back(a.cycle_hit_sum[c] / static_cast<double>(a.cycle_hit_n[c]));
        p["cycle_series"] = series;
        if (!a.freq.empty()) p["head_frequency"] = a.freq;
        policies[name] = std::move(p);
    }
    out["policies"] = std::move(policies);

    // Paired sign test of ccd against random when both ran.
    auto it_ccd = agg.find("ccd");
    auto it_rand = agg.find("random");
    if (it_ccd != agg.end() && it_rand != agg.end()) {
        int wins = 0, n = 0;
        for (std::size_t i = 0; i < it_ccd->second.hit_per_seed.size(); ++i) {
            const double d = it_ccd->second.hit_per_seed[i] - it_rand->second.hit_per_seed[i];
            if (d > 0) ++wins;
            if (d != 0) ++n;
        }
        out["sign_test"] = {{"comparison", "ccd_vs_random"},
                            {"wins", wins},
                            {"n", n},
                            {"p", sign_test_p(wins, n)}};
    }
    return out;
}

}  // namespace potkv

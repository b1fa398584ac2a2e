#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "potkv/cap.hpp"
#include "potkv/ccd.hpp"
#include "potkv/nih.hpp"
#include "potkv/policies.hpp"
#include "potkv/tokenizer.hpp"

namespace potkv {

struct RunMetrics {
    std::string policy;
    long long context_len = 0;  // "L"
    double depth = 0.0;
    std::uint64_t seed = 0;
    double score = 0.0;
    long long cycles = 0;
    long long rope_recomputes = 0;
    int peak_occ = 0;
    double ms = 0.0;

    nlohmann::json to_json() const {
        return {{"policy", policy},     {"L", context_len},
                {"depth", depth},       {"seed", seed},
                {"score", score},       {"cycles", cycles},
                {"rope_recomputes", rope_recomputes},
                {"peak_occ", peak_occ}, {"ms", ms}};
    }
};

struct NihEval {
    RunMetrics metrics;
    double needle_retention = 0.0;  // fraction of heads retaining any passkey token
    std::vector<int> generated;
};

// Builds the full input stream for one NIH cell: BOS, the haystack, then the
// question rendered as plain text.
inline std::vector<int> nih_stream(const NihData& data) {
    std::vector<int> stream;
    stream.push_back(kBosId);
    stream.insert(stream.end(), data.context_tokens.begin(), data.context_tokens.end());
    const std::string prompt = "\nQuestion: " + data.query_text + "\nAnswer: The secret passkey is ";
    const auto tail = encode_bytes(prompt);
    stream.insert(stream.end(), tail.begin(), tail.end());
    return stream;
}

// Consume + generate for one cell. Accuracy is the exact-match of the passkey
// digit string in the greedy output; with seeded-random weights it is only a
// mechanical statistic, and needle_retention reports whether any head kept a
// passkey token.
inline NihEval eval_nih(const Model& model, const PolicySpec& policy, const NihSpec& spec,
                        const PotConfig& pot_config, int max_new = 48) {
    const auto t0 = std::chrono::steady_clock::now();
    pot_config.validate();
    policy.validate(pot_config);
    const NihData data = gen_nih(spec);
    const std::vector<int> stream = nih_stream(data);

    // NIH always runs with the question folded into the catalyst prompt;
    // the baselines receive it but never use it.
    const CatalystPrompt cap = build_cap(CapPreset::Q, pot_config.cap_len, data.query_text);

    NihEval eval;
    std::unique_ptr<StreamEngine> engine;
    if (policy.kind == PolicyKind::Truncate) {
        const auto keep = truncate_keep_indices(static_cast<long long>(stream.size()), policy.budget);
        std::vector<int> sliced;
        sliced.reserve(keep.size());
        for (int idx : keep) sliced.push_back(stream[static_cast<std::size_t>(idx)]);
        engine = make_engine(model, pot_config, policy, cap);
        engine->consume(sliced);
    } else {
        engine = make_engine(model, pot_config, policy, cap);
        engine->consume(stream);
    }
    eval.generated = engine->generate(max_new);

    const MemoryPot& pot = engine->pot();
    const std::string text = decode_bytes(eval.generated);
    eval.metrics.policy = policy_name(policy.kind);
    eval.metrics.context_len = spec.haystack_len;
    eval.metrics.depth = spec.depth;
    eval.metrics.seed = spec.filler_seed;
    eval.metrics.score = text.find(data.expected) != std::string::npos ? 1.0 : 0.0;
    eval.metrics.cycles = pot.cycle_counter();
    eval.metrics.rope_recomputes = pot.rope_recompute_counter();
    eval.metrics.peak_occ = pot.peak_occupancy();

    // Passkey token origins sit at [begin+1, end+1) in the BOS-shifted stream.
    int hit_heads = 0;
    for (int l = 0; l < pot.n_layers(); ++l) {
        for (int h = 0; h < pot.n_heads(); ++h) {
            bool hit = false;
            for (long long o : pot.origins(l, h)) {
                if (o >= data.passkey_begin + 1 && o < data.passkey_end + 1) {
                    hit = true;
                    break;
                }
            }
            hit_heads += hit ? 1 : 0;
        }
    }
    eval.needle_retention = static_cast<double>(hit_heads) / static_cast<double>(pot.head_sets());

    eval.metrics.ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return eval;
}

struct BenchGrid {
    std::vector<PolicySpec> policies;
    std::vector<long long> lengths;
    std::vector<double> depths;
    std::vector<std::uint64_t> seeds;
    std::string passkey = "48215";
    std::string query_text = "What is the secret passkey?";
    int max_new = 48;
    int threads = 0;  // 0 -> POTKV_THREADS, else 1
};

// POTKV_THREADS caps the worker count; an explicit request below the cap
// stands, and with no request the cap itself is used.
inline int resolve_thread_count(int requested, std::size_t jobs) {
    int n = requested > 0 ? requested : 1;
    if (const char* env = std::getenv("POTKV_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = requested > 0 ? std::min(n, cap) : cap;
    }
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(jobs, 1)));
}

// Cross product of policies x lengths x depths x seeds, deterministic output
// order. Cells are independent; POTKV_THREADS caps the worker count.
inline std::vector<RunMetrics> run_benchmark(const Model& model, const PotConfig& pot_config,
                                             const BenchGrid& grid) {
    struct Cell {
        PolicySpec policy;
        long long length;
        double depth;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& p : grid.policies)
        for (long long len : grid.lengths)
            for (double d : grid.depths)
                for (std::uint64_t s : grid.seeds) cells.push_back({p, len, d, s});

    std::vector<RunMetrics> results(cells.size());
    if (cells.empty()) return results;

    const int workers = resolve_thread_count(grid.threads, cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            const Cell& c = cells[i];
            NihSpec spec;
            spec.haystack_len = c.length;
            spec.depth = c.depth;
            spec.passkey = grid.passkey;
            spec.filler_seed = c.seed;
            spec.query_text = grid.query_text;
            results[i] = eval_nih(model, c.policy, spec, pot_config, grid.max_new).metrics;
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

// Temp-file-then-rename write so readers never observe a partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot open '" + tmp + "' for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw FormatError("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw FormatError("cannot rename '" + tmp + "' to '" + path + "'");
}

inline void write_metrics_jsonl(std::span<const RunMetrics> metrics, const std::string& path) {
    std::string out;
    for (const auto& m : metrics) {
        out += m.to_json().dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

inline void write_metrics_csv(std::span<const RunMetrics> metrics, const std::string& path) {
    std::string out = "policy,L,depth,seed,score,cycles,rope_recomputes,peak_occ,ms\n";
    const auto num = [](double v) { return nlohmann::json(v).dump(); };
    for (const auto& m : metrics) {
        out += m.policy;
        out += ',' + std::to_string(m.context_len);
        out += ',' + num(m.depth);
        out += ',' + std::to_string(m.seed);
        out += ',' + num(m.score);
        out += ',' + std::to_string(m.cycles);
        out += ',' + std::to_string(m.rope_recomputes);
        out += ',' + std::to_string(m.peak_occ);
        out += ',' + num(m.ms);
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace potkv

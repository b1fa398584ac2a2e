// Acceptance suite: one test per criterion, run at the pinned tolerances.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "potkv/analysis.hpp"
#include "potkv/bench.hpp"
#include "potkv/ccd.hpp"
#include "potkv/oracle.hpp"
#include "potkv/policies.hpp"
#include "test_util.hpp"

using namespace potkv;
using testutil::tiny_model_config;

namespace {

PotConfig pot_cfg(int m, int p, int c, double alpha = 0.5, int chunk = 0) {
    PotConfig pc;
    pc.capacity = m;
    pc.cap_len = p;
    pc.compressed_size = c;
    pc.nuc_ratio = alpha;
    pc.chunk_size = chunk;
    return pc;
}

PotConfig unbounded_cfg(long long len) {
    PotConfig pc;
    pc.capacity = static_cast<int>(len) + 8;
    pc.cap_len = 1;
    pc.compressed_size = 1;
    pc.nuc_ratio = 0.0;
    return pc;
}

Matrix collect_logits(Session& session, std::span<const int> stream) {
    Matrix rows(static_cast<int>(stream.size()), 0);
    session.consume(stream, [&](long long pos, std::span<const float> row) {
        if (rows.cols == 0) {
            rows.cols = static_cast<int>(row.size());
            rows.data.assign(static_cast<std::size_t>(rows.rows) * rows.cols, 0.0f);
        }
        std::copy(row.begin(), row.end(), rows.row(static_cast<int>(pos)));
    });
    return rows;
}

}  // namespace

// 1. Hard memory bound at production shape: 100k byte-tokens through
//    |M|=256, |P|=16, |C|=96 on a 2-layer 4-head d_model=128 model, with the
//    transient catalyst rows included in the instrumented peak.
TEST(Acceptance, C01_MemoryBound100kTokens) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig mc;
    mc.n_layers = 2;
    mc.n_heads = 4;
    mc.d_model = 128;
    mc.d_head = 32;
    mc.d_ff = 256;
    mc.vocab_size = 257;
    mc.init_seed = 1;
    const Model model = init_model(mc);
    const PotConfig pc = pot_cfg(256, 16, 96, 0.5);
    Session session(model, pc, build_cap(CapPreset::G, pc.cap_len));
    const std::vector<int> stream = random_stream(100000, 7);
    session.consume(stream);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EXPECT_LE(session.pot().peak_occupancy(), 256);
    EXPECT_EQ(session.pot().peak_occupancy(), 256);  // catalyst rows reach the cap exactly
    EXPECT_GT(session.pot().cycle_counter(), 0);
    EXPECT_EQ(session.pot().cycle_counter(), testutil::ref_cycles(256, 16, 96, 100000));
    EXPECT_LT(seconds, 300.0) << "100k-token run took " << seconds << "s";
    std::cout << "[ info ] 100k tokens in " << seconds << "s, cycles="
              << session.pot().cycle_counter() << "\n";
}

// 2. Observed distillation count equals the closed form on 50 random shapes.
TEST(Acceptance, C02_CycleCountClosedForm) {
    const Model model = init_model(tiny_model_config(1, 2, 16, 32, 257, 3));
    std::mt19937_64 rng(2025);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 1 + static_cast<int>(rng() % 4);
        const int c = 1 + static_cast<int>(rng() % 6);
        const int m = p + c + 1 + static_cast<int>(rng() % 12);
        const long long len = 1 + static_cast<long long>(rng() % 300);
        Session session(model, pot_cfg(m, p, c), build_cap(CapPreset::G, p));
        session.consume(testutil::random_tokens(len, model.config.vocab_size, rng()));
        const long long window = m - p;
        const long long expected =
            len > window ? (len - window + (window - c) - 1) / (window - c) : 0;
        ASSERT_EQ(session.pot().cycle_counter(), expected)
            << "m=" << m << " p=" << p << " c=" << c << " L=" << len;
        ASSERT_EQ(session.pot().cycle_counter(), testutil::ref_cycles(m, p, c, len));
    }
}

// 3. No rotary position ever reaches |M|, across policies and tasks.
TEST(Acceptance, C03_PositionBoundAcrossPolicies) {
    const Model model = init_model(tiny_model_config(2, 2, 16, 32, 257, 5));
    const PotConfig pc = pot_cfg(16, 2, 4);
    const auto stream = testutil::random_tokens(60, model.config.vocab_size, 11);

    for (PolicyKind kind : {PolicyKind::Ccd, PolicyKind::Swa, PolicyKind::Streaming,
                            PolicyKind::H2O, PolicyKind::Tova, PolicyKind::SirLlm,
                            PolicyKind::Random, PolicyKind::Truncate}) {
        PolicySpec spec{kind, pc.intake_window(), 2, 2};
        auto engine = make_engine(model, pc, spec, build_cap(CapPreset::G, pc.cap_len));
        if (kind == PolicyKind::Truncate) {
            const auto keep = truncate_keep_indices(static_cast<long long>(stream.size()), spec.budget);
            std::vector<int> sliced;
            for (int idx : keep) sliced.push_back(stream[static_cast<std::size_t>(idx)]);
            engine->consume(sliced);
        } else {
            engine->consume(stream);
        }
        engine->generate(4);
        EXPECT_LT(engine->pot().max_rope_position(), pc.capacity) << policy_name(kind);
        EXPECT_LE(engine->pot().peak_occupancy(), pc.capacity) << policy_name(kind);
    }

    // nih + hitrate tasks under the same instrumentation
    NihSpec nih;
    nih.haystack_len = 200;
    nih.depth = 0.5;
    const NihEval ev = eval_nih(model, PolicySpec{PolicyKind::Ccd}, nih, pc, 4);
    EXPECT_LE(ev.metrics.peak_occ, pc.capacity);
    HitrateParams hp;
    hp.policies = {PolicySpec{PolicyKind::Ccd}};
    hp.seeds = {1};
    EXPECT_NO_THROW(hitrate_analysis(model, pc, hp));
}

// 4. Below the trigger, constrained and unbounded logits agree to 1e-5
//    relative at every position (20 seeds).
TEST(Acceptance, C04_NoCompressionEquivalence) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Model model = init_model(tiny_model_config(2, 2, 16, 32, 64, seed));
        const long long len = 4 + static_cast<long long>(seed % 10);
        const auto stream = testutil::random_tokens(len, model.config.vocab_size, seed + 100);
        Session constrained(model, pot_cfg(16, 2, 4, 0.5, 3), build_cap(CapPreset::G, 2));
        Session unbounded(model, unbounded_cfg(len), build_cap(CapPreset::G, 1));
        const Matrix a = collect_logits(constrained, stream);
        const Matrix b = collect_logits(unbounded, stream);
        ASSERT_EQ(constrained.pot().cycle_counter(), 0);
        for (int r = 0; r < a.rows; ++r)
            for (int c = 0; c < a.cols; ++c)
                ASSERT_TRUE(testutil::close(a.at(r, c), b.at(r, c), 1e-5, 1e-6))
                    << "seed " << seed << " row " << r << " col " << c;
    }
}

// 5. Catalyst attention sums match the independent dense oracle within 1e-5
//    absolute on 100 seeded trigger states.
TEST(Acceptance, C05_CapScoreFidelity) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const Model model = init_model(tiny_model_config(2, 2, 16, 32, 257, seed));
        const PotConfig pc = pot_cfg(16, 2, 4);
        const auto stream = testutil::random_tokens(pc.intake_window(), model.config.vocab_size,
                                                    seed + 1000);
        MemoryPot pot(pc, model.config);
        std::vector<int> positions(stream.size());
        std::vector<long long> origins(stream.size());
        for (std::size_t i = 0; i < stream.size(); ++i) {
            positions[i] = static_cast<int>(i);
            origins[i] = static_cast<long long>(i);
        }
        forward_chunk(model, pot, stream, positions, origins);
        const CatalystPrompt cap = build_cap(CapPreset::G, pc.cap_len);
        const auto scores = score_cap(model, pot, cap);

        std::vector<int> all_ids(stream.begin(), stream.end());
        all_ids.insert(all_ids.end(), cap.token_ids.begin(), cap.token_ids.end());
        std::vector<int> all_pos;
        for (int i = 0; i < pc.intake_window(); ++i) all_pos.push_back(i);
        for (int i = 0; i < pc.cap_len; ++i) all_pos.push_back(pc.capacity - pc.cap_len + i);
        const NaiveForward naive = naive_dense_forward(model, all_ids, all_pos);

        for (int l = 0; l < model.config.n_layers; ++l) {
            for (int h = 0; h < model.config.n_heads; ++h) {
                const auto& got = scores[static_cast<std::size_t>(l * model.config.n_heads + h)];
                for (int col = 0; col < pc.intake_window(); ++col) {
                    double expected = 0.0;
                    for (int r = 0; r < pc.cap_len; ++r)
                        expected += naive.attn[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)]
                                              [static_cast<std::size_t>(pc.intake_window() + r)]
                                              [static_cast<std::size_t>(col)];
                    ASSERT_NEAR(got[static_cast<std::size_t>(col)], expected, 1e-5)
                        << "seed " << seed << " l=" << l << " h=" << h << " col=" << col;
                }
            }
        }
    }
}

// 6. Recorded novelty equals exact full-prefix cross-entropy within 1e-6 on
//    100 seeded first-fill streams; the uniform case returns ln(vocab).
TEST(Acceptance, C06_NoveltyScoreFidelity) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const Model model = init_model(tiny_model_config(1, 2, 16, 32, 64, seed));
        const long long len = 10;
        const auto stream = testutil::random_tokens(len, model.config.vocab_size, seed + 500);
        Session chunked(model, pot_cfg(16, 2, 4, 0.5, 3), build_cap(CapPreset::G, 2));
        chunked.consume(stream);
        Session unbounded(model, unbounded_cfg(len), build_cap(CapPreset::G, 1));
        const Matrix logits = collect_logits(unbounded, stream);
        const auto& recorded = chunked.pot().nuc_scores(0, 0);
        for (long long t = 1; t < len; ++t) {
            const double expected = testutil::ref_cross_entropy(
                std::span<const float>(logits.row(static_cast<int>(t - 1)),
                                       static_cast<std::size_t>(logits.cols)),
                stream[static_cast<std::size_t>(t)]);
            ASSERT_NEAR(recorded[static_cast<std::size_t>(t)], expected, 1e-6)
                << "seed " << seed << " t=" << t;
        }
    }

    Matrix uniform(4, 256);
    const std::vector<int> targets{0, 31, 128, 255};
    for (float v : score_nuc(uniform, targets)) EXPECT_NEAR(v, std::log(256.0), 1e-6);
    Matrix uniform257(2, 257);
    const std::vector<int> targets257{0, 256};
    for (float v : score_nuc(uniform257, targets257)) EXPECT_NEAR(v, std::log(257.0), 1e-6);
}

// 7. Two-step selection agrees exactly with a brute-force reimplementation on
//    1000 random score sheets; degenerate allocations hold.
TEST(Acceptance, C07_SelectionCorrectness) {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 28);
        const int c = 1 + static_cast<int>(rng() % (n - 1));
        const int t = static_cast<int>(rng() % static_cast<std::uint64_t>(c + 1));
        const int heads = 1 + static_cast<int>(rng() % 6);
        std::vector<std::vector<float>> cap(static_cast<std::size_t>(heads),
                                            std::vector<float>(static_cast<std::size_t>(n)));
        std::vector<float> nuc(static_cast<std::size_t>(n));
        for (auto& head : cap)
            for (auto& v : head) v = rng() % 4 == 0 ? 0.5f : dist(rng);
        for (auto& v : nuc) v = rng() % 4 == 0 ? 0.25f : dist(rng);
        const auto got = select_tokens(cap, nuc, c, t);
        ASSERT_TRUE(got.has_value());
        ASSERT_EQ(*got, testutil::ref_select(cap, nuc, c, t)) << "trial " << trial;
    }

    // T = 0: pure attention ranking; T = |C|: the shared novelty top set.
    const std::vector<std::vector<float>> cap{{5, 1, 4, 2, 3, 0}, {0, 1, 2, 3, 4, 5}};
    const std::vector<float> nuc{0.1f, 0.9f, 0.2f, 0.8f, 0.0f, 0.7f};
    const auto t0 = select_tokens(cap, nuc, 3, 0);
    EXPECT_EQ((*t0)[0], (std::vector<int>{0, 2, 4}));
    EXPECT_EQ((*t0)[1], (std::vector<int>{3, 4, 5}));
    const auto tc = select_tokens(cap, nuc, 3, 3);
    EXPECT_EQ((*tc)[0], (std::vector<int>{1, 3, 5}));
    EXPECT_EQ((*tc)[1], (std::vector<int>{1, 3, 5}));
}

// 8. With a balanced novelty share, heads disagree after the first
//    distillation in at least 95 of 100 seeds.
TEST(Acceptance, C08_HeadAsynchrony) {
    int diverged = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const Model model = init_model(tiny_model_config(2, 2, 16, 32, 257, seed));
        const PotConfig pc = pot_cfg(16, 2, 4, 0.5);
        Session session(model, pc, build_cap(CapPreset::G, pc.cap_len));
        session.consume(testutil::random_tokens(pc.intake_window() + 1, model.config.vocab_size,
                                                seed + 300));
        const auto* reports = session.distill_reports();
        ASSERT_EQ(reports->size(), 1u);
        const auto& sets = reports->front().retained_origins;
        bool any_pair_differs = false;
        for (std::size_t i = 0; i < sets.size() && !any_pair_differs; ++i)
            for (std::size_t j = i + 1; j < sets.size() && !any_pair_differs; ++j)
                if (sets[i] != sets[j]) any_pair_differs = true;
        diverged += any_pair_differs ? 1 : 0;
    }
    EXPECT_GE(diverged, 95) << diverged << "/100 seeds diverged";
}

// 9. Catalyst-guided retention beats random eviction on oracle overlap with
//    sign-test significance at L = 4 * intake window. Run on models with
//    planted attention structure (a plain seeded init has near-uniform
//    attention, where no retention policy can rank above another).
TEST(Acceptance, C09_HitRateBeatsRandom) {
    const PotConfig pc = pot_cfg(28, 8, 12, 0.5);
    const long long length = 4LL * pc.intake_window();
    int wins = 0, n = 0;
    double mean_ccd = 0.0, mean_rnd = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Model model = testutil::salient_model(3000 + seed);
        const auto stream = random_stream(length, seed);
        const GlobalScore gs = global_scoring(model, stream, {});
        const auto oracle_sets =
            expand_oracle_sets(gs, pc.compressed_size, kOracleLayerMatched, model.config.n_layers);

        Session ccd(model, pc, build_cap(CapPreset::G, pc.cap_len));
        ccd.consume(stream);
        const double h_ccd = hit_rate(judged_sets(ccd), oracle_sets);

        PolicySpec random_spec{PolicyKind::Random, pc.compressed_size};
        random_spec.seed = seed * 104729ULL;
        BaselineRun random_run(model, pc, random_spec);
        random_run.consume(stream);
        const double h_rnd = hit_rate(judged_sets(random_run), oracle_sets);

        mean_ccd += h_ccd;
        mean_rnd += h_rnd;
        if (h_ccd > h_rnd) ++wins;
        if (h_ccd != h_rnd) ++n;
    }
    mean_ccd /= 20.0;
    mean_rnd /= 20.0;
    const double p = sign_test_p(wins, n);
    std::cout << "[ info ] mean hit rate ccd=" << mean_ccd << " random=" << mean_rnd << " wins="
              << wins << "/" << n << " sign-test p=" << p << "\n";
    EXPECT_GT(mean_ccd, mean_rnd);
    EXPECT_LT(p, 0.05);
}

// 10. Rotary recompute economy: one recompute per distillation for the
//     session, L - r - s single-token recomputes for the streaming baseline.
TEST(Acceptance, C10_RecomputeEconomy) {
    const Model model = init_model(tiny_model_config(1, 2, 16, 32, 257, 13));
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 10; ++trial) {
        const int p = 1 + static_cast<int>(rng() % 3);
        const int c = 1 + static_cast<int>(rng() % 4);
        const int m = p + c + 2 + static_cast<int>(rng() % 8);
        const long long len = 20 + static_cast<long long>(rng() % 100);
        const auto stream = testutil::random_tokens(len, model.config.vocab_size, rng());

        Session session(model, pot_cfg(m, p, c), build_cap(CapPreset::G, p));
        session.consume(stream);
        ASSERT_EQ(session.pot().rope_recompute_counter(), session.pot().cycle_counter())
            << "m=" << m << " p=" << p << " c=" << c;

        const int sink = 1 + static_cast<int>(rng() % 2);
        const int budget = sink + 2 + static_cast<int>(rng() % (m - sink - 3));
        PolicySpec streaming{PolicyKind::Streaming, budget, sink};
        BaselineRun run(model, pot_cfg(m, p, c), streaming);
        run.consume(stream);
        const long long expected = len > budget ? len - budget : 0;  // L - r - s
        ASSERT_EQ(run.pot().rope_recompute_counter(), expected)
            << "L=" << len << " budget=" << budget << " sink=" << sink;
    }
}

// 11. SWA / streaming / truncate retention matches the closed forms exactly
//     on every small stream.
TEST(Acceptance, C11_BaselineRetentionClosedForms) {
    const Model model = init_model(tiny_model_config(1, 1, 8, 16, 64, 17));
    const PotConfig pc = pot_cfg(24, 2, 4);
    for (int len = 1; len <= 20; ++len) {
        const auto stream = testutil::random_tokens(len, model.config.vocab_size, 51);
        for (int budget = 1; budget <= 8; ++budget) {
            {
                PolicySpec spec{PolicyKind::Swa, budget};
                BaselineRun run(model, pc, spec);
                run.consume(stream);
                std::vector<long long> expected;
                for (int i = std::max(0, len - budget); i < len; ++i) expected.push_back(i);
                ASSERT_EQ(run.pot().origins(0, 0), expected) << "swa L=" << len << " b=" << budget;
            }
            if (budget >= 3) {
                const int sink = 2;
                PolicySpec spec{PolicyKind::Streaming, budget, sink};
                BaselineRun run(model, pc, spec);
                run.consume(stream);
                std::vector<long long> expected;
                if (len <= budget) {
                    for (int i = 0; i < len; ++i) expected.push_back(i);
                } else {
                    for (int i = 0; i < sink; ++i) expected.push_back(i);
                    for (int i = len - (budget - sink); i < len; ++i) expected.push_back(i);
                }
                ASSERT_EQ(run.pot().origins(0, 0), expected)
                    << "streaming L=" << len << " b=" << budget;
            }
            {
                const auto keep = truncate_keep_indices(len, budget);
                std::vector<int> expected;
                if (len <= budget) {
                    for (int i = 0; i < len; ++i) expected.push_back(i);
                } else {
                    for (int i = 0; i < (budget + 1) / 2; ++i) expected.push_back(i);
                    for (int i = len - budget / 2; i < len; ++i) expected.push_back(i);
                }
                ASSERT_EQ(keep, expected) << "truncate L=" << len << " b=" << budget;
            }
        }
    }
}

// 12. Repeating a run with the same config yields identical metrics except
//     for the wall-time field.
TEST(Acceptance, C12_CliDeterminism) {
    namespace fs = std::filesystem;
    const fs::path dir_a = fs::temp_directory_path() / "potkv_acc_det_a";
    const fs::path dir_b = fs::temp_directory_path() / "potkv_acc_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::create_directories(dir_a);
    fs::create_directories(dir_b);

    nlohmann::json cfg = {
        {"model",
         {{"n_layers", 1}, {"n_heads", 2}, {"d_model", 16}, {"d_ff", 32}, {"vocab_size", 257},
          {"init_seed", 7}}},
        {"pot", {{"capacity", 24}, {"compressed_size", 6}, {"cap_len", 4}, {"nuc_ratio", 0.5}}},
        {"policy", {{"kind", "ccd"}}},
        {"task", "nih"},
        {"seeds", {1, 2}},
        {"nih", {{"lengths", {80}}, {"depths", {0.5}}, {"max_new", 4}}},
        {"io", {{"out_dir", dir_a.string()}}},
    };
    const auto write_cfg = [](const fs::path& dir, const nlohmann::json& j) {
        const fs::path p = dir / "config.json";
        std::ofstream os(p);
        os << j.dump();
        return p;
    };
    const fs::path pa = write_cfg(dir_a, cfg);
    cfg["io"]["out_dir"] = dir_b.string();
    const fs::path pb = write_cfg(dir_b, cfg);

    const auto run = [&](const fs::path& cfg_path, const fs::path& dir) {
        const std::string cmd = std::string(POTKV_CLI_PATH) + " run --config " + cfg_path.string() +
                                " > " + (dir / "out.txt").string() + " 2>&1";
        return std::system(cmd.c_str());
    };
    ASSERT_EQ(run(pa, dir_a), 0);
    ASSERT_EQ(run(pb, dir_b), 0);

    const auto normalized = [](const fs::path& p) {
        std::ifstream is(p);
        std::string line, all;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            j.erase("ms");
            all += j.dump();
            all += '\n';
        }
        return all;
    };
    const std::string a = normalized(dir_a / "metrics.jsonl");
    const std::string b = normalized(dir_b / "metrics.jsonl");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

#include <gtest/gtest.h>

#include <random>

#include "potkv/mempot.hpp"
#include "test_util.hpp"

using namespace potkv;
using testutil::tiny_model_config;

namespace {

PotConfig cfg(int m, int p, int c) {
    PotConfig pc;
    pc.capacity = m;
    pc.cap_len = p;
    pc.compressed_size = c;
    return pc;
}

// Fills n synthetic entries into every layer of the pot.
void fill(MemoryPot& pot, int n, const ModelConfig& mc, int token_base = 1) {
    std::vector<float> k(static_cast<std::size_t>(mc.n_heads * mc.d_head));
    std::vector<float> v(k.size());
    for (int i = 0; i < n; ++i) {
        const int slot = pot.occupancy();
        for (std::size_t d = 0; d < k.size(); ++d) {
            k[d] = static_cast<float>(i) + 0.1f * static_cast<float>(d);
            v[d] = -k[d];
        }
        for (int l = 0; l < mc.n_layers; ++l) pot.append_token(l, k, v, token_base + i, i, slot);
    }
}

}  // namespace

TEST(PotConfig, ValidationRules) {
    EXPECT_NO_THROW(cfg(8, 2, 3).validate());
    EXPECT_THROW(cfg(8, 2, 6).validate(), ConfigError);   // |C| >= |M| - |P|
    EXPECT_THROW(cfg(8, 2, 7).validate(), ConfigError);
    PotConfig bad = cfg(8, 2, 3);
    bad.nuc_ratio = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(PotConfig, NucSlotRounding) {
    PotConfig pc = cfg(16, 2, 4);
    pc.nuc_ratio = 0.5;
    EXPECT_EQ(pc.nuc_slots(), 2);
    pc.compressed_size = 3;
    EXPECT_EQ(pc.nuc_slots(), 2);  // round(1.5) away from zero
    pc.nuc_ratio = 0.0;
    EXPECT_EQ(pc.nuc_slots(), 0);
    pc.nuc_ratio = 1.0;
    EXPECT_EQ(pc.nuc_slots(), 3);
}

TEST(MemoryPot, NewPotIsEmpty) {
    const ModelConfig mc = tiny_model_config();
    const MemoryPot pot(cfg(8, 2, 3), mc);
    EXPECT_EQ(pot.occupancy(), 0);
    EXPECT_EQ(pot.cycle_counter(), 0);
    EXPECT_EQ(pot.rope_recompute_counter(), 0);
    EXPECT_EQ(pot.remaining_intake(), 6);
}

TEST(MemoryPot, RemainingIntakeTracksOccupancy) {
    const ModelConfig mc = tiny_model_config();
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 3, mc);
    EXPECT_EQ(pot.remaining_intake(), 3);
    fill(pot, 3, mc);
    EXPECT_EQ(pot.remaining_intake(), 0);
    EXPECT_TRUE(pot.at_trigger());
}

TEST(MemoryPot, CompactKeepsOrderAndRenumbersSlots) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc, 10);
    const std::vector<std::vector<int>> retained(static_cast<std::size_t>(pot.head_sets()),
                                                 std::vector<int>{0, 2, 5});
    pot.compact(retained);
    EXPECT_EQ(pot.occupancy(), 3);
    EXPECT_EQ(pot.cycle_counter(), 1);
    EXPECT_EQ(pot.rope_recompute_counter(), 1);
    EXPECT_EQ(pot.token_ids(0, 0), (std::vector<int>{10, 12, 15}));
    EXPECT_EQ(pot.slots(0, 0), (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(pot.origins(0, 0), (std::vector<long long>{0, 2, 5}));
}

TEST(MemoryPot, HeadsMayRetainDifferentSets) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc, 10);
    const std::vector<std::vector<int>> retained{{0, 1, 2}, {3, 4, 5}};
    pot.compact(retained);
    EXPECT_EQ(pot.token_ids(0, 0), (std::vector<int>{10, 11, 12}));
    EXPECT_EQ(pot.token_ids(0, 1), (std::vector<int>{13, 14, 15}));
}

TEST(MemoryPot, WrongRetainedSizeRejected) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc);
    const std::vector<std::vector<int>> retained(static_cast<std::size_t>(pot.head_sets()),
                                                 std::vector<int>{0, 2});
    EXPECT_THROW(pot.compact(retained), SelectionError);
}

TEST(MemoryPot, OutOfRangeRetainedIndexRejected) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc);
    const std::vector<std::vector<int>> retained(static_cast<std::size_t>(pot.head_sets()),
                                                 std::vector<int>{0, 2, 6});
    EXPECT_THROW(pot.compact(retained), SelectionError);
}

TEST(MemoryPot, NucPersistsThroughCompaction) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc);
    pot.set_tail_nuc(std::vector<float>{0.5f, 1.5f, 2.5f, 3.5f, 4.5f, 5.5f});
    const std::vector<std::vector<int>> retained(static_cast<std::size_t>(pot.head_sets()),
                                                 std::vector<int>{1, 3, 4});
    pot.compact(retained);
    EXPECT_EQ(pot.nuc_scores(0, 0), (std::vector<float>{1.5f, 3.5f, 4.5f}));
}

TEST(MemoryPot, AppendBeyondCapacityRejected) {
    const ModelConfig mc = tiny_model_config();
    MemoryPot pot(cfg(4, 1, 2), mc);
    fill(pot, 4, mc);
    EXPECT_THROW(pot.check_append(1), CapacityError);
}

TEST(MemoryPot, TruncateDropsTail) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 6, mc, 20);
    pot.truncate_to(4);
    EXPECT_EQ(pot.occupancy(), 4);
    EXPECT_EQ(pot.token_ids(0, 0).back(), 23);
    EXPECT_EQ(pot.peak_occupancy(), 6);
}

TEST(MemoryPot, RetainCountsRecomputeEvents) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 4, mc);
    // keeping a prefix does not move any slot
    pot.retain(std::vector<std::vector<int>>(static_cast<std::size_t>(pot.head_sets()),
                                             std::vector<int>{0, 1, 2}));
    EXPECT_EQ(pot.rope_recompute_counter(), 0);
    // dropping the head shifts every survivor
    pot.retain(std::vector<std::vector<int>>(static_cast<std::size_t>(pot.head_sets()),
                                             std::vector<int>{1, 2}));
    EXPECT_EQ(pot.rope_recompute_counter(), 1);
}

TEST(MemoryPot, PositionBoundEnforced) {
    const ModelConfig mc = tiny_model_config();
    MemoryPot pot(cfg(8, 2, 3), mc);
    EXPECT_NO_THROW(pot.note_rope_position(7));
    EXPECT_THROW(pot.note_rope_position(8), PositionError);
    EXPECT_THROW(pot.note_rope_position(-1), PositionError);
    EXPECT_EQ(pot.max_rope_position(), 7);
}

TEST(MemoryPot, SnapshotSchema) {
    const ModelConfig mc = tiny_model_config(1, 2, 8, 16, 32);
    MemoryPot pot(cfg(8, 2, 3), mc);
    fill(pot, 2, mc, 40);
    const nlohmann::json snap = pot.snapshot();
    EXPECT_EQ(snap.at("occupancy"), 2);
    EXPECT_EQ(snap.at("layers").size(), 1u);
    EXPECT_EQ(snap.at("layers")[0].size(), 2u);
    const auto& entry = snap.at("layers")[0][0][1];
    EXPECT_EQ(entry.at("token_id"), 41);
    EXPECT_EQ(entry.at("slot"), 1);
    EXPECT_TRUE(entry.contains("nuc_score"));
    EXPECT_TRUE(entry.contains("original_position"));
}

// The simulated trigger loop and the closed form agree across random shapes.
TEST(MemoryPot, CycleFormulaMatchesSimulation) {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        const int p = 1 + static_cast<int>(rng() % 4);
        const int c = 1 + static_cast<int>(rng() % 8);
        const int m = p + c + 1 + static_cast<int>(rng() % 16);
        const long long len = static_cast<long long>(rng() % 500);
        ASSERT_EQ(testutil::ref_cycles(m, p, c, len), testutil::closed_form_cycles(m, p, c, len))
            << "m=" << m << " p=" << p << " c=" << c << " L=" << len;
    }
}

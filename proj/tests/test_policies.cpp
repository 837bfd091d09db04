#include "ilab/policy.hpp"

#include <gtest/gtest.h>

#include <array>
#include <vector>

#include "ilab/cache.hpp"
#include "oracle.hpp"

using namespace ilab;

namespace {

TEST(Lru, OldestTouchIsVictim) {
    lru_policy p(1, 4);
    for (uint32_t w = 0; w < 4; ++w) p.on_insert(0, w);
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(Lru, RetouchMovesVictim) {
    lru_policy p(1, 4);
    for (uint32_t w = 0; w < 4; ++w) p.on_insert(0, w);
    p.on_hit(0, 0);
    EXPECT_EQ(p.victim(0), 1u);
}

TEST(Lru, SingleWayDegenerate) {
    lru_policy p(1, 1);
    p.on_insert(0, 0);
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(Lru, TimestampsDistinctWithinSet) {
    lru_policy p(2, 4);
    rng r(3);
    for (int i = 0; i < 200; ++i)
        p.on_hit(static_cast<uint32_t>(r.next_below(2)),
                 static_cast<uint32_t>(r.next_below(4)));
    for (uint32_t set = 0; set < 2; ++set)
        for (uint32_t a = 0; a < 4; ++a)
            for (uint32_t b = a + 1; b < 4; ++b)
                if (p.stamp(set, a) != 0 || p.stamp(set, b) != 0) {
                    EXPECT_NE(p.stamp(set, a), p.stamp(set, b));
                }
}

TEST(TreeLru, FreshStateSelectsWayZero) {
    tree_lru_policy p(1, 8);
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(TreeLru, TouchOrderZeroToThreeEvictsZero) {
    tree_lru_policy p(1, 4);
    for (uint32_t w = 0; w < 4; ++w) p.on_insert(0, w);
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(TreeLru, NonPowerOfTwoRejected) {
    EXPECT_THROW(tree_lru_policy(1, 3), config_error);
    EXPECT_THROW(tree_lru_policy(1, 6), config_error);
    EXPECT_NO_THROW(tree_lru_policy(1, 1));
}

// At associativity 2 the single tree bit is exactly true LRU. Exhaustive
// over short access sequences from a 3-block alphabet (the full-length sweep
// lives in the acceptance suite).
TEST(TreeLru, MatchesLruAtAssocTwo) {
    hierarchy_config cfg = single_level(1, 2);
    for (int len = 1; len <= 7; ++len) {
        uint64_t total = 1;
        for (int i = 0; i < len; ++i) total *= 3;
        for (uint64_t code = 0; code < total; ++code) {
            std::vector<uint64_t> blocks;
            uint64_t c = code;
            for (int i = 0; i < len; ++i) {
                blocks.push_back(c % 3);
                c /= 3;
            }
            auto events = ilab_test::events_for_blocks(blocks);
            auto lru = run_full(events, cfg, {policy_kind::lru}, 0);
            auto tree = run_full(events, cfg, {policy_kind::tree_lru}, 0);
            ASSERT_EQ(lru.llc_misses(), tree.llc_misses())
                << "sequence code " << code << " length " << len;
        }
    }
}

TEST(RandomPolicy, SingleWayDegenerate) {
    random_policy p(1, 1, 99);
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(RandomPolicy, DeterministicUnderSeed) {
    random_policy a(4, 4, 1234), b(4, 4, 1234), c(4, 4, 1235);
    std::vector<uint32_t> va, vb, vc;
    for (int i = 0; i < 1000; ++i) {
        uint32_t set = static_cast<uint32_t>(i % 4);
        va.push_back(a.victim(set));
        vb.push_back(b.victim(set));
        vc.push_back(c.victim(set));
    }
    EXPECT_EQ(va, vb);
    EXPECT_NE(va, vc);
}

TEST(RandomPolicy, VictimsUniformOverWays) {
    random_policy p(1, 4, 2024);
    std::array<uint64_t, 4> count{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++count[p.victim(0)];
    for (uint64_t c : count) {
        double freq = static_cast<double>(c) / n;
        EXPECT_GE(freq, 0.24);
        EXPECT_LE(freq, 0.26);
    }
}

// Hand trace with M=2, 2 ways: insert X, insert Y, hit X, insert Z. The
// victim scan ages X 0->1 and Y 2->3, so Y is evicted.
TEST(Srrip, HandTraceEvictsAgedWay) {
    srrip_policy p(1, 2, 2);
    p.on_insert(0, 0);  // X: rrpv 2
    p.on_insert(0, 1);  // Y: rrpv 2
    p.on_hit(0, 0);     // X: rrpv 0
    EXPECT_EQ(p.victim(0), 1u);
    EXPECT_EQ(p.rrpv(0, 0), 1);  // X aged 0 -> 1
    EXPECT_EQ(p.rrpv(0, 1), 3);  // Y aged 2 -> 3
}

TEST(Srrip, LeftmostTieBreak) {
    srrip_policy p(1, 4, 2);
    // fresh state has every way at max RRPV already
    EXPECT_EQ(p.victim(0), 0u);
}

TEST(Srrip, HitWayOutlivesHigherRrpvWays) {
    srrip_policy p(1, 4, 2);
    for (uint32_t w = 0; w < 4; ++w) p.on_insert(0, w);
    p.on_hit(0, 2);
    EXPECT_NE(p.victim(0), 2u);
}

TEST(Srrip, RrpvStaysInRange) {
    srrip_policy p(1, 4, 2);
    rng r(5);
    for (int i = 0; i < 2000; ++i) {
        uint32_t w = static_cast<uint32_t>(r.next_below(4));
        switch (r.next_below(3)) {
            case 0: p.on_insert(0, w); break;
            case 1: p.on_hit(0, w); break;
            default: p.victim(0); break;
        }
        for (uint32_t way = 0; way < 4; ++way) EXPECT_LE(p.rrpv(0, way), 3);
    }
}

TEST(Brrip, ThrottleOneIsExactlySrrip) {
    hierarchy_config cfg = single_level(4, 4);
    rng r(11);
    std::vector<uint64_t> blocks;
    for (int i = 0; i < 5000; ++i) blocks.push_back(r.next_below(64));
    auto events = ilab_test::events_for_blocks(blocks);

    auto a = run_full(events, cfg, policy_params{policy_kind::srrip, 2, 32}, 0);
    auto b = run_full(events, cfg, policy_params{policy_kind::brrip, 2, 1}, 0);
    EXPECT_EQ(a.llc_misses(), b.llc_misses());
}

TEST(Brrip, LongInsertionsAtThrottleMultiples) {
    brrip_policy p(1, 2, 2, 32);
    std::vector<int> long_indices;
    for (int i = 1; i <= 64; ++i) {
        p.on_insert(0, 0);
        if (p.rrpv(0, 0) == 2) long_indices.push_back(i);  // "long" insertion
    }
    ASSERT_EQ(long_indices.size(), 2u);
    EXPECT_EQ(long_indices[0], 32);
    EXPECT_EQ(long_indices[1], 64);
}

// Cyclic loop of 32 blocks over a 16-block cache: LRU misses everything,
// BRRIP's occasional long insertions keep a few residents.
TEST(Brrip, BeatsLruOnThrashingLoop) {
    hierarchy_config cfg = single_level(4, 4);  // 16 blocks
    std::vector<uint64_t> blocks;
    for (int rep = 0; rep < 50; ++rep)
        for (uint64_t b = 0; b < 32; ++b) blocks.push_back(b);
    auto events = ilab_test::events_for_blocks(blocks);

    auto lru = run_full(events, cfg, {policy_kind::lru}, 0);
    auto brrip = run_full(events, cfg, policy_params{policy_kind::brrip, 2, 32}, 0);
    EXPECT_LT(brrip.llc_misses(), lru.llc_misses());
    EXPECT_EQ(lru.llc_misses(), events.size());  // pure thrash under LRU
}

TEST(PolicyParams, JsonRoundTripAndStrings) {
    policy_params p{policy_kind::brrip, 3, 16};
    auto q = policy_params_from_json(policy_params_to_json(p));
    EXPECT_EQ(p, q);
    EXPECT_EQ(policy_kind_from_string("TreeLRU"), policy_kind::tree_lru);
    EXPECT_THROW(policy_kind_from_string("FIFO"), config_error);
    // bare string form used in experiment specs
    auto r = policy_params_from_json(nlohmann::json("SRRIP"));
    EXPECT_EQ(r.kind, policy_kind::srrip);
}

TEST(PolicyFactory, InvalidParamsRejected) {
    EXPECT_THROW(make_policy({policy_kind::srrip, 0, 32}, 1, 4, 0), config_error);
    EXPECT_THROW(make_policy({policy_kind::brrip, 2, 0}, 1, 4, 0), config_error);
}

}  // namespace

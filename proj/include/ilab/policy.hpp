#pragma once

#include <bit>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/support.hpp"

namespace ilab {

enum class policy_kind { lru, tree_lru, random, srrip, brrip };

inline const char* to_string(policy_kind k) {
    switch (k) {
        case policy_kind::lru: return "LRU";
        case policy_kind::tree_lru: return "TreeLRU";
        case policy_kind::random: return "Random";
        case policy_kind::srrip: return "SRRIP";
        case policy_kind::brrip: return "BRRIP";
    }
    return "?";
}

inline policy_kind policy_kind_from_string(const std::string& s) {
    if (s == "LRU") return policy_kind::lru;
    if (s == "TreeLRU") return policy_kind::tree_lru;
    if (s == "Random") return policy_kind::random;
    if (s == "SRRIP") return policy_kind::srrip;
    if (s == "BRRIP") return policy_kind::brrip;
    throw config_error("unknown replacement policy '" + s + "'");
}

struct policy_params {
    policy_kind kind = policy_kind::lru;
    unsigned rrpv_bits = 2;          // M for SRRIP/BRRIP
    unsigned bimodal_throttle = 32;  // BRRIP: every k-th insertion is "long"

    bool operator==(const policy_params&) const = default;
};

inline policy_params policy_params_from_json(const nlohmann::json& j) {
    policy_params p;
    if (j.is_string()) {
        p.kind = policy_kind_from_string(j.get<std::string>());
        return p;
    }
    try {
        p.kind = policy_kind_from_string(j.at("kind").get<std::string>());
        p.rrpv_bits = j.value("rrpv_bits", 2u);
        p.bimodal_throttle = j.value("bimodal_throttle", 32u);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("policy config: ") + e.what());
    }
    return p;
}

inline nlohmann::json policy_params_to_json(const policy_params& p) {
    return {{"kind", to_string(p.kind)},
            {"rrpv_bits", p.rrpv_bits},
            {"bimodal_throttle", p.bimodal_throttle}};
}

// ---------------------------------------------------------------------------
// Per-set replacement interface. The cache owns validity: victim() is only
// ever called on a full set, so no policy sees an unfilled way.
// ---------------------------------------------------------------------------

class replacement_policy {
public:
    virtual ~replacement_policy() = default;
    virtual void on_hit(uint32_t set, uint32_t way) = 0;
    virtual void on_insert(uint32_t set, uint32_t way) = 0;
    virtual uint32_t victim(uint32_t set) = 0;
};

// Victim is the way with the oldest touch. Timestamps come from a per-set
// monotonic counter, so they are distinct within a set and never wrap at
// trace scale (64-bit).
class lru_policy : public replacement_policy {
public:
    lru_policy(uint32_t sets, uint32_t ways)
        : ways_(ways), stamp_(static_cast<size_t>(sets) * ways, 0), clock_(sets, 0) {}

    void on_hit(uint32_t set, uint32_t way) override { touch(set, way); }
    void on_insert(uint32_t set, uint32_t way) override { touch(set, way); }

    uint32_t victim(uint32_t set) override {
        const uint64_t* row = &stamp_[static_cast<size_t>(set) * ways_];
        uint32_t oldest = 0;
        for (uint32_t w = 1; w < ways_; ++w)
            if (row[w] < row[oldest]) oldest = w;
        return oldest;
    }

    uint64_t stamp(uint32_t set, uint32_t way) const {
        return stamp_[static_cast<size_t>(set) * ways_ + way];
    }

private:
    void touch(uint32_t set, uint32_t way) {
        stamp_[static_cast<size_t>(set) * ways_ + way] = ++clock_[set];
    }

    uint32_t ways_;
    std::vector<uint64_t> stamp_;
    std::vector<uint64_t> clock_;
};

/**
 * Tree pseudo-LRU: assoc-1 one-bit nodes per set, root at index 0, children
 * of node i at 2i+1 / 2i+2. A node's bit is the direction the victim walk
 * takes, so touching a way flips the bits on its path to point away from it.
 * All-zero state selects way 0. Exactly true LRU at associativity 2.
 */
class tree_lru_policy : public replacement_policy {
public:
    tree_lru_policy(uint32_t sets, uint32_t ways) : ways_(ways) {
        if (!std::has_single_bit(ways))
            throw config_error("TreeLRU requires a power-of-two associativity, got " +
                               std::to_string(ways));
        levels_ = static_cast<uint32_t>(std::bit_width(ways) - 1);
        bits_.assign(static_cast<size_t>(sets) * (ways - 1), 0);
    }

    void on_hit(uint32_t set, uint32_t way) override { touch(set, way); }
    void on_insert(uint32_t set, uint32_t way) override { touch(set, way); }

    uint32_t victim(uint32_t set) override {
        const uint8_t* tree = node_row(set);
        uint32_t node = 0;
        uint32_t way = 0;
        for (uint32_t l = 0; l < levels_; ++l) {
            uint32_t d = tree[node];
            way = (way << 1) | d;
            node = 2 * node + 1 + d;
        }
        return way;
    }

private:
    void touch(uint32_t set, uint32_t way) {
        uint8_t* tree = node_row(set);
        uint32_t node = 0;
        for (uint32_t l = 0; l < levels_; ++l) {
            uint32_t d = (way >> (levels_ - 1 - l)) & 1;
            tree[node] = static_cast<uint8_t>(1 - d);
            node = 2 * node + 1 + d;
        }
    }

    uint8_t* node_row(uint32_t set) {
        return bits_.data() + static_cast<size_t>(set) * (ways_ - 1);
    }

    uint32_t ways_;
    uint32_t levels_;
    std::vector<uint8_t> bits_;
};

// One PRNG per set, seeded from (run seed, set index), so the victim
// sequence in a set does not depend on how accesses interleave across sets.
class random_policy : public replacement_policy {
public:
    random_policy(uint32_t sets, uint32_t ways, uint64_t seed) : ways_(ways) {
        states_.reserve(sets);
        for (uint32_t s = 0; s < sets; ++s)
            states_.push_back(derive_seed(seed, "random-set", s));
    }

    void on_hit(uint32_t, uint32_t) override {}
    void on_insert(uint32_t, uint32_t) override {}

    uint32_t victim(uint32_t set) override {
        uint64_t raw = splitmix64(states_[set]);
        return static_cast<uint32_t>(
            (static_cast<unsigned __int128>(raw) * ways_) >> 64);
    }

private:
    uint32_t ways_;
    std::vector<uint64_t> states_;
};

/**
 * Static RRIP with M-bit re-reference prediction values. Inserts predict a
 * "long" interval (2^M-2), hits promote to 0, and the victim is the leftmost
 * way at the "distant" value (2^M-1), aging every way until one qualifies.
 */
class srrip_policy : public replacement_policy {
public:
    srrip_policy(uint32_t sets, uint32_t ways, unsigned rrpv_bits) : ways_(ways) {
        if (rrpv_bits < 1) throw config_error("SRRIP requires rrpv_bits >= 1");
        max_rrpv_ = static_cast<uint8_t>((1u << rrpv_bits) - 1);
        rrpv_.assign(static_cast<size_t>(sets) * ways, max_rrpv_);
    }

    void on_hit(uint32_t set, uint32_t way) override {
        rrpv_[static_cast<size_t>(set) * ways_ + way] = 0;
    }

    void on_insert(uint32_t set, uint32_t way) override {
        rrpv_[static_cast<size_t>(set) * ways_ + way] = insertion_rrpv();
    }

    uint32_t victim(uint32_t set) override {
        uint8_t* row = &rrpv_[static_cast<size_t>(set) * ways_];
        for (;;) {
            for (uint32_t w = 0; w < ways_; ++w)
                if (row[w] == max_rrpv_) return w;
            for (uint32_t w = 0; w < ways_; ++w) ++row[w];
        }
    }

    uint8_t rrpv(uint32_t set, uint32_t way) const {
        return rrpv_[static_cast<size_t>(set) * ways_ + way];
    }

protected:
    virtual uint8_t insertion_rrpv() { return static_cast<uint8_t>(max_rrpv_ - 1); }

    uint32_t ways_;
    uint8_t max_rrpv_;
    std::vector<uint8_t> rrpv_;
};

// Bimodal RRIP: mostly "distant" insertions; every k-th insertion (a
// deterministic counter, not a PRNG) is "long". throttle=1 degenerates to
// SRRIP. Hit and victim behaviour are inherited unchanged.
class brrip_policy : public srrip_policy {
public:
    brrip_policy(uint32_t sets, uint32_t ways, unsigned rrpv_bits, unsigned throttle)
        : srrip_policy(sets, ways, rrpv_bits), throttle_(throttle) {
        if (throttle < 1) throw config_error("BRRIP requires bimodal_throttle >= 1");
    }

    uint64_t insertions() const { return insertions_; }

protected:
    uint8_t insertion_rrpv() override {
        ++insertions_;
        bool long_insert = (insertions_ % throttle_) == 0;
        return static_cast<uint8_t>(long_insert ? max_rrpv_ - 1 : max_rrpv_);
    }

private:
    unsigned throttle_;
    uint64_t insertions_ = 0;
};

inline std::unique_ptr<replacement_policy> make_policy(const policy_params& params,
                                                       uint32_t sets, uint32_t ways,
                                                       uint64_t seed) {
    switch (params.kind) {
        case policy_kind::lru:
            return std::make_unique<lru_policy>(sets, ways);
        case policy_kind::tree_lru:
            return std::make_unique<tree_lru_policy>(sets, ways);
        case policy_kind::random:
            return std::make_unique<random_policy>(sets, ways, seed);
        case policy_kind::srrip:
            return std::make_unique<srrip_policy>(sets, ways, params.rrpv_bits);
        case policy_kind::brrip:
            return std::make_unique<brrip_policy>(sets, ways, params.rrpv_bits,
                                                  params.bimodal_throttle);
    }
    throw config_error("unhandled policy kind");
}

}  // namespace ilab

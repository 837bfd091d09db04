#pragma once

#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/policy.hpp"
#include "ilab/support.hpp"
#include "ilab/trace.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// Functional multi-level cache with an analytic timing model:
//   cycles = instructions * base_cpi
//          + sum over levels of misses_i * (next level hit latency,
//                                           or memory latency at the LLC)
// Lookup is inclusive (a miss at level i probes i+1 and fills i on the way
// back); evictions are silent. No prefetch, no MSHR/overlap modeling.
// ---------------------------------------------------------------------------

struct cache_level_config {
    std::string name;
    uint64_t size_bytes = 0;
    uint32_t associativity = 0;
    uint32_t line_size = 64;
    uint32_t hit_latency = 1;
    policy_params policy;
    bool shared_by_upstream = false;
    uint32_t mshrs = 0;  // recorded from configs, not modeled
};

struct hierarchy_config {
    std::vector<cache_level_config> levels;  // L1 first, LLC last
    uint32_t memory_latency = 100;
    double base_cpi = 1.0;
};

inline void validate(const cache_level_config& c) {
    std::string where = "cache level '" + c.name + "': ";
    if (c.line_size == 0 || c.associativity == 0 || c.size_bytes == 0)
        throw config_error(where + "size, associativity and line_size must be nonzero");
    uint64_t denom = static_cast<uint64_t>(c.associativity) * c.line_size;
    if (c.size_bytes % denom != 0)
        throw config_error(where + "size not divisible by associativity * line_size");
    uint64_t sets = c.size_bytes / denom;
    if (!std::has_single_bit(sets))
        throw config_error(where + "set count " + std::to_string(sets) +
                           " is not a power of two");
    if (c.hit_latency < 1) throw config_error(where + "hit_latency must be >= 1");
}

inline void validate(const hierarchy_config& h) {
    if (h.levels.empty()) throw config_error("hierarchy: needs at least one cache level");
    for (const auto& l : h.levels) validate(l);
    for (size_t i = 1; i < h.levels.size(); ++i)
        if (h.levels[i].line_size < h.levels[i - 1].line_size)
            throw config_error("hierarchy: line_size must be non-decreasing from L1 to LLC");
    if (h.memory_latency < 1) throw config_error("hierarchy: memory_latency must be >= 1");
    if (h.base_cpi <= 0) throw config_error("hierarchy: base_cpi must be > 0");
}

struct level_stats {
    uint64_t accesses = 0;
    uint64_t hits = 0;
    uint64_t misses = 0;
};

struct sim_stats {
    uint64_t instructions = 0;
    std::vector<std::string> level_names;
    std::vector<level_stats> levels;
    double cycles = 0.0;
    double mpki_llc = 0.0;
    double cpi = 0.0;

    uint64_t llc_misses() const { return levels.empty() ? 0 : levels.back().misses; }
};

struct timeline_point {
    uint64_t window_start = 0;
    uint64_t window_length = 0;
    uint64_t llc_misses = 0;
    double mpki_llc = 0.0;
};

namespace detail {

class cache_level {
public:
    cache_level(const cache_level_config& cfg, uint64_t seed) : cfg_(cfg) {
        sets_ = static_cast<uint32_t>(cfg.size_bytes /
                                      (static_cast<uint64_t>(cfg.associativity) * cfg.line_size));
        ways_ = cfg.associativity;
        blocks_.assign(static_cast<size_t>(sets_) * ways_, 0);
        valid_.assign(static_cast<size_t>(sets_) * ways_, 0);
        policy_ = make_policy(cfg.policy, sets_, ways_, seed);
    }

    // Probes for `block`; on hit updates recency and returns true. On miss
    // returns false without filling (the hierarchy fills after the lower
    // levels resolve).
    bool lookup(uint64_t block) {
        uint32_t set = set_of(block);
        size_t base = static_cast<size_t>(set) * ways_;
        for (uint32_t w = 0; w < ways_; ++w) {
            if (valid_[base + w] && blocks_[base + w] == block) {
                policy_->on_hit(set, w);
                return true;
            }
        }
        return false;
    }

    // Free ways are filled first; only a full set consults the policy for a
    // victim. Evictions are silent.
    void fill(uint64_t block) {
        uint32_t set = set_of(block);
        size_t base = static_cast<size_t>(set) * ways_;
        for (uint32_t w = 0; w < ways_; ++w) {
            if (!valid_[base + w]) {
                valid_[base + w] = 1;
                blocks_[base + w] = block;
                policy_->on_insert(set, w);
                return;
            }
        }
        uint32_t w = policy_->victim(set);
        blocks_[base + w] = block;
        policy_->on_insert(set, w);
    }

    const cache_level_config& config() const { return cfg_; }
    uint32_t sets() const { return sets_; }

private:
    uint32_t set_of(uint64_t block) const { return static_cast<uint32_t>(block & (sets_ - 1)); }

    cache_level_config cfg_;
    uint32_t sets_ = 0;
    uint32_t ways_ = 0;
    std::vector<uint64_t> blocks_;
    std::vector<uint8_t> valid_;
    std::unique_ptr<replacement_policy> policy_;
};

}  // namespace detail

// Simulation state for one run. A hierarchy is owned by a single run and is
// never shared; distinct runs are independent.
class hierarchy {
public:
    struct access_outcome {
        uint32_t levels_probed = 0;  // levels looked up, starting at L1
        bool hit = false;            // whether the last probed level hit
    };

    // `policy_override`, when set, replaces every level's configured policy;
    // this is how one hierarchy is evaluated under each candidate policy.
    hierarchy(const hierarchy_config& cfg, std::optional<policy_params> policy_override,
              uint64_t seed)
        : cfg_(cfg) {
        validate(cfg);
        for (size_t i = 0; i < cfg.levels.size(); ++i) {
            cache_level_config lc = cfg.levels[i];
            if (policy_override) lc.policy = *policy_override;
            levels_.emplace_back(lc, derive_seed(seed, "level", i));
            counters_.push_back({});
        }
    }

    // Looks levels up in order; a miss recurses to the next level (or
    // memory), then fills on the way back so the hierarchy stays inclusive.
    access_outcome access(uint64_t addr, bool is_store) {
        (void)is_store;  // no writeback modeling; loads and stores count alike
        access_outcome out;
        uint32_t depth = static_cast<uint32_t>(levels_.size());
        uint32_t hit_level = depth;  // depth == resolved by memory
        for (uint32_t i = 0; i < depth; ++i) {
            uint64_t block = addr / levels_[i].config().line_size;
            bool hit = levels_[i].lookup(block);
            if (counting_) {
                ++counters_[i].accesses;
                if (hit)
                    ++counters_[i].hits;
                else
                    ++counters_[i].misses;
            }
            if (hit) {
                hit_level = i;
                break;
            }
        }
        for (uint32_t i = 0; i < std::min(hit_level, depth); ++i)
            levels_[i].fill(addr / levels_[i].config().line_size);

        out.levels_probed = std::min(hit_level + 1, depth);
        out.hit = hit_level < depth;
        return out;
    }

    void set_counting(bool on) { counting_ = on; }
    void reset_counters() {
        for (auto& c : counters_) c = level_stats{};
    }

    const std::vector<level_stats>& counters() const { return counters_; }
    const hierarchy_config& config() const { return cfg_; }

    uint64_t llc_misses() const { return counters_.back().misses; }

    sim_stats finalize(uint64_t instructions) const {
        if (instructions == 0) throw config_error("finalize: zero instructions");
        sim_stats s;
        s.instructions = instructions;
        s.levels = counters_;
        for (const auto& l : cfg_.levels) s.level_names.push_back(l.name);
        double cycles = static_cast<double>(instructions) * cfg_.base_cpi;
        for (size_t i = 0; i < counters_.size(); ++i) {
            double penalty = (i + 1 < counters_.size())
                                 ? static_cast<double>(cfg_.levels[i + 1].hit_latency)
                                 : static_cast<double>(cfg_.memory_latency);
            cycles += static_cast<double>(counters_[i].misses) * penalty;
        }
        s.cycles = cycles;
        s.mpki_llc = 1000.0 * static_cast<double>(s.llc_misses()) /
                     static_cast<double>(instructions);
        s.cpi = cycles / static_cast<double>(instructions);
        return s;
    }

private:
    hierarchy_config cfg_;
    std::vector<detail::cache_level> levels_;
    std::vector<level_stats> counters_;
    bool counting_ = true;
};

// ---------------------------------------------------------------------------
// Run drivers. All are deterministic given (trace, config, policy, seed);
// the seed only influences the Random policy's victim stream.
// ---------------------------------------------------------------------------

inline sim_stats run_full(std::span<const trace_event> events, const hierarchy_config& cfg,
                          const policy_params& policy, uint64_t seed) {
    if (events.empty()) throw empty_trace_error("run_full: empty trace");
    hierarchy h(cfg, policy, seed);
    for (const auto& e : events)
        if (e.mem) h.access(e.mem->addr, e.mem->is_store);
    return h.finalize(events.size());
}

// Warmup events update cache state with counters off; only [start,
// start+length) is measured.
inline sim_stats run_interval(std::span<const trace_event> events, const hierarchy_config& cfg,
                              const policy_params& policy, uint64_t start, uint64_t length,
                              uint64_t warmup, uint64_t seed) {
    if (length == 0) throw config_error("run_interval: zero-length interval");
    if (start + length > events.size())
        throw config_error("run_interval: interval [" + std::to_string(start) + ", " +
                           std::to_string(start + length) + ") exceeds trace size " +
                           std::to_string(events.size()));
    if (warmup > start)
        throw config_error("run_interval: warmup " + std::to_string(warmup) +
                           " exceeds interval start " + std::to_string(start));

    hierarchy h(cfg, policy, seed);
    h.set_counting(false);
    for (uint64_t i = start - warmup; i < start; ++i)
        if (events[i].mem) h.access(events[i].mem->addr, events[i].mem->is_store);
    h.set_counting(true);
    for (uint64_t i = start; i < start + length; ++i)
        if (events[i].mem) h.access(events[i].mem->addr, events[i].mem->is_store);
    return h.finalize(length);
}

// One continuous simulation with LLC-miss counters snapshotted every
// `window_size` instructions, so window misses sum exactly to the full-run
// count.
inline std::vector<timeline_point> mpki_timeline(std::span<const trace_event> events,
                                                 const hierarchy_config& cfg,
                                                 const policy_params& policy,
                                                 uint64_t window_size, uint64_t seed) {
    if (window_size == 0) throw config_error("mpki_timeline: window_size must be >= 1");
    if (events.empty()) throw empty_trace_error("mpki_timeline: empty trace");

    hierarchy h(cfg, policy, seed);
    std::vector<timeline_point> points;
    uint64_t window_start = 0;
    uint64_t misses_before = 0;
    for (uint64_t i = 0; i < events.size(); ++i) {
        if (events[i].mem) h.access(events[i].mem->addr, events[i].mem->is_store);
        bool window_end = ((i + 1 - window_start) == window_size) || (i + 1 == events.size());
        if (window_end) {
            uint64_t misses_now = h.llc_misses();
            timeline_point p;
            p.window_start = window_start;
            p.window_length = i + 1 - window_start;
            p.llc_misses = misses_now - misses_before;
            p.mpki_llc = 1000.0 * static_cast<double>(p.llc_misses) /
                         static_cast<double>(p.window_length);
            points.push_back(p);
            misses_before = misses_now;
            window_start = i + 1;
        }
    }
    return points;
}

// --- JSON configuration ----------------------------------------------------

inline cache_level_config level_from_json(const nlohmann::json& j) {
    cache_level_config c;
    try {
        c.name = j.at("name").get<std::string>();
        c.size_bytes = j.at("size").get<uint64_t>();
        c.associativity = j.at("associativity").get<uint32_t>();
        c.line_size = j.value("line_size", 64u);
        c.hit_latency = j.at("hit_latency").get<uint32_t>();
        if (j.contains("policy")) c.policy = policy_params_from_json(j.at("policy"));
        c.shared_by_upstream = j.value("shared", false);
        c.mshrs = j.value("mshrs", 0u);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("cache level config: ") + e.what());
    }
    return c;
}

inline hierarchy_config hierarchy_from_json(const nlohmann::json& j) {
    hierarchy_config h;
    try {
        for (const auto& jl : j.at("levels")) h.levels.push_back(level_from_json(jl));
        h.memory_latency = j.value("memory_latency", 100u);
        h.base_cpi = j.value("base_cpi", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("hierarchy config: ") + e.what());
    }
    validate(h);
    return h;
}

inline nlohmann::json hierarchy_to_json(const hierarchy_config& h) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : h.levels) {
        levels.push_back({{"name", l.name},
                          {"size", l.size_bytes},
                          {"associativity", l.associativity},
                          {"line_size", l.line_size},
                          {"hit_latency", l.hit_latency},
                          {"policy", policy_params_to_json(l.policy)},
                          {"shared", l.shared_by_upstream},
                          {"mshrs", l.mshrs}});
    }
    return {{"levels", levels}, {"memory_latency", h.memory_latency}, {"base_cpi", h.base_cpi}};
}

// Default per-core hierarchy, modeled on a commodity ARM server:
// 64KB/4-way L1D (4 cycles, 4 MSHRs), 512KB/8-way private L2 (8 cycles, 20
// MSHRs), 1MB/8-way shared LLC (37 cycles, 24 MSHRs), 64B lines. MSHR
// counts are recorded but take no part in the timing model.
inline hierarchy_config server_hierarchy() {
    hierarchy_config h;
    h.levels = {
        {"L1D", 64 * 1024, 4, 64, 4, {}, false, 4},
        {"L2", 512 * 1024, 8, 64, 8, {}, false, 20},
        {"L3", 1024 * 1024, 8, 64, 37, {}, true, 24},
    };
    h.memory_latency = 100;
    h.base_cpi = 1.0;
    return h;
}

// Scaled-down hierarchy for desk-scale experiments and tests: 512B L1,
// 1KB L2, 4KB LLC (64 blocks), same latencies as the reference config.
inline hierarchy_config desk_hierarchy() {
    hierarchy_config h;
    h.levels = {
        {"L1D", 512, 2, 64, 4, {}, false, 4},
        {"L2", 1024, 4, 64, 8, {}, false, 20},
        {"L3", 4096, 4, 64, 37, {}, true, 24},
    };
    h.memory_latency = 100;
    h.base_cpi = 1.0;
    return h;
}

inline hierarchy_config single_level(uint32_t sets, uint32_t ways, uint32_t line_size = 64,
                                     uint32_t memory_latency = 100) {
    hierarchy_config h;
    h.levels = {{"L1", static_cast<uint64_t>(sets) * ways * line_size, ways, line_size, 1, {},
                 false, 0}};
    h.memory_latency = memory_latency;
    h.base_cpi = 1.0;
    return h;
}

// --- Stats serialization (one row per run, descriptors + counters) ---------

inline nlohmann::json stats_to_json(const sim_stats& s) {
    nlohmann::json levels = nlohmann::json::array();
    for (size_t i = 0; i < s.levels.size(); ++i) {
        levels.push_back({{"name", i < s.level_names.size() ? s.level_names[i] : ""},
                          {"accesses", s.levels[i].accesses},
                          {"hits", s.levels[i].hits},
                          {"misses", s.levels[i].misses}});
    }
    return {{"instructions", s.instructions}, {"levels", levels},       {"cycles", s.cycles},
            {"mpki_llc", s.mpki_llc},         {"cpi", s.cpi}};
}

inline sim_stats stats_from_json(const nlohmann::json& j) {
    sim_stats s;
    try {
        s.instructions = j.at("instructions").get<uint64_t>();
        for (const auto& jl : j.at("levels")) {
            s.level_names.push_back(jl.value("name", ""));
            s.levels.push_back({jl.at("accesses").get<uint64_t>(),
                                jl.at("hits").get<uint64_t>(),
                                jl.at("misses").get<uint64_t>()});
        }
        s.cycles = j.at("cycles").get<double>();
        s.mpki_llc = j.at("mpki_llc").get<double>();
        s.cpi = j.at("cpi").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("stats row: ") + e.what());
    }
    return s;
}

}  // namespace ilab

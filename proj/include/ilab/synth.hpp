#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ilab/support.hpp"
#include "ilab/trace.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// Synthetic phase-structured workloads. Each phase draws basic blocks from
// its palette and cycles memory accesses over `footprint` distinct cache
// blocks at `stride` bytes. Code similarity (palette) and cache footprint
// vary independently, so two phases can look identical to a BBV while
// behaving very differently in the LLC.
// ---------------------------------------------------------------------------

struct synth_phase {
    uint64_t instruction_count = 0;
    std::vector<uint32_t> bb_palette;
    uint64_t footprint = 0;   // distinct cache blocks touched
    uint64_t stride = 64;     // bytes between consecutive blocks
    double mix = 1.0;         // fraction of events carrying a memory access
};

struct synthetic_workload_spec {
    std::string name = "synthetic";
    std::string input_label = "default";
    std::vector<synth_phase> phases;
    uint64_t seed = 0;
};

inline void validate(const synthetic_workload_spec& spec) {
    if (spec.phases.empty()) throw config_error("synthetic spec: phase list is empty");
    for (size_t i = 0; i < spec.phases.size(); ++i) {
        const auto& p = spec.phases[i];
        std::string where = "synthetic spec: phase " + std::to_string(i);
        if (p.instruction_count == 0) throw config_error(where + ": instruction_count must be > 0");
        if (p.bb_palette.empty()) throw config_error(where + ": bb_palette is empty");
        if (p.mix < 0.0 || p.mix > 1.0) throw config_error(where + ": mix must be in [0,1]");
        if (p.footprint == 0 && p.mix > 0.0)
            throw config_error(where + ": footprint=0 with mix>0");
        if (p.stride == 0 && p.mix > 0.0)
            throw config_error(where + ": stride must be >= 1 when the phase touches memory");
    }
}

inline std::pair<trace_meta, std::vector<trace_event>> generate_synthetic(
    const synthetic_workload_spec& spec) {
    validate(spec);

    std::vector<trace_event> events;
    uint64_t total = 0;
    for (const auto& p : spec.phases) total += p.instruction_count;
    events.reserve(total);

    for (size_t pi = 0; pi < spec.phases.size(); ++pi) {
        const auto& phase = spec.phases[pi];
        rng r(derive_seed(spec.seed, "synth-phase", pi));
        // The address region is keyed by (palette, footprint, stride):
        // repeated instances of the same phase revisit the same data, while
        // phases differing in any of those live in disjoint regions.
        uint64_t region = fnv1a64(std::string_view(
            reinterpret_cast<const char*>(phase.bb_palette.data()),
            phase.bb_palette.size() * sizeof(uint32_t)));
        region = fnv1a64("footprint", region) ^ phase.footprint * 0x9e3779b97f4a7c15ULL;
        region = fnv1a64("stride", region) ^ phase.stride * 0xff51afd7ed558ccdULL;
        uint64_t base = ((region % (1u << 20)) + 1) << 40;
        uint64_t cursor = 0;
        for (uint64_t k = 0; k < phase.instruction_count; ++k) {
            trace_event e;
            e.bb_id = phase.bb_palette[r.next_below(phase.bb_palette.size())];
            e.pc = 0x400000ULL + static_cast<uint64_t>(e.bb_id) * 4;
            if (phase.mix > 0.0 && r.next_unit() < phase.mix) {
                uint64_t addr = base + (cursor % phase.footprint) * phase.stride;
                ++cursor;
                e.mem = mem_access{addr, r.next_below(4) == 0};
            }
            events.push_back(e);
        }
    }

    return {make_meta(spec.name, spec.input_label, events), std::move(events)};
}

// --- JSON form used by `trace gen --spec` and experiment files -------------

inline synth_phase synth_phase_from_json(const nlohmann::json& j) {
    synth_phase p;
    try {
        p.instruction_count = j.at("instructions").get<uint64_t>();
        p.bb_palette = j.at("bb_palette").get<std::vector<uint32_t>>();
        p.footprint = j.at("footprint").get<uint64_t>();
        p.stride = j.value("stride", 64u);
        p.mix = j.value("mix", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("synthetic phase: ") + e.what());
    }
    return p;
}

inline synthetic_workload_spec synth_spec_from_json(const nlohmann::json& j) {
    synthetic_workload_spec spec;
    try {
        spec.name = j.value("name", "synthetic");
        spec.input_label = j.value("input_label", "default");
        spec.seed = j.value("seed", 0ull);
        for (const auto& jp : j.at("phases")) spec.phases.push_back(synth_phase_from_json(jp));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("synthetic spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

inline nlohmann::json synth_spec_to_json(const synthetic_workload_spec& spec) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : spec.phases) {
        phases.push_back({{"instructions", p.instruction_count},
                          {"bb_palette", p.bb_palette},
                          {"footprint", p.footprint},
                          {"stride", p.stride},
                          {"mix", p.mix}});
    }
    return {{"name", spec.name},
            {"input_label", spec.input_label},
            {"seed", spec.seed},
            {"phases", phases}};
}

}  // namespace ilab

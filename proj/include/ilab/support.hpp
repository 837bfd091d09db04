#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ilab {

// ---------------------------------------------------------------------------
// Error hierarchy. The CLI maps these onto process exit codes:
//   config_error -> 2 (bad spec / configuration)
//   data_error   -> 3 (unreadable or inconsistent input data)
//   anything else-> 4
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 4; }
};

class config_error : public error {
public:
    explicit config_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 2; }
};

class data_error : public error {
public:
    explicit data_error(const std::string& msg) : error(msg) {}
    int exit_code() const override { return 3; }
};

// Trace file errors are distinct types so callers can tell them apart.
class bad_magic_error : public data_error {
public:
    explicit bad_magic_error(const std::string& msg) : data_error(msg) {}
};

class version_mismatch_error : public data_error {
public:
    explicit version_mismatch_error(const std::string& msg) : data_error(msg) {}
};

class truncated_record_error : public data_error {
public:
    truncated_record_error(const std::string& msg, uint64_t offset)
        : data_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    uint64_t offset() const { return offset_; }

private:
    uint64_t offset_;
};

class empty_trace_error : public data_error {
public:
    explicit empty_trace_error(const std::string& msg) : data_error(msg) {}
};

// Interval results do not line up with the plan they claim to cover.
class alignment_error : public data_error {
public:
    explicit alignment_error(const std::string& msg) : data_error(msg) {}
};

class empty_scenario_error : public data_error {
public:
    explicit empty_scenario_error(const std::string& msg) : data_error(msg) {}
};

// A closeness baseline value is zero, so the relative deviation is undefined.
class zero_baseline_error : public data_error {
public:
    explicit zero_baseline_error(const std::string& msg) : data_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic PRNG. std::uniform_*_distribution is implementation-defined,
// which breaks byte-identical outputs across toolchains, so everything that
// needs randomness goes through this splitmix64 generator.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class rng {
public:
    explicit rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Lemire multiply-shift; bias is irrelevant
    // here, determinism is what matters.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// One master seed fans out to per-component streams via labeled hashing.
inline uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index = 0) {
    uint64_t h = fnv1a64(label);
    h ^= master + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= index * 0xff51afd7ed558ccdULL;
    uint64_t s = h;
    return splitmix64(s);
}

// Stable shortest-ish formatting for report files. %.12g round-trips all the
// values we emit and never depends on locale.
inline std::string format_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace ilab

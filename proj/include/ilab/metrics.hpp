#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ilab/policy.hpp"
#include "ilab/support.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// Representativeness metrics: the pairwise `order` metric over the four
// deterministic policies (Random is excluded by definition, its victims are
// unpredictable) and the summed relative deviation `closeness`.
// ---------------------------------------------------------------------------

inline constexpr std::array<policy_kind, 4> kComparedPolicies = {
    policy_kind::lru, policy_kind::tree_lru, policy_kind::srrip, policy_kind::brrip};

// Metric values (MPKI or CPI) for the four compared policies, in the fixed
// order of kComparedPolicies.
struct policy_vector {
    std::array<double, 4> values{};

    static size_t index_of(policy_kind k) {
        for (size_t i = 0; i < kComparedPolicies.size(); ++i)
            if (kComparedPolicies[i] == k) return i;
        throw config_error(std::string("policy ") + to_string(k) +
                           " is not part of the compared set");
    }

    double& operator[](policy_kind k) { return values[index_of(k)]; }
    double operator[](policy_kind k) const { return values[index_of(k)]; }
};

namespace detail {

// Sign of a-b with a relative tie band: values within rel_tol of each other
// compare equal, so a tie only ever matches a tie.
inline int tri_compare(double a, double b, double rel_tol) {
    double scale = std::max(std::abs(a), std::abs(b));
    if (std::abs(a - b) <= rel_tol * scale) return 0;
    return a < b ? -1 : 1;
}

}  // namespace detail

// Counts, over the six unordered policy pairs, how many relative orderings
// under `proposal` disagree with `full`. 0 = same ranking everywhere, 6 =
// every pair flipped.
inline int order_metric(const policy_vector& full, const policy_vector& proposal,
                        double rel_tol = 1e-9) {
    int mismatches = 0;
    for (size_t a = 0; a < 4; ++a) {
        for (size_t b = a + 1; b < 4; ++b) {
            int sf = detail::tri_compare(full.values[a], full.values[b], rel_tol);
            int sp = detail::tri_compare(proposal.values[a], proposal.values[b], rel_tol);
            if (sf != sp) ++mismatches;
        }
    }
    return mismatches;
}

// closeness = sum_i |(full_i - proposal_i) / full_i| over the four compared
// policies. Undefined when any full value is zero; such benchmarks must be
// filtered out before calling.
inline double closeness(const policy_vector& full, const policy_vector& proposal) {
    double acc = 0.0;
    for (size_t i = 0; i < 4; ++i) {
        if (full.values[i] == 0.0)
            throw zero_baseline_error(
                std::string("closeness: full-simulation value for ") +
                to_string(kComparedPolicies[i]) + " is zero");
        acc += std::abs((full.values[i] - proposal.values[i]) / full.values[i]);
    }
    return acc;
}

inline double closeness_mpki(const policy_vector& full, const policy_vector& proposal) {
    return closeness(full, proposal);
}

inline double closeness_cpi(const policy_vector& full, const policy_vector& proposal) {
    return closeness(full, proposal);
}

// ---------------------------------------------------------------------------
// Scenario filtering and aggregation.
// ---------------------------------------------------------------------------

struct benchmark_record {
    std::string benchmark;
    std::string input;
    policy_vector full_mpki;
    policy_vector full_cpi;
    std::map<std::string, policy_vector> strategy_mpki;  // strategy name -> vector
    std::map<std::string, policy_vector> strategy_cpi;
    double lru_full_mpki = 0.0;
};

enum class scenario_kind { avg, avg_wo_low, avg_wo_low_excl, avg_high, avg_changes };

inline const char* to_string(scenario_kind s) {
    switch (s) {
        case scenario_kind::avg: return "Avg";
        case scenario_kind::avg_wo_low: return "Avg w/o low";
        case scenario_kind::avg_wo_low_excl: return "Avg w/o low excl";
        case scenario_kind::avg_high: return "Avg-high";
        case scenario_kind::avg_changes: return "Avg-changes";
    }
    return "?";
}

inline scenario_kind scenario_from_string(const std::string& s) {
    if (s == "Avg" || s == "avg") return scenario_kind::avg;
    if (s == "Avg w/o low" || s == "avg_wo_low") return scenario_kind::avg_wo_low;
    if (s == "Avg w/o low excl" || s == "avg_wo_low_excl") return scenario_kind::avg_wo_low_excl;
    if (s == "Avg-high" || s == "avg_high") return scenario_kind::avg_high;
    if (s == "Avg-changes" || s == "avg_changes") return scenario_kind::avg_changes;
    throw config_error("unknown scenario '" + s + "'");
}

struct scenario_params {
    double low_threshold = 0.1;                 // LRU full MPKI below this is "low"
    double high_fraction = 0.8;                 // Avg-high cumulative MPKI cutoff
    std::vector<std::string> exclude;           // extra names for avg_wo_low_excl
    std::string changes_strategy = "spt";       // Avg-changes looks at this strategy
};

inline std::vector<const benchmark_record*> scenario_filter(
    std::span<const benchmark_record> records, scenario_kind scenario,
    const scenario_params& params = {}) {
    std::vector<const benchmark_record*> out;
    switch (scenario) {
        case scenario_kind::avg:
            for (const auto& r : records) out.push_back(&r);
            break;
        case scenario_kind::avg_wo_low:
            for (const auto& r : records)
                if (r.lru_full_mpki >= params.low_threshold) out.push_back(&r);
            break;
        case scenario_kind::avg_wo_low_excl:
            for (const auto& r : records) {
                if (r.lru_full_mpki < params.low_threshold) continue;
                if (std::find(params.exclude.begin(), params.exclude.end(), r.benchmark) !=
                    params.exclude.end())
                    continue;
                out.push_back(&r);
            }
            break;
        case scenario_kind::avg_high: {
            // Smallest top-MPKI set whose cumulative LRU MPKI exceeds the
            // given fraction of the total.
            std::vector<const benchmark_record*> sorted;
            double total = 0.0;
            for (const auto& r : records) {
                sorted.push_back(&r);
                total += r.lru_full_mpki;
            }
            std::stable_sort(sorted.begin(), sorted.end(),
                             [](const benchmark_record* a, const benchmark_record* b) {
                                 return a->lru_full_mpki > b->lru_full_mpki;
                             });
            double acc = 0.0;
            for (const auto* r : sorted) {
                if (total > 0.0 && acc > params.high_fraction * total) break;
                out.push_back(r);
                acc += r->lru_full_mpki;
            }
            break;
        }
        case scenario_kind::avg_changes:
            for (const auto& r : records) {
                auto it = r.strategy_mpki.find(params.changes_strategy);
                if (it == r.strategy_mpki.end()) continue;
                if (order_metric(r.full_mpki, it->second) > 0) out.push_back(&r);
            }
            break;
    }
    if (out.empty())
        throw empty_scenario_error(std::string("scenario ") + to_string(scenario) +
                                   " selected no benchmarks");
    return out;
}

enum class mean_kind { arithmetic, geometric };

struct aggregate_result {
    double value = 0.0;
    bool floored = false;  // a zero was floored for the geometric mean
};

// Plain mean over `values`. The geometric mean floors non-positive entries
// at 1e-6 and flags the result, since it exists to damp outliers and exact
// zeros would otherwise annihilate it.
inline aggregate_result aggregate(std::span<const double> values, mean_kind mean) {
    if (values.empty()) throw config_error("aggregate: empty value set");
    aggregate_result res;
    if (mean == mean_kind::arithmetic) {
        res.value = std::accumulate(values.begin(), values.end(), 0.0) /
                    static_cast<double>(values.size());
        return res;
    }
    double log_sum = 0.0;
    for (double v : values) {
        if (v < 1e-6) {
            v = 1e-6;
            res.floored = true;
        }
        log_sum += std::log(v);
    }
    res.value = std::exp(log_sum / static_cast<double>(values.size()));
    return res;
}

// Two-stage mean: benchmarks with several inputs first collapse to their
// arithmetic mean, then one value per benchmark enters the requested mean.
inline aggregate_result two_stage_aggregate(
    std::span<const std::pair<std::string, double>> values, mean_kind mean) {
    if (values.empty()) throw config_error("two_stage_aggregate: empty value set");
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, uint64_t>> by_benchmark;
    for (const auto& [name, v] : values) {
        auto [it, inserted] = by_benchmark.try_emplace(name, 0.0, 0);
        if (inserted) order.push_back(name);
        it->second.first += v;
        it->second.second += 1;
    }
    std::vector<double> collapsed;
    collapsed.reserve(order.size());
    for (const auto& name : order) {
        const auto& [sum, count] = by_benchmark[name];
        collapsed.push_back(sum / static_cast<double>(count));
    }
    return aggregate(collapsed, mean);
}

}  // namespace ilab

#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ilab/cache.hpp"
#include "ilab/phase.hpp"
#include "ilab/policy.hpp"
#include "ilab/support.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// LLC-activity weight redefinition. The interval set is never changed, only
// the weights: simulations already done for the original plan are reused
// as-is, so reweighting costs no extra simulation time.
// ---------------------------------------------------------------------------

// Per-policy metric values aligned with an interval plan.
struct policy_result {
    policy_params policy;
    std::vector<sim_stats> per_interval;
    std::optional<sim_stats> full;
};

enum class metric_kind { mpki, cpi };

inline const char* to_string(metric_kind m) {
    return m == metric_kind::mpki ? "mpki" : "cpi";
}

namespace detail {

inline void check_alignment(const interval_plan& plan, const policy_result& result,
                            const char* op) {
    if (result.per_interval.size() != plan.intervals.size())
        throw alignment_error(std::string(op) + ": result has " +
                              std::to_string(result.per_interval.size()) +
                              " interval rows, plan has " +
                              std::to_string(plan.intervals.size()));
}

// Normalizes `activity` into weights. A plan whose intervals all show zero
// activity keeps its original weights and is flagged in provenance, since
// activity-proportional weighting is meaningless there.
inline interval_plan reweight_by(const interval_plan& plan, std::span<const double> activity,
                                 strategy_kind strategy, nlohmann::json provenance) {
    double sum = 0.0;
    for (double a : activity) sum += a;

    interval_plan out = plan;
    out.strategy = strategy;
    out.provenance = std::move(provenance);
    if (sum <= 0.0) {
        out.provenance["all_zero_fallback"] = true;
        return out;
    }
    for (size_t i = 0; i < out.intervals.size(); ++i)
        out.intervals[i].weight = activity[i] / sum;
    return out;
}

}  // namespace detail

// weight_s = MPKI(LRU, s) / sum_i MPKI(LRU, i)
inline interval_plan mpkilru_weights(const interval_plan& plan, const policy_result& lru_result) {
    if (lru_result.policy.kind != policy_kind::lru)
        throw config_error("mpkilru_weights: results must come from the LRU policy, got " +
                           std::string(to_string(lru_result.policy.kind)));
    detail::check_alignment(plan, lru_result, "mpkilru_weights");

    std::vector<double> activity;
    activity.reserve(plan.intervals.size());
    for (const auto& s : lru_result.per_interval) activity.push_back(s.mpki_llc);

    nlohmann::json prov = plan.provenance;
    prov["source"] = "reweight:mpkilru";
    return detail::reweight_by(plan, activity, strategy_kind::mpkilru, std::move(prov));
}

// weight_s = max over policies of MPKI(policy, s), normalized. Every
// simulated policy participates by default; `exclude` removes named kinds.
inline interval_plan mpkimax_weights(const interval_plan& plan,
                                     std::span<const policy_result> results,
                                     std::span<const policy_kind> exclude = {}) {
    if (results.empty()) throw config_error("mpkimax_weights: no policy results supplied");

    std::vector<double> activity(plan.intervals.size(), 0.0);
    std::vector<std::string> used;
    for (const auto& res : results) {
        if (std::find(exclude.begin(), exclude.end(), res.policy.kind) != exclude.end()) continue;
        detail::check_alignment(plan, res, "mpkimax_weights");
        used.emplace_back(to_string(res.policy.kind));
        for (size_t i = 0; i < activity.size(); ++i)
            activity[i] = std::max(activity[i], res.per_interval[i].mpki_llc);
    }
    if (used.empty())
        throw config_error("mpkimax_weights: every supplied policy was excluded");

    nlohmann::json prov = plan.provenance;
    prov["source"] = "reweight:mpkimax";
    prov["policies"] = used;
    return detail::reweight_by(plan, activity, strategy_kind::mpkimax, std::move(prov));
}

// Final value of a metric under a plan: sum_s weight_s * metric_s.
inline double weighted_metric(const interval_plan& plan, const policy_result& result,
                              metric_kind metric) {
    detail::check_alignment(plan, result, "weighted_metric");
    double value = 0.0;
    for (size_t i = 0; i < plan.intervals.size(); ++i) {
        const auto& s = result.per_interval[i];
        value += plan.intervals[i].weight * (metric == metric_kind::mpki ? s.mpki_llc : s.cpi);
    }
    return value;
}

}  // namespace ilab

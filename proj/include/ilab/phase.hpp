#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/support.hpp"
#include "ilab/trace.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// SimPoint-style interval selection: per-chunk basic block vectors, random
// projection to a low dimension, k-means, one representative chunk per
// cluster weighted by cluster size.
// ---------------------------------------------------------------------------

struct bbv_matrix {
    std::vector<uint32_t> bb_ids;  // column labels, ascending
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;  // row-major

    std::span<const double> row(size_t r) const {
        return std::span<const double>(data).subspan(r * cols, cols);
    }
};

// Row r counts basic-block occurrences inside chunk r, normalized to sum 1.
inline bbv_matrix build_bbvs(std::span<const trace_event> events, const chunk_index& chunks) {
    bbv_matrix m;
    std::map<uint32_t, size_t> column;  // ordered, so columns are ascending
    for (const auto& e : events) column.emplace(e.bb_id, 0);
    size_t next = 0;
    for (auto& [bb, col] : column) {
        col = next++;
        m.bb_ids.push_back(bb);
    }
    m.rows = chunks.boundaries.size();
    m.cols = column.size();
    m.data.assign(m.rows * m.cols, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const auto& span = chunks.boundaries[r];
        double* row = m.data.data() + r * m.cols;
        for (uint64_t i = span.start; i < span.start + span.length; ++i)
            row[column[events[i].bb_id]] += 1.0;
        if (span.length > 0)
            for (size_t c = 0; c < m.cols; ++c) row[c] /= static_cast<double>(span.length);
    }
    return m;
}

struct projected_matrix {
    size_t rows = 0;
    size_t dim = 0;
    std::vector<double> data;  // row-major
    uint64_t seed = 0;

    std::span<const double> row(size_t r) const {
        return std::span<const double>(data).subspan(r * dim, dim);
    }
};

// Dense random projection with entries uniform in [-1, 1], drawn from the
// seed so the same seed always yields the same projection. The identity hook
// (dim == cols) exists for tests that need to see the raw BBV space.
inline projected_matrix random_project(const bbv_matrix& bbv, size_t dim, uint64_t seed,
                                       bool identity_hook = false) {
    if (dim == 0) throw config_error("random_project: dim must be >= 1");
    projected_matrix out;
    out.rows = bbv.rows;
    out.dim = dim;
    out.seed = seed;
    out.data.assign(bbv.rows * dim, 0.0);

    if (identity_hook) {
        if (dim != bbv.cols)
            throw config_error("random_project: identity hook requires dim == column count");
        out.data = bbv.data;
        return out;
    }

    rng r(derive_seed(seed, "projection"));
    std::vector<double> matrix(bbv.cols * dim);
    for (auto& v : matrix) v = r.next_in(-1.0, 1.0);
    for (size_t i = 0; i < bbv.rows; ++i) {
        const double* row = bbv.data.data() + i * bbv.cols;
        double* orow = out.data.data() + i * dim;
        for (size_t c = 0; c < bbv.cols; ++c) {
            double v = row[c];
            if (v == 0.0) continue;
            const double* mrow = matrix.data() + c * dim;
            for (size_t d = 0; d < dim; ++d) orow[d] += v * mrow[d];
        }
    }
    return out;
}

struct clustering {
    uint32_t k = 0;
    std::vector<uint32_t> assignment;  // chunk -> cluster
    size_t dim = 0;
    std::vector<double> centroids;  // k x dim, row-major
    double inertia = 0.0;

    std::span<const double> centroid(uint32_t c) const {
        return std::span<const double>(centroids).subspan(static_cast<size_t>(c) * dim, dim);
    }
};

namespace detail {

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ style seeding. Assignment ties keep the
// current cluster (or take the lowest index), which makes duplicate points
// stable; empty clusters are repaired by splitting the largest one.
inline clustering kmeans(const projected_matrix& points, uint32_t k, uint64_t seed,
                         uint32_t max_iter = 100) {
    size_t n = points.rows;
    if (k < 1) throw config_error("kmeans: k must be >= 1");
    if (k > n)
        throw config_error("kmeans: k=" + std::to_string(k) + " exceeds point count " +
                           std::to_string(n));
    size_t dim = points.dim;
    rng r(derive_seed(seed, "kmeans"));

    clustering cl;
    cl.k = k;
    cl.dim = dim;
    cl.centroids.assign(static_cast<size_t>(k) * dim, 0.0);
    cl.assignment.assign(n, 0);

    // k-means++ seeding; if every remaining distance is zero (duplicate
    // points), fall back to the lowest-index point not yet chosen.
    std::vector<size_t> chosen;
    auto set_centroid = [&](uint32_t c, size_t p) {
        std::copy_n(points.data.data() + p * dim, dim, cl.centroids.data() + c * dim);
    };
    std::vector<double> d2(n, 0.0);
    chosen.push_back(r.next_below(n));
    set_centroid(0, chosen[0]);
    for (uint32_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (size_t p = 0; p < n; ++p) {
            double best = detail::dist2(points.row(p), cl.centroid(0));
            for (uint32_t prev = 1; prev < c; ++prev)
                best = std::min(best, detail::dist2(points.row(p), cl.centroid(prev)));
            d2[p] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double target = r.next_unit() * total;
            double acc = 0.0;
            for (size_t p = 0; p < n; ++p) {
                acc += d2[p];
                pick = p;
                if (acc >= target) break;
            }
        } else {
            pick = 0;
            while (std::find(chosen.begin(), chosen.end(), pick) != chosen.end()) ++pick;
        }
        chosen.push_back(pick);
        set_centroid(c, pick);
    }

    auto nearest = [&](size_t p, uint32_t current) {
        uint32_t best = 0;
        double best_d = detail::dist2(points.row(p), cl.centroid(0));
        for (uint32_t c = 1; c < k; ++c) {
            double d = detail::dist2(points.row(p), cl.centroid(c));
            if (d < best_d || (d == best_d && c == current && best != current)) {
                best = c;
                best_d = d;
            }
        }
        return best;
    };

    std::vector<uint64_t> count(k, 0);
    for (uint32_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (size_t p = 0; p < n; ++p) {
            uint32_t c = nearest(p, cl.assignment[p]);
            if (c != cl.assignment[p]) {
                cl.assignment[p] = c;
                changed = true;
            }
        }

        // Repair empty clusters: move the farthest member of the largest
        // cluster into each empty one (point becomes the centroid).
        std::fill(count.begin(), count.end(), 0);
        for (size_t p = 0; p < n; ++p) ++count[cl.assignment[p]];
        for (uint32_t c = 0; c < k; ++c) {
            if (count[c] != 0) continue;
            uint32_t largest = static_cast<uint32_t>(
                std::max_element(count.begin(), count.end()) - count.begin());
            size_t far_p = n;
            double far_d = -1.0;
            for (size_t p = 0; p < n; ++p) {
                if (cl.assignment[p] != largest) continue;
                double d = detail::dist2(points.row(p), cl.centroid(largest));
                if (d > far_d) {
                    far_d = d;
                    far_p = p;
                }
            }
            cl.assignment[far_p] = c;
            set_centroid(c, far_p);
            --count[largest];
            ++count[c];
            changed = true;
        }

        // Means update.
        std::fill(cl.centroids.begin(), cl.centroids.end(), 0.0);
        for (size_t p = 0; p < n; ++p) {
            double* cen = cl.centroids.data() + static_cast<size_t>(cl.assignment[p]) * dim;
            auto row = points.row(p);
            for (size_t d = 0; d < dim; ++d) cen[d] += row[d];
        }
        for (uint32_t c = 0; c < k; ++c) {
            double* cen = cl.centroids.data() + static_cast<size_t>(c) * dim;
            for (size_t d = 0; d < dim; ++d) cen[d] /= static_cast<double>(count[c]);
        }

        if (!changed) break;
    }

    // Final consistency pass: assignment must be nearest-centroid under the
    // final centroids.
    for (size_t p = 0; p < n; ++p) cl.assignment[p] = nearest(p, cl.assignment[p]);
    std::fill(count.begin(), count.end(), 0);
    for (size_t p = 0; p < n; ++p) ++count[cl.assignment[p]];
    for (uint32_t c = 0; c < k; ++c) {
        if (count[c] != 0) continue;
        uint32_t largest =
            static_cast<uint32_t>(std::max_element(count.begin(), count.end()) - count.begin());
        size_t far_p = n;
        double far_d = -1.0;
        for (size_t p = 0; p < n; ++p) {
            if (cl.assignment[p] != largest) continue;
            double d = detail::dist2(points.row(p), cl.centroid(largest));
            if (d > far_d) {
                far_d = d;
                far_p = p;
            }
        }
        cl.assignment[far_p] = c;
        set_centroid(c, far_p);
        --count[largest];
        ++count[c];
    }

    cl.inertia = 0.0;
    for (size_t p = 0; p < n; ++p)
        cl.inertia += detail::dist2(points.row(p), cl.centroid(cl.assignment[p]));
    return cl;
}

// Sweep k in [1, max_k] and return the smallest k whose inertia improvement
// over k-1 falls below `threshold` (a transparent elbow rule); max_k if none
// qualifies. A zero-inertia fit cannot be improved, so it short-circuits.
inline uint32_t choose_k(const projected_matrix& points, uint32_t max_k, uint64_t seed,
                         uint32_t max_iter = 100, double threshold = 0.10) {
    if (max_k < 1) throw config_error("choose_k: max_k must be >= 1");
    max_k = std::min<uint32_t>(max_k, static_cast<uint32_t>(points.rows));
    double prev = kmeans(points, 1, seed, max_iter).inertia;
    for (uint32_t k = 2; k <= max_k; ++k) {
        if (prev <= 1e-12) return k - 1;
        double cur = kmeans(points, k, seed, max_iter).inertia;
        if ((prev - cur) / prev < threshold) return k;
        prev = cur;
    }
    return max_k;
}

// ---------------------------------------------------------------------------
// Interval plans: a named set of (start, length, weight) intervals. Weights
// always sum to 1; intervals never overlap.
// ---------------------------------------------------------------------------

enum class strategy_kind { spt, weight, ff, mpkilru, mpkimax, full };

inline const char* to_string(strategy_kind s) {
    switch (s) {
        case strategy_kind::spt: return "spt";
        case strategy_kind::weight: return "weight";
        case strategy_kind::ff: return "ff";
        case strategy_kind::mpkilru: return "mpkilru";
        case strategy_kind::mpkimax: return "mpkimax";
        case strategy_kind::full: return "full";
    }
    return "?";
}

inline strategy_kind strategy_from_string(const std::string& s) {
    if (s == "spt") return strategy_kind::spt;
    if (s == "weight") return strategy_kind::weight;
    if (s == "ff") return strategy_kind::ff;
    if (s == "mpkilru") return strategy_kind::mpkilru;
    if (s == "mpkimax") return strategy_kind::mpkimax;
    if (s == "full") return strategy_kind::full;
    throw config_error("unknown strategy '" + s + "'");
}

struct plan_interval {
    int64_t chunk_index = -1;  // -1 when the interval is not chunk-aligned
    uint64_t start = 0;
    uint64_t length = 0;
    uint64_t warmup = 0;  // state-carrying prefix, uncounted
    double weight = 0.0;
};

struct interval_plan {
    strategy_kind strategy = strategy_kind::spt;
    uint64_t chunk_size = 0;
    std::vector<plan_interval> intervals;
    nlohmann::json provenance = nlohmann::json::object();

    void validate(uint64_t event_count) const {
        if (intervals.empty()) throw config_error("interval plan has no intervals");
        double sum = 0.0;
        for (const auto& iv : intervals) {
            sum += iv.weight;
            if (iv.weight < 0) throw config_error("interval plan: negative weight");
            if (iv.start + iv.length > event_count)
                throw config_error("interval plan: interval out of trace bounds");
            if (iv.warmup > iv.start)
                throw config_error("interval plan: warmup exceeds interval start");
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw config_error("interval plan: weights sum to " + format_num(sum));
        auto sorted = intervals;
        std::sort(sorted.begin(), sorted.end(),
                  [](const plan_interval& a, const plan_interval& b) { return a.start < b.start; });
        for (size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i - 1].start + sorted[i - 1].length > sorted[i].start)
                throw config_error("interval plan: intervals overlap");
    }
};

// One representative chunk per cluster: the member nearest its centroid
// (ties break to the lowest chunk index), weighted by cluster size.
inline interval_plan select_representatives(const clustering& cl, const projected_matrix& points,
                                            const chunk_index& chunks) {
    if (points.rows != cl.assignment.size() || points.rows != chunks.boundaries.size())
        throw alignment_error("select_representatives: clustering/points/chunks disagree");
    size_t n = points.rows;

    std::vector<size_t> rep(cl.k, n);
    std::vector<double> rep_d(cl.k, 0.0);
    std::vector<uint64_t> size(cl.k, 0);
    for (size_t p = 0; p < n; ++p) {
        uint32_t c = cl.assignment[p];
        ++size[c];
        double d = detail::dist2(points.row(p), cl.centroid(c));
        if (rep[c] == n || d < rep_d[c]) {
            rep[c] = p;
            rep_d[c] = d;
        }
    }

    interval_plan plan;
    plan.strategy = strategy_kind::spt;
    plan.chunk_size = chunks.chunk_size;
    for (uint32_t c = 0; c < cl.k; ++c) {
        const auto& span = chunks.boundaries[rep[c]];
        plan_interval iv;
        iv.chunk_index = static_cast<int64_t>(rep[c]);
        iv.start = span.start;
        iv.length = span.length;
        iv.weight = static_cast<double>(size[c]) / static_cast<double>(n);
        plan.intervals.push_back(iv);
    }
    std::sort(plan.intervals.begin(), plan.intervals.end(),
              [](const plan_interval& a, const plan_interval& b) {
                  return a.chunk_index < b.chunk_index;
              });
    plan.provenance = {{"source", "simpoint"}, {"k", cl.k}, {"inertia", cl.inertia}};
    return plan;
}

// Keep only the most-weighted interval (ties break to the lowest chunk
// index) at weight 1.
inline interval_plan top_weight_plan(const interval_plan& plan) {
    if (plan.intervals.empty()) throw config_error("top_weight_plan: empty plan");
    size_t best = 0;
    for (size_t i = 1; i < plan.intervals.size(); ++i)
        if (plan.intervals[i].weight > plan.intervals[best].weight) best = i;
    interval_plan out;
    out.strategy = strategy_kind::weight;
    out.chunk_size = plan.chunk_size;
    out.intervals = {plan.intervals[best]};
    out.intervals[0].weight = 1.0;
    out.provenance = plan.provenance;
    out.provenance["source"] = "top-weight";
    out.provenance["source_interval"] = best;
    return out;
}

// Fast-forward plan: skip the first `skip` instructions (run as warmup, so
// state carries but nothing is counted), then measure `length` instructions.
inline interval_plan ff_plan(uint64_t skip, uint64_t length, uint64_t event_count) {
    if (length == 0) throw config_error("ff_plan: zero-length window");
    if (skip + length > event_count)
        throw config_error("ff_plan: skip+length " + std::to_string(skip + length) +
                           " exceeds trace size " + std::to_string(event_count));
    interval_plan plan;
    plan.strategy = strategy_kind::ff;
    plan.intervals = {{-1, skip, length, skip, 1.0}};
    plan.provenance = {{"source", "fast-forward"}, {"skip", skip}, {"length", length}};
    return plan;
}

inline interval_plan full_plan(uint64_t event_count) {
    if (event_count == 0) throw empty_trace_error("full_plan: empty trace");
    interval_plan plan;
    plan.strategy = strategy_kind::full;
    plan.intervals = {{-1, 0, event_count, 0, 1.0}};
    plan.provenance = {{"source", "full"}};
    return plan;
}

// --- Plan persistence -------------------------------------------------------

inline nlohmann::json plan_to_json(const interval_plan& plan) {
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : plan.intervals) {
        intervals.push_back({{"chunk_index", iv.chunk_index},
                             {"start", iv.start},
                             {"length", iv.length},
                             {"warmup", iv.warmup},
                             {"weight", iv.weight}});
    }
    return {{"strategy", to_string(plan.strategy)},
            {"chunk_size", plan.chunk_size},
            {"intervals", intervals},
            {"provenance", plan.provenance}};
}

inline interval_plan plan_from_json(const nlohmann::json& j) {
    interval_plan plan;
    try {
        plan.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        plan.chunk_size = j.value("chunk_size", 0ull);
        for (const auto& ji : j.at("intervals")) {
            plan_interval iv;
            iv.chunk_index = ji.value("chunk_index", -1ll);
            iv.start = ji.at("start").get<uint64_t>();
            iv.length = ji.at("length").get<uint64_t>();
            iv.warmup = ji.value("warmup", 0ull);
            iv.weight = ji.at("weight").get<double>();
            plan.intervals.push_back(iv);
        }
        plan.provenance = j.value("provenance", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("interval plan: ") + e.what());
    }
    return plan;
}

inline void write_plan(const interval_plan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write plan file " + path.string());
    out << plan_to_json(plan).dump(2) << "\n";
}

inline interval_plan read_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open plan file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path.string() + ": " + e.what());
    }
    return plan_from_json(j);
}

// Text export for SimPoint-style tooling: one `chunk_index weight` pair per
// line.
inline void export_simpoints(const interval_plan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    for (const auto& iv : plan.intervals)
        out << iv.chunk_index << " " << format_num(iv.weight) << "\n";
}

}  // namespace ilab

#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ilab/cache.hpp"
#include "ilab/metrics.hpp"
#include "ilab/phase.hpp"
#include "ilab/policy.hpp"
#include "ilab/reweight.hpp"
#include "ilab/support.hpp"
#include "ilab/synth.hpp"
#include "ilab/trace.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// End-to-end experiment orchestration: generate or ingest traces, run the
// policy x strategy x interval matrix, reweight, evaluate, persist. One
// master seed fans out to every component, so a spec reproduces byte-for-
// byte.
// ---------------------------------------------------------------------------

struct benchmark_spec {
    std::string name;
    std::string input_label = "default";
    std::optional<std::filesystem::path> trace_path;
    std::optional<synthetic_workload_spec> synth;
};

struct strategy_spec {
    strategy_kind kind = strategy_kind::full;
    uint64_t ff_skip = 0;
    uint64_t ff_length = 0;

    std::string label() const {
        if (kind == strategy_kind::ff)
            return "ff:" + std::to_string(ff_skip) + ":" + std::to_string(ff_length);
        return to_string(kind);
    }
};

struct spt_params {
    uint64_t chunk_size = 10000;
    uint32_t dim = 15;
    uint32_t k = 0;  // 0 = sweep k in [1, max_k] with the elbow rule
    uint32_t max_k = 10;
    uint64_t warmup = 0;  // per-interval warmup for spt-family runs
};

struct experiment_spec {
    std::vector<benchmark_spec> benchmarks;
    hierarchy_config hierarchy;
    std::vector<policy_params> policies;
    std::vector<strategy_spec> strategies;
    spt_params spt;
    std::vector<scenario_kind> scenarios = {scenario_kind::avg, scenario_kind::avg_wo_low,
                                            scenario_kind::avg_high, scenario_kind::avg_changes};
    scenario_params scen_params;
    std::vector<policy_kind> mpkimax_exclude;
    std::filesystem::path out_dir = "out";
    uint64_t master_seed = 1;
    uint64_t timeline_window = 0;  // 0 = use spt.chunk_size
    policy_params timeline_policy{policy_kind::lru};
};

inline bool has_strategy(const experiment_spec& spec, strategy_kind k) {
    for (const auto& s : spec.strategies)
        if (s.kind == k) return true;
    return false;
}

inline bool has_policy(const experiment_spec& spec, policy_kind k) {
    for (const auto& p : spec.policies)
        if (p.kind == k) return true;
    return false;
}

inline void validate(const experiment_spec& spec) {
    if (spec.benchmarks.empty()) throw config_error("experiment: no benchmarks");
    if (spec.policies.empty()) throw config_error("experiment: no policies");
    if (spec.strategies.empty()) throw config_error("experiment: no strategies");
    for (const auto& b : spec.benchmarks) {
        if (b.name.empty()) throw config_error("experiment: benchmark without a name");
        if (!b.trace_path && !b.synth)
            throw config_error("experiment: benchmark '" + b.name +
                               "' has neither a trace path nor a synthetic spec");
    }
    bool needs_spt = has_strategy(spec, strategy_kind::weight) ||
                     has_strategy(spec, strategy_kind::mpkilru) ||
                     has_strategy(spec, strategy_kind::mpkimax);
    if (needs_spt && !has_strategy(spec, strategy_kind::spt))
        throw config_error("experiment: weight/mpkilru/mpkimax strategies require spt");
    if (has_strategy(spec, strategy_kind::mpkilru) && !has_policy(spec, policy_kind::lru))
        throw config_error("experiment: mpkilru requires the LRU policy");
    for (const auto& s : spec.strategies)
        if (s.kind == strategy_kind::ff && s.ff_length == 0)
            throw config_error("experiment: ff strategy needs a nonzero length");
}

// --- JSON form ---------------------------------------------------------------

inline experiment_spec experiment_from_json(const nlohmann::json& j,
                                            const std::filesystem::path& base_dir = {}) {
    experiment_spec spec;
    try {
        for (const auto& jb : j.at("benchmarks")) {
            benchmark_spec b;
            b.name = jb.at("name").get<std::string>();
            b.input_label = jb.value("input_label", "default");
            if (jb.contains("trace")) {
                std::filesystem::path p = jb.at("trace").get<std::string>();
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                b.trace_path = p;
            }
            if (jb.contains("synthetic")) b.synth = synth_spec_from_json(jb.at("synthetic"));
            spec.benchmarks.push_back(std::move(b));
        }
        spec.hierarchy = hierarchy_from_json(j.at("hierarchy"));
        for (const auto& jp : j.at("policies"))
            spec.policies.push_back(policy_params_from_json(jp));
        for (const auto& js : j.at("strategies")) {
            strategy_spec s;
            if (js.is_string()) {
                s.kind = strategy_from_string(js.get<std::string>());
            } else {
                s.kind = strategy_from_string(js.at("kind").get<std::string>());
                s.ff_skip = js.value("skip", 0ull);
                s.ff_length = js.value("length", 0ull);
            }
            spec.strategies.push_back(s);
        }
        if (j.contains("spt")) {
            const auto& js = j.at("spt");
            spec.spt.chunk_size = js.value("chunk_size", 10000ull);
            spec.spt.dim = js.value("dim", 15u);
            spec.spt.k = js.value("k", 0u);
            spec.spt.max_k = js.value("max_k", 10u);
            spec.spt.warmup = js.value("warmup", 0ull);
        }
        if (j.contains("scenarios")) {
            spec.scenarios.clear();
            for (const auto& js : j.at("scenarios"))
                spec.scenarios.push_back(scenario_from_string(js.get<std::string>()));
        }
        if (j.contains("scenario_params")) {
            const auto& js = j.at("scenario_params");
            spec.scen_params.low_threshold = js.value("low_threshold", 0.1);
            spec.scen_params.high_fraction = js.value("high_fraction", 0.8);
            spec.scen_params.exclude =
                js.value("exclude", std::vector<std::string>{});
            spec.scen_params.changes_strategy = js.value("changes_strategy", std::string("spt"));
        }
        if (j.contains("mpkimax_exclude"))
            for (const auto& js : j.at("mpkimax_exclude"))
                spec.mpkimax_exclude.push_back(policy_kind_from_string(js.get<std::string>()));
        if (j.contains("out_dir")) spec.out_dir = j.at("out_dir").get<std::string>();
        spec.master_seed = j.value("master_seed", 1ull);
        spec.timeline_window = j.value("timeline_window", 0ull);
        if (j.contains("timeline_policy"))
            spec.timeline_policy = policy_params_from_json(j.at("timeline_policy"));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("experiment spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

inline experiment_spec load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open experiment file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path.string() + ": " + e.what());
    }
    return experiment_from_json(j, path.parent_path());
}

// --- Run ledger ---------------------------------------------------------------

// Content-addressed memoization of simulation runs. Entries are persisted as
// line-delimited JSON so a re-run of the same spec costs nothing.
class run_ledger {
public:
    run_ledger() = default;

    explicit run_ledger(std::filesystem::path file) : file_(std::move(file)) {
        std::ifstream in(file_);
        if (!in) return;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
                entries_[j.at("key").get<std::string>()] = stats_from_json(j.at("stats"));
            } catch (const nlohmann::json::exception& e) {
                throw data_error(file_.string() + ":" + std::to_string(lineno) +
                                 ": bad ledger line: " + e.what());
            }
        }
    }

    static std::string make_key(uint64_t trace_fp, uint64_t config_fp,
                                const policy_params& policy, uint64_t start, uint64_t length,
                                uint64_t warmup, uint64_t seed) {
        std::string desc = std::to_string(trace_fp) + "|" + std::to_string(config_fp) + "|" +
                           to_string(policy.kind) + ":" + std::to_string(policy.rrpv_bits) + ":" +
                           std::to_string(policy.bimodal_throttle) + "|" + std::to_string(start) +
                           ":" + std::to_string(length) + ":" + std::to_string(warmup) + "|" +
                           std::to_string(seed);
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(desc)));
        return buf;
    }

    const sim_stats* find(const std::string& key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    // Appends one entry (a single atomic line write) and remembers it.
    void put(const std::string& key, const sim_stats& stats, const std::string& desc = "") {
        std::lock_guard<std::mutex> lock(mu_);
        if (entries_.count(key)) return;
        entries_[key] = stats;
        if (file_.empty()) return;
        nlohmann::json j = {{"key", key}, {"stats", stats_to_json(stats)}};
        if (!desc.empty()) j["desc"] = desc;
        std::ofstream out(file_, std::ios::app);
        if (!out) throw data_error("cannot append to ledger " + file_.string());
        out << j.dump() << "\n";
    }

    size_t size() const { return entries_.size(); }

    std::set<std::string> keys() const {
        std::set<std::string> k;
        for (const auto& [key, _] : entries_) k.insert(key);
        return k;
    }

private:
    std::filesystem::path file_;
    std::map<std::string, sim_stats> entries_;
    std::mutex mu_;
};

// --- Task graph ----------------------------------------------------------------

struct task {
    enum class kind {
        load_trace,
        chunk,
        cluster,
        sim_interval,
        sim_full,
        reweight_mpkilru,
        reweight_mpkimax,
        metrics
    };

    kind what = kind::load_trace;
    size_t benchmark = 0;
    std::string label;
    std::vector<size_t> deps;  // indices into the task vector

    // payload for sim tasks
    policy_params policy;
    uint64_t start = 0, length = 0, warmup = 0, seed = 0;
    std::string ledger_key;
};

namespace detail {

struct bench_context {
    const benchmark_spec* spec = nullptr;
    trace_meta meta;
    std::vector<trace_event> events;
    uint64_t trace_fp = 0;
    chunk_index chunks;
    std::optional<interval_plan> spt_plan;
    std::string failure;  // nonempty if this benchmark is out of the run
};

inline uint64_t config_fingerprint(const hierarchy_config& cfg) {
    return fnv1a64(hierarchy_to_json(cfg).dump());
}

inline uint64_t run_seed(const experiment_spec& spec, const std::string& bench,
                         const std::string& input, const policy_params& policy) {
    return derive_seed(spec.master_seed, "policy-prng",
                       fnv1a64(bench + "|" + input + "|" + to_string(policy.kind)));
}

inline unsigned harness_threads() {
    if (const char* env = std::getenv("INTERVAL_LAB_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

template <typename F>
void parallel_for(size_t n, F&& body) {
    size_t nthreads = std::min<size_t>(harness_threads(), n);
    if (nthreads <= 1) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                body(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

struct experiment_plan {
    std::vector<task> tasks;
    std::vector<detail::bench_context> contexts;
};

// Builds the ordered task graph: trace -> chunks -> BBV/cluster -> interval
// runs per policy -> mpkilru (needs LRU) -> mpkimax (needs all policies) ->
// full runs -> metrics. Simulation tasks already present in the ledger are
// skipped; phase detection is cheap enough to run at planning time, which is
// what pins the interval set before any simulation happens.
inline experiment_plan plan_experiment(const experiment_spec& spec,
                                       const run_ledger* ledger = nullptr) {
    validate(spec);
    experiment_plan plan;
    uint64_t config_fp = detail::config_fingerprint(spec.hierarchy);
    bool wants_spt = has_strategy(spec, strategy_kind::spt);

    for (size_t bi = 0; bi < spec.benchmarks.size(); ++bi) {
        const auto& bench = spec.benchmarks[bi];
        detail::bench_context ctx;
        ctx.spec = &bench;
        try {
            if (bench.synth) {
                synthetic_workload_spec synth = *bench.synth;
                if (synth.seed == 0)
                    synth.seed = derive_seed(spec.master_seed, "generator", bi);
                synth.name = bench.name;
                synth.input_label = bench.input_label;
                auto [meta, events] = generate_synthetic(synth);
                ctx.meta = std::move(meta);
                ctx.events = std::move(events);
            } else {
                auto [meta, events] = load_trace(*bench.trace_path);
                ctx.meta = std::move(meta);
                ctx.meta.name = bench.name;
                ctx.meta.input_label = bench.input_label;
                ctx.events = std::move(events);
            }
            if (ctx.events.empty()) throw empty_trace_error(bench.name + ": empty trace");
            ctx.trace_fp = trace_fingerprint(ctx.events);

            size_t t_trace = plan.tasks.size();
            plan.tasks.push_back(
                {task::kind::load_trace, bi, bench.name + ":trace", {}, {}, 0, 0, 0, 0, ""});

            std::vector<size_t> interval_task_ids;
            size_t t_cluster = t_trace;
            if (wants_spt) {
                ctx.chunks = slice_chunks(ctx.meta, spec.spt.chunk_size);
                bbv_matrix bbv = build_bbvs(ctx.events, ctx.chunks);
                projected_matrix proj = random_project(
                    bbv, std::min<size_t>(spec.spt.dim, std::max<size_t>(bbv.cols, 1)),
                    derive_seed(spec.master_seed, "projection", bi));
                uint32_t k = spec.spt.k;
                uint64_t kseed = derive_seed(spec.master_seed, "kmeans", bi);
                if (k == 0) k = choose_k(proj, spec.spt.max_k, kseed);
                k = std::min<uint32_t>(k, static_cast<uint32_t>(proj.rows));
                clustering cl = kmeans(proj, k, kseed);
                interval_plan sp = select_representatives(cl, proj, ctx.chunks);
                for (auto& iv : sp.intervals) iv.warmup = std::min(spec.spt.warmup, iv.start);
                sp.provenance["projection_seed"] =
                    derive_seed(spec.master_seed, "projection", bi);
                sp.provenance["kmeans_seed"] = kseed;
                ctx.spt_plan = sp;

                size_t t_chunk = plan.tasks.size();
                plan.tasks.push_back({task::kind::chunk, bi, bench.name + ":chunks",
                                      {t_trace}, {}, 0, 0, 0, 0, ""});
                t_cluster = plan.tasks.size();
                plan.tasks.push_back({task::kind::cluster, bi, bench.name + ":cluster",
                                      {t_chunk}, {}, 0, 0, 0, 0, ""});

                for (const auto& pol : spec.policies) {
                    uint64_t seed =
                        detail::run_seed(spec, bench.name, bench.input_label, pol);
                    for (const auto& iv : sp.intervals) {
                        std::string key = run_ledger::make_key(ctx.trace_fp, config_fp, pol,
                                                               iv.start, iv.length, iv.warmup,
                                                               seed);
                        if (ledger && ledger->find(key)) continue;
                        task t;
                        t.what = task::kind::sim_interval;
                        t.benchmark = bi;
                        t.label = bench.name + ":" + to_string(pol.kind) + ":chunk" +
                                  std::to_string(iv.chunk_index);
                        t.deps = {t_cluster};
                        t.policy = pol;
                        t.start = iv.start;
                        t.length = iv.length;
                        t.warmup = iv.warmup;
                        t.seed = seed;
                        t.ledger_key = key;
                        interval_task_ids.push_back(plan.tasks.size());
                        plan.tasks.push_back(std::move(t));
                    }
                }
            }

            // ff strategies are interval runs with warmup = skip.
            for (const auto& strat : spec.strategies) {
                if (strat.kind != strategy_kind::ff) continue;
                interval_plan fp = ff_plan(strat.ff_skip, strat.ff_length, ctx.events.size());
                for (const auto& pol : spec.policies) {
                    uint64_t seed =
                        detail::run_seed(spec, bench.name, bench.input_label, pol);
                    const auto& iv = fp.intervals[0];
                    std::string key = run_ledger::make_key(ctx.trace_fp, config_fp, pol,
                                                           iv.start, iv.length, iv.warmup, seed);
                    if (ledger && ledger->find(key)) continue;
                    task t;
                    t.what = task::kind::sim_interval;
                    t.benchmark = bi;
                    t.label = bench.name + ":" + to_string(pol.kind) + ":" + strat.label();
                    t.deps = {t_trace};
                    t.policy = pol;
                    t.start = iv.start;
                    t.length = iv.length;
                    t.warmup = iv.warmup;
                    t.seed = seed;
                    t.ledger_key = key;
                    plan.tasks.push_back(std::move(t));
                }
            }

            if (wants_spt && has_strategy(spec, strategy_kind::mpkilru)) {
                task t;
                t.what = task::kind::reweight_mpkilru;
                t.benchmark = bi;
                t.label = bench.name + ":mpkilru";
                // needs the LRU interval runs only
                for (size_t id : interval_task_ids)
                    if (plan.tasks[id].policy.kind == policy_kind::lru) t.deps.push_back(id);
                plan.tasks.push_back(std::move(t));
            }
            if (wants_spt && has_strategy(spec, strategy_kind::mpkimax)) {
                task t;
                t.what = task::kind::reweight_mpkimax;
                t.benchmark = bi;
                t.label = bench.name + ":mpkimax";
                t.deps = interval_task_ids;  // every policy's interval runs
                plan.tasks.push_back(std::move(t));
            }

            if (has_strategy(spec, strategy_kind::full)) {
                for (const auto& pol : spec.policies) {
                    uint64_t seed =
                        detail::run_seed(spec, bench.name, bench.input_label, pol);
                    std::string key = run_ledger::make_key(ctx.trace_fp, config_fp, pol, 0,
                                                           ctx.events.size(), 0, seed);
                    if (ledger && ledger->find(key)) continue;
                    task t;
                    t.what = task::kind::sim_full;
                    t.benchmark = bi;
                    t.label = bench.name + ":" + to_string(pol.kind) + ":full";
                    t.deps = {t_trace};
                    t.policy = pol;
                    t.start = 0;
                    t.length = ctx.events.size();
                    t.warmup = 0;
                    t.seed = seed;
                    t.ledger_key = key;
                    plan.tasks.push_back(std::move(t));
                }
            }

            task tm;
            tm.what = task::kind::metrics;
            tm.benchmark = bi;
            tm.label = bench.name + ":metrics";
            for (size_t id = 0; id < plan.tasks.size(); ++id)
                if (plan.tasks[id].benchmark == bi) tm.deps.push_back(id);
            plan.tasks.push_back(std::move(tm));
        } catch (const error& e) {
            ctx.failure = e.what();
        }
        plan.contexts.push_back(std::move(ctx));
    }
    return plan;
}

// --- Reports -------------------------------------------------------------------

struct budget_row {
    std::string benchmark;
    std::string input;
    std::string strategy;
    uint64_t full_size = 0;
    uint64_t selected = 0;
    double percent = 0.0;
};

inline double budget_percent(double selected, double full_size) {
    if (full_size <= 0) throw config_error("budget_percent: full size must be positive");
    return 100.0 * selected / full_size;
}

inline budget_row instruction_budget_row(const std::string& benchmark, const std::string& input,
                                         const std::string& strategy, const interval_plan& plan,
                                         uint64_t full_size) {
    uint64_t selected = 0;
    for (const auto& iv : plan.intervals) selected += iv.length;
    return {benchmark,
            input,
            strategy,
            full_size,
            selected,
            budget_percent(static_cast<double>(selected), static_cast<double>(full_size))};
}

struct table_cell {
    double value = 0.0;
    bool floored = false;
};

struct metrics_report {
    std::vector<benchmark_record> records;
    std::vector<budget_row> budget;
    // table -> scenario -> strategy -> cell; tables are "order",
    // "closeness_mpki/arithmetic", "closeness_mpki/geometric", same for cpi.
    std::map<std::string, std::map<std::string, std::map<std::string, table_cell>>> tables;
    std::map<std::string, std::string> failures;  // "bench/input" -> reason
    std::vector<std::string> notes;
};

namespace detail {

struct strategy_eval {
    std::string label;
    interval_plan plan;
    std::map<std::string, double> mpki;  // policy name -> weighted value
    std::map<std::string, double> cpi;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << content;
}

}  // namespace detail

// Runs the whole experiment. Artifacts land under spec.out_dir:
//   traces/ plans/ ledger.jsonl stats.csv report/{metrics.csv, bars.csv,
//   budget.csv, tables.json, timeline_*.csv} failures.json
inline metrics_report run_experiment(const experiment_spec& spec) {
    namespace fs = std::filesystem;
    validate(spec);
    fs::create_directories(spec.out_dir);
    fs::create_directories(spec.out_dir / "traces");
    fs::create_directories(spec.out_dir / "plans");
    fs::create_directories(spec.out_dir / "report");

    run_ledger ledger(spec.out_dir / "ledger.jsonl");
    experiment_plan plan = plan_experiment(spec, &ledger);
    uint64_t config_fp = detail::config_fingerprint(spec.hierarchy);

    metrics_report report;

    // Execute simulation tasks; everything else is assembled afterwards.
    std::vector<size_t> sim_ids;
    for (size_t i = 0; i < plan.tasks.size(); ++i) {
        auto k = plan.tasks[i].what;
        if (k == task::kind::sim_interval || k == task::kind::sim_full) sim_ids.push_back(i);
    }
    std::vector<sim_stats> sim_out(sim_ids.size());
    std::vector<std::string> sim_err(sim_ids.size());
    detail::parallel_for(sim_ids.size(), [&](size_t i) {
        const task& t = plan.tasks[sim_ids[i]];
        const auto& ctx = plan.contexts[t.benchmark];
        try {
            sim_out[i] = run_interval(ctx.events, spec.hierarchy, t.policy, t.start, t.length,
                                      t.warmup, t.seed);
        } catch (const error& e) {
            sim_err[i] = e.what();
        } catch (const std::exception& e) {
            sim_err[i] = e.what();
        }
    });
    for (size_t i = 0; i < sim_ids.size(); ++i) {
        const task& t = plan.tasks[sim_ids[i]];
        auto& ctx = plan.contexts[t.benchmark];
        if (!sim_err[i].empty()) {
            if (ctx.failure.empty()) ctx.failure = t.label + ": " + sim_err[i];
            continue;
        }
        ledger.put(t.ledger_key, sim_out[i], t.label);
    }

    std::string stats_csv = "benchmark,input,policy,start,length,warmup,seed,instructions";
    for (const auto& l : spec.hierarchy.levels)
        stats_csv += "," + l.name + "_accesses," + l.name + "_hits," + l.name + "_misses";
    stats_csv += ",cycles,mpki_llc,cpi\n";

    std::string bars_csv = "benchmark,input,strategy,policy,mpki_llc,cpi\n";

    for (size_t bi = 0; bi < plan.contexts.size(); ++bi) {
        auto& ctx = plan.contexts[bi];
        const auto& bench = spec.benchmarks[bi];
        std::string bench_key = bench.name + "/" + bench.input_label;
        if (!ctx.failure.empty()) {
            report.failures[bench_key] = ctx.failure;
            continue;
        }
        try {
            write_trace(ctx.events, ctx.meta,
                        spec.out_dir / "traces" / (bench.name + "." + bench.input_label + ".ctr"));

            auto stats_for = [&](const policy_params& pol, uint64_t start, uint64_t length,
                                 uint64_t warmup) -> sim_stats {
                uint64_t seed = detail::run_seed(spec, bench.name, bench.input_label, pol);
                std::string key =
                    run_ledger::make_key(ctx.trace_fp, config_fp, pol, start, length, warmup, seed);
                const sim_stats* s = ledger.find(key);
                if (!s) throw data_error("missing ledger entry for " + key);
                stats_csv += bench.name + "," + bench.input_label + "," + to_string(pol.kind) +
                             "," + std::to_string(start) + "," + std::to_string(length) + "," +
                             std::to_string(warmup) + "," + std::to_string(seed) + "," +
                             std::to_string(s->instructions);
                for (const auto& l : s->levels)
                    stats_csv += "," + std::to_string(l.accesses) + "," +
                                 std::to_string(l.hits) + "," + std::to_string(l.misses);
                stats_csv += "," + format_num(s->cycles) + "," + format_num(s->mpki_llc) + "," +
                             format_num(s->cpi) + "\n";
                return *s;
            };

            // Per-policy results aligned with the spt plan.
            std::map<std::string, policy_result> interval_results;
            if (ctx.spt_plan) {
                for (const auto& pol : spec.policies) {
                    policy_result res;
                    res.policy = pol;
                    for (const auto& iv : ctx.spt_plan->intervals)
                        res.per_interval.push_back(
                            stats_for(pol, iv.start, iv.length, iv.warmup));
                    interval_results[to_string(pol.kind)] = std::move(res);
                }
            }
            std::map<std::string, sim_stats> full_results;
            if (has_strategy(spec, strategy_kind::full)) {
                for (const auto& pol : spec.policies)
                    full_results[to_string(pol.kind)] =
                        stats_for(pol, 0, ctx.events.size(), 0);
            }

            // Build the evaluated strategies with their plans.
            std::vector<detail::strategy_eval> evals;
            for (const auto& strat : spec.strategies) {
                detail::strategy_eval ev;
                ev.label = strat.label();
                switch (strat.kind) {
                    case strategy_kind::full:
                        ev.plan = full_plan(ctx.events.size());
                        break;
                    case strategy_kind::spt:
                        ev.plan = *ctx.spt_plan;
                        break;
                    case strategy_kind::weight:
                        ev.plan = top_weight_plan(*ctx.spt_plan);
                        break;
                    case strategy_kind::mpkilru:
                        ev.plan = mpkilru_weights(*ctx.spt_plan,
                                                  interval_results.at("LRU"));
                        break;
                    case strategy_kind::mpkimax: {
                        std::vector<policy_result> all;
                        for (const auto& pol : spec.policies)
                            all.push_back(interval_results.at(to_string(pol.kind)));
                        ev.plan = mpkimax_weights(*ctx.spt_plan, all, spec.mpkimax_exclude);
                        break;
                    }
                    case strategy_kind::ff:
                        ev.plan = ff_plan(strat.ff_skip, strat.ff_length, ctx.events.size());
                        break;
                }
                write_plan(ev.plan, spec.out_dir / "plans" /
                                        (bench.name + "." + bench.input_label + "." + ev.label +
                                         ".json"));
                report.budget.push_back(instruction_budget_row(
                    bench.name, bench.input_label, ev.label, ev.plan, ctx.events.size()));

                // Weighted metric values per policy, all through
                // weighted_metric so every strategy is computed the same way.
                for (const auto& pol : spec.policies) {
                    policy_result aligned;
                    aligned.policy = pol;
                    switch (strat.kind) {
                        case strategy_kind::full:
                            aligned.per_interval = {full_results.at(to_string(pol.kind))};
                            break;
                        case strategy_kind::spt:
                        case strategy_kind::mpkilru:
                        case strategy_kind::mpkimax:
                            aligned.per_interval =
                                interval_results.at(to_string(pol.kind)).per_interval;
                            break;
                        case strategy_kind::weight: {
                            size_t src = ev.plan.provenance.at("source_interval").get<size_t>();
                            aligned.per_interval = {
                                interval_results.at(to_string(pol.kind)).per_interval[src]};
                            break;
                        }
                        case strategy_kind::ff: {
                            const auto& iv = ev.plan.intervals[0];
                            aligned.per_interval = {
                                stats_for(pol, iv.start, iv.length, iv.warmup)};
                            break;
                        }
                    }
                    ev.mpki[to_string(pol.kind)] =
                        weighted_metric(ev.plan, aligned, metric_kind::mpki);
                    ev.cpi[to_string(pol.kind)] =
                        weighted_metric(ev.plan, aligned, metric_kind::cpi);
                }
                evals.push_back(std::move(ev));
            }

            for (const auto& ev : evals)
                for (const auto& pol : spec.policies)
                    bars_csv += bench.name + "," + bench.input_label + "," + ev.label + "," +
                                to_string(pol.kind) + "," +
                                format_num(ev.mpki.at(to_string(pol.kind))) + "," +
                                format_num(ev.cpi.at(to_string(pol.kind))) + "\n";

            // Collapse into benchmark_record when the full compared set ran.
            bool compared_complete = true;
            for (policy_kind k : kComparedPolicies)
                if (!has_policy(spec, k)) compared_complete = false;

            benchmark_record rec;
            rec.benchmark = bench.name;
            rec.input = bench.input_label;
            if (compared_complete) {
                for (const auto& ev : evals) {
                    policy_vector vm, vc;
                    for (policy_kind k : kComparedPolicies) {
                        vm[k] = ev.mpki.at(to_string(k));
                        vc[k] = ev.cpi.at(to_string(k));
                    }
                    if (ev.label == "full") {
                        rec.full_mpki = vm;
                        rec.full_cpi = vc;
                        rec.lru_full_mpki = vm[policy_kind::lru];
                    } else {
                        rec.strategy_mpki[ev.label] = vm;
                        rec.strategy_cpi[ev.label] = vc;
                    }
                }
            }
            report.records.push_back(rec);

            // Timeline (full-run MPKI as instructions execute) with interval
            // start markers ranked by plan weight.
            uint64_t window = spec.timeline_window ? spec.timeline_window : spec.spt.chunk_size;
            auto points =
                mpki_timeline(ctx.events, spec.hierarchy, spec.timeline_policy, window,
                              detail::run_seed(spec, bench.name, bench.input_label,
                                               spec.timeline_policy));
            std::map<uint64_t, int> start_rank;
            if (ctx.spt_plan) {
                auto ivs = ctx.spt_plan->intervals;
                std::stable_sort(ivs.begin(), ivs.end(),
                                 [](const plan_interval& a, const plan_interval& b) {
                                     return a.weight > b.weight;
                                 });
                for (size_t i = 0; i < ivs.size(); ++i)
                    start_rank.emplace(ivs[i].start, static_cast<int>(i) + 1);
            }
            std::string tl_csv = "window_start,window_length,llc_misses,mpki_llc,interval_rank\n";
            for (const auto& p : points) {
                int rank = 0;
                for (const auto& [s, r] : start_rank)
                    if (s >= p.window_start && s < p.window_start + p.window_length) {
                        rank = (rank == 0) ? r : std::min(rank, r);
                    }
                tl_csv += std::to_string(p.window_start) + "," +
                          std::to_string(p.window_length) + "," +
                          std::to_string(p.llc_misses) + "," + format_num(p.mpki_llc) + "," +
                          std::to_string(rank) + "\n";
            }
            detail::write_text_file(spec.out_dir / "report" /
                                        ("timeline_" + bench.name + "." + bench.input_label +
                                         ".csv"),
                                    tl_csv);
        } catch (const error& e) {
            report.failures[bench_key] = e.what();
        } catch (const std::exception& e) {
            report.failures[bench_key] = e.what();
        }
    }

    detail::write_text_file(spec.out_dir / "stats.csv", stats_csv);
    detail::write_text_file(spec.out_dir / "report" / "bars.csv", bars_csv);

    // metrics.csv: order / closeness rows per benchmark x strategy, only
    // when a full reference exists.
    {
        std::string csv = "benchmark,input,strategy,metric,value\n";
        bool have_full = has_strategy(spec, strategy_kind::full);
        for (auto& rec : report.records) {
            if (!have_full) break;
            for (const auto& [strat, vm] : rec.strategy_mpki) {
                csv += rec.benchmark + "," + rec.input + "," + strat + ",order," +
                       std::to_string(order_metric(rec.full_mpki, vm)) + "\n";
                bool zero_baseline = false;
                for (double v : rec.full_mpki.values)
                    if (v == 0.0) zero_baseline = true;
                if (zero_baseline) {
                    report.notes.push_back(rec.benchmark + "/" + rec.input +
                                           ": zero full MPKI, closeness skipped");
                } else {
                    csv += rec.benchmark + "," + rec.input + "," + strat + ",closeness_mpki," +
                           format_num(closeness_mpki(rec.full_mpki, vm)) + "\n";
                    csv += rec.benchmark + "," + rec.input + "," + strat + ",closeness_cpi," +
                           format_num(closeness_cpi(rec.full_cpi, rec.strategy_cpi.at(strat))) +
                           "\n";
                }
            }
        }
        detail::write_text_file(spec.out_dir / "report" / "metrics.csv", csv);
    }

    // budget.csv
    {
        std::string csv = "benchmark,input,strategy,full_size,selected,percent\n";
        for (const auto& row : report.budget)
            csv += row.benchmark + "," + row.input + "," + row.strategy + "," +
                   std::to_string(row.full_size) + "," + std::to_string(row.selected) + "," +
                   format_num(row.percent) + "\n";
        detail::write_text_file(spec.out_dir / "report" / "budget.csv", csv);
    }

    // Scenario x strategy aggregate tables.
    if (has_strategy(spec, strategy_kind::full) && !report.records.empty()) {
        std::set<std::string> strategies;
        for (const auto& rec : report.records)
            for (const auto& [strat, _] : rec.strategy_mpki) strategies.insert(strat);

        for (scenario_kind sc : spec.scenarios) {
            std::string sc_name = to_string(sc);
            std::vector<const benchmark_record*> chosen;
            try {
                chosen = scenario_filter(report.records, sc, spec.scen_params);
            } catch (const empty_scenario_error& e) {
                report.notes.push_back(std::string("scenario ") + sc_name + ": " + e.what());
                continue;
            }
            for (const auto& strat : strategies) {
                std::vector<std::pair<std::string, double>> order_vals;
                std::vector<std::pair<std::string, double>> close_mpki, close_cpi;
                for (const auto* rec : chosen) {
                    auto it = rec->strategy_mpki.find(strat);
                    if (it == rec->strategy_mpki.end()) continue;
                    order_vals.emplace_back(
                        rec->benchmark,
                        static_cast<double>(order_metric(rec->full_mpki, it->second)));
                    bool zero_baseline = false;
                    for (double v : rec->full_mpki.values)
                        if (v == 0.0) zero_baseline = true;
                    if (!zero_baseline) {
                        close_mpki.emplace_back(rec->benchmark,
                                                closeness_mpki(rec->full_mpki, it->second));
                        close_cpi.emplace_back(
                            rec->benchmark,
                            closeness_cpi(rec->full_cpi, rec->strategy_cpi.at(strat)));
                    }
                }
                if (!order_vals.empty()) {
                    auto a = two_stage_aggregate(order_vals, mean_kind::arithmetic);
                    report.tables["order"][sc_name][strat] = {a.value, a.floored};
                }
                if (!close_mpki.empty()) {
                    auto a = two_stage_aggregate(close_mpki, mean_kind::arithmetic);
                    auto g = two_stage_aggregate(close_mpki, mean_kind::geometric);
                    report.tables["closeness_mpki/arithmetic"][sc_name][strat] = {a.value,
                                                                                  a.floored};
                    report.tables["closeness_mpki/geometric"][sc_name][strat] = {g.value,
                                                                                 g.floored};
                }
                if (!close_cpi.empty()) {
                    auto a = two_stage_aggregate(close_cpi, mean_kind::arithmetic);
                    auto g = two_stage_aggregate(close_cpi, mean_kind::geometric);
                    report.tables["closeness_cpi/arithmetic"][sc_name][strat] = {a.value,
                                                                                 a.floored};
                    report.tables["closeness_cpi/geometric"][sc_name][strat] = {g.value,
                                                                                g.floored};
                }
            }
        }
    }

    // tables.json: scenario x strategy grids plus the budget table.
    {
        nlohmann::json j;
        for (const auto& [table, scen_map] : report.tables) {
            nlohmann::json jt;
            for (const auto& [sc, strat_map] : scen_map) {
                nlohmann::json js;
                for (const auto& [strat, cell] : strat_map) {
                    js[strat] = cell.floored
                                    ? nlohmann::json{{"value", cell.value}, {"floored", true}}
                                    : nlohmann::json(cell.value);
                }
                jt[sc] = js;
            }
            j["tables"][table] = jt;
        }
        nlohmann::json jb = nlohmann::json::array();
        for (const auto& row : report.budget)
            jb.push_back({{"benchmark", row.benchmark},
                          {"input", row.input},
                          {"strategy", row.strategy},
                          {"full_size", row.full_size},
                          {"selected", row.selected},
                          {"percent", row.percent}});
        j["budget"] = jb;
        j["notes"] = report.notes;
        detail::write_text_file(spec.out_dir / "report" / "tables.json", j.dump(2) + "\n");
    }

    if (!report.failures.empty()) {
        nlohmann::json j;
        for (const auto& [k, v] : report.failures) j[k] = v;
        detail::write_text_file(spec.out_dir / "failures.json", j.dump(2) + "\n");
    }

    return report;
}

}  // namespace ilab

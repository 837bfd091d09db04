// interval-lab command line: generate traces, run simulations, detect
// phases, reweight interval plans, and evaluate whole experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ilab/cache.hpp"
#include "ilab/harness.hpp"
#include "ilab/metrics.hpp"
#include "ilab/phase.hpp"
#include "ilab/policy.hpp"
#include "ilab/reweight.hpp"
#include "ilab/support.hpp"
#include "ilab/synth.hpp"
#include "ilab/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ilab::data_error("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ilab::data_error(path.string() + ": " + e.what());
    }
    return j;
}

void save_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ilab::data_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

struct interval_arg {
    uint64_t start = 0;
    uint64_t length = 0;
    uint64_t warmup = 0;
};

interval_arg parse_interval(const std::string& s) {
    interval_arg iv;
    size_t c1 = s.find(':');
    if (c1 == std::string::npos)
        throw ilab::config_error("--interval expects start:len[:warmup], got '" + s + "'");
    size_t c2 = s.find(':', c1 + 1);
    try {
        iv.start = std::stoull(s.substr(0, c1));
        iv.length = std::stoull(s.substr(c1 + 1, c2 == std::string::npos ? std::string::npos
                                                                         : c2 - c1 - 1));
        if (c2 != std::string::npos) iv.warmup = std::stoull(s.substr(c2 + 1));
    } catch (const std::exception&) {
        throw ilab::config_error("--interval expects start:len[:warmup], got '" + s + "'");
    }
    return iv;
}

json stats_row(const std::string& trace_name, const ilab::policy_params& policy,
               int64_t interval_index, uint64_t start, uint64_t length, uint64_t warmup,
               uint64_t seed, const ilab::sim_stats& stats) {
    json j = ilab::stats_to_json(stats);
    j["trace"] = trace_name;
    j["policy"] = ilab::to_string(policy.kind);
    j["interval_index"] = interval_index;
    j["start"] = start;
    j["length"] = length;
    j["warmup"] = warmup;
    j["seed"] = seed;
    return j;
}

int cmd_trace_gen(const fs::path& spec_path, const fs::path& out, bool text) {
    auto spec = ilab::synth_spec_from_json(load_json(spec_path));
    auto [meta, events] = ilab::generate_synthetic(spec);
    if (text)
        ilab::write_trace_text(events, meta, out);
    else
        ilab::write_trace(events, meta, out);
    std::cerr << "wrote " << meta.event_count << " events (" << meta.bb_count
              << " basic blocks) to " << out << "\n";
    return 0;
}

int cmd_simulate(const fs::path& trace_path, const fs::path& config_path,
                 const std::string& policy_name, unsigned rrpv_bits, unsigned throttle,
                 const std::string& interval, const fs::path& plan_path, uint64_t timeline,
                 uint64_t seed, const fs::path& out) {
    auto [meta, events] = ilab::load_trace(trace_path);
    ilab::hierarchy_config cfg = config_path.empty()
                                     ? ilab::server_hierarchy()
                                     : ilab::hierarchy_from_json(load_json(config_path));
    ilab::policy_params policy;
    policy.kind = ilab::policy_kind_from_string(policy_name);
    policy.rrpv_bits = rrpv_bits;
    policy.bimodal_throttle = throttle;

    json result;
    if (!plan_path.empty()) {
        ilab::interval_plan plan = ilab::read_plan(plan_path);
        plan.validate(events.size());
        result = json::array();
        for (size_t i = 0; i < plan.intervals.size(); ++i) {
            const auto& iv = plan.intervals[i];
            auto stats = ilab::run_interval(events, cfg, policy, iv.start, iv.length, iv.warmup,
                                            seed);
            result.push_back(stats_row(meta.name, policy, iv.chunk_index, iv.start, iv.length,
                                       iv.warmup, seed, stats));
        }
    } else if (!interval.empty()) {
        interval_arg iv = parse_interval(interval);
        auto stats =
            ilab::run_interval(events, cfg, policy, iv.start, iv.length, iv.warmup, seed);
        result = stats_row(meta.name, policy, -1, iv.start, iv.length, iv.warmup, seed, stats);
    } else {
        auto stats = ilab::run_full(events, cfg, policy, seed);
        result = stats_row(meta.name, policy, -1, 0, events.size(), 0, seed, stats);
        if (timeline > 0) {
            json points = json::array();
            for (const auto& p : ilab::mpki_timeline(events, cfg, policy, timeline, seed))
                points.push_back({{"window_start", p.window_start},
                                  {"window_length", p.window_length},
                                  {"llc_misses", p.llc_misses},
                                  {"mpki_llc", p.mpki_llc}});
            result["timeline"] = points;
        }
    }
    save_json(result, out);
    return 0;
}

int cmd_phases(const fs::path& trace_path, uint64_t chunk, size_t dim, uint32_t k,
               uint32_t max_k, uint64_t warmup, uint64_t seed, const fs::path& out,
               const fs::path& simpoints_out) {
    auto [meta, events] = ilab::load_trace(trace_path);
    if (events.empty()) throw ilab::empty_trace_error(trace_path.string() + ": empty trace");
    auto chunks = ilab::slice_chunks(meta, chunk);
    auto bbv = ilab::build_bbvs(events, chunks);
    size_t use_dim = std::min(dim, std::max<size_t>(bbv.cols, 1));
    auto proj = ilab::random_project(bbv, use_dim, ilab::derive_seed(seed, "projection"));
    uint64_t kseed = ilab::derive_seed(seed, "kmeans");
    if (k == 0) k = ilab::choose_k(proj, max_k, kseed);
    k = std::min<uint32_t>(k, static_cast<uint32_t>(proj.rows));
    auto cl = ilab::kmeans(proj, k, kseed);
    auto plan = ilab::select_representatives(cl, proj, chunks);
    for (auto& iv : plan.intervals) iv.warmup = std::min(warmup, iv.start);
    plan.provenance["trace"] = meta.name;
    plan.provenance["seed"] = seed;
    ilab::write_plan(plan, out);
    if (!simpoints_out.empty()) ilab::export_simpoints(plan, simpoints_out);
    std::cerr << "selected " << plan.intervals.size() << " intervals over "
              << chunks.boundaries.size() << " chunks (k=" << k << ")\n";
    return 0;
}

// Reads every *.json under `results` (simulate output rows, single objects
// or arrays), groups rows by policy, and orders each group to match the
// plan's intervals.
std::map<std::string, ilab::policy_result> collect_results(const fs::path& results_dir,
                                                           const ilab::interval_plan& plan) {
    std::vector<json> rows;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(results_dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        json j = load_json(f);
        if (j.is_array())
            for (const auto& r : j) rows.push_back(r);
        else
            rows.push_back(j);
    }

    std::map<std::string, std::map<uint64_t, ilab::sim_stats>> by_policy;  // start -> stats
    for (const auto& r : rows) {
        if (!r.contains("policy") || !r.contains("start")) continue;
        std::string pol = r.at("policy").get<std::string>();
        by_policy[pol][r.at("start").get<uint64_t>()] = ilab::stats_from_json(r);
    }

    std::map<std::string, ilab::policy_result> out;
    for (auto& [pol, by_start] : by_policy) {
        ilab::policy_result res;
        res.policy.kind = ilab::policy_kind_from_string(pol);
        for (const auto& iv : plan.intervals) {
            auto it = by_start.find(iv.start);
            if (it == by_start.end())
                throw ilab::alignment_error("results for policy " + pol +
                                            " are missing interval at start " +
                                            std::to_string(iv.start));
            res.per_interval.push_back(it->second);
        }
        out[pol] = std::move(res);
    }
    if (out.empty())
        throw ilab::data_error("no usable stats rows found under " + results_dir.string());
    return out;
}

int cmd_reweight(const fs::path& plan_path, const fs::path& results_dir, const std::string& mode,
                 const fs::path& out) {
    ilab::interval_plan plan = ilab::read_plan(plan_path);
    auto results = collect_results(results_dir, plan);

    ilab::interval_plan reweighted;
    if (mode == "mpkilru") {
        auto it = results.find("LRU");
        if (it == results.end())
            throw ilab::config_error("mpkilru reweighting needs LRU results in " +
                                     results_dir.string());
        reweighted = ilab::mpkilru_weights(plan, it->second);
    } else if (mode == "mpkimax") {
        std::vector<ilab::policy_result> all;
        for (auto& [_, res] : results) all.push_back(res);
        reweighted = ilab::mpkimax_weights(plan, all);
    } else {
        throw ilab::config_error("--mode must be mpkilru or mpkimax, got '" + mode + "'");
    }
    ilab::write_plan(reweighted, out);
    return 0;
}

int cmd_evaluate(const fs::path& experiment_path, const fs::path& out_dir) {
    ilab::experiment_spec spec = ilab::load_experiment(experiment_path);
    if (!out_dir.empty()) spec.out_dir = out_dir;
    ilab::metrics_report report = ilab::run_experiment(spec);
    std::cerr << "evaluated " << report.records.size() << " benchmark(s), "
              << report.failures.size() << " failure(s); reports under "
              << (spec.out_dir / "report") << "\n";
    for (const auto& [bench, why] : report.failures)
        std::cerr << "  FAILED " << bench << ": " << why << "\n";
    return report.failures.empty() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interval-lab: trace-driven cache interval simulation toolkit"};
    app.require_subcommand(1);

    // trace gen
    auto* trace_cmd = app.add_subcommand("trace", "trace utilities");
    trace_cmd->require_subcommand(1);
    auto* gen = trace_cmd->add_subcommand("gen", "generate a synthetic trace");
    fs::path gen_spec, gen_out;
    bool gen_text = false;
    gen->add_option("--spec", gen_spec, "synthetic workload spec (JSON)")->required();
    gen->add_option("--out", gen_out, "output trace file")->required();
    gen->add_flag("--text", gen_text, "write the text mirror format instead of CTR1");

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a trace through the cache hierarchy");
    fs::path sim_trace, sim_config, sim_plan, sim_out = "stats.json";
    std::string sim_policy = "LRU", sim_interval;
    unsigned sim_rrpv = 2, sim_throttle = 32;
    uint64_t sim_timeline = 0, sim_seed = 1;
    sim->add_option("--trace", sim_trace, "CTR1 trace file")->required();
    sim->add_option("--config", sim_config,
                    "hierarchy config (JSON); defaults to the built-in server hierarchy");
    sim->add_option("--policy", sim_policy, "LRU|TreeLRU|Random|SRRIP|BRRIP");
    sim->add_option("--rrpv-bits", sim_rrpv, "RRPV width for SRRIP/BRRIP");
    sim->add_option("--throttle", sim_throttle, "BRRIP bimodal throttle");
    sim->add_option("--interval", sim_interval, "measure start:len[:warmup] only");
    sim->add_option("--plan", sim_plan, "run every interval of a plan (JSON)");
    sim->add_option("--timeline", sim_timeline, "emit MPKI timeline with this window size");
    sim->add_option("--seed", sim_seed, "run seed (Random policy)");
    sim->add_option("--out", sim_out, "output stats JSON");

    // phases
    auto* ph = app.add_subcommand("phases", "SimPoint-style interval selection");
    fs::path ph_trace, ph_out = "plan.json", ph_simpoints;
    uint64_t ph_chunk = 10000, ph_warmup = 0, ph_seed = 1;
    size_t ph_dim = 15;
    uint32_t ph_k = 0, ph_maxk = 10;
    ph->add_option("--trace", ph_trace, "CTR1 trace file")->required();
    ph->add_option("--chunk", ph_chunk, "chunk size in instructions");
    ph->add_option("--dim", ph_dim, "random projection dimension");
    ph->add_option("--k", ph_k, "cluster count (0 = sweep up to --max-k)");
    ph->add_option("--max-k", ph_maxk, "sweep bound when --k 0");
    ph->add_option("--warmup", ph_warmup, "per-interval warmup instructions");
    ph->add_option("--seed", ph_seed, "selection seed");
    ph->add_option("--out", ph_out, "output plan JSON");
    ph->add_option("--export-simpoints", ph_simpoints,
                   "also write a `chunk_index weight` text file");

    // reweight
    auto* rw = app.add_subcommand("reweight", "redefine plan weights from LLC activity");
    fs::path rw_plan, rw_results, rw_out = "plan2.json";
    std::string rw_mode;
    rw->add_option("--plan", rw_plan, "input plan JSON")->required();
    rw->add_option("--results", rw_results, "directory of simulate output rows")->required();
    rw->add_option("--mode", rw_mode, "mpkilru|mpkimax")->required();
    rw->add_option("--out", rw_out, "output plan JSON");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "run a full experiment and write reports");
    fs::path ev_exp, ev_out;
    ev->add_option("--experiment", ev_exp, "experiment spec JSON")->required();
    ev->add_option("--out", ev_out, "output directory (overrides spec out_dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_trace_gen(gen_spec, gen_out, gen_text);
        if (sim->parsed())
            return cmd_simulate(sim_trace, sim_config, sim_policy, sim_rrpv, sim_throttle,
                                sim_interval, sim_plan, sim_timeline, sim_seed, sim_out);
        if (ph->parsed())
            return cmd_phases(ph_trace, ph_chunk, ph_dim, ph_k, ph_maxk, ph_warmup, ph_seed,
                              ph_out, ph_simpoints);
        if (rw->parsed()) return cmd_reweight(rw_plan, rw_results, rw_mode, rw_out);
        if (ev->parsed()) return cmd_evaluate(ev_exp, ev_out);
    } catch (const ilab::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

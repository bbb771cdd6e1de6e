#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkdvpp/error.hpp"
#include "qkdvpp/metrics.hpp"
#include "qkdvpp/model.hpp"
#include "qkdvpp/planner.hpp"
#include "qkdvpp/sim.hpp"

using namespace qkdvpp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitRuntime = 1;

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::Parse: return 2;
        case ErrorCode::Invariant:
        case ErrorCode::Range: return 3;
        case ErrorCode::DanglingRef: return 4;
        case ErrorCode::Usage: return kExitUsage;
        default: return kExitRuntime;
    }
}

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int seeds = 1;
    std::string out = "out";
    int parallelism = 1;
    int horizon = -1;
};

ValidatedModel load_model(const std::string& path) {
    if (path.empty()) return validate_config(default_config());
    return load_config_file(path);
}

std::vector<std::uint64_t> seed_list(std::uint64_t master, int n) {
    std::vector<std::uint64_t> s;
    for (int k = 0; k < n; ++k) s.push_back(master + static_cast<std::uint64_t>(k));
    return s;
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorCode::Usage, p.string(), "cannot open for writing");
    f << text;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

bool is_rate(const std::string& name) {
    for (const char* p : {"sla_violation_", "qosec_", "expiry_share", "deficit_share", "cross_domain_share",
                          "critical_s3_share", "strong_share", "pool_occupancy"})
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

// Quantile order and rate bounds, checked before anything is written.
void check_summary(const Model& model, const sim::RunSummary& rs) {
    for (const auto& m : rs.metrics)
        if (is_rate(m.name) && (m.ci.mean < -1e-12 || m.ci.mean > 1.0 + 1e-12))
            throw Error(ErrorCode::Invariant, rs.name + "." + m.name, "rate outside [0, 1]");
    for (const auto& c : model.classes) {
        const std::string id = to_string(c.id);
        const double p50 = rs.mean("p50_" + id), p95 = rs.mean("p95_" + id), p99 = rs.mean("p99_" + id);
        if (!(p50 <= p95 && p95 <= p99))
            throw Error(ErrorCode::Invariant, rs.name + ".p50_" + id, "latency quantiles out of order");
    }
}

json summary_json(const sim::RunSummary& rs) {
    json metrics = json::object();
    bool degenerate = false;
    for (const auto& m : rs.metrics) {
        metrics[m.name] = {{"mean", m.ci.mean}, {"ci_low", m.ci.lo}, {"ci_high", m.ci.hi}, {"n", m.ci.n}};
        degenerate = degenerate || m.ci.degenerate;
    }
    return {{"name", rs.name},
            {"policy", sim::to_string(rs.options.policy)},
            {"ablation", rs.options.ablation.label()},
            {"yield_scale", rs.options.yield_scale},
            {"seeds", rs.seeds},
            {"degenerate_ci", degenerate},
            {"metrics", metrics}};
}

std::string metrics_csv(const std::vector<sim::RunSummary>& runs, const std::string& hash, std::uint64_t seed) {
    std::ostringstream os;
    os << "policy,metric,mean,ci_low,ci_high,n,degenerate,config_hash,seed\n";
    for (const auto& rs : runs)
        for (const auto& m : rs.metrics)
            os << rs.name << ',' << m.name << ',' << fmt(m.ci.mean) << ',' << fmt(m.ci.lo) << ',' << fmt(m.ci.hi)
               << ',' << m.ci.n << ',' << (m.ci.degenerate ? 1 : 0) << ',' << hash << ',' << seed << '\n';
    return os.str();
}

std::string series_csv(const std::vector<sim::RunSummary>& runs, const std::string& hash, std::uint64_t seed) {
    std::ostringstream os;
    os << "policy,slot,risk,price,node_price,strong_share,peak,config_hash,seed\n";
    for (const auto& rs : runs)
        for (std::size_t t = 0; t < rs.mean_risk.size(); ++t)
            os << rs.name << ',' << t << ',' << fmt(rs.mean_risk[t]) << ',' << fmt(rs.mean_price[t]) << ','
               << fmt(rs.mean_node_price[t]) << ',' << fmt(rs.mean_strong_share[t]) << ',' << int(rs.peak[t]) << ','
               << hash << ',' << seed << '\n';
    return os.str();
}

json timing_json(const std::vector<sim::RunSummary>& runs, double wall) {
    json j = {{"wall_seconds", wall}, {"policies", json::array()}};
    for (const auto& rs : runs) {
        auto d = rs.decision_seconds;
        json row = {{"name", rs.name}, {"decisions", d.size()}};
        if (!d.empty()) {
            std::sort(d.begin(), d.end());
            row["median_seconds"] = d[d.size() / 2];
            row["p95_seconds"] = d[std::min(d.size() - 1, d.size() * 95 / 100)];
            row["max_seconds"] = d.back();
        }
        j["policies"].push_back(row);
    }
    return j;
}

struct RunOutput {
    std::vector<sim::RunSummary> runs;
    double wall = 0.0;
};

// Runs the specs, streams every trace to out/traces and returns the summaries.
RunOutput run_and_trace(const Model& model, const planner::OfflinePlan* plan, const std::vector<sim::RunSpec>& specs,
                        const std::vector<std::uint64_t>& seeds, const Common& c, bool traces) {
    const fs::path dir = fs::path(c.out) / "traces";
    auto sink = [&](const sim::RunSpec& spec, const sim::EpisodeTrace& tr) {
        if (!traces) return;
        std::ostringstream os;
        sim::write_trace(os, tr);
        write_file(dir / (spec.name + "-seed" + std::to_string(tr.seed) + ".ndjson"), os.str());
    };
    const auto t0 = std::chrono::steady_clock::now();
    RunOutput out;
    out.runs = sim::run_monte_carlo(model, plan, specs, seeds, c.parallelism, sink);
    out.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& rs : out.runs) check_summary(model, rs);
    return out;
}

json header(const std::string& cmd, const Model& model, const Common& c, std::uint64_t master, int horizon) {
    return {{"command", cmd},
            {"config_hash", config_hash(model)},
            {"seed", master},
            {"seeds", seed_list(master, c.seeds)},
            {"horizon", horizon}};
}

int horizon_of(const Model& model, const Common& c) { return c.horizon >= 0 ? c.horizon : model.sim.horizon; }

planner::OfflinePlan load_plan(const std::string& path, const Model& model) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::Usage, path, "cannot read plan");
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, path, e.what());
    }
    return planner::plan_from_json(doc, model);
}

int cmd_validate(const Common& c) {
    const auto model = load_model(c.config);
    std::cout << "ok " << config_hash(*model) << " classes=" << model->classes.size()
              << " nodes=" << model->nodes.size() << " links=" << model->links.size()
              << " domains=" << model->domains.size() << "\n";
    return 0;
}

int cmd_plan(const Common& c, int scenarios, const std::string& out_file) {
    Model model = *load_model(c.config);
    if (scenarios > 0) model.sim.planner.scenarios = scenarios;
    const std::uint64_t master = c.seed_set ? c.seed : model.seed;
    const auto plan = sim::default_plan(model, horizon_of(model, c), master);
    auto doc = planner::to_json(plan);
    doc["seed"] = master;
    const fs::path path = out_file.empty() ? fs::path(c.out) / "plan.json" : fs::path(out_file);
    write_file(path, doc.dump(2) + "\n");
    std::cout << "plan " << path.string() << " horizon=" << plan.horizon << " iterations=" << plan.iterations
              << " domains=" << (plan.quotas.empty() ? 0 : plan.quotas.front().size()) << "\n";
    return 0;
}

int cmd_simulate(const Common& c, const std::vector<std::string>& policies, const std::string& plan_path) {
    const auto model = load_model(c.config);
    std::vector<sim::RunSpec> specs;
    bool needs_plan = false;
    for (const auto& p : policies) {
        sim::EpisodeOptions o;
        o.policy = sim::policy_from_string(p);
        o.horizon = c.horizon;
        needs_plan = needs_plan || o.policy == sim::Policy::Proposed || o.policy == sim::Policy::Oracle;
        specs.push_back({p, o});
    }
    if (needs_plan && plan_path.empty()) throw Error(ErrorCode::Usage, "--plan", "required for proposed and oracle");
    std::optional<planner::OfflinePlan> plan;
    if (!plan_path.empty()) plan = load_plan(plan_path, *model);

    const std::uint64_t master = c.seed_set ? c.seed : model->seed;
    const auto seeds = seed_list(master, c.seeds);
    const auto res = run_and_trace(*model, plan ? &*plan : nullptr, specs, seeds, c, true);

    const std::string hash = config_hash(*model);
    json doc = header("simulate", *model, c, master, horizon_of(*model, c));
    doc["policies"] = json::array();
    for (const auto& rs : res.runs) doc["policies"].push_back(summary_json(rs));
    const fs::path out(c.out);
    write_file(out / "summary.json", doc.dump(2) + "\n");
    write_file(out / "metrics.csv", metrics_csv(res.runs, hash, master));
    write_file(out / "series.csv", series_csv(res.runs, hash, master));
    write_file(out / "timing.json", timing_json(res.runs, res.wall).dump(2) + "\n");
    for (const auto& rs : res.runs) {
        const auto& ci = rs.interval("cum_risk");
        std::cout << rs.name << " cum_risk=" << fmt(ci.mean) << " [" << fmt(ci.lo) << ", " << fmt(ci.hi) << "]"
                  << (ci.degenerate ? " (degenerate interval)" : "") << "\n";
    }
    return 0;
}

planner::OfflinePlan plan_or_default(const std::string& path, const Model& model, const Common& c,
                                     std::uint64_t master) {
    if (!path.empty()) return load_plan(path, model);
    return sim::default_plan(model, horizon_of(model, c), master);
}

int cmd_sweep(const Common& c, const std::vector<std::string>& policies, const std::vector<double>& budgets,
              const std::string& plan_path) {
    if (budgets.size() < 2) throw Error(ErrorCode::Usage, "--budgets", "need at least two budget points");
    for (double b : budgets)
        if (!(b >= 0.0)) throw Error(ErrorCode::Usage, "--budgets", "budget scales must be nonnegative");
    const auto model = load_model(c.config);
    const std::uint64_t master = c.seed_set ? c.seed : model->seed;
    const auto plan = plan_or_default(plan_path, *model, c, master);
    std::vector<sim::RunSpec> specs;
    for (const auto& p : policies)
        for (double b : budgets) {
            sim::EpisodeOptions o;
            o.policy = sim::policy_from_string(p);
            o.horizon = c.horizon;
            o.yield_scale = b;
            o.record_slots = false;
            specs.push_back({p + "@" + fmt(b), o});
        }
    const auto seeds = seed_list(master, c.seeds);
    const auto res = run_and_trace(*model, &plan, specs, seeds, c, false);

    const std::string hash = config_hash(*model);
    std::ostringstream os;
    os << "policy,budget,risk_mean,risk_ci_low,risk_ci_high,key_bits_mean,key_bits_ci_low,key_bits_ci_high,config_hash,"
          "seed\n";
    json doc = header("sweep", *model, c, master, horizon_of(*model, c));
    doc["budgets"] = budgets;
    doc["rows"] = json::array();
    for (const auto& rs : res.runs) {
        const auto& r = rs.interval("cum_risk");
        const auto& k = rs.interval("key_bits");
        const std::string pol = sim::to_string(rs.options.policy);
        os << pol << ',' << fmt(rs.options.yield_scale) << ',' << fmt(r.mean) << ',' << fmt(r.lo) << ',' << fmt(r.hi)
           << ',' << fmt(k.mean) << ',' << fmt(k.lo) << ',' << fmt(k.hi) << ',' << hash << ',' << master << '\n';
        doc["rows"].push_back({{"policy", pol},
                               {"budget", rs.options.yield_scale},
                               {"risk_mean", r.mean},
                               {"key_bits_mean", k.mean},
                               {"degenerate_ci", r.degenerate}});
    }
    const fs::path out(c.out);
    write_file(out / "pareto.csv", os.str());
    write_file(out / "summary.json", doc.dump(2) + "\n");
    write_file(out / "timing.json", timing_json(res.runs, res.wall).dump(2) + "\n");
    std::cout << "pareto " << (out / "pareto.csv").string() << " rows=" << res.runs.size() << "\n";
    return 0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& policies, const std::string& plan_path,
                bool ablations) {
    const auto model = load_model(c.config);
    const std::uint64_t master = c.seed_set ? c.seed : model->seed;
    const auto plan = plan_or_default(plan_path, *model, c, master);
    std::vector<sim::RunSpec> specs;
    for (const auto& p : policies) {
        sim::EpisodeOptions o;
        o.policy = sim::policy_from_string(p);
        o.horizon = c.horizon;
        o.record_slots = false;
        specs.push_back({p, o});
    }
    const std::size_t n_main = specs.size();
    std::vector<std::pair<std::string, sim::Ablation>> abl;
    if (ablations) {
        sim::Ablation a;
        a.no_forecast = true;
        abl.emplace_back("no_forecast", a);
        a = {};
        a.zero_reserve = true;
        abl.emplace_back("zero_reserve", a);
        a = {};
        a.no_degradation = true;
        abl.emplace_back("no_degradation", a);
        a = {};
        a.round_robin = true;
        abl.emplace_back("round_robin", a);
        bool have_full = false;
        for (const auto& s : specs) have_full = have_full || s.options.policy == sim::Policy::Proposed;
        if (!have_full) {
            sim::EpisodeOptions o;
            o.horizon = c.horizon;
            o.record_slots = false;
            specs.push_back({"proposed", o});
        }
        for (const auto& [name, ab] : abl) {
            sim::EpisodeOptions o;
            o.horizon = c.horizon;
            o.ablation = ab;
            o.record_slots = false;
            specs.push_back({"proposed-" + name, o});
        }
    }
    const auto seeds = seed_list(master, c.seeds);
    const auto res = run_and_trace(*model, &plan, specs, seeds, c, false);

    const std::string hash = config_hash(*model);
    const std::vector<sim::RunSummary> main_rows(res.runs.begin(), res.runs.begin() + n_main);
    json doc = header("compare", *model, c, master, horizon_of(*model, c));
    doc["policies"] = json::array();
    for (const auto& rs : main_rows) doc["policies"].push_back(summary_json(rs));
    const fs::path out(c.out);
    write_file(out / "metrics.csv", metrics_csv(main_rows, hash, master));

    if (ablations) {
        const sim::RunSummary* full = nullptr;
        for (const auto& rs : res.runs)
            if (rs.options.policy == sim::Policy::Proposed && rs.options.ablation.label() == "full") {
                full = &rs;
                break;
            }
        std::ostringstream os;
        os << "ablation,metric,full_mean,ablated_mean,delta_mean,delta_ci_low,delta_ci_high,config_hash,seed\n";
        doc["ablations"] = json::array();
        const std::vector<std::string> keys{"cum_risk", "key_bits", "key_efficiency", "qosec_compliance"};
        for (std::size_t a = 0; a < abl.size(); ++a) {
            const auto& rs = res.runs[res.runs.size() - abl.size() + a];
            json row = {{"ablation", abl[a].first}};
            for (const auto& key : keys) {
                std::size_t idx = 0;
                while (idx < rs.metrics.size() && rs.metrics[idx].name != key) ++idx;
                std::vector<double> diff;
                for (std::size_t s = 0; s < rs.samples[idx].size(); ++s)
                    diff.push_back(rs.samples[idx][s] - full->samples[idx][s]);
                const auto ci = metrics::t_interval(diff);
                if (key == "cum_risk")
                    os << abl[a].first << ',' << key << ',' << fmt(full->mean(key)) << ',' << fmt(rs.mean(key)) << ','
                       << fmt(ci.mean) << ',' << fmt(ci.lo) << ',' << fmt(ci.hi) << ',' << hash << ',' << master
                       << '\n';
                row[key] = {{"full", full->mean(key)}, {"ablated", rs.mean(key)}, {"delta", ci.mean},
                            {"delta_ci_low", ci.lo}, {"delta_ci_high", ci.hi}};
            }
            doc["ablations"].push_back(row);
        }
        write_file(out / "ablation.csv", os.str());
    }
    write_file(out / "summary.json", doc.dump(2) + "\n");
    write_file(out / "timing.json", timing_json(res.runs, res.wall).dump(2) + "\n");
    for (const auto& rs : main_rows) {
        const auto& ci = rs.interval("cum_risk");
        std::cout << rs.name << " cum_risk=" << fmt(ci.mean) << " [" << fmt(ci.lo) << ", " << fmt(ci.hi) << "]\n";
    }
    return 0;
}

void add_common(CLI::App* app, Common& c, bool runs) {
    app->add_option("--config", c.config, "config JSON (built-in default when omitted)");
    app->add_option("--seed", c.seed, "master seed (config seed when omitted)")->each([&](const std::string&) {
        c.seed_set = true;
    });
    app->add_option("--out", c.out, "output directory");
    app->add_option("--horizon", c.horizon, "slots per episode (config horizon when omitted)")
        ->check(CLI::NonNegativeNumber);
    if (runs) {
        app->add_option("--seeds", c.seeds, "number of seeded episodes per policy")->check(CLI::PositiveNumber);
        app->add_option("--parallelism", c.parallelism, "worker threads")->check(CLI::PositiveNumber);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Key-pool aware security orchestration: planning and simulation"};
    app.require_subcommand(1);

    Common c;
    auto* v = app.add_subcommand("validate", "check a config and print its hash");
    add_common(v, c, false);

    int scenarios = 0;
    std::string plan_file;
    auto* p = app.add_subcommand("plan", "build the day-ahead plan");
    add_common(p, c, false);
    p->add_option("--scenarios", scenarios, "scenario count (config value when omitted)")->check(CLI::PositiveNumber);
    p->add_option("--file", plan_file, "plan output path (default <out>/plan.json)");

    std::vector<std::string> policies{"proposed"};
    std::string plan_path;
    auto* s = app.add_subcommand("simulate", "run seeded episodes and export traces and metrics");
    add_common(s, c, true);
    s->add_option("--policy", policies, "policy, repeatable or comma separated")->delimiter(',');
    s->add_option("--plan", plan_path, "plan file (required for proposed and oracle)");

    std::vector<double> budgets;
    std::vector<std::string> sweep_policies{"proposed"};
    auto* w = app.add_subcommand("sweep", "risk against key budget (link yield scale)");
    add_common(w, c, true);
    w->add_option("--budgets", budgets, "yield scales, comma separated")->delimiter(',')->required();
    w->add_option("--policy", sweep_policies, "policies, comma separated")->delimiter(',');
    w->add_option("--plan", plan_path, "plan file (built from the config when omitted)");

    std::vector<std::string> cmp_policies{"proposed", "static", "greedy", "no_qkd", "oracle"};
    bool no_ablation = false;
    auto* m = app.add_subcommand("compare", "paired comparison of policies plus ablations");
    add_common(m, c, true);
    m->add_option("--policy", cmp_policies, "policies, comma separated")->delimiter(',');
    m->add_option("--plan", plan_path, "plan file (built from the config when omitted)");
    m->add_flag("--no-ablation", no_ablation, "skip the ablation table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*v) return cmd_validate(c);
        if (*p) return cmd_plan(c, scenarios, plan_file);
        if (*s) return cmd_simulate(c, policies, plan_path);
        if (*w) return cmd_sweep(c, sweep_policies, budgets, plan_path);
        if (*m) return cmd_compare(c, cmp_policies, plan_path, !no_ablation);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}

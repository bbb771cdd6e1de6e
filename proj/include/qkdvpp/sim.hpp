#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdvpp/env.hpp"
#include "qkdvpp/metrics.hpp"
#include "qkdvpp/model.hpp"
#include "qkdvpp/planner.hpp"

namespace qkdvpp::sim {

enum class Policy { Proposed, Static, Greedy, NoQkd, Oracle };

std::string to_string(Policy p);
Policy policy_from_string(const std::string& s);  // throws Usage

struct Ablation {
    bool no_forecast = false;
    bool zero_reserve = false;
    bool no_degradation = false;
    bool round_robin = false;

    std::string label() const;  // "full" when nothing is switched off
};

struct EpisodeOptions {
    Policy policy = Policy::Proposed;
    Ablation ablation;
    int horizon = -1;          // < 0: model default
    double yield_scale = 1.0;
    bool record_slots = true;  // keep per-slot records for the trace
};

struct SlotRecord {
    int slot = 0;
    std::vector<std::int64_t> arrivals;
    std::vector<StrategyColumn> cols;
    std::vector<double> served;       // fraction of each class's messages protected by the chosen column
    std::vector<double> risk;         // expected loss this slot
    std::vector<double> delay;        // mean end-to-end delay
    std::vector<double> sla_rate;     // fraction of messages over the SLA (fallback counts as over)
    std::vector<int> attempts;
    std::vector<int> successes;
    std::vector<double> zeta;
    Bits demand = 0;
    Bits generated = 0;
    Bits consumed = 0;
    Bits expired = 0;
    Bits overflow = 0;
    Bits deficit = 0;
    Bits pool_total = 0;
    Bits cross_flow = 0;
    Bits total_flow = 0;
    double price = 0.0;          // aggregated shadow price
    double node_price = 0.0;     // mean node dual
    double strong_share = 0.0;   // arrival-weighted share of S1/S2 columns
    bool qosec_ok = true;
    bool recovered = false;
};

struct ClassTotals {
    double messages = 0.0;
    double sla_violations = 0.0;
    double risk = 0.0;
    int attempts = 0;
    int successes = 0;
    double qosec_slots = 0.0;     // slots with a cap in force
    double qosec_ok_slots = 0.0;
    int s3_slots = 0;
    double min_tag_bits = 1e300;  // weakest S1/S2 tag used
    metrics::LogHistogram delay_hist;
};

struct EpisodeTotals {
    Bits initial = 0;
    Bits generated = 0;
    Bits consumed = 0;
    Bits expired = 0;
    Bits overflow = 0;
    Bits final_bits = 0;
    Bits demand = 0;
    Bits deficit = 0;
    Bits cross_flow = 0;
    Bits total_flow = 0;
    double pool_occupancy = 0.0;  // mean fill fraction
    double risk = 0.0;
    int successes = 0;
    int recoveries = 0;

    bool conserved() const { return initial + generated == consumed + expired + overflow + final_bits; }
};

struct EpisodeTrace {
    Policy policy = Policy::Proposed;
    std::string ablation = "full";
    std::uint64_t seed = 0;
    std::string config_hash;
    int horizon = 0;
    double yield_scale = 1.0;
    std::vector<SlotRecord> slots;
    std::vector<ClassTotals> classes;
    EpisodeTotals totals;
    std::vector<double> decision_seconds;  // wall time per decision, kept out of the trace file
};

// Scalar metrics of one episode, keyed by name.
std::vector<std::pair<std::string, double>> episode_metrics(const Model& model, const EpisodeTrace& trace);

// `plan` is required for Proposed and ignored by the baselines; Oracle plans on the realized series.
// Throws Usage when a plan is required and missing, RecoveryFailed when a slot cannot be rescued.
EpisodeTrace run_episode(const Model& model, const planner::OfflinePlan* plan, std::uint64_t seed,
                         const EpisodeOptions& options);

// One header line, one line per slot, one totals line.
void write_trace(std::ostream& out, const EpisodeTrace& trace);
nlohmann::json slot_to_json(const SlotRecord& rec);

struct RunSpec {
    std::string name;
    EpisodeOptions options;
};

struct MetricSummary {
    std::string name;
    metrics::Interval ci;
};

struct RunSummary {
    std::string name;
    EpisodeOptions options;
    std::vector<std::uint64_t> seeds;
    std::vector<MetricSummary> metrics;
    std::vector<std::vector<double>> samples;  // [metric][seed]
    std::vector<double> mean_risk;             // per slot across seeds, summed over classes
    std::vector<double> mean_price;
    std::vector<double> mean_strong_share;
    std::vector<double> mean_node_price;
    std::vector<char> peak;                    // per slot
    std::vector<double> decision_seconds;      // pooled

    double mean(const std::string& metric) const;
    const metrics::Interval& interval(const std::string& metric) const;
};

using TraceSink = std::function<void(const RunSpec&, const EpisodeTrace&)>;

// Runs every spec over every seed on a thread pool. Episodes are independent and results are folded in
// seed order, so the output does not depend on `parallelism`.
std::vector<RunSummary> run_monte_carlo(const Model& model, const planner::OfflinePlan* plan,
                                        const std::vector<RunSpec>& specs, const std::vector<std::uint64_t>& seeds,
                                        int parallelism, const TraceSink& sink = {});

// Offline plan built from forecast scenarios with the model's planner settings.
planner::OfflinePlan default_plan(const Model& model, int horizon, std::uint64_t seed);

}  // namespace qkdvpp::sim

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdvpp/crypto.hpp"
#include "qkdvpp/env.hpp"
#include "qkdvpp/model.hpp"
#include "qkdvpp/queueing.hpp"

namespace qkdvpp {

struct ShadowPrices {
    std::vector<double> node;
    std::vector<double> domain;
    double pool = 0.0;
};

// Aggregated threshold: pool dual plus traffic-weighted node duals plus traffic-share-weighted domain duals.
double aggregate_price(const Model& model, const ShadowPrices& prices);

}  // namespace qkdvpp

namespace qkdvpp::planner {

// One candidate column for one class in one slot: weight in key bits per slot, cost in currency.
struct ColumnEval {
    StrategyColumn col;
    double weight = 0.0;
    double cost = 0.0;
};

struct UpgradeStep {
    int from = 0;  // option indices
    int to = 0;
    double weight = 0.0;   // extra bits per slot
    double value = 0.0;    // cost reduction
    double density = 0.0;  // value / weight
};

// Options pruned to the lower convex hull of (weight, cost) starting at the cheapest option, so step
// densities are nonincreasing along the chain.
struct ClassChain {
    int cls = 0;
    double unit_loss = 0.0;
    std::vector<ColumnEval> options;
    std::vector<int> path;  // path[0] is the base option
    std::vector<UpgradeStep> steps;

    double base_weight() const { return options[path.front()].weight; }
    double base_cost() const { return options[path.front()].cost; }
};

ClassChain build_chain(int cls, double unit_loss, std::vector<ColumnEval> options);

enum class Arbitration { MsvOrder, RoundRobin };

struct FractionalAllocation {
    std::vector<int> level;        // fully applied steps per chain
    std::vector<double> fraction;  // fraction of the next step (nonzero for the split chain only)
    int split = -1;
    double threshold = 0.0;        // density of the first step not fully applied, 0 if none remain
    double base_bits = 0.0;
    double used_bits = 0.0;
    double objective = 0.0;        // total cost after upgrades
    std::vector<std::pair<int, int>> applied;  // (chain, step) in application order

    int option_of(const ClassChain& chain, int c) const;  // option index at the integral level
};

// Fractional knapsack over upgrade steps in descending density. Only steps with density > min_density
// are eligible. Throws InfeasibleBase when the budget cannot cover every base option.
FractionalAllocation solve_slot_fractional(const std::vector<ClassChain>& chains, double budget_bits,
                                           double min_density = 0.0, Arbitration arb = Arbitration::MsvOrder);

// Largest-fraction rounding then budget repair (undo the lowest-density applied steps).
// Returns the chosen option per chain.
std::vector<int> round_allocation(const std::vector<ClassChain>& chains, const FractionalAllocation& alloc,
                                  double budget_bits);

// Class-slot inputs used to evaluate columns.
struct ClassSlotContext {
    double lambda = 0.0;              // expected messages this slot
    crypto::AttackContext attack;
    double latency_dual = 0.0;        // currency per second of SLA excess
};

struct PricingContext {
    const Model* model = nullptr;
    int cls = 0;
    ClassSlotContext ctx;
    double price = 0.0;               // currency per key bit
    queueing::NetSlotState net;
    double util = 0.0;                // shared-server utilization
};

double column_cost(const PricingContext& pc, const StrategyColumn& col);

// Every compliant grid column for a class (S1 x A, S2 x A x R, S3 x R where allowed).
std::vector<StrategyColumn> grid_columns(const Model& model, int cls);

// Cheapest compliant column for the class.
StrategyColumn base_column(const Model& model, int cls);

// Grid scan for the best reduced profit against the active set; when positive beyond tol the auth knob
// is refined with at most 8 secant steps on the relaxed tag length and the column is returned.
std::vector<StrategyColumn> price_columns(const PricingContext& pc, const std::vector<StrategyColumn>& active,
                                          double tol = 1e-15);

struct Scenario {
    double weight = 1.0;
    std::vector<std::vector<double>> lambda;                 // [slot][class]
    std::vector<std::vector<crypto::AttackContext>> attack;  // [slot][class]
    std::vector<std::vector<Bits>> yields;                   // [slot][link]
    bool has_shock = false;
};

Scenario scenario_from_env(const sim::EnvSeries& env, double weight);

// Sampled futures from the forecast model; weights are uniform.
std::vector<Scenario> build_scenarios(const Model& model, int horizon, int count, std::uint64_t seed);

struct OfflinePlan {
    int horizon = 0;
    std::vector<std::vector<double>> quotas;  // [slot][domain], bits
    std::vector<StrategyColumn> warm_start;   // per class
    ShadowPrices initial_prices;
    std::vector<double> price_path;           // aggregated price per slot
    std::vector<double> planned_bits;         // expected consumption per slot
    std::vector<std::vector<StrategyColumn>> columns;  // active set per class
    int iterations = 0;
    std::string config_hash;
    std::uint64_t seed = 0;

    double quota_total(int slot) const;
};

struct PlanOptions {
    double reserve_margin = -1.0;  // < 0: use the model's weight
    bool enable_pricing = true;
    bool enable_routing = true;
};

// Column generation with a fractional master per scenario-slot, routing feedback and dual subgradient
// steps. Throws NoBaseFeasible when some scenario-slot cannot be made feasible even after recovery.
OfflinePlan offline_plan(const Model& model, const std::vector<Scenario>& scenarios, int iters,
                         const PlanOptions& options = {});

nlohmann::json to_json(const OfflinePlan& plan);
OfflinePlan plan_from_json(const nlohmann::json& doc, const Model& model);

// Bits of generation credited to each node: half of every incident link's yield.
std::vector<Bits> node_generation(const Model& model, const std::vector<Bits>& link_yields);

// Share of consumption attributed to each node (traffic weights normalised) and to each domain.
std::vector<double> node_shares(const Model& model);
std::vector<double> domain_shares(const Model& model);

}  // namespace qkdvpp::planner

#pragma once

#include <cstdint>
#include <vector>

#include "qkdvpp/env.hpp"
#include "qkdvpp/planner.hpp"
#include "qkdvpp/recovery.hpp"

namespace qkdvpp::controller {

// Beta pseudo-counts on the per-class attack attempt probability.
struct AttackBelief {
    std::vector<double> alpha;
    std::vector<double> beta;
    double lcb_quantile = 0.2;

    static AttackBelief from_model(const Model& model);
    double mean(int cls) const;
    double upper(int cls) const;  // posterior quantile at 1 - lcb_quantile
};

// Adds observed attempts to alpha and quiet slots to beta; returns the posterior means.
std::vector<double> calibrate_attack(AttackBelief& belief, const std::vector<double>& attempts,
                                     const std::vector<double>& normals);

// Shrinks the evidence toward the prior by `factor` (1 keeps everything).
void discount_belief(AttackBelief& belief, double factor, double prior_alpha, double prior_beta);

// One projected proximal step on the auth knob. Throws WrongStrategy for S3.
double proximal_a_step(const Model& model, int cls, const StrategyColumn& col, const planner::ClassSlotContext& ctx,
                       double price, const queueing::NetSlotState& net, double util, double prev_a);

// Exhaustive scan of the refresh grid; ties go to the smaller r. Throws WrongStrategy for S1.
int coordinate_r_search(const Model& model, int cls, const StrategyColumn& col, const planner::ClassSlotContext& ctx,
                        double price, const queueing::NetSlotState& net, double util, int prev_r);

double update_dual(double pi, double excess, double gamma);

struct DualExcess {
    std::vector<double> node;
    std::vector<double> domain;
    double pool = 0.0;
};

ShadowPrices update_duals(const ShadowPrices& prices, const DualExcess& excess, double gamma);

struct DecideOptions {
    bool allow_degradation = true;  // S1 <-> S2 switching
    planner::Arbitration arbitration = planner::Arbitration::MsvOrder;
    double explore_fraction = 0.0;
};

struct SlotInputs {
    std::vector<planner::ClassSlotContext> ctx;         // forecast load and mean attack context
    std::vector<crypto::AttackContext> explore_attack;  // upper-quantile contexts; empty skips exploration
    queueing::NetSlotState net;
    double util = 0.0;                                   // utilization under the previous columns
    double budget_bits = 0.0;                            // after margins and reserve
    double available_bits = 0.0;                         // pools plus forecast generation
    double spill_bits = 0.0;                             // bits the pools cannot hold after this slot
    double threshold = 0.0;                              // price per key bit
    std::vector<double> delay_sigma;                     // per class
};

struct SlotDecision {
    std::vector<StrategyColumn> cols;
    std::vector<double> fraction;
    int split = -1;
    double threshold = 0.0;
    std::vector<double> bits;   // predicted key bits per class
    std::vector<double> risk;
    std::vector<double> delay;
    double planned_bits = 0.0;
    double lagrangian_bits = 0.0;  // demand at the threshold with no budget
    std::vector<double> zeta;      // relaxed bits per class
    double relax_cost = 0.0;
    bool recovered = false;
    std::vector<std::vector<planner::ColumnEval>> candidates;  // after filtering
};

// Local candidate set around the previous column, at most 10 entries, all compliant.
std::vector<StrategyColumn> candidate_columns(const Model& model, int cls, const StrategyColumn& prev,
                                              const planner::ClassSlotContext& ctx, double price,
                                              const queueing::NetSlotState& net, double util, bool allow_degradation);

SlotDecision decide_slot(const Model& model, const SlotInputs& in, const std::vector<StrategyColumn>& prev,
                         const DecideOptions& options = {});

struct ControllerOptions {
    bool use_forecast = true;  // false: persistence forecasts for traffic
    bool allow_degradation = true;
    planner::Arbitration arbitration = planner::Arbitration::MsvOrder;
    const sim::EnvSeries* clairvoyant = nullptr;  // realized series read ahead (oracle)
    bool hold_reserve = true;  // false: no lookahead reserve, quotas without the margin
};

// What the episode reports back after a slot.
struct SlotFeedback {
    std::vector<std::int64_t> arrivals;
    std::vector<Bits> node_gen;
    std::vector<crypto::AttackContext> attack;  // realized context, including q and tau
    std::vector<char> attempted;
    std::vector<double> delay;                  // realized per class
    std::vector<double> shortfall;              // per node, from routing
    std::vector<double> slack;
    std::vector<double> domain_consumption;
    double available_bits = 0.0;                // pools at slot start plus realized generation
};

class Controller {
public:
    Controller(const Model& model, const planner::OfflinePlan* plan, ControllerOptions options = {});

    SlotDecision decide(int slot, const std::vector<Bits>& pools);
    void feedback(int slot, const SlotDecision& decision, const SlotFeedback& fb);

    const ShadowPrices& prices() const { return prices_; }
    double aggregate_price() const;
    const AttackBelief& belief() const { return belief_; }

private:
    double forecast_lambda(int cls, int slot) const;
    double forecast_node_gen(int node, int slot) const;
    crypto::AttackContext forecast_attack(int cls, int slot, double p) const;
    double quota_of(int slot, int domain) const;

    const Model& model_;
    const planner::OfflinePlan* plan_;
    ControllerOptions options_;
    ShadowPrices prices_;
    AttackBelief belief_;
    std::vector<StrategyColumn> prev_;
    std::vector<StrategyColumn> base_;
    std::vector<double> node_share_;
    std::vector<double> domain_share_;
    double nu_ = 0.0;            // smoothed threshold
    double ewma_decay_ = 0.0;
    std::vector<double> last_arrivals_;
    std::vector<double> last_gen_;
    std::vector<crypto::AttackContext> last_attack_;
    std::vector<double> prev_tau_;
    std::vector<double> delay_var_;
    std::vector<double> gen_var_;
    bool have_history_ = false;
};

}  // namespace qkdvpp::controller

#pragma once

#include <vector>

#include "qkdvpp/model.hpp"

namespace qkdvpp::queueing {

struct NetSlotState {
    double bandwidth_bits_per_slot = 1.0;
    double slot_seconds = 60.0;
    std::vector<double> arrivals_per_slot;  // per class, same order as Model::classes
    double net_propagation = 0.0;

    double bandwidth_bps() const { return bandwidth_bits_per_slot / slot_seconds; }
};

struct DelayResult {
    double delay = 0.0;      // seconds
    double wait = 0.0;       // Kingman component
    bool saturated = false;  // utilization >= 1, delay pinned at 10 x SLA
};

double overhead_bits(const MessageClassSpec& cls, const StrategyColumn& col, const QueueParams& qp,
                     const CryptoParams& cp);

// Messages per second.
double service_rate(const MessageClassSpec& cls, const StrategyColumn& col, const NetSlotState& state,
                    const QueueParams& qp, const CryptoParams& cp);

// Throws Unstable when total_util >= 1.
double kingman_wait(double total_util, double ca2, double cs2, double mu);

// Aggregate utilization of the shared server: sum_i (lambda_i / slot_seconds) / mu_i.
double utilization(const std::vector<MessageClassSpec>& classes, const std::vector<StrategyColumn>& cols,
                   const NetSlotState& state, const QueueParams& qp, const CryptoParams& cp);

// W + tau_enc + tau_net. Per-bit crypto time lives inside mu; tau_enc is the fixed part.
DelayResult end_to_end_delay(const MessageClassSpec& cls, const StrategyColumn& col, const NetSlotState& state,
                             double total_util, const QueueParams& qp, const CryptoParams& cp);

// Probability that a message's delay exceeds x, using the exponential tail P(W > w) = rho exp(-rho w / W).
double delay_exceedance(const DelayResult& d, double total_util, double fixed_part, double x);

std::vector<DelayResult> slot_delays(const std::vector<MessageClassSpec>& classes,
                                     const std::vector<StrategyColumn>& cols, const NetSlotState& state,
                                     const QueueParams& qp, const CryptoParams& cp, double* util_out = nullptr);

}  // namespace qkdvpp::queueing

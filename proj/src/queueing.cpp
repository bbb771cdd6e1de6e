#include "qkdvpp/queueing.hpp"

#include <cmath>

#include "qkdvpp/crypto.hpp"
#include "qkdvpp/error.hpp"

namespace qkdvpp::queueing {

double overhead_bits(const MessageClassSpec&, const StrategyColumn& col, const QueueParams& qp,
                     const CryptoParams& cp) {
    switch (col.strategy) {
        case Strategy::S1_OTP_WC:
            return qp.header_bits + crypto::mac_len(col.auth_knob, cp);
        case Strategy::S2_AES_WC:
            return qp.header_bits + crypto::mac_len(col.auth_knob, cp) + cp.iv_bits;
        case Strategy::S3_AES_MAC:
            return qp.header_bits + cp.comp_tag_bits + cp.iv_bits;
    }
    return qp.header_bits;
}

double service_rate(const MessageClassSpec& cls, const StrategyColumn& col, const NetSlotState& state,
                    const QueueParams& qp, const CryptoParams& cp) {
    const double bits = cls.payload_bits + overhead_bits(cls, col, qp, cp);
    const double inv_mu = bits / state.bandwidth_bps() + (qp.enc_cost_per_bit + qp.ver_cost_per_bit) * bits +
                          qp.fixed_crypto_overhead;
    return 1.0 / inv_mu;
}

double kingman_wait(double total_util, double ca2, double cs2, double mu) {
    if (total_util >= 1.0) throw Error(ErrorCode::Unstable, "utilization", "rho >= 1");
    if (total_util <= 0.0) return 0.0;
    return (total_util / (1.0 - total_util)) * ((ca2 + cs2) / 2.0) / mu;
}

double utilization(const std::vector<MessageClassSpec>& classes, const std::vector<StrategyColumn>& cols,
                   const NetSlotState& state, const QueueParams& qp, const CryptoParams& cp) {
    double util = 0.0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const double lam = i < state.arrivals_per_slot.size() ? state.arrivals_per_slot[i] : 0.0;
        if (lam <= 0.0) continue;
        util += (lam / state.slot_seconds) / service_rate(classes[i], cols[i], state, qp, cp);
    }
    return util;
}

DelayResult end_to_end_delay(const MessageClassSpec& cls, const StrategyColumn& col, const NetSlotState& state,
                             double total_util, const QueueParams& qp, const CryptoParams& cp) {
    DelayResult out;
    if (total_util >= 1.0) {
        out.saturated = true;
        out.delay = 10.0 * cls.sla_delay;
        out.wait = out.delay;
        return out;
    }
    const double mu = service_rate(cls, col, state, qp, cp);
    out.wait = kingman_wait(total_util, qp.ca2, qp.cs2, mu);
    out.delay = out.wait + qp.fixed_crypto_overhead + state.net_propagation;
    return out;
}

double delay_exceedance(const DelayResult& d, double total_util, double fixed_part, double x) {
    if (d.saturated) return 1.0;
    const double w = x - fixed_part;
    if (w < 0.0) return 1.0;
    if (d.wait <= 0.0 || total_util <= 0.0) return 0.0;
    return total_util * std::exp(-total_util * w / d.wait);
}

std::vector<DelayResult> slot_delays(const std::vector<MessageClassSpec>& classes,
                                     const std::vector<StrategyColumn>& cols, const NetSlotState& state,
                                     const QueueParams& qp, const CryptoParams& cp, double* util_out) {
    const double util = utilization(classes, cols, state, qp, cp);
    if (util_out) *util_out = util;
    std::vector<DelayResult> out;
    out.reserve(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i)
        out.push_back(end_to_end_delay(classes[i], cols[i], state, util, qp, cp));
    return out;
}

}  // namespace qkdvpp::queueing

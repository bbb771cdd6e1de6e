#include "qkdvpp/crypto.hpp"

#include <algorithm>
#include <cmath>

#include "qkdvpp/error.hpp"

namespace qkdvpp::crypto {

namespace {

constexpr double kKnobTolerance = 1e-9;

void check_refresh(int refresh, const CryptoParams& params) {
    if (refresh < 1 || refresh > params.r_max)
        throw Error(ErrorCode::Range, "refresh", "outside [1, r_max]");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

int mac_len(double auth_knob, const CryptoParams& params) {
    if (!(auth_knob >= -kKnobTolerance) || auth_knob > params.a_max + kKnobTolerance)
        throw Error(ErrorCode::Range, "auth_knob", "outside [0, a_max]");
    const double raw = std::ceil(params.mac_len_slope * std::max(0.0, auth_knob) - kKnobTolerance);
    return static_cast<int>(std::min(params.mac_len_cap, std::max(0.0, raw)));
}

double mac_len_relaxed(double auth_knob, const CryptoParams& params) {
    return std::min(params.mac_len_cap, params.mac_len_slope * std::max(0.0, auth_knob));
}

double mac_len_relaxed_slope(double auth_knob, const CryptoParams& params) {
    return params.mac_len_slope * auth_knob < params.mac_len_cap ? params.mac_len_slope : 0.0;
}

double key_cost(const MessageClassSpec& cls, const StrategyColumn& col, const CryptoParams& params) {
    switch (col.strategy) {
        case Strategy::S1_OTP_WC:
            return cls.payload_bits + mac_len(col.auth_knob, params);
        case Strategy::S2_AES_WC:
            check_refresh(col.refresh, params);
            return params.iv_bits + mac_len(col.auth_knob, params) + params.session_key_bits / col.refresh;
        case Strategy::S3_AES_MAC:
            check_refresh(col.refresh, params);
            return params.iv_bits + params.comp_tag_bits + params.session_key_bits / col.refresh;
    }
    return 0.0;
}

double adv_aes(double queries, double duration, int refresh, const CryptoParams& params) {
    const double v = params.adv_scale_aes * queries * duration / (refresh * std::exp2(params.adv_sec_level));
    return std::min(1.0, v);
}

double adv_mac(double queries, double duration, const CryptoParams& params) {
    const double v = params.adv_scale_mac * queries * duration / std::exp2(params.adv_sec_level);
    return std::min(1.0, v);
}

double residual_success(const MessageClassSpec&, const StrategyColumn& col, const AttackContext& ctx,
                        const CryptoParams& params) {
    switch (col.strategy) {
        case Strategy::S1_OTP_WC:
            return clamp01(std::exp2(-mac_len(col.auth_knob, params)) + params.impl_epsilon);
        case Strategy::S2_AES_WC:
            check_refresh(col.refresh, params);
            return clamp01(std::exp2(-mac_len(col.auth_knob, params)) +
                           adv_aes(ctx.query_budget, ctx.duration_slots, col.refresh, params));
        case Strategy::S3_AES_MAC:
            return clamp01(adv_mac(ctx.query_budget, ctx.duration_slots, params) +
                           std::exp2(-params.comp_tag_bits));
    }
    return 1.0;
}

double residual_success_grad_a(const StrategyColumn& col, const CryptoParams& params) {
    if (col.strategy == Strategy::S3_AES_MAC) return 0.0;
    const double len = mac_len_relaxed(col.auth_knob, params);
    return -std::log(2.0) * std::exp2(-len) * mac_len_relaxed_slope(col.auth_knob, params);
}

double expected_class_risk(const MessageClassSpec& cls, const StrategyColumn& col, const AttackContext& ctx,
                           const CryptoParams& params) {
    if (ctx.attempt_prob == 0.0 || cls.unit_loss == 0.0 || ctx.context_amp == 0.0) return 0.0;
    return ctx.attempt_prob * residual_success(cls, col, ctx, params) * cls.unit_loss * ctx.context_amp;
}

double msv(const MessageClassSpec& cls, const StrategyColumn& from_col, const StrategyColumn& to_col,
           const AttackContext& ctx, const CryptoParams& params) {
    const double dk = key_cost(cls, to_col, params) - key_cost(cls, from_col, params);
    if (!(dk > 0.0)) throw Error(ErrorCode::NonpositiveDeltaCost, "msv", "upgrade must increase key cost");
    const double drho = residual_success(cls, from_col, ctx, params) - residual_success(cls, to_col, ctx, params);
    if (drho == 0.0) return 0.0;
    return ctx.attempt_prob * drho * cls.unit_loss * ctx.context_amp / dk;
}

bool is_compliant(const MessageClassSpec& cls, const StrategyColumn& col, const CryptoParams& params) {
    if (col.strategy == Strategy::S3_AES_MAC) return !cls.forbid_s3 && params.comp_tag_bits >= cls.min_tag_bits;
    return mac_len(col.auth_knob, params) >= cls.min_tag_bits;
}

bool meets_qosec(const MessageClassSpec& cls, const StrategyColumn& col, const AttackContext& ctx,
                 const CryptoParams& params) {
    return !cls.qosec_cap || residual_success(cls, col, ctx, params) <= *cls.qosec_cap;
}

}  // namespace qkdvpp::crypto

#pragma once

#include "qkdvpp/model.hpp"

namespace qkdvpp::crypto {

struct AttackContext {
    double attempt_prob = 0.0;
    double query_budget = 0.0;
    double duration_slots = 0.0;
    double context_amp = 1.0;  // E[Theta], in [0, 1]
};

// Tag length: min(cap, ceil(slope * a)). Throws Range outside [0, a_max].
int mac_len(double auth_knob, const CryptoParams& params);

// Continuous surrogate of mac_len used for gradients and secant refinement.
double mac_len_relaxed(double auth_knob, const CryptoParams& params);
double mac_len_relaxed_slope(double auth_knob, const CryptoParams& params);

// Expected key bits per message for the column (fractional values allowed).
double key_cost(const MessageClassSpec& cls, const StrategyColumn& col, const CryptoParams& params);

double adv_aes(double queries, double duration, int refresh, const CryptoParams& params);
double adv_mac(double queries, double duration, const CryptoParams& params);

// Residual attack success given an attempt, clamped to [0, 1].
double residual_success(const MessageClassSpec& cls, const StrategyColumn& col, const AttackContext& ctx,
                        const CryptoParams& params);

// d rho / d a on the relaxed tag length. Zero for S3.
double residual_success_grad_a(const StrategyColumn& col, const CryptoParams& params);

double expected_class_risk(const MessageClassSpec& cls, const StrategyColumn& col, const AttackContext& ctx,
                           const CryptoParams& params);

// Risk reduction per extra key bit when moving from_col -> to_col.
// Throws NonpositiveDeltaCost unless to_col costs strictly more.
double msv(const MessageClassSpec& cls, const StrategyColumn& from_col, const StrategyColumn& to_col,
           const AttackContext& ctx, const CryptoParams& params);

// Hard compliance: forbid_s3 and minimum tag strength. QoSec caps are context dependent
// and checked separately via residual_success.
bool is_compliant(const MessageClassSpec& cls, const StrategyColumn& col, const CryptoParams& params);
bool meets_qosec(const MessageClassSpec& cls, const StrategyColumn& col, const AttackContext& ctx,
                 const CryptoParams& params);

}  // namespace qkdvpp::crypto

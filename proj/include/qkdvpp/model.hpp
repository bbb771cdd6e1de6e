#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qkdvpp {

using Bits = std::int64_t;

enum class ClassId { M1, M2, M3, M4, M5 };
inline constexpr int kNumClassIds = 5;

enum class Strategy { S1_OTP_WC, S2_AES_WC, S3_AES_MAC };

std::string to_string(ClassId id);
std::string to_string(Strategy s);
ClassId class_id_from_string(const std::string& s);
Strategy strategy_from_string(const std::string& s);

struct MessageClassSpec {
    ClassId id = ClassId::M1;
    double lambda_base = 0.0;       // messages per slot
    double payload_bits = 1.0;
    double sla_delay = 1.0;         // seconds
    double unit_loss = 0.0;
    double sla_weight = 0.0;        // currency per second of SLA excess
    double min_tag_bits = 0.0;      // 0 when unconstrained
    bool forbid_s3 = false;
    std::optional<double> qosec_cap;
    double recovery_weight = 1.0;
    double relax_cap = 0.0;         // bits per slot
};

// One (strategy, auth knob, refresh) configuration.
struct StrategyColumn {
    Strategy strategy = Strategy::S1_OTP_WC;
    double auth_knob = 0.0;
    int refresh = 1;

    friend bool operator==(const StrategyColumn&, const StrategyColumn&) = default;
};

struct CryptoParams {
    double iv_bits = 96;
    double session_key_bits = 256;
    double comp_tag_bits = 128;
    double impl_epsilon = 0.0;
    double mac_len_slope = 1.0;
    double mac_len_cap = 128;
    double adv_scale_aes = 1.0;
    double adv_scale_mac = 1.0;
    double adv_sec_level = 128;
    double a_max = 128;
    int r_max = 32;
    std::vector<double> a_grid;  // sorted, within [0, a_max]
    std::vector<int> r_grid;     // sorted, within [1, r_max]
};

struct NodeSpec {
    std::string id;
    Bits pool_cap = 1;
    int ttl_slots = 1;
    std::string domain;
    double traffic_weight = 0.0;
    Bits initial_bits = 0;
    double key_margin_mult = 0.0;  // chance-margin multiplier on pool forecast error
};

struct LinkSpec {
    std::string id;
    std::string from;
    std::string to;
    double yield_max = 0.0;        // bits per slot
    double qber_threshold = 0.11;
    double qber_mean = 0.02;
    double env_sensitivity = 0.0;
};

struct DomainSpec {
    std::string id;
    double transit_cap_per_slot = 0.0;
    double alloc_quota_per_slot = 0.0;
};

struct QueueParams {
    double bandwidth_bits_per_slot = 1.0;
    double ca2 = 1.0;
    double cs2 = 1.0;
    double enc_cost_per_bit = 0.0;
    double ver_cost_per_bit = 0.0;
    double fixed_crypto_overhead = 0.0;
    double header_bits = 0.0;
    double net_propagation = 0.0;
};

struct DualStepSchedule {
    double initial = 1e-6;
    double decay = 0.6;  // gamma_n = initial / (n+1)^decay

    double at(int n) const;
};

struct ObjectiveWeights {
    double budget_hinge = 0.0;
    double smooth_weight = 0.0;
    double smooth_a = 0.0;
    double smooth_r = 0.0;
    double smooth_x = 0.0;
    double prox_a = 0.0;
    double prox_r = 0.0;
    double prox_step = 1.0;  // eta for the proximal a step
    DualStepSchedule dual_step_schedule;
    double online_dual_step = 1e-6;
    double terminal_key_value = 0.0;
    std::vector<double> delay_margin_mult;  // per class, same order as classes
    double explore_fraction = 0.0;
    double lcb_quantile = 0.2;
    double prior_alpha = 1.0;
    double prior_beta = 1.0;
    double belief_discount = 1.0;  // pseudo-count decay per slot; 1 = no forgetting
    double reserve_margin = 0.15;
    double forecast_half_life = 30.0;
};

struct TimeWindow {
    int start = 0;  // inclusive slot
    int end = 0;    // exclusive slot
};

struct PeakWindow {
    TimeWindow window;
    double amp = 0.0;
    std::vector<ClassId> classes;  // empty means all
};

struct TrafficModel {
    double diurnal_amp = 0.0;
    int diurnal_peak_slot = 0;
    int day_slots = 1440;
    std::vector<PeakWindow> peaks;
};

struct AttackModel {
    std::vector<double> baseline;  // per class attempt probability
    double drift_amp = 0.0;
    double pulse_rate = 0.0;       // pulse start probability per slot
    double pulse_magnitude = 0.0;
    double pareto_shape = 1.5;
    double pareto_scale = 5.0;     // minimum duration in slots
    double peak_sync = 1.0;        // pulse start rate multiplier inside peak windows
    double base_queries_log2 = 20;
    double pulse_queries_log2 = 24;
    double base_duration = 1.0;
    double context_peak_amp = 1.0; // loss amplification inside peak windows
};

struct OutageWindow {
    std::string link;  // empty = all links
    TimeWindow window;
};

struct YieldShock {
    TimeWindow window;
    double yield_factor = 0.0;
};

struct WeatherModel {
    double ar_coeff = 0.95;
    double noise_sd = 0.0;
    double shock_prob = 0.0;          // weather shock start probability per slot
    double shock_qber_add = 0.0;
    double shock_duration_scale = 10; // Pareto scale (slots)
    double shock_duration_shape = 1.8;
    double degraded_fraction = 0.7;   // Q >= fraction * Q_th counts as degraded
    std::vector<OutageWindow> outages;
    std::vector<YieldShock> scripted_shocks;
};

struct StaticPolicyParams {
    double auth_knob = 64;
    int refresh = 16;
};

struct PlannerParams {
    int scenarios = 8;
    int iters = 10;
    double forecast_noise = 0.1;
};

struct SimParams {
    double slot_seconds = 60.0;
    int horizon = 1440;
    int lookahead = 5;
    int oracle_sweeps = 50;
    bool strict_compliance = true;
    TrafficModel traffic;
    AttackModel attack;
    WeatherModel weather;
    StaticPolicyParams static_policy;
    PlannerParams planner;
};

// Immutable, validated configuration bundle. Indices into nodes/links/domains are
// resolved once here so downstream code never looks ids up by string.
struct Model {
    std::vector<MessageClassSpec> classes;
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    std::vector<DomainSpec> domains;
    CryptoParams crypto;
    QueueParams queue;
    ObjectiveWeights weights;
    SimParams sim;
    std::uint64_t seed = 0;

    std::vector<int> node_domain;   // node index -> domain index
    std::vector<int> link_from;     // link index -> node index
    std::vector<int> link_to;
    std::vector<int> link_domain;   // -1 for inter-domain links

    int class_index(ClassId id) const;  // -1 if absent
    int node_index(const std::string& id) const;
};

using ValidatedModel = std::shared_ptr<const Model>;

// Parses and checks a config document. Throws Error with Parse, Invariant or DanglingRef.
ValidatedModel validate_config(const nlohmann::json& raw);
ValidatedModel validate_config_text(const std::string& text);
ValidatedModel load_config_file(const std::string& path);

nlohmann::json serialize(const Model& model);

// Canonical default testbed: 5 classes, 16 nodes, 28 links, 3 domains.
nlohmann::json default_config();

// Stable FNV-1a hash of the canonical serialization, hex encoded.
std::string config_hash(const Model& model);

}  // namespace qkdvpp

#include <string>
#include <utility>
#include <vector>

#include "qkdvpp/model.hpp"

namespace qkdvpp {

using nlohmann::json;

namespace {

json make_class(const char* id, double lambda, double payload, double sla, double loss, double sla_weight,
                double min_tag, bool forbid_s3, json qosec_cap, double recovery_weight, double relax_cap) {
    return {{"id", id},
            {"lambda_base", lambda},
            {"payload_bits", payload},
            {"sla_delay", sla},
            {"unit_loss", loss},
            {"sla_weight", sla_weight},
            {"min_tag_bits", min_tag},
            {"forbid_s3", forbid_s3},
            {"qosec_cap", std::move(qosec_cap)},
            {"recovery_weight", recovery_weight},
            {"relax_cap", relax_cap}};
}

}  // namespace

// Metropolitan overlay: three management domains on a 16-node ring with 12 chords.
// Even-numbered nodes are DER aggregation sites, nodes 1/7/13 host operator back ends.
json default_config() {
    json classes = json::array({
        make_class("M1", 3000, 512, 0.120, 2.0e4, 50, 64, true, 1e-3, 2.0, 6.0e5),
        make_class("M2", 600, 2048, 0.200, 5.0e4, 100, 0, false, nullptr, 5.0, 1.0e5),
        make_class("M3", 1200, 1024, 0.100, 3.0e4, 200, 0, false, nullptr, 8.0, 1.0e5),
        make_class("M4", 200, 4096, 0.150, 1.0e5, 100, 64, true, 1e-3, 20.0, 0.0),
        make_class("M5", 400, 16384, 1.000, 1.0e4, 5, 0, false, nullptr, 0.5, 2.0e6),
    });

    json domains = json::array();
    for (int d = 0; d < 3; ++d)
        domains.push_back({{"id", "d" + std::to_string(d)},
                           {"transit_cap_per_slot", 1.5e6},
                           {"alloc_quota_per_slot", 1.5e6}});

    json nodes = json::array();
    for (int i = 0; i < 16; ++i) {
        int domain = i < 6 ? 0 : (i < 11 ? 1 : 2);
        double weight = (i % 2 == 0) ? 1.0 : 0.0;
        if (i == 1 || i == 7 || i == 13) weight = 2.0;
        nodes.push_back({{"id", "n" + std::to_string(i)},
                         {"pool_cap", 1500000},
                         {"ttl_slots", 120},
                         {"domain", "d" + std::to_string(domain)},
                         {"traffic_weight", weight},
                         {"initial_bits", 750000},
                         {"key_margin_mult", 1.0}});
    }

    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 16; ++i) edges.emplace_back(i, (i + 1) % 16);
    for (auto e : std::vector<std::pair<int, int>>{
             {0, 3}, {1, 4}, {2, 5}, {6, 8}, {7, 10}, {6, 9}, {11, 13}, {12, 14}, {13, 15}, {4, 8}, {9, 13}, {5, 12}})
        edges.push_back(e);
    json links = json::array();
    for (std::size_t k = 0; k < edges.size(); ++k) {
        links.push_back({{"id", "e" + std::to_string(k)},
                         {"from", "n" + std::to_string(edges[k].first)},
                         {"to", "n" + std::to_string(edges[k].second)},
                         {"yield_max", 140000.0 + 10000.0 * static_cast<double>(k % 5)},
                         {"qber_threshold", 0.11},
                         {"qber_mean", 0.02 + 0.002 * static_cast<double>(k % 4)},
                         {"env_sensitivity", 0.5 + 0.25 * static_cast<double>(k % 3)}});
    }

    json crypto = {{"iv_bits", 96},
                   {"session_key_bits", 256},
                   {"comp_tag_bits", 128},
                   {"impl_epsilon", 1e-9},
                   {"mac_len_slope", 1.0},
                   {"mac_len_cap", 128},
                   {"adv_scale_aes", 40.0},
                   {"adv_scale_mac", 1.0},
                   {"adv_sec_level", 40},
                   {"a_max", 128},
                   {"r_max", 32},
                   {"a_grid", {16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128}},
                   {"r_grid", {1, 2, 4, 8, 16, 32}}};

    json queue = {{"bandwidth_bits_per_slot", 3.0e7},
                  {"ca2", 1.0},
                  {"cs2", 1.0},
                  {"enc_cost_per_bit", 2e-7},
                  {"ver_cost_per_bit", 2e-7},
                  {"fixed_crypto_overhead", 0.001},
                  {"header_bits", 40},
                  {"net_propagation", 0.010}};

    json weights = {{"budget_hinge", 1e-6},
                    {"smooth_weight", 1.0},
                    {"smooth_a", 0.0},
                    {"smooth_r", 0.0},
                    {"smooth_x", 1e-4},
                    {"prox_a", 0.1},
                    {"prox_r", 0.0},
                    {"prox_step", 1.0},
                    {"dual_step_schedule", {{"initial", 2e-14}, {"decay", 0.6}}},
                    {"online_dual_step", 2e-15},
                    {"terminal_key_value", 0.0},
                    {"delay_margin_mult", {{"M1", 1.0}, {"M2", 1.0}, {"M3", 1.0}, {"M4", 1.0}, {"M5", 1.0}}},
                    {"explore_fraction", 0.1},
                    {"lcb_quantile", 0.2},
                    {"prior_alpha", 1.0},
                    {"prior_beta", 9.0},
                    {"belief_discount", 0.97},
                    {"reserve_margin", 0.15},
                    {"forecast_half_life", 30.0}};

    json sim = {
        {"slot_seconds", 60.0},
        {"horizon", 1440},
        {"lookahead", 5},
        {"oracle_sweeps", 50},
        {"strict_compliance", true},
        {"traffic",
         {{"diurnal_amp", 0.3},
          {"diurnal_peak_slot", 840},
          {"day_slots", 1440},
          {"peaks",
           {{{"window", {{"start", 480}, {"end", 600}}}, {"amp", 0.5}, {"classes", {"M2", "M3"}}},
            {{"window", {{"start", 1020}, {"end", 1080}}}, {"amp", 1.0}, {"classes", {"M4"}}},
            {{"window", {{"start", 1080}, {"end", 1260}}}, {"amp", 0.3}, {"classes", {"M1"}}}}}}},
        {"attack",
         {{"baseline", {{"M1", 0.05}, {"M2", 0.10}, {"M3", 0.08}, {"M4", 0.15}, {"M5", 0.03}}},
          {"drift_amp", 0.3},
          {"pulse_rate", 0.004},
          {"pulse_magnitude", 0.3},
          {"pareto_shape", 1.5},
          {"pareto_scale", 10.0},
          {"peak_sync", 3.0},
          {"base_queries_log2", 20},
          {"pulse_queries_log2", 24},
          {"base_duration", 1.0},
          {"context_peak_amp", 1.0}}},
        {"weather",
         {{"ar_coeff", 0.98},
          {"noise_sd", 0.01},
          {"shock_prob", 0.002},
          {"shock_qber_add", 0.05},
          {"shock_duration_scale", 20},
          {"shock_duration_shape", 1.8},
          {"degraded_fraction", 0.7},
          {"outages",
           {{{"link", "e3"}, {"window", {{"start", 180}, {"end", 240}}}},
            {{"link", "e20"}, {"window", {{"start", 900}, {"end", 960}}}}}},
          {"scripted_shocks", json::array()}}},
        {"static_policy", {{"auth_knob", 64}, {"refresh", 16}}},
        {"planner", {{"scenarios", 8}, {"iters", 10}, {"forecast_noise", 0.1}}}};

    return {{"classes", classes}, {"nodes", nodes},     {"links", links}, {"domains", domains},
            {"crypto", crypto},   {"queue", queue},     {"weights", weights},
            {"sim", sim},         {"seed", 20240601}};
}

}  // namespace qkdvpp

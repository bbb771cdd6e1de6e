#include "qkdvpp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qkdvpp/error.hpp"

namespace qkdvpp {

using nlohmann::json;

std::string to_string(ClassId id) {
    static const char* names[] = {"M1", "M2", "M3", "M4", "M5"};
    return names[static_cast<int>(id)];
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::S1_OTP_WC: return "S1";
        case Strategy::S2_AES_WC: return "S2";
        case Strategy::S3_AES_MAC: return "S3";
    }
    return "?";
}

ClassId class_id_from_string(const std::string& s) {
    for (int i = 0; i < kNumClassIds; ++i) {
        if (to_string(static_cast<ClassId>(i)) == s) return static_cast<ClassId>(i);
    }
    throw Error(ErrorCode::DanglingRef, s, "unknown message class");
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "S1") return Strategy::S1_OTP_WC;
    if (s == "S2") return Strategy::S2_AES_WC;
    if (s == "S3") return Strategy::S3_AES_MAC;
    throw Error(ErrorCode::Parse, s, "unknown strategy");
}

double DualStepSchedule::at(int n) const {
    return initial / std::pow(static_cast<double>(n) + 1.0, decay);
}

int Model::class_index(ClassId id) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

int Model::node_index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error(ErrorCode::Parse, path_, "expected object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void mark(const std::string& key) { seen_.insert(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw Error(ErrorCode::Parse, where(key), "missing key");
        return j_.at(key);
    }

    template <typename T>
    T req(const std::string& key) {
        return convert<T>(raw(key), key);
    }

    template <typename T>
    T opt(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return fallback;
        return convert<T>(j_.at(key), key);
    }

    std::string where(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw Error(ErrorCode::Parse, where(it.key()), "unknown key");
        }
    }

private:
    template <typename T>
    T convert(const json& v, const std::string& key) const {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw Error(ErrorCode::Parse, where(key), "expected number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw Error(ErrorCode::Parse, where(key), "expected integer");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw Error(ErrorCode::Parse, where(key), "expected boolean");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw Error(ErrorCode::Parse, where(key), "expected string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, where(key), e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const json& array_at(ObjectReader& r, const std::string& key) {
    const json& a = r.raw(key);
    if (!a.is_array()) throw Error(ErrorCode::Parse, r.where(key), "expected array");
    return a;
}

void require(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw Error(ErrorCode::Invariant, field, rule);
}

TimeWindow read_window(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    TimeWindow w{r.req<int>("start"), r.req<int>("end")};
    r.finish();
    require(w.start >= 0 && w.end >= w.start, path, "0 <= start <= end");
    return w;
}

json window_json(const TimeWindow& w) { return {{"start", w.start}, {"end", w.end}}; }

std::vector<double> read_per_class(ObjectReader& parent, const std::string& key,
                                   const std::vector<MessageClassSpec>& classes, double fallback) {
    std::vector<double> out(classes.size(), fallback);
    if (!parent.has(key)) {
        parent.mark(key);
        return out;
    }
    const json& obj = parent.raw(key);
    if (!obj.is_object()) throw Error(ErrorCode::Parse, parent.where(key), "expected object keyed by class id");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        ClassId id = class_id_from_string(it.key());
        int idx = -1;
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i].id == id) idx = static_cast<int>(i);
        if (idx < 0) throw Error(ErrorCode::DanglingRef, parent.where(key) + "." + it.key(), "class not configured");
        if (!it.value().is_number()) throw Error(ErrorCode::Parse, parent.where(key) + "." + it.key(), "expected number");
        out[idx] = it.value().get<double>();
    }
    return out;
}

json per_class_json(const std::vector<double>& v, const std::vector<MessageClassSpec>& classes) {
    json o = json::object();
    for (std::size_t i = 0; i < classes.size(); ++i) o[to_string(classes[i].id)] = v[i];
    return o;
}

MessageClassSpec read_class(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    MessageClassSpec c;
    c.id = class_id_from_string(r.req<std::string>("id"));
    c.lambda_base = r.req<double>("lambda_base");
    c.payload_bits = r.req<double>("payload_bits");
    c.sla_delay = r.req<double>("sla_delay");
    c.unit_loss = r.req<double>("unit_loss");
    c.sla_weight = r.req<double>("sla_weight");
    c.min_tag_bits = r.opt<double>("min_tag_bits", 0.0);
    c.forbid_s3 = r.opt<bool>("forbid_s3", false);
    if (r.has("qosec_cap") && !j.at("qosec_cap").is_null()) c.qosec_cap = r.req<double>("qosec_cap");
    else r.opt<double>("qosec_cap", 0.0);
    c.recovery_weight = r.opt<double>("recovery_weight", 1.0);
    c.relax_cap = r.opt<double>("relax_cap", 0.0);
    r.finish();

    require(c.lambda_base >= 0, "lambda_base", ">= 0");
    require(c.payload_bits > 0, "payload_bits", "> 0");
    require(c.sla_delay > 0, "sla_delay", "> 0");
    require(c.unit_loss >= 0, "unit_loss", ">= 0");
    require(c.sla_weight >= 0, "sla_weight", ">= 0");
    require(c.min_tag_bits >= 0, "min_tag_bits", ">= 0");
    require(!c.qosec_cap || (*c.qosec_cap > 0 && *c.qosec_cap <= 1), "qosec_cap", "in (0, 1]");
    require(c.recovery_weight >= 0, "recovery_weight", ">= 0");
    require(c.relax_cap >= 0, "relax_cap", ">= 0");
    return c;
}

json class_json(const MessageClassSpec& c) {
    return {{"id", to_string(c.id)},
            {"lambda_base", c.lambda_base},
            {"payload_bits", c.payload_bits},
            {"sla_delay", c.sla_delay},
            {"unit_loss", c.unit_loss},
            {"sla_weight", c.sla_weight},
            {"min_tag_bits", c.min_tag_bits},
            {"forbid_s3", c.forbid_s3},
            {"qosec_cap", c.qosec_cap ? json(*c.qosec_cap) : json(nullptr)},
            {"recovery_weight", c.recovery_weight},
            {"relax_cap", c.relax_cap}};
}

CryptoParams read_crypto(const json& j) {
    ObjectReader r(j, "crypto");
    CryptoParams p;
    p.iv_bits = r.opt("iv_bits", p.iv_bits);
    p.session_key_bits = r.opt("session_key_bits", p.session_key_bits);
    p.comp_tag_bits = r.opt("comp_tag_bits", p.comp_tag_bits);
    p.impl_epsilon = r.opt("impl_epsilon", p.impl_epsilon);
    p.mac_len_slope = r.opt("mac_len_slope", p.mac_len_slope);
    p.mac_len_cap = r.opt("mac_len_cap", p.mac_len_cap);
    p.adv_scale_aes = r.opt("adv_scale_aes", p.adv_scale_aes);
    p.adv_scale_mac = r.opt("adv_scale_mac", p.adv_scale_mac);
    p.adv_sec_level = r.opt("adv_sec_level", p.adv_sec_level);
    p.a_max = r.opt("a_max", p.a_max);
    p.r_max = r.opt("r_max", p.r_max);
    p.a_grid = r.opt<std::vector<double>>("a_grid", {});
    p.r_grid = r.opt<std::vector<int>>("r_grid", {});
    r.finish();

    for (double v : {p.iv_bits, p.session_key_bits, p.comp_tag_bits, p.mac_len_slope, p.adv_scale_aes,
                     p.adv_scale_mac, p.adv_sec_level})
        require(v >= 0, "crypto", "all parameters nonnegative");
    require(p.impl_epsilon >= 0 && p.impl_epsilon < 1, "impl_epsilon", "in [0, 1)");
    require(p.mac_len_cap >= 0 && p.mac_len_cap <= 256, "mac_len_cap", "in [0, 256]");
    require(p.a_max > 0, "a_max", "> 0");
    require(p.r_max >= 1, "r_max", ">= 1");
    if (p.a_grid.empty()) {
        for (double a = 0; a <= p.a_max + 1e-9; a += p.a_max / 16) p.a_grid.push_back(a);
    }
    if (p.r_grid.empty()) {
        for (int r = 1; r <= p.r_max; r *= 2) p.r_grid.push_back(r);
    }
    require(std::is_sorted(p.a_grid.begin(), p.a_grid.end()) &&
                std::adjacent_find(p.a_grid.begin(), p.a_grid.end()) == p.a_grid.end(),
            "a_grid", "strictly increasing");
    require(p.a_grid.front() >= 0 && p.a_grid.back() <= p.a_max, "a_grid", "within [0, a_max]");
    require(std::is_sorted(p.r_grid.begin(), p.r_grid.end()) &&
                std::adjacent_find(p.r_grid.begin(), p.r_grid.end()) == p.r_grid.end(),
            "r_grid", "strictly increasing");
    require(p.r_grid.front() >= 1 && p.r_grid.back() <= p.r_max, "r_grid", "within [1, r_max]");
    return p;
}

json crypto_json(const CryptoParams& p) {
    return {{"iv_bits", p.iv_bits},           {"session_key_bits", p.session_key_bits},
            {"comp_tag_bits", p.comp_tag_bits}, {"impl_epsilon", p.impl_epsilon},
            {"mac_len_slope", p.mac_len_slope}, {"mac_len_cap", p.mac_len_cap},
            {"adv_scale_aes", p.adv_scale_aes}, {"adv_scale_mac", p.adv_scale_mac},
            {"adv_sec_level", p.adv_sec_level}, {"a_max", p.a_max},
            {"r_max", p.r_max},                 {"a_grid", p.a_grid},
            {"r_grid", p.r_grid}};
}

QueueParams read_queue(const json& j) {
    ObjectReader r(j, "queue");
    QueueParams q;
    q.bandwidth_bits_per_slot = r.opt("bandwidth_bits_per_slot", q.bandwidth_bits_per_slot);
    q.ca2 = r.opt("ca2", q.ca2);
    q.cs2 = r.opt("cs2", q.cs2);
    q.enc_cost_per_bit = r.opt("enc_cost_per_bit", q.enc_cost_per_bit);
    q.ver_cost_per_bit = r.opt("ver_cost_per_bit", q.ver_cost_per_bit);
    q.fixed_crypto_overhead = r.opt("fixed_crypto_overhead", q.fixed_crypto_overhead);
    q.header_bits = r.opt("header_bits", q.header_bits);
    q.net_propagation = r.opt("net_propagation", q.net_propagation);
    r.finish();
    require(q.bandwidth_bits_per_slot > 0, "bandwidth_bits_per_slot", "> 0");
    for (double v : {q.ca2, q.cs2, q.enc_cost_per_bit, q.ver_cost_per_bit, q.fixed_crypto_overhead,
                     q.header_bits, q.net_propagation})
        require(v >= 0, "queue", "all parameters nonnegative");
    return q;
}

json queue_json(const QueueParams& q) {
    return {{"bandwidth_bits_per_slot", q.bandwidth_bits_per_slot},
            {"ca2", q.ca2},
            {"cs2", q.cs2},
            {"enc_cost_per_bit", q.enc_cost_per_bit},
            {"ver_cost_per_bit", q.ver_cost_per_bit},
            {"fixed_crypto_overhead", q.fixed_crypto_overhead},
            {"header_bits", q.header_bits},
            {"net_propagation", q.net_propagation}};
}

ObjectiveWeights read_weights(const json& j, const std::vector<MessageClassSpec>& classes) {
    ObjectReader r(j, "weights");
    ObjectiveWeights w;
    w.budget_hinge = r.opt("budget_hinge", w.budget_hinge);
    w.smooth_weight = r.opt("smooth_weight", w.smooth_weight);
    w.smooth_a = r.opt("smooth_a", w.smooth_a);
    w.smooth_r = r.opt("smooth_r", w.smooth_r);
    w.smooth_x = r.opt("smooth_x", w.smooth_x);
    w.prox_a = r.opt("prox_a", w.prox_a);
    w.prox_r = r.opt("prox_r", w.prox_r);
    w.prox_step = r.opt("prox_step", w.prox_step);
    if (r.has("dual_step_schedule")) {
        ObjectReader s(r.raw("dual_step_schedule"), "weights.dual_step_schedule");
        w.dual_step_schedule.initial = s.opt("initial", w.dual_step_schedule.initial);
        w.dual_step_schedule.decay = s.opt("decay", w.dual_step_schedule.decay);
        s.finish();
    }
    w.online_dual_step = r.opt("online_dual_step", w.online_dual_step);
    w.terminal_key_value = r.opt("terminal_key_value", w.terminal_key_value);
    w.delay_margin_mult = read_per_class(r, "delay_margin_mult", classes, 0.0);
    w.explore_fraction = r.opt("explore_fraction", w.explore_fraction);
    w.lcb_quantile = r.opt("lcb_quantile", w.lcb_quantile);
    w.prior_alpha = r.opt("prior_alpha", w.prior_alpha);
    w.prior_beta = r.opt("prior_beta", w.prior_beta);
    w.belief_discount = r.opt("belief_discount", w.belief_discount);
    w.reserve_margin = r.opt("reserve_margin", w.reserve_margin);
    w.forecast_half_life = r.opt("forecast_half_life", w.forecast_half_life);
    r.finish();

    for (double v : {w.budget_hinge, w.smooth_weight, w.smooth_a, w.smooth_r, w.smooth_x, w.prox_a, w.prox_r,
                     w.prox_step, w.dual_step_schedule.initial, w.dual_step_schedule.decay, w.online_dual_step,
                     w.terminal_key_value, w.reserve_margin})
        require(v >= 0, "weights", "all weights nonnegative");
    for (double v : w.delay_margin_mult) require(v >= 0, "delay_margin_mult", ">= 0");
    require(w.explore_fraction >= 0 && w.explore_fraction < 1, "explore_fraction", "in [0, 1)");
    require(w.lcb_quantile > 0 && w.lcb_quantile < 1, "lcb_quantile", "in (0, 1)");
    require(w.prior_alpha > 0 && w.prior_beta > 0, "prior_alpha", "Beta prior pseudo-counts > 0");
    require(w.belief_discount > 0 && w.belief_discount <= 1, "belief_discount", "in (0, 1]");
    require(w.forecast_half_life > 0, "forecast_half_life", "> 0");
    return w;
}

json weights_json(const ObjectiveWeights& w, const std::vector<MessageClassSpec>& classes) {
    return {{"budget_hinge", w.budget_hinge},
            {"smooth_weight", w.smooth_weight},
            {"smooth_a", w.smooth_a},
            {"smooth_r", w.smooth_r},
            {"smooth_x", w.smooth_x},
            {"prox_a", w.prox_a},
            {"prox_r", w.prox_r},
            {"prox_step", w.prox_step},
            {"dual_step_schedule",
             {{"initial", w.dual_step_schedule.initial}, {"decay", w.dual_step_schedule.decay}}},
            {"online_dual_step", w.online_dual_step},
            {"terminal_key_value", w.terminal_key_value},
            {"delay_margin_mult", per_class_json(w.delay_margin_mult, classes)},
            {"explore_fraction", w.explore_fraction},
            {"lcb_quantile", w.lcb_quantile},
            {"prior_alpha", w.prior_alpha},
            {"prior_beta", w.prior_beta},
            {"belief_discount", w.belief_discount},
            {"reserve_margin", w.reserve_margin},
            {"forecast_half_life", w.forecast_half_life}};
}

TrafficModel read_traffic(const json& j, const std::vector<MessageClassSpec>& classes) {
    ObjectReader r(j, "sim.traffic");
    TrafficModel t;
    t.diurnal_amp = r.opt("diurnal_amp", t.diurnal_amp);
    t.diurnal_peak_slot = r.opt("diurnal_peak_slot", t.diurnal_peak_slot);
    t.day_slots = r.opt("day_slots", t.day_slots);
    if (r.has("peaks")) {
        const json& peaks = array_at(r, "peaks");
        for (std::size_t i = 0; i < peaks.size(); ++i) {
            std::string path = "sim.traffic.peaks[" + std::to_string(i) + "]";
            ObjectReader pr(peaks[i], path);
            PeakWindow p;
            p.window = read_window(pr.raw("window"), path + ".window");
            p.amp = pr.req<double>("amp");
            for (const auto& s : pr.opt<std::vector<std::string>>("classes", {})) {
                ClassId id = class_id_from_string(s);
                bool found = std::any_of(classes.begin(), classes.end(), [&](auto& c) { return c.id == id; });
                if (!found) throw Error(ErrorCode::DanglingRef, path + ".classes", s);
                p.classes.push_back(id);
            }
            pr.finish();
            require(p.amp >= 0, path + ".amp", ">= 0");
            t.peaks.push_back(p);
        }
    }
    r.finish();
    require(t.diurnal_amp >= 0 && t.diurnal_amp < 1, "diurnal_amp", "in [0, 1) so intensities stay >= 0");
    require(t.day_slots >= 1, "day_slots", ">= 1");
    return t;
}

json traffic_json(const TrafficModel& t) {
    json peaks = json::array();
    for (const auto& p : t.peaks) {
        json cls = json::array();
        for (auto c : p.classes) cls.push_back(to_string(c));
        peaks.push_back({{"window", window_json(p.window)}, {"amp", p.amp}, {"classes", cls}});
    }
    return {{"diurnal_amp", t.diurnal_amp},
            {"diurnal_peak_slot", t.diurnal_peak_slot},
            {"day_slots", t.day_slots},
            {"peaks", peaks}};
}

AttackModel read_attack(const json& j, const std::vector<MessageClassSpec>& classes) {
    ObjectReader r(j, "sim.attack");
    AttackModel a;
    a.baseline = read_per_class(r, "baseline", classes, 0.0);
    a.drift_amp = r.opt("drift_amp", a.drift_amp);
    a.pulse_rate = r.opt("pulse_rate", a.pulse_rate);
    a.pulse_magnitude = r.opt("pulse_magnitude", a.pulse_magnitude);
    a.pareto_shape = r.opt("pareto_shape", a.pareto_shape);
    a.pareto_scale = r.opt("pareto_scale", a.pareto_scale);
    a.peak_sync = r.opt("peak_sync", a.peak_sync);
    a.base_queries_log2 = r.opt("base_queries_log2", a.base_queries_log2);
    a.pulse_queries_log2 = r.opt("pulse_queries_log2", a.pulse_queries_log2);
    a.base_duration = r.opt("base_duration", a.base_duration);
    a.context_peak_amp = r.opt("context_peak_amp", a.context_peak_amp);
    r.finish();
    for (double p : a.baseline) require(p >= 0 && p <= 1, "attack.baseline", "in [0, 1]");
    require(a.pulse_rate >= 0 && a.pulse_rate <= 1, "pulse_rate", "in [0, 1]");
    require(a.pulse_magnitude >= 0 && a.drift_amp >= 0, "pulse_magnitude", ">= 0");
    require(a.pareto_shape > 0 && a.pareto_scale > 0, "pareto_shape", "> 0");
    require(a.peak_sync >= 0 && a.base_duration >= 0 && a.context_peak_amp >= 0, "attack", "nonnegative");
    return a;
}

json attack_json(const AttackModel& a, const std::vector<MessageClassSpec>& classes) {
    return {{"baseline", per_class_json(a.baseline, classes)},
            {"drift_amp", a.drift_amp},
            {"pulse_rate", a.pulse_rate},
            {"pulse_magnitude", a.pulse_magnitude},
            {"pareto_shape", a.pareto_shape},
            {"pareto_scale", a.pareto_scale},
            {"peak_sync", a.peak_sync},
            {"base_queries_log2", a.base_queries_log2},
            {"pulse_queries_log2", a.pulse_queries_log2},
            {"base_duration", a.base_duration},
            {"context_peak_amp", a.context_peak_amp}};
}

WeatherModel read_weather(const json& j, const std::vector<LinkSpec>& links) {
    ObjectReader r(j, "sim.weather");
    WeatherModel w;
    w.ar_coeff = r.opt("ar_coeff", w.ar_coeff);
    w.noise_sd = r.opt("noise_sd", w.noise_sd);
    w.shock_prob = r.opt("shock_prob", w.shock_prob);
    w.shock_qber_add = r.opt("shock_qber_add", w.shock_qber_add);
    w.shock_duration_scale = r.opt("shock_duration_scale", w.shock_duration_scale);
    w.shock_duration_shape = r.opt("shock_duration_shape", w.shock_duration_shape);
    w.degraded_fraction = r.opt("degraded_fraction", w.degraded_fraction);
    if (r.has("outages")) {
        const json& arr = array_at(r, "outages");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            std::string path = "sim.weather.outages[" + std::to_string(i) + "]";
            ObjectReader o(arr[i], path);
            OutageWindow ow;
            ow.link = o.opt<std::string>("link", "");
            ow.window = read_window(o.raw("window"), path + ".window");
            o.finish();
            if (!ow.link.empty() &&
                std::none_of(links.begin(), links.end(), [&](auto& l) { return l.id == ow.link; }))
                throw Error(ErrorCode::DanglingRef, path + ".link", ow.link);
            w.outages.push_back(ow);
        }
    }
    if (r.has("scripted_shocks")) {
        const json& arr = array_at(r, "scripted_shocks");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            std::string path = "sim.weather.scripted_shocks[" + std::to_string(i) + "]";
            ObjectReader o(arr[i], path);
            YieldShock s;
            s.window = read_window(o.raw("window"), path + ".window");
            s.yield_factor = o.req<double>("yield_factor");
            o.finish();
            require(s.yield_factor >= 0 && s.yield_factor <= 1, path + ".yield_factor", "in [0, 1]");
            w.scripted_shocks.push_back(s);
        }
    }
    r.finish();
    require(w.ar_coeff >= 0 && w.ar_coeff < 1, "ar_coeff", "in [0, 1)");
    require(w.noise_sd >= 0 && w.shock_qber_add >= 0, "weather", "nonnegative");
    require(w.shock_prob >= 0 && w.shock_prob <= 1, "shock_prob", "in [0, 1]");
    require(w.shock_duration_scale > 0 && w.shock_duration_shape > 0, "shock_duration_scale", "> 0");
    require(w.degraded_fraction > 0 && w.degraded_fraction <= 1, "degraded_fraction", "in (0, 1]");
    return w;
}

json weather_json(const WeatherModel& w) {
    json outages = json::array();
    for (const auto& o : w.outages) outages.push_back({{"link", o.link}, {"window", window_json(o.window)}});
    json shocks = json::array();
    for (const auto& s : w.scripted_shocks)
        shocks.push_back({{"window", window_json(s.window)}, {"yield_factor", s.yield_factor}});
    return {{"ar_coeff", w.ar_coeff},
            {"noise_sd", w.noise_sd},
            {"shock_prob", w.shock_prob},
            {"shock_qber_add", w.shock_qber_add},
            {"shock_duration_scale", w.shock_duration_scale},
            {"shock_duration_shape", w.shock_duration_shape},
            {"degraded_fraction", w.degraded_fraction},
            {"outages", outages},
            {"scripted_shocks", shocks}};
}

SimParams read_sim(const json& j, const std::vector<MessageClassSpec>& classes, const std::vector<LinkSpec>& links) {
    ObjectReader r(j, "sim");
    SimParams s;
    s.slot_seconds = r.opt("slot_seconds", s.slot_seconds);
    s.horizon = r.opt("horizon", s.horizon);
    s.lookahead = r.opt("lookahead", s.lookahead);
    s.oracle_sweeps = r.opt("oracle_sweeps", s.oracle_sweeps);
    s.strict_compliance = r.opt("strict_compliance", s.strict_compliance);
    s.traffic = r.has("traffic") ? read_traffic(r.raw("traffic"), classes) : TrafficModel{};
    if (r.has("attack")) {
        s.attack = read_attack(r.raw("attack"), classes);
    } else {
        s.attack.baseline.assign(classes.size(), 0.0);
    }
    s.weather = r.has("weather") ? read_weather(r.raw("weather"), links) : WeatherModel{};
    if (r.has("static_policy")) {
        ObjectReader sp(r.raw("static_policy"), "sim.static_policy");
        s.static_policy.auth_knob = sp.opt("auth_knob", s.static_policy.auth_knob);
        s.static_policy.refresh = sp.opt("refresh", s.static_policy.refresh);
        sp.finish();
    }
    if (r.has("planner")) {
        ObjectReader pp(r.raw("planner"), "sim.planner");
        s.planner.scenarios = pp.opt("scenarios", s.planner.scenarios);
        s.planner.iters = pp.opt("iters", s.planner.iters);
        s.planner.forecast_noise = pp.opt("forecast_noise", s.planner.forecast_noise);
        pp.finish();
    }
    for (const char* k : {"traffic", "attack", "weather", "static_policy", "planner"}) r.mark(k);
    r.finish();
    require(s.slot_seconds > 0, "slot_seconds", "> 0");
    require(s.horizon >= 0, "horizon", ">= 0");
    require(s.lookahead >= 1, "lookahead", ">= 1");
    require(s.oracle_sweeps >= 1, "oracle_sweeps", ">= 1");
    require(s.planner.scenarios >= 1 && s.planner.iters >= 1, "planner", "scenarios, iters >= 1");
    require(s.planner.forecast_noise >= 0, "forecast_noise", ">= 0");
    require(s.static_policy.auth_knob >= 0 && s.static_policy.refresh >= 1, "static_policy", "valid column");
    return s;
}

json sim_json(const SimParams& s, const std::vector<MessageClassSpec>& classes) {
    return {{"slot_seconds", s.slot_seconds},
            {"horizon", s.horizon},
            {"lookahead", s.lookahead},
            {"oracle_sweeps", s.oracle_sweeps},
            {"strict_compliance", s.strict_compliance},
            {"traffic", traffic_json(s.traffic)},
            {"attack", attack_json(s.attack, classes)},
            {"weather", weather_json(s.weather)},
            {"static_policy", {{"auth_knob", s.static_policy.auth_knob}, {"refresh", s.static_policy.refresh}}},
            {"planner",
             {{"scenarios", s.planner.scenarios},
              {"iters", s.planner.iters},
              {"forecast_noise", s.planner.forecast_noise}}}};
}

}  // namespace

ValidatedModel validate_config(const json& raw) {
    ObjectReader top(raw, "$");
    auto m = std::make_shared<Model>();

    const json& classes = array_at(top, "classes");
    std::set<ClassId> class_ids;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        auto c = read_class(classes[i], "classes[" + std::to_string(i) + "]");
        if (!class_ids.insert(c.id).second) throw Error(ErrorCode::Invariant, "classes.id", "duplicate " + to_string(c.id));
        m->classes.push_back(c);
    }
    require(!m->classes.empty(), "classes", "at least one class");

    const json& domains = array_at(top, "domains");
    for (std::size_t i = 0; i < domains.size(); ++i) {
        ObjectReader r(domains[i], "domains[" + std::to_string(i) + "]");
        DomainSpec d;
        d.id = r.req<std::string>("id");
        d.transit_cap_per_slot = r.req<double>("transit_cap_per_slot");
        d.alloc_quota_per_slot = r.req<double>("alloc_quota_per_slot");
        r.finish();
        require(d.transit_cap_per_slot >= 0, "transit_cap_per_slot", ">= 0");
        require(d.alloc_quota_per_slot >= 0, "alloc_quota_per_slot", ">= 0");
        for (const auto& other : m->domains) require(other.id != d.id, "domains.id", "unique");
        m->domains.push_back(d);
    }

    const json& nodes = array_at(top, "nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::string path = "nodes[" + std::to_string(i) + "]";
        ObjectReader r(nodes[i], path);
        NodeSpec n;
        n.id = r.req<std::string>("id");
        n.pool_cap = r.req<Bits>("pool_cap");
        n.ttl_slots = r.req<int>("ttl_slots");
        n.domain = r.req<std::string>("domain");
        n.traffic_weight = r.opt("traffic_weight", 0.0);
        n.initial_bits = r.opt<Bits>("initial_bits", 0);
        n.key_margin_mult = r.opt("key_margin_mult", 0.0);
        r.finish();
        require(n.pool_cap > 0, "pool_cap", "> 0");
        require(n.ttl_slots >= 1, "ttl_slots", ">= 1");
        require(n.traffic_weight >= 0, "traffic_weight", ">= 0");
        require(n.initial_bits >= 0 && n.initial_bits <= n.pool_cap, "initial_bits", "in [0, pool_cap]");
        require(n.key_margin_mult >= 0, "key_margin_mult", ">= 0");
        if (m->node_index(n.id) >= 0) throw Error(ErrorCode::Invariant, "nodes.id", "duplicate " + n.id);
        int d = -1;
        for (std::size_t k = 0; k < m->domains.size(); ++k)
            if (m->domains[k].id == n.domain) d = static_cast<int>(k);
        if (d < 0) throw Error(ErrorCode::DanglingRef, path + ".domain", n.domain);
        m->nodes.push_back(n);
        m->node_domain.push_back(d);
    }
    require(!m->nodes.empty(), "nodes", "at least one node");
    double total_weight = 0;
    for (const auto& n : m->nodes) total_weight += n.traffic_weight;
    require(total_weight > 0, "traffic_weight", "at least one node carries traffic");

    const json& links = array_at(top, "links");
    for (std::size_t i = 0; i < links.size(); ++i) {
        std::string path = "links[" + std::to_string(i) + "]";
        ObjectReader r(links[i], path);
        LinkSpec l;
        l.id = r.req<std::string>("id");
        l.from = r.req<std::string>("from");
        l.to = r.req<std::string>("to");
        l.yield_max = r.req<double>("yield_max");
        l.qber_threshold = r.opt("qber_threshold", l.qber_threshold);
        l.qber_mean = r.opt("qber_mean", l.qber_mean);
        l.env_sensitivity = r.opt("env_sensitivity", l.env_sensitivity);
        r.finish();
        int a = m->node_index(l.from), b = m->node_index(l.to);
        if (a < 0) throw Error(ErrorCode::DanglingRef, path + ".from", l.from);
        if (b < 0) throw Error(ErrorCode::DanglingRef, path + ".to", l.to);
        require(a != b, path, "self loop");
        require(l.yield_max >= 0, "yield_max", ">= 0");
        require(l.qber_threshold > 0 && l.qber_threshold < 1, "qber_threshold", "in (0, 1)");
        require(l.qber_mean >= 0 && l.env_sensitivity >= 0, "qber_mean", ">= 0");
        for (const auto& other : m->links) require(other.id != l.id, "links.id", "unique");
        m->links.push_back(l);
        m->link_from.push_back(a);
        m->link_to.push_back(b);
        m->link_domain.push_back(m->node_domain[a] == m->node_domain[b] ? m->node_domain[a] : -1);
    }

    m->crypto = read_crypto(top.raw("crypto"));
    m->queue = read_queue(top.raw("queue"));
    m->weights = read_weights(top.raw("weights"), m->classes);
    m->sim = read_sim(top.raw("sim"), m->classes, m->links);
    const json& seed = top.raw("seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer())
        throw Error(ErrorCode::Parse, "$.seed", "expected integer");
    m->seed = seed.get<std::uint64_t>();
    top.finish();

    for (const auto& c : m->classes) {
        require(c.min_tag_bits <= m->crypto.mac_len_cap, "min_tag_bits", "<= mac_len_cap");
        if (m->sim.strict_compliance && (c.id == ClassId::M1 || c.id == ClassId::M4)) {
            require(c.forbid_s3, "forbid_s3", to_string(c.id) + " must forbid S3 under strict compliance");
            require(c.min_tag_bits > 0, "min_tag_bits", to_string(c.id) + " needs a minimum tag under strict compliance");
        }
    }
    return m;
}

ValidatedModel validate_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, "$", e.what());
    }
    return validate_config(j);
}

ValidatedModel load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, path, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return validate_config_text(ss.str());
}

json serialize(const Model& m) {
    json classes = json::array();
    for (const auto& c : m.classes) classes.push_back(class_json(c));
    json nodes = json::array();
    for (const auto& n : m.nodes)
        nodes.push_back({{"id", n.id},
                         {"pool_cap", n.pool_cap},
                         {"ttl_slots", n.ttl_slots},
                         {"domain", n.domain},
                         {"traffic_weight", n.traffic_weight},
                         {"initial_bits", n.initial_bits},
                         {"key_margin_mult", n.key_margin_mult}});
    json links = json::array();
    for (const auto& l : m.links)
        links.push_back({{"id", l.id},
                         {"from", l.from},
                         {"to", l.to},
                         {"yield_max", l.yield_max},
                         {"qber_threshold", l.qber_threshold},
                         {"qber_mean", l.qber_mean},
                         {"env_sensitivity", l.env_sensitivity}});
    json domains = json::array();
    for (const auto& d : m.domains)
        domains.push_back({{"id", d.id},
                           {"transit_cap_per_slot", d.transit_cap_per_slot},
                           {"alloc_quota_per_slot", d.alloc_quota_per_slot}});
    return {{"classes", classes},
            {"nodes", nodes},
            {"links", links},
            {"domains", domains},
            {"crypto", crypto_json(m.crypto)},
            {"queue", queue_json(m.queue)},
            {"weights", weights_json(m.weights, m.classes)},
            {"sim", sim_json(m.sim, m.classes)},
            {"seed", m.seed}};
}

std::string config_hash(const Model& model) {
    const std::string text = serialize(model).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace qkdvpp

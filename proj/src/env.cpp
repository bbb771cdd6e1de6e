#include "qkdvpp/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qkdvpp::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool in_window(const TimeWindow& w, int slot) { return slot >= w.start && slot < w.end; }

double pareto_draw(std::mt19937_64& rng, double scale, double shape) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double v = 1.0 - u(rng);  // (0, 1]
    return scale / std::pow(v, 1.0 / shape);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return std::mt19937_64(mix_seed(seed, stream, index));
}

double traffic_intensity(const Model& model, int cls, int slot) {
    const auto& tm = model.sim.traffic;
    const double phase = 2.0 * std::numbers::pi * (slot - tm.diurnal_peak_slot) / tm.day_slots;
    double lam = model.classes[cls].lambda_base * (1.0 + tm.diurnal_amp * std::cos(phase));
    for (const auto& pk : tm.peaks) {
        if (!in_window(pk.window, slot)) continue;
        const bool hit = pk.classes.empty() ||
                         std::find(pk.classes.begin(), pk.classes.end(), model.classes[cls].id) != pk.classes.end();
        if (hit) lam *= 1.0 + pk.amp;
    }
    return std::max(0.0, lam);
}

bool in_peak(const Model& model, int cls, int slot) {
    for (const auto& pk : model.sim.traffic.peaks) {
        if (!in_window(pk.window, slot)) continue;
        if (pk.classes.empty() ||
            std::find(pk.classes.begin(), pk.classes.end(), model.classes[cls].id) != pk.classes.end())
            return true;
    }
    return false;
}

bool in_any_peak(const Model& model, int slot) {
    for (const auto& pk : model.sim.traffic.peaks)
        if (in_window(pk.window, slot)) return true;
    return false;
}

double context_amp(const Model& model, int cls, int slot) {
    const double amp = model.sim.attack.context_peak_amp;
    return (1.0 + amp * (in_peak(model, cls, slot) ? 1.0 : 0.0)) / (1.0 + amp);
}

std::vector<std::int64_t> gen_traffic(const Model& model, int slot, std::uint64_t seed) {
    auto rng = stream_rng(seed, Stream::Traffic, static_cast<std::uint64_t>(slot));
    std::vector<std::int64_t> out(model.classes.size(), 0);
    for (std::size_t i = 0; i < model.classes.size(); ++i) {
        const double lam = traffic_intensity(model, static_cast<int>(i), slot);
        if (lam > 0.0) out[i] = std::poisson_distribution<std::int64_t>(lam)(rng);
    }
    return out;
}

Bits link_yield(const LinkSpec& link, double qber, double snr, double availability) {
    const double frac = std::max(0.0, 1.0 - qber / link.qber_threshold);
    return static_cast<Bits>(std::floor(link.yield_max * frac * snr * availability));
}

bool link_in_outage(const Model& model, int link, int slot) {
    for (const auto& o : model.sim.weather.outages) {
        if (!in_window(o.window, slot)) continue;
        if (o.link.empty() || o.link == model.links[link].id) return true;
    }
    return false;
}

double scripted_yield_factor(const Model& model, int slot) {
    double f = 1.0;
    for (const auto& s : model.sim.weather.scripted_shocks)
        if (in_window(s.window, slot)) f *= s.yield_factor;
    return f;
}

EnvSeries generate_env(const Model& model, int horizon, std::uint64_t seed, const EnvOptions& options) {
    const int nc = static_cast<int>(model.classes.size());
    const int nl = static_cast<int>(model.links.size());
    const auto& am = model.sim.attack;
    const auto& wm = model.sim.weather;
    EnvSeries series(std::max(0, horizon));

    // Attack pulses: start draws per slot, heavy-tailed durations.
    std::vector<double> pulse_add(horizon, 0.0);
    std::vector<int> pulse_start(horizon, -1);
    for (int s = 0; s < horizon; ++s) {
        auto rng = stream_rng(seed, Stream::Attack, static_cast<std::uint64_t>(s));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double rate = std::min(1.0, am.pulse_rate * (in_any_peak(model, s) ? am.peak_sync : 1.0));
        const double start_u = u(rng);
        const double dur = pareto_draw(rng, am.pareto_scale, am.pareto_shape);
        const double mag = am.pulse_magnitude * (0.5 + u(rng));
        if (start_u >= rate) continue;
        const int end = std::min<long>(horizon, s + static_cast<long>(std::ceil(dur)));
        for (int t = s; t < end; ++t) {
            pulse_add[t] += mag;
            if (pulse_start[t] < 0) pulse_start[t] = s;
        }
    }

    // Weather shocks and the per-link QBER process.
    std::vector<double> shock_add(horizon, 0.0);
    for (int s = 0; s < horizon; ++s) {
        auto rng = stream_rng(seed, Stream::Weather, 1000000ULL + static_cast<std::uint64_t>(s));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double start_u = u(rng);
        const double dur = pareto_draw(rng, wm.shock_duration_scale, wm.shock_duration_shape);
        if (start_u >= wm.shock_prob) continue;
        const int end = std::min<long>(horizon, s + static_cast<long>(std::ceil(dur)));
        for (int t = s; t < end; ++t) shock_add[t] = wm.shock_qber_add;
    }
    std::vector<double> x(nl, 0.0);
    const double innov = std::sqrt(std::max(0.0, 1.0 - wm.ar_coeff * wm.ar_coeff));

    for (int t = 0; t < horizon; ++t) {
        EnvSlot& slot = series[t];
        slot.intensity.resize(nc);
        slot.arrivals.resize(nc);
        slot.attack.resize(nc);
        slot.outcome_u_attempt.resize(nc);
        slot.outcome_u_success.resize(nc);

        auto frng = stream_rng(seed, Stream::Forecast, static_cast<std::uint64_t>(t));
        std::normal_distribution<double> fn(0.0, 1.0);
        for (int i = 0; i < nc; ++i) {
            double lam = traffic_intensity(model, i, t);
            if (options.intensity_noise > 0.0) {
                const double z = fn(frng);
                lam *= std::exp(options.intensity_noise * z - 0.5 * options.intensity_noise * options.intensity_noise);
            }
            slot.intensity[i] = lam;
        }
        if (options.draw_counts) {
            auto trng = stream_rng(seed, Stream::Traffic, static_cast<std::uint64_t>(t));
            for (int i = 0; i < nc; ++i)
                slot.arrivals[i] =
                    slot.intensity[i] > 0.0 ? std::poisson_distribution<std::int64_t>(slot.intensity[i])(trng) : 0;
        } else {
            for (int i = 0; i < nc; ++i) slot.arrivals[i] = std::llround(slot.intensity[i]);
        }

        slot.pulse_active = pulse_add[t] > 0.0;
        const double day_phase = 2.0 * std::numbers::pi * t / model.sim.traffic.day_slots;
        for (int i = 0; i < nc; ++i) {
            crypto::AttackContext& c = slot.attack[i];
            const double base = am.baseline[i] * (1.0 + am.drift_amp * std::sin(day_phase + 1.3 * i));
            c.attempt_prob = std::clamp(base + pulse_add[t], 0.0, 1.0);
            c.query_budget = std::exp2(slot.pulse_active ? am.pulse_queries_log2 : am.base_queries_log2);
            c.duration_slots = am.base_duration + (slot.pulse_active ? t - pulse_start[t] : 0);
            c.context_amp = context_amp(model, i, t);
        }
        auto orng = stream_rng(seed, Stream::Outcome, static_cast<std::uint64_t>(t));
        std::uniform_real_distribution<double> ou(0.0, 1.0);
        for (int i = 0; i < nc; ++i) {
            slot.outcome_u_attempt[i] = ou(orng);
            slot.outcome_u_success[i] = ou(orng);
        }

        auto wrng = stream_rng(seed, Stream::Weather, static_cast<std::uint64_t>(t));
        std::normal_distribution<double> wn(0.0, 1.0);
        slot.weather_shock = shock_add[t] > 0.0;
        const double factor = scripted_yield_factor(model, t);
        slot.scripted_shock = factor < 1.0;
        slot.qber.resize(nl);
        slot.yields.resize(nl);
        slot.regime.resize(nl);
        for (int e = 0; e < nl; ++e) {
            const LinkSpec& link = model.links[e];
            x[e] = wm.ar_coeff * x[e] + innov * wn(wrng);
            const double q = std::max(0.0, link.qber_mean + link.env_sensitivity * (wm.noise_sd * x[e] + shock_add[t]));
            slot.qber[e] = q;
            const bool outage = link_in_outage(model, e, t);
            const double avail = outage ? 0.0 : factor * options.yield_scale;
            slot.yields[e] = link_yield(link, q, 1.0, avail);
            if (outage)
                slot.regime[e] = Regime::Outage;
            else if (q >= wm.degraded_fraction * link.qber_threshold)
                slot.regime[e] = Regime::Degraded;
            else
                slot.regime[e] = Regime::Normal;
        }
    }
    return series;
}

}  // namespace qkdvpp::sim

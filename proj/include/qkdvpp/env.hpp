#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "qkdvpp/crypto.hpp"
#include "qkdvpp/model.hpp"

namespace qkdvpp::sim {

// Independent random streams. Each (seed, stream, slot) triple gets its own generator, so turning one
// generator off never shifts the draws of another.
enum class Stream : std::uint64_t { Traffic = 1, Attack = 2, Weather = 3, Decision = 4, Outcome = 5, Forecast = 6 };

std::uint64_t mix_seed(std::uint64_t seed, Stream stream, std::uint64_t index);
std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream, std::uint64_t index);

enum class Regime { Normal, Degraded, Outage };

struct EnvSlot {
    std::vector<double> intensity;                 // expected arrivals per class
    std::vector<std::int64_t> arrivals;            // realized counts per class
    std::vector<crypto::AttackContext> attack;     // realized context per class
    std::vector<double> outcome_u_attempt;         // uniforms for attempt draws
    std::vector<double> outcome_u_success;         // uniforms for success draws
    std::vector<double> qber;                      // per link
    std::vector<Bits> yields;                      // per link, bits this slot
    std::vector<Regime> regime;                    // per link
    bool pulse_active = false;
    bool weather_shock = false;
    bool scripted_shock = false;
};

struct EnvOptions {
    double yield_scale = 1.0;      // multiplies every link yield (budget sweeps)
    bool draw_counts = true;       // false: arrivals are rounded intensities
    double intensity_noise = 0.0;  // multiplicative lognormal noise on intensities (scenario spread)
};

using EnvSeries = std::vector<EnvSlot>;

EnvSeries generate_env(const Model& model, int horizon, std::uint64_t seed, const EnvOptions& options = {});

// Diurnal x peak intensity, messages per slot.
double traffic_intensity(const Model& model, int cls, int slot);
bool in_peak(const Model& model, int cls, int slot);
bool in_any_peak(const Model& model, int slot);
double context_amp(const Model& model, int cls, int slot);

// Poisson arrival counts for one slot drawn from the traffic stream.
std::vector<std::int64_t> gen_traffic(const Model& model, int slot, std::uint64_t seed);

// g = yield_max * max(0, 1 - Q / Q_th) * snr * availability, floored to whole bits.
Bits link_yield(const LinkSpec& link, double qber, double snr, double availability);

bool link_in_outage(const Model& model, int link, int slot);
double scripted_yield_factor(const Model& model, int slot);

}  // namespace qkdvpp::sim

#pragma once

// Independent reference computations shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "qkdvpp/controller.hpp"
#include "qkdvpp/planner.hpp"

namespace qkdvpp::testing {

using namespace qkdvpp::controller;

// LP value of the multiple-choice relaxation by exhaustive dual breakpoint enumeration in exact
// integer arithmetic: max over lambda >= 0 of sum_i min_k (c_ik + lambda w_ik) - lambda B.
struct Frac {
    __int128 num, den;
};

inline bool less(const Frac& a, const Frac& b) { return a.num * b.den < b.num * a.den; }

inline Frac lp_value(const std::vector<std::vector<std::pair<long, long>>>& items, long budget) {
    std::vector<std::pair<long, long>> cand{{0, 1}};
    for (const auto& cls : items)
        for (const auto& [wj, cj] : cls)
            for (const auto& [wk, ck] : cls)
                if (wk > wj && cj > ck) cand.emplace_back(cj - ck, wk - wj);
    Frac best{std::numeric_limits<long>::min(), 1};
    for (const auto& [p, q] : cand) {
        __int128 v = -static_cast<__int128>(p) * budget;
        for (const auto& cls : items) {
            __int128 m = std::numeric_limits<long long>::max();
            for (const auto& [w, c] : cls) m = std::min<__int128>(m, static_cast<__int128>(q) * c + static_cast<__int128>(p) * w);
            v += m;
        }
        Frac f{v, q};
        if (less(best, f)) best = f;
    }
    return best;
}

inline Model default_model() { return *validate_config(default_config()); }

inline Model pick_classes(const Model& full, const std::vector<int>& idx) {
    Model m = full;
    m.classes.clear();
    m.weights.delay_margin_mult.clear();
    for (int i : idx) {
        m.classes.push_back(full.classes[i]);
        m.weights.delay_margin_mult.push_back(full.weights.delay_margin_mult[i]);
    }
    return m;
}

inline StrategyColumn random_column(const Model& m, int cls, std::mt19937_64& rng) {
    const auto cols = planner::grid_columns(m, cls);
    return cols[rng() % cols.size()];
}

inline SlotInputs random_inputs(const Model& m, std::mt19937_64& rng, double budget) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int nc = static_cast<int>(m.classes.size());
    SlotInputs in;
    in.ctx.resize(nc);
    std::vector<double> lam(nc);
    for (int i = 0; i < nc; ++i) {
        lam[i] = m.classes[i].lambda_base * (0.5 + u(rng));
        in.ctx[i].lambda = lam[i];
        in.ctx[i].attack = {0.3 * u(rng), std::exp2(18 + 8 * u(rng)), 1.0 + std::floor(10 * u(rng)), 0.5 + 0.5 * u(rng)};
        in.ctx[i].latency_dual = m.classes[i].sla_weight;
    }
    in.net.bandwidth_bits_per_slot = m.queue.bandwidth_bits_per_slot;
    in.net.slot_seconds = m.sim.slot_seconds;
    in.net.arrivals_per_slot = lam;
    in.net.net_propagation = m.queue.net_propagation;
    in.util = 0.6 * u(rng);
    in.budget_bits = budget;
    in.available_bits = budget;
    in.threshold = std::pow(10.0, -11 + 4 * u(rng));
    in.delay_sigma.assign(nc, 0.005 * u(rng));
    return in;
}

// Cheapest surviving candidate per class, summed: base demand after the compliance and latency filters.
inline double filtered_base(const SlotDecision& d) {
    double base = 0.0;
    for (const auto& cands : d.candidates) {
        double w = std::numeric_limits<double>::infinity();
        for (const auto& e : cands) w = std::min(w, e.weight);
        base += w;
    }
    return base;
}

inline std::vector<StrategyColumn> brute_force(const SlotDecision& d, double theta) {
    const int nc = static_cast<int>(d.candidates.size());
    std::vector<int> idx(nc, 0), best;
    double best_v = std::numeric_limits<double>::infinity(), best_w = 0.0;
    for (;;) {
        double v = 0.0, w = 0.0;
        for (int i = 0; i < nc; ++i) {
            const auto& e = d.candidates[i][idx[i]];
            v += e.cost + theta * e.weight;
            w += e.weight;
        }
        if (v < best_v || (v == best_v && w < best_w)) {
            best_v = v;
            best_w = w;
            best = idx;
        }
        int k = 0;
        while (k < nc && ++idx[k] == static_cast<int>(d.candidates[k].size())) idx[k++] = 0;
        if (k == nc) break;
    }
    std::vector<StrategyColumn> out;
    for (int i = 0; i < nc; ++i) out.push_back(d.candidates[i][best[i]].col);
    return out;
}

// M/M/1 mean queueing delay, written independently of the Kingman form.
inline double mm1_wq(double lambda, double mu) { return lambda / (mu * (mu - lambda)); }

}  // namespace qkdvpp::testing

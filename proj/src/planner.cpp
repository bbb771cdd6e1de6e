#include "qkdvpp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

#include "qkdvpp/error.hpp"
#include "qkdvpp/keynet.hpp"
#include "qkdvpp/recovery.hpp"

namespace qkdvpp {

double aggregate_price(const Model& model, const ShadowPrices& prices) {
    double p = prices.pool;
    const auto ws = planner::node_shares(model);
    for (std::size_t u = 0; u < prices.node.size() && u < ws.size(); ++u) p += ws[u] * prices.node[u];
    const auto ds = planner::domain_shares(model);
    for (std::size_t d = 0; d < prices.domain.size() && d < ds.size(); ++d) p += ds[d] * prices.domain[d];
    return p;
}

}  // namespace qkdvpp

namespace qkdvpp::planner {

namespace {

constexpr double kEps = 1e-12;

using ColumnKey = std::tuple<int, double, int>;

ColumnKey key_of(const StrategyColumn& c) {
    const bool s3 = c.strategy == Strategy::S3_AES_MAC;
    const bool s1 = c.strategy == Strategy::S1_OTP_WC;
    return {static_cast<int>(c.strategy), s3 ? 0.0 : c.auth_knob, s1 ? 1 : c.refresh};
}

}  // namespace

ClassChain build_chain(int cls, double unit_loss, std::vector<ColumnEval> options) {
    ClassChain chain;
    chain.cls = cls;
    chain.unit_loss = unit_loss;
    chain.options = std::move(options);
    const auto& opt = chain.options;
    if (opt.empty()) throw Error(ErrorCode::InfeasibleBase, "class " + std::to_string(cls), "no candidate columns");

    int base = 0;
    for (int k = 1; k < static_cast<int>(opt.size()); ++k) {
        if (opt[k].weight < opt[base].weight - kEps ||
            (std::abs(opt[k].weight - opt[base].weight) <= kEps && opt[k].cost < opt[base].cost))
            base = k;
    }
    chain.path.push_back(base);
    int cur = base;
    for (;;) {
        int best = -1;
        double best_density = 0.0;
        for (int k = 0; k < static_cast<int>(opt.size()); ++k) {
            const double dw = opt[k].weight - opt[cur].weight;
            const double dv = opt[cur].cost - opt[k].cost;
            if (dw <= kEps || dv <= 0.0) continue;
            const double d = dv / dw;
            // Ties keep the nearer point so colinear hull points become separate steps.
            if (best < 0 || d > best_density * (1 + 1e-12) ||
                (d >= best_density * (1 - 1e-12) && opt[k].weight < opt[best].weight)) {
                best = k;
                best_density = d;
            }
        }
        if (best < 0) break;
        chain.steps.push_back({cur, best, opt[best].weight - opt[cur].weight, opt[cur].cost - opt[best].cost,
                               best_density});
        chain.path.push_back(best);
        cur = best;
    }
    return chain;
}

int FractionalAllocation::option_of(const ClassChain& chain, int c) const { return chain.path[level[c]]; }

FractionalAllocation solve_slot_fractional(const std::vector<ClassChain>& chains, double budget_bits,
                                           double min_density, Arbitration arb) {
    FractionalAllocation out;
    const int n = static_cast<int>(chains.size());
    out.level.assign(n, 0);
    out.fraction.assign(n, 0.0);
    for (const auto& ch : chains) {
        out.base_bits += ch.base_weight();
        out.objective += ch.base_cost();
    }
    if (budget_bits < out.base_bits - 1e-9 * std::max(1.0, out.base_bits))
        throw Error(ErrorCode::InfeasibleBase, "budget", "budget below the cheapest compliant assignment");
    double left = budget_bits - out.base_bits;
    out.used_bits = out.base_bits;
    out.threshold = std::max(0.0, min_density);

    auto apply = [&](int c, int k) -> bool {
        const UpgradeStep& st = chains[c].steps[k];
        if (st.weight <= left) {
            left -= st.weight;
            out.used_bits += st.weight;
            out.objective -= st.value;
            out.level[c] = k + 1;
            out.applied.emplace_back(c, k);
            return true;
        }
        const double frac = std::max(0.0, left) / st.weight;
        if (frac > 0.0) {
            out.fraction[c] = frac;
            out.split = c;
            out.used_bits += frac * st.weight;
            out.objective -= frac * st.value;
        }
        out.threshold = st.density;
        return false;
    };

    if (arb == Arbitration::MsvOrder) {
        std::vector<std::pair<int, int>> items;
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < static_cast<int>(chains[c].steps.size()); ++k)
                if (chains[c].steps[k].density > min_density) items.emplace_back(c, k);
        std::sort(items.begin(), items.end(), [&](const auto& x, const auto& y) {
            const double dx = chains[x.first].steps[x.second].density;
            const double dy = chains[y.first].steps[y.second].density;
            if (dx != dy) return dx > dy;
            const double lx = chains[x.first].unit_loss, ly = chains[y.first].unit_loss;
            if (lx != ly) return lx > ly;
            if (x.first != y.first) return x.first < y.first;
            return x.second < y.second;
        });
        for (const auto& [c, k] : items)
            if (!apply(c, k)) break;
    } else {
        // Round-robin arbitration: each class takes its next eligible step in turn.
        bool progress = true, stopped = false;
        while (progress && !stopped) {
            progress = false;
            for (int c = 0; c < n && !stopped; ++c) {
                const int k = out.level[c];
                if (k >= static_cast<int>(chains[c].steps.size()) || chains[c].steps[k].density <= min_density) continue;
                progress = true;
                if (!apply(c, k)) stopped = true;
            }
        }
    }
    return out;
}

std::vector<int> round_allocation(const std::vector<ClassChain>& chains, const FractionalAllocation& alloc,
                                  double budget_bits) {
    const int n = static_cast<int>(chains.size());
    std::vector<int> level = alloc.level;
    if (alloc.split >= 0 && alloc.fraction[alloc.split] >= 0.5) ++level[alloc.split];
    double used = 0.0;
    for (int c = 0; c < n; ++c) used += chains[c].options[chains[c].path[level[c]]].weight;
    while (used > budget_bits + 1e-9 * std::max(1.0, budget_bits)) {
        int worst = -1;
        for (int c = 0; c < n; ++c) {
            if (level[c] == 0) continue;
            if (worst < 0) {
                worst = c;
                continue;
            }
            const double dc = chains[c].steps[level[c] - 1].density;
            const double dw = chains[worst].steps[level[worst] - 1].density;
            if (dc < dw || (dc == dw && chains[c].unit_loss < chains[worst].unit_loss)) worst = c;
        }
        if (worst < 0) break;
        used -= chains[worst].steps[level[worst] - 1].weight;
        --level[worst];
    }
    std::vector<int> out(n);
    for (int c = 0; c < n; ++c) out[c] = chains[c].path[level[c]];
    return out;
}

double column_cost(const PricingContext& pc, const StrategyColumn& col) {
    const Model& m = *pc.model;
    const MessageClassSpec& cls = m.classes[pc.cls];
    double cost = crypto::expected_class_risk(cls, col, pc.ctx.attack, m.crypto);
    cost += pc.price * pc.ctx.lambda * crypto::key_cost(cls, col, m.crypto);
    if (pc.ctx.latency_dual > 0.0) {
        const auto d = queueing::end_to_end_delay(cls, col, pc.net, pc.util, m.queue, m.crypto);
        cost += pc.ctx.latency_dual * std::max(0.0, d.delay - cls.sla_delay);
    }
    return cost;
}

std::vector<StrategyColumn> grid_columns(const Model& model, int cls) {
    const auto& c = model.classes[cls];
    const auto& cp = model.crypto;
    std::vector<StrategyColumn> out;
    for (double a : cp.a_grid) {
        StrategyColumn s1{Strategy::S1_OTP_WC, a, 1};
        if (crypto::is_compliant(c, s1, cp)) out.push_back(s1);
    }
    for (double a : cp.a_grid)
        for (int r : cp.r_grid) {
            StrategyColumn s2{Strategy::S2_AES_WC, a, r};
            if (crypto::is_compliant(c, s2, cp)) out.push_back(s2);
        }
    for (int r : cp.r_grid) {
        StrategyColumn s3{Strategy::S3_AES_MAC, 0.0, r};
        if (crypto::is_compliant(c, s3, cp)) out.push_back(s3);
    }
    return out;
}

StrategyColumn base_column(const Model& model, int cls) {
    const auto cols = grid_columns(model, cls);
    if (cols.empty()) throw Error(ErrorCode::InfeasibleBase, to_string(model.classes[cls].id), "no compliant column");
    const auto& c = model.classes[cls];
    StrategyColumn best = cols.front();
    double best_k = crypto::key_cost(c, best, model.crypto);
    for (const auto& col : cols) {
        const double k = crypto::key_cost(c, col, model.crypto);
        if (k < best_k) {
            best = col;
            best_k = k;
        }
    }
    return best;
}

namespace {

// Derivative of the relaxed column cost in the auth knob.
double relaxed_cost_slope(const PricingContext& pc, const StrategyColumn& col, double a) {
    const Model& m = *pc.model;
    const auto& cp = m.crypto;
    const auto& cls = m.classes[pc.cls];
    const double lslope = crypto::mac_len_relaxed_slope(a, cp);
    const double len = crypto::mac_len_relaxed(a, cp);
    const auto& at = pc.ctx.attack;
    double g = -std::log(2.0) * std::exp2(-len) * lslope * at.attempt_prob * cls.unit_loss * at.context_amp;
    g += pc.price * pc.ctx.lambda * lslope;
    if (pc.ctx.latency_dual > 0.0 && lslope > 0.0) {
        StrategyColumn lo = col, hi = col;
        lo.auth_knob = std::clamp(std::floor(a), 0.0, cp.a_max);
        hi.auth_knob = std::min(cp.a_max, lo.auth_knob + 1.0);
        const auto dl = queueing::end_to_end_delay(cls, lo, pc.net, pc.util, m.queue, cp);
        const auto dh = queueing::end_to_end_delay(cls, hi, pc.net, pc.util, m.queue, cp);
        if (dh.delay > cls.sla_delay) g += pc.ctx.latency_dual * (dh.delay - dl.delay) / std::max(1e-9, hi.auth_knob - lo.auth_knob);
    }
    return g;
}

}  // namespace

std::vector<StrategyColumn> price_columns(const PricingContext& pc, const std::vector<StrategyColumn>& active,
                                          double tol) {
    const Model& m = *pc.model;
    const auto& cp = m.crypto;
    const auto& cls = m.classes[pc.cls];
    double incumbent = std::numeric_limits<double>::infinity();
    for (const auto& col : active) incumbent = std::min(incumbent, column_cost(pc, col));

    const auto grid = grid_columns(m, pc.cls);
    int best = -1;
    double best_cost = incumbent;
    for (int k = 0; k < static_cast<int>(grid.size()); ++k) {
        const double c = column_cost(pc, grid[k]);
        if (c < best_cost) {
            best_cost = c;
            best = k;
        }
    }
    if (best < 0 || incumbent - best_cost <= tol * std::max(1.0, std::abs(incumbent))) return {};

    StrategyColumn chosen = grid[best];
    if (chosen.strategy != Strategy::S3_AES_MAC) {
        const double step = cp.a_grid.size() > 1 ? (cp.a_grid.back() - cp.a_grid.front()) / (cp.a_grid.size() - 1) : 8.0;
        double a0 = std::max(0.0, chosen.auth_knob - step);
        double a1 = std::min(cp.a_max, chosen.auth_knob + step);
        double g0 = relaxed_cost_slope(pc, chosen, a0);
        double g1 = relaxed_cost_slope(pc, chosen, a1);
        double a_star = chosen.auth_knob;
        if (g0 < 0.0 && g1 > 0.0) {
            for (int it = 0; it < 8; ++it) {
                if (std::abs(g1 - g0) < 1e-300) break;
                const double a2 = std::clamp(a1 - g1 * (a1 - a0) / (g1 - g0), 0.0, cp.a_max);
                const double g2 = relaxed_cost_slope(pc, chosen, a2);
                a0 = a1;
                g0 = g1;
                a1 = a2;
                g1 = g2;
                a_star = a2;
                if (std::abs(a1 - a0) < 1e-6) break;
            }
        } else if (g1 <= 0.0) {
            a_star = a1;
        } else {
            a_star = a0;
        }
        // Snap to whole tag bits and keep whichever neighbour is cheapest.
        const double l = cp.mac_len_slope * a_star;
        for (double lb : {std::floor(l), std::ceil(l)}) {
            StrategyColumn cand = chosen;
            cand.auth_knob = std::clamp(lb / cp.mac_len_slope, 0.0, cp.a_max);
            if (!crypto::is_compliant(cls, cand, cp)) continue;
            const double c = column_cost(pc, cand);
            if (c < best_cost) {
                best_cost = c;
                chosen = cand;
            }
        }
    }
    for (const auto& col : active)
        if (key_of(col) == key_of(chosen)) return {};
    return {chosen};
}

Scenario scenario_from_env(const sim::EnvSeries& env, double weight) {
    Scenario s;
    s.weight = weight;
    for (const auto& slot : env) {
        s.lambda.push_back(slot.intensity);
        s.attack.push_back(slot.attack);
        s.yields.push_back(slot.yields);
        if (slot.weather_shock || slot.scripted_shock) s.has_shock = true;
    }
    return s;
}

std::vector<Scenario> build_scenarios(const Model& model, int horizon, int count, std::uint64_t seed) {
    if (count < 1) throw Error(ErrorCode::Range, "scenarios", "count must be >= 1");
    std::vector<Scenario> out;
    sim::EnvOptions opt;
    opt.draw_counts = false;
    opt.intensity_noise = model.sim.planner.forecast_noise;
    for (int w = 0; w < count; ++w) {
        auto env = sim::generate_env(model, horizon, sim::mix_seed(seed, sim::Stream::Forecast, 7919ULL + w), opt);
        out.push_back(scenario_from_env(env, 1.0 / count));
    }
    const bool any_shock = std::any_of(out.begin(), out.end(), [](const Scenario& s) { return s.has_shock; });
    if (model.sim.weather.shock_prob > 0.0 && !any_shock && horizon > 0) {
        // Guarantee one stressed future: a weather shock of typical length in scenario 0.
        auto rng = sim::stream_rng(seed, sim::Stream::Forecast, 1ULL << 40);
        const int len = std::max(1, static_cast<int>(std::ceil(model.sim.weather.shock_duration_scale)));
        const int start = static_cast<int>(rng() % static_cast<std::uint64_t>(horizon));
        auto& sc = out.front();
        for (int t = start; t < std::min(horizon, start + len); ++t)
            for (std::size_t e = 0; e < model.links.size(); ++e) {
                const auto& link = model.links[e];
                const double q = link.qber_mean + link.env_sensitivity * model.sim.weather.shock_qber_add;
                const bool outage = sim::link_in_outage(model, static_cast<int>(e), t);
                sc.yields[t][e] = std::min(sc.yields[t][e], sim::link_yield(link, q, 1.0, outage ? 0.0 : 1.0));
            }
        sc.has_shock = true;
    }
    return out;
}

double OfflinePlan::quota_total(int slot) const {
    if (quotas.empty()) return std::numeric_limits<double>::infinity();
    const auto& q = quotas[std::clamp(slot, 0, static_cast<int>(quotas.size()) - 1)];
    return std::accumulate(q.begin(), q.end(), 0.0);
}

std::vector<Bits> node_generation(const Model& model, const std::vector<Bits>& link_yields) {
    std::vector<Bits> g(model.nodes.size(), 0);
    for (std::size_t e = 0; e < link_yields.size(); ++e) {
        const Bits half = link_yields[e] / 2;
        g[model.link_from[e]] += half;
        g[model.link_to[e]] += link_yields[e] - half;
    }
    return g;
}

std::vector<double> node_shares(const Model& model) {
    std::vector<double> w(model.nodes.size());
    double total = 0.0;
    for (std::size_t u = 0; u < w.size(); ++u) total += w[u] = model.nodes[u].traffic_weight;
    for (auto& x : w) x /= total;
    return w;
}

std::vector<double> domain_shares(const Model& model) {
    std::vector<double> s(model.domains.size(), 0.0);
    const auto w = node_shares(model);
    for (std::size_t u = 0; u < w.size(); ++u) s[model.node_domain[u]] += w[u];
    return s;
}

namespace {

queueing::NetSlotState net_state(const Model& m, const std::vector<double>& lambda) {
    queueing::NetSlotState st;
    st.bandwidth_bits_per_slot = m.queue.bandwidth_bits_per_slot;
    st.slot_seconds = m.sim.slot_seconds;
    st.arrivals_per_slot = lambda;
    st.net_propagation = m.queue.net_propagation;
    return st;
}

}  // namespace

OfflinePlan offline_plan(const Model& model, const std::vector<Scenario>& scenarios, int iters,
                         const PlanOptions& options) {
    if (iters < 1) throw Error(ErrorCode::Range, "iters", "must be >= 1");
    if (scenarios.empty()) throw Error(ErrorCode::Range, "scenarios", "need at least one scenario");
    const int T = static_cast<int>(scenarios.front().lambda.size());
    const int nc = static_cast<int>(model.classes.size());
    const int nn = static_cast<int>(model.nodes.size());
    const int nd = static_cast<int>(model.domains.size());
    const double margin = options.reserve_margin >= 0.0 ? options.reserve_margin : model.weights.reserve_margin;
    const auto& cp = model.crypto;
    const auto topo = keynet::Topology::from_model(model);
    const auto wshare = node_shares(model);
    const auto dshare = domain_shares(model);
    std::vector<Bits> transit(nd);
    for (int d = 0; d < nd; ++d) transit[d] = static_cast<Bits>(model.domains[d].transit_cap_per_slot);

    double pool_cap = 0.0, pool0 = 0.0;
    std::vector<double> cap_share(nn);
    for (int u = 0; u < nn; ++u) {
        pool_cap += static_cast<double>(model.nodes[u].pool_cap);
        pool0 += static_cast<double>(model.nodes[u].initial_bits);
    }
    for (int u = 0; u < nn; ++u) cap_share[u] = static_cast<double>(model.nodes[u].pool_cap) / pool_cap;

    // Initial active columns: the base plus a few representatives of each strategy.
    std::vector<std::vector<StrategyColumn>> columns(nc);
    for (int i = 0; i < nc; ++i) {
        columns[i].push_back(base_column(model, i));
        const double amid = cp.a_grid.empty() ? cp.a_max / 2 : cp.a_grid[cp.a_grid.size() / 2];
        const int rtop = cp.r_grid.empty() ? cp.r_max : cp.r_grid.back();
        for (StrategyColumn c : {StrategyColumn{Strategy::S1_OTP_WC, amid, 1}, StrategyColumn{Strategy::S1_OTP_WC, cp.a_max, 1},
                                 StrategyColumn{Strategy::S2_AES_WC, amid, rtop}, StrategyColumn{Strategy::S3_AES_MAC, 0.0, rtop}}) {
            if (!crypto::is_compliant(model.classes[i], c, cp)) continue;
            if (std::find(columns[i].begin(), columns[i].end(), c) == columns[i].end()) columns[i].push_back(c);
        }
    }
    constexpr std::size_t kMaxColumns = 32;

    std::vector<double> pool_dual(T, 0.0);
    std::vector<std::vector<double>> node_dual(T, std::vector<double>(nn, 0.0));
    std::vector<std::vector<double>> mu(T, std::vector<double>(nc, 0.0));
    std::vector<std::vector<StrategyColumn>> util_cols(T);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < nc; ++i) util_cols[t].push_back(columns[i].front());

    OfflinePlan plan;
    plan.horizon = T;
    plan.iterations = iters;
    std::vector<std::vector<double>> dom_cons(T, std::vector<double>(nd, 0.0));
    std::vector<double> planned(T, 0.0);
    std::vector<std::map<ColumnKey, std::pair<double, StrategyColumn>>> votes(nc);

    // Primal outputs are averaged over the second half of the iterations; the last iterate of a
    // subgradient method oscillates.
    const int avg_from = iters / 2;
    const double avg_w = 1.0 / (iters - avg_from);
    for (int n = 0; n < iters; ++n) {
        const bool last = n == iters - 1;
        const bool record = n >= avg_from;
        const double gamma = model.weights.dual_step_schedule.at(n);
        std::vector<double> e_demand(T, 0.0), e_avail(T, 0.0);
        std::vector<std::vector<double>> e_short(T, std::vector<double>(nn, 0.0));
        std::vector<std::vector<double>> e_slack(T, std::vector<double>(nn, 0.0));
        std::vector<std::vector<char>> violated(T, std::vector<char>(nc, 0));

        for (std::size_t w = 0; w < scenarios.size(); ++w) {
            const Scenario& sc = scenarios[w];
            const double wt = sc.weight;
            double pool = pool0;
            for (int t = 0; t < T; ++t) {
                double pbar = pool_dual[t];
                for (int u = 0; u < nn; ++u) pbar += wshare[u] * node_dual[t][u];
                const auto net = net_state(model, sc.lambda[t]);
                const double util = queueing::utilization(model.classes, util_cols[t], net, model.queue, cp);

                std::vector<ClassChain> chains;
                chains.reserve(nc);
                for (int i = 0; i < nc; ++i) {
                    const auto& cls = model.classes[i];
                    std::vector<ColumnEval> opts;
                    opts.reserve(columns[i].size());
                    for (const auto& col : columns[i]) {
                        ColumnEval ev;
                        ev.col = col;
                        ev.weight = sc.lambda[t][i] * crypto::key_cost(cls, col, cp);
                        ev.cost = crypto::expected_class_risk(cls, col, sc.attack[t][i], cp);
                        if (mu[t][i] > 0.0) {
                            const auto d = queueing::end_to_end_delay(cls, col, net, util, model.queue, cp);
                            ev.cost += mu[t][i] * std::max(0.0, d.delay - cls.sla_delay);
                        }
                        opts.push_back(ev);
                    }
                    chains.push_back(build_chain(i, cls.unit_loss, std::move(opts)));
                }

                double gen = 0.0;
                for (Bits g : sc.yields[t]) gen += static_cast<double>(g);
                const double avail = pool + gen;
                const auto lagr = solve_slot_fractional(chains, std::numeric_limits<double>::infinity(), pbar);

                double cons = 0.0;
                std::vector<int> chosen(nc);
                const double base_bits = lagr.base_bits;
                if (base_bits > avail) {
                    std::vector<controller::RelaxOption> relax;
                    for (const auto& c : model.classes) relax.push_back({c.recovery_weight, c.relax_cap});
                    try {
                        controller::recover_feasibility(base_bits - avail, relax);
                    } catch (const Error&) {
                        throw Error(ErrorCode::NoBaseFeasible,
                                    "scenario " + std::to_string(w) + " slot " + std::to_string(t),
                                    "base demand exceeds supply beyond recovery caps");
                    }
                    for (int i = 0; i < nc; ++i) chosen[i] = chains[i].path.front();
                    cons = avail;
                } else {
                    const auto alloc = solve_slot_fractional(chains, avail, pbar);
                    chosen = round_allocation(chains, alloc, avail);
                    for (int i = 0; i < nc; ++i) cons += chains[i].options[chosen[i]].weight;
                }

                if (options.enable_routing) {
                    const auto ngen = node_generation(model, sc.yields[t]);
                    std::vector<Bits> net_dem(nn);
                    for (int u = 0; u < nn; ++u) {
                        const double supply = pool * cap_share[u] + static_cast<double>(ngen[u]);
                        const double need = cons * wshare[u];
                        net_dem[u] = static_cast<Bits>(std::llround(need - supply));
                        e_slack[t][u] += wt * std::max(0.0, supply - need);
                    }
                    const auto flows = keynet::route_keys(topo, sc.yields[t], net_dem, transit);
                    for (int u = 0; u < nn; ++u) e_short[t][u] += wt * static_cast<double>(flows.shortfall[u]);
                }

                for (int i = 0; i < nc; ++i) {
                    const auto& col = chains[i].options[chosen[i]].col;
                    const auto d = queueing::end_to_end_delay(model.classes[i], col, net, util, model.queue, cp);
                    if (d.delay > model.classes[i].sla_delay) violated[t][i] = 1;
                    if (w == 0) util_cols[t][i] = col;
                    if (record) {
                        auto& v = votes[i][key_of(col)];
                        v.first += wt;
                        v.second = col;
                    }
                }
                if (record) {
                    planned[t] += avg_w * wt * cons;
                    for (int d = 0; d < nd; ++d) dom_cons[t][d] += avg_w * wt * cons * dshare[d];
                }
                e_demand[t] += wt * lagr.used_bits;
                e_avail[t] += wt * avail;
                pool = std::clamp(pool + gen - cons, 0.0, pool_cap);
            }
        }

        for (int t = 0; t < T; ++t) {
            pool_dual[t] = std::max(0.0, pool_dual[t] + gamma * (e_demand[t] - e_avail[t]));
            for (int u = 0; u < nn; ++u)
                node_dual[t][u] = std::max(0.0, node_dual[t][u] + gamma * (e_short[t][u] - e_slack[t][u]));
            for (int i = 0; i < nc; ++i)
                if (violated[t][i]) mu[t][i] += model.classes[i].sla_weight;
        }

        if (options.enable_pricing && !last) {
            const int stride = std::max(1, T / 96);
            for (int i = 0; i < nc; ++i) {
                for (int t = 0; t < T && columns[i].size() < kMaxColumns; t += stride) {
                    PricingContext pc;
                    pc.model = &model;
                    pc.cls = i;
                    double pbar = pool_dual[t];
                    for (int u = 0; u < nn; ++u) pbar += wshare[u] * node_dual[t][u];
                    pc.price = pbar;
                    std::vector<double> lam(nc, 0.0);
                    for (const auto& sc : scenarios) {
                        pc.ctx.lambda += sc.weight * sc.lambda[t][i];
                        pc.ctx.attack.attempt_prob += sc.weight * sc.attack[t][i].attempt_prob;
                        pc.ctx.attack.query_budget += sc.weight * sc.attack[t][i].query_budget;
                        pc.ctx.attack.duration_slots += sc.weight * sc.attack[t][i].duration_slots;
                        for (int j = 0; j < nc; ++j) lam[j] += sc.weight * sc.lambda[t][j];
                    }
                    pc.ctx.attack.context_amp = scenarios.front().attack[t][i].context_amp;
                    pc.ctx.latency_dual = mu[t][i];
                    pc.net = net_state(model, lam);
                    pc.util = queueing::utilization(model.classes, util_cols[t], pc.net, model.queue, cp);
                    for (const auto& col : price_columns(pc, columns[i])) columns[i].push_back(col);
                }
            }
        }
    }

    plan.quotas.assign(T, std::vector<double>(nd, 0.0));
    plan.price_path.assign(T, 0.0);
    plan.planned_bits = planned;
    for (int t = 0; t < T; ++t) {
        for (int d = 0; d < nd; ++d) plan.quotas[t][d] = (1.0 + margin) * dom_cons[t][d];
        double pbar = pool_dual[t];
        for (int u = 0; u < nn; ++u) pbar += wshare[u] * node_dual[t][u];
        plan.price_path[t] = pbar;
    }
    plan.warm_start.resize(nc);
    for (int i = 0; i < nc; ++i) {
        double best = -1.0;
        for (const auto& [k, v] : votes[i])
            if (v.first > best) {
                best = v.first;
                plan.warm_start[i] = v.second;
            }
        if (best < 0.0) plan.warm_start[i] = columns[i].front();
    }
    plan.initial_prices.node = T > 0 ? node_dual[0] : std::vector<double>(nn, 0.0);
    plan.initial_prices.domain.assign(nd, 0.0);
    plan.initial_prices.pool = T > 0 ? pool_dual[0] : 0.0;
    plan.columns = columns;
    plan.config_hash = config_hash(model);
    plan.seed = model.seed;
    return plan;
}

namespace {

nlohmann::json column_json(const StrategyColumn& c) {
    return {{"strategy", to_string(c.strategy)}, {"auth_knob", c.auth_knob}, {"refresh", c.refresh}};
}

StrategyColumn column_from(const nlohmann::json& j) {
    StrategyColumn c;
    c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    c.auth_knob = j.at("auth_knob").get<double>();
    c.refresh = j.at("refresh").get<int>();
    return c;
}

}  // namespace

nlohmann::json to_json(const OfflinePlan& plan) {
    nlohmann::json j;
    j["config_hash"] = plan.config_hash;
    j["seed"] = plan.seed;
    j["horizon"] = plan.horizon;
    j["iterations"] = plan.iterations;
    j["quotas"] = plan.quotas;
    j["price_path"] = plan.price_path;
    j["planned_bits"] = plan.planned_bits;
    auto& ws = j["warm_start"] = nlohmann::json::array();
    for (const auto& c : plan.warm_start) ws.push_back(column_json(c));
    auto& cols = j["columns"] = nlohmann::json::array();
    for (const auto& per : plan.columns) {
        auto arr = nlohmann::json::array();
        for (const auto& c : per) arr.push_back(column_json(c));
        cols.push_back(arr);
    }
    j["initial_prices"] = {{"node", plan.initial_prices.node},
                           {"domain", plan.initial_prices.domain},
                           {"pool", plan.initial_prices.pool}};
    return j;
}

OfflinePlan plan_from_json(const nlohmann::json& doc, const Model& model) {
    OfflinePlan p;
    try {
        p.config_hash = doc.at("config_hash").get<std::string>();
        p.seed = doc.at("seed").get<std::uint64_t>();
        p.horizon = doc.at("horizon").get<int>();
        p.iterations = doc.at("iterations").get<int>();
        p.quotas = doc.at("quotas").get<std::vector<std::vector<double>>>();
        p.price_path = doc.at("price_path").get<std::vector<double>>();
        p.planned_bits = doc.at("planned_bits").get<std::vector<double>>();
        for (const auto& c : doc.at("warm_start")) p.warm_start.push_back(column_from(c));
        for (const auto& per : doc.at("columns")) {
            std::vector<StrategyColumn> v;
            for (const auto& c : per) v.push_back(column_from(c));
            p.columns.push_back(std::move(v));
        }
        const auto& ip = doc.at("initial_prices");
        p.initial_prices.node = ip.at("node").get<std::vector<double>>();
        p.initial_prices.domain = ip.at("domain").get<std::vector<double>>();
        p.initial_prices.pool = ip.at("pool").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, "plan", e.what());
    }
    if (p.warm_start.size() != model.classes.size() || p.initial_prices.node.size() != model.nodes.size() ||
        p.initial_prices.domain.size() != model.domains.size())
        throw Error(ErrorCode::Invariant, "plan", "plan does not match the model dimensions");
    return p;
}

}  // namespace qkdvpp::planner

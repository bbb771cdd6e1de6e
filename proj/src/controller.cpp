#include "qkdvpp/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <boost/math/distributions/beta.hpp>

#include "qkdvpp/error.hpp"

namespace qkdvpp::controller {

AttackBelief AttackBelief::from_model(const Model& model) {
    AttackBelief b;
    b.alpha.assign(model.classes.size(), model.weights.prior_alpha);
    b.beta.assign(model.classes.size(), model.weights.prior_beta);
    b.lcb_quantile = model.weights.lcb_quantile;
    return b;
}

double AttackBelief::mean(int cls) const { return alpha[cls] / (alpha[cls] + beta[cls]); }

double AttackBelief::upper(int cls) const {
    const boost::math::beta_distribution<double> dist(alpha[cls], beta[cls]);
    return boost::math::quantile(dist, 1.0 - lcb_quantile);
}

std::vector<double> calibrate_attack(AttackBelief& belief, const std::vector<double>& attempts,
                                     const std::vector<double>& normals) {
    std::vector<double> p(belief.alpha.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i < attempts.size()) belief.alpha[i] += std::max(0.0, attempts[i]);
        if (i < normals.size()) belief.beta[i] += std::max(0.0, normals[i]);
        p[i] = belief.mean(static_cast<int>(i));
    }
    return p;
}

void discount_belief(AttackBelief& belief, double factor, double prior_alpha, double prior_beta) {
    for (std::size_t i = 0; i < belief.alpha.size(); ++i) {
        belief.alpha[i] = prior_alpha + factor * (belief.alpha[i] - prior_alpha);
        belief.beta[i] = prior_beta + factor * (belief.beta[i] - prior_beta);
    }
}

namespace {

double class_delay(const Model& m, int cls, const StrategyColumn& col, const queueing::NetSlotState& net, double util) {
    return queueing::end_to_end_delay(m.classes[cls], col, net, util, m.queue, m.crypto).delay;
}

StrategyColumn normalized(StrategyColumn c, const CryptoParams& cp) {
    if (c.strategy == Strategy::S1_OTP_WC) c.refresh = 1;
    if (c.strategy == Strategy::S3_AES_MAC) c.auth_knob = 0.0;
    c.auth_knob = std::clamp(c.auth_knob, 0.0, cp.a_max);
    c.refresh = std::clamp(c.refresh, 1, cp.r_max);
    return c;
}

template <typename T>
std::pair<T, T> grid_neighbours(const std::vector<T>& grid, T v) {
    T lo = v, hi = v;
    for (T g : grid) {
        if (g < v) lo = g;
        if (g > v) {
            hi = g;
            break;
        }
    }
    return {lo, hi};
}

}  // namespace

double proximal_a_step(const Model& model, int cls, const StrategyColumn& col, const planner::ClassSlotContext& ctx,
                       double price, const queueing::NetSlotState& net, double util, double prev_a) {
    if (col.strategy == Strategy::S3_AES_MAC)
        throw Error(ErrorCode::WrongStrategy, "auth_knob", "S3 has no auth knob");
    const auto& cp = model.crypto;
    const auto& c = model.classes[cls];
    const double a = col.auth_knob;
    double g = ctx.attack.attempt_prob * c.unit_loss * ctx.attack.context_amp * crypto::residual_success_grad_a(col, cp);
    g += price * ctx.lambda * crypto::mac_len_relaxed_slope(a, cp);
    if (ctx.latency_dual > 0.0) {
        const double d0 = class_delay(model, cls, col, net, util);
        if (d0 > c.sla_delay) {
            StrategyColumn up = col;
            up.auth_knob = std::min(cp.a_max, a + 1.0);
            if (up.auth_knob > a) g += ctx.latency_dual * (class_delay(model, cls, up, net, util) - d0) / (up.auth_knob - a);
        }
    }
    g += model.weights.prox_a * (a - prev_a);
    return std::clamp(a - model.weights.prox_step * g, 0.0, cp.a_max);
}

int coordinate_r_search(const Model& model, int cls, const StrategyColumn& col, const planner::ClassSlotContext& ctx,
                        double price, const queueing::NetSlotState& net, double util, int prev_r) {
    if (col.strategy == Strategy::S1_OTP_WC) throw Error(ErrorCode::WrongStrategy, "refresh", "S1 has no refresh");
    planner::PricingContext pc;
    pc.model = &model;
    pc.cls = cls;
    pc.ctx = ctx;
    pc.price = price;
    pc.net = net;
    pc.util = util;
    int best = col.refresh;
    double best_v = std::numeric_limits<double>::infinity();
    for (int r : model.crypto.r_grid) {
        StrategyColumn c = col;
        c.refresh = r;
        const double dr = r - prev_r;
        const double v = planner::column_cost(pc, c) + model.weights.prox_r * dr * dr;
        if (v < best_v) {
            best_v = v;
            best = r;
        }
    }
    return best;
}

double update_dual(double pi, double excess, double gamma) { return std::max(0.0, pi + gamma * excess); }

ShadowPrices update_duals(const ShadowPrices& prices, const DualExcess& excess, double gamma) {
    ShadowPrices out = prices;
    for (std::size_t u = 0; u < out.node.size() && u < excess.node.size(); ++u)
        out.node[u] = update_dual(out.node[u], excess.node[u], gamma);
    for (std::size_t d = 0; d < out.domain.size() && d < excess.domain.size(); ++d)
        out.domain[d] = update_dual(out.domain[d], excess.domain[d], gamma);
    out.pool = update_dual(out.pool, excess.pool, gamma);
    return out;
}

std::vector<StrategyColumn> candidate_columns(const Model& model, int cls, const StrategyColumn& prev,
                                              const planner::ClassSlotContext& ctx, double price,
                                              const queueing::NetSlotState& net, double util, bool allow_degradation) {
    const auto& cp = model.crypto;
    const auto& c = model.classes[cls];
    std::vector<StrategyColumn> out;
    auto add = [&](StrategyColumn col) {
        if (out.size() >= 10) return;
        col = normalized(col, cp);
        if (!allow_degradation && prev.strategy == Strategy::S1_OTP_WC && col.strategy == Strategy::S2_AES_WC) return;
        if (!crypto::is_compliant(c, col, cp)) return;
        if (std::find(out.begin(), out.end(), col) == out.end()) out.push_back(col);
    };
    const StrategyColumn p = normalized(prev, cp);
    const bool has_a = p.strategy != Strategy::S3_AES_MAC;
    const bool has_r = p.strategy != Strategy::S1_OTP_WC;
    const int r_top = cp.r_grid.empty() ? cp.r_max : cp.r_grid.back();

    add(p);
    if (has_a) {
        const auto [lo, hi] = grid_neighbours(cp.a_grid, p.auth_knob);
        add({p.strategy, lo, p.refresh});
        add({p.strategy, hi, p.refresh});
    }
    if (has_r) {
        const auto [lo, hi] = grid_neighbours(cp.r_grid, p.refresh);
        add({p.strategy, p.auth_knob, lo});
        add({p.strategy, p.auth_knob, hi});
    }
    add(planner::base_column(model, cls));
    if (p.strategy == Strategy::S1_OTP_WC) {
        add({Strategy::S2_AES_WC, p.auth_knob, r_top});
    } else if (p.strategy == Strategy::S2_AES_WC) {
        add({Strategy::S1_OTP_WC, p.auth_knob, 1});
    } else {
        double a_min = cp.a_grid.empty() ? 0.0 : cp.a_grid.front();
        for (double a : cp.a_grid)
            if (crypto::mac_len(a, cp) >= c.min_tag_bits) {
                a_min = a;
                break;
            }
        add({Strategy::S2_AES_WC, a_min, p.refresh});
        // Under long attack pulses S2 can be worse than S3, so S1 has to be reachable in one move.
        add({Strategy::S1_OTP_WC, a_min, 1});
    }
    if (!c.forbid_s3 && p.strategy != Strategy::S3_AES_MAC) add({Strategy::S3_AES_MAC, 0.0, has_r ? p.refresh : r_top});
    if (has_a) {
        const double a = proximal_a_step(model, cls, p, ctx, price, net, util, p.auth_knob);
        add({p.strategy, std::round(a * cp.mac_len_slope) / cp.mac_len_slope, p.refresh});
    }
    if (has_r) add({p.strategy, p.auth_knob, coordinate_r_search(model, cls, p, ctx, price, net, util, p.refresh)});
    return out;
}

namespace {

struct Scored {
    planner::ColumnEval eval;
    double rho = 0.0;
    double delay = 0.0;
};

double switching_cost(const Model& m, const StrategyColumn& from, const StrategyColumn& to) {
    const auto& w = m.weights;
    double s = w.smooth_a * std::abs(to.auth_knob - from.auth_knob) + w.smooth_r * std::abs(to.refresh - from.refresh);
    if (to.strategy != from.strategy) s += w.smooth_x;
    return w.smooth_weight * s;
}

std::vector<Scored> score_candidates(const Model& m, int cls, const std::vector<StrategyColumn>& cols,
                                     const SlotInputs& in, const StrategyColumn& prev, bool qosec = true) {
    const auto& c = m.classes[cls];
    const auto& ctx = in.ctx[cls];
    std::vector<Scored> all;
    for (const auto& col : cols) {
        Scored s;
        s.eval.col = col;
        s.eval.weight = ctx.lambda * crypto::key_cost(c, col, m.crypto);
        s.rho = crypto::residual_success(c, col, ctx.attack, m.crypto);
        s.delay = class_delay(m, cls, col, in.net, in.util);
        all.push_back(s);
    }
    // QoSec cap on the forecast context; keep the safest columns if nothing passes.
    if (c.qosec_cap && qosec) {
        std::vector<Scored> ok;
        for (const auto& s : all)
            if (s.rho <= *c.qosec_cap) ok.push_back(s);
        if (ok.empty()) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : all) best = std::min(best, s.rho);
            for (const auto& s : all)
                if (s.rho == best) ok.push_back(s);
        }
        all.swap(ok);
    }
    const double sigma = cls < static_cast<int>(in.delay_sigma.size()) ? in.delay_sigma[cls] : 0.0;
    const double mult = cls < static_cast<int>(m.weights.delay_margin_mult.size()) ? m.weights.delay_margin_mult[cls] : 0.0;
    std::vector<Scored> ok;
    for (const auto& s : all)
        if (s.delay + mult * sigma <= c.sla_delay) ok.push_back(s);
    // Nobody meets the latency bound: leave the choice to the SLA hinge rather than chasing a few bits of
    // overhead with a far more key-hungry column.
    if (ok.empty() || !qosec) ok = all;
    for (auto& s : ok) {
        s.eval.cost = ctx.attack.attempt_prob * s.rho * c.unit_loss * ctx.attack.context_amp +
                      c.sla_weight * std::max(0.0, s.delay - c.sla_delay) + switching_cost(m, prev, s.eval.col);
    }
    return ok;
}

}  // namespace

SlotDecision decide_slot(const Model& model, const SlotInputs& in, const std::vector<StrategyColumn>& prev,
                         const DecideOptions& options) {
    const int nc = static_cast<int>(model.classes.size());
    SlotDecision dec;
    dec.threshold = in.threshold;
    dec.zeta.assign(nc, 0.0);

    auto build = [&](bool allow, bool qosec) {
        std::vector<std::vector<Scored>> scored(nc);
        for (int i = 0; i < nc; ++i) {
            const auto cols = candidate_columns(model, i, prev[i], in.ctx[i], in.threshold, in.net, in.util, allow);
            scored[i] = score_candidates(model, i, cols, in, prev[i], qosec);
        }
        return scored;
    };
    auto scored = build(options.allow_degradation, true);
    auto chains_of = [&](const std::vector<std::vector<Scored>>& sc) {
        std::vector<planner::ClassChain> chains;
        for (int i = 0; i < nc; ++i) {
            std::vector<planner::ColumnEval> ev;
            for (const auto& s : sc[i]) ev.push_back(s.eval);
            chains.push_back(planner::build_chain(i, model.classes[i].unit_loss, std::move(ev)));
        }
        return chains;
    };
    auto chains = chains_of(scored);
    double base_bits = 0.0;
    for (const auto& ch : chains) base_bits += ch.base_weight();
    auto rebuild = [&](bool qosec) {
        scored = build(true, qosec);
        chains = chains_of(scored);
        base_bits = 0.0;
        for (const auto& ch : chains) base_bits += ch.base_weight();
    };
    // Under scarcity degradation switching comes back first, then low-priority demand is relaxed. Only when
    // the relaxation caps cannot cover the gap does the QoSec cap give way to the hard constraints.
    if (base_bits > in.available_bits && !options.allow_degradation) rebuild(true);
    std::optional<Relaxation> relaxed;
    std::vector<RelaxOption> relax;
    for (const auto& c : model.classes) relax.push_back({c.recovery_weight, c.relax_cap});
    if (base_bits > in.available_bits) {
        try {
            relaxed = recover_feasibility(base_bits - in.available_bits, relax);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RecoveryFailed) throw;
            rebuild(false);
            if (base_bits > in.available_bits) relaxed = recover_feasibility(base_bits - in.available_bits, relax);
        }
    }
    dec.candidates.resize(nc);
    for (int i = 0; i < nc; ++i)
        for (const auto& s : scored[i]) dec.candidates[i].push_back(s.eval);

    std::vector<int> chosen(nc);
    const auto lagr = planner::solve_slot_fractional(chains, std::numeric_limits<double>::infinity(), in.threshold,
                                                     options.arbitration);
    dec.lagrangian_bits = lagr.used_bits;

    if (relaxed) {
        const auto& r = *relaxed;
        dec.zeta = r.zeta;
        dec.relax_cost = r.cost;
        dec.recovered = true;
        for (int i = 0; i < nc; ++i) chosen[i] = chains[i].path.front();
        dec.fraction.assign(nc, 0.0);
    } else {
        double budget = std::clamp(in.budget_bits, base_bits, in.available_bits);
        // Key that would spill over the pool caps has no other use, so it is spent at a zero price.
        double threshold = in.threshold;
        const double spill = std::min(in.spill_bits, in.available_bits);
        if (spill > lagr.used_bits && spill > base_bits) {
            threshold = 0.0;
            budget = spill;
        }
        const bool explore = options.explore_fraction > 0.0 && in.explore_attack.size() == static_cast<std::size_t>(nc);
        const double b1 = explore ? base_bits + (1.0 - options.explore_fraction) * (budget - base_bits) : budget;
        auto alloc = planner::solve_slot_fractional(chains, b1, threshold, options.arbitration);
        chosen = planner::round_allocation(chains, alloc, b1);
        if (explore) {
            // Second pass: remaining budget goes to upgrades priced with the upper-quantile attack rate.
            std::vector<planner::ClassChain> chains2;
            std::vector<std::vector<int>> index(nc);
            for (int i = 0; i < nc; ++i) {
                const auto& c = model.classes[i];
                const double w0 = chains[i].options[chosen[i]].weight;
                std::vector<planner::ColumnEval> ev;
                for (int k = 0; k < static_cast<int>(scored[i].size()); ++k) {
                    const auto& s = scored[i][k];
                    if (s.eval.weight < w0) continue;
                    planner::ColumnEval e = s.eval;
                    const auto& ax = in.explore_attack[i];
                    e.cost = ax.attempt_prob * crypto::residual_success(c, e.col, ax, model.crypto) * c.unit_loss *
                                 ax.context_amp +
                             c.sla_weight * std::max(0.0, s.delay - c.sla_delay) + switching_cost(model, prev[i], e.col);
                    ev.push_back(e);
                    index[i].push_back(k);
                }
                chains2.push_back(planner::build_chain(i, c.unit_loss, std::move(ev)));
            }
            double b2 = 0.0;
            for (const auto& ch : chains2) b2 += ch.base_weight();
            double used1 = 0.0;
            for (int i = 0; i < nc; ++i) used1 += chains[i].options[chosen[i]].weight;
            b2 += std::max(0.0, budget - used1);
            alloc = planner::solve_slot_fractional(chains2, b2, threshold, options.arbitration);
            const auto c2 = planner::round_allocation(chains2, alloc, b2);
            for (int i = 0; i < nc; ++i) chosen[i] = index[i][c2[i]];
        }
        dec.fraction = alloc.fraction;
        dec.split = alloc.split;
    }

    dec.cols.resize(nc);
    dec.bits.resize(nc);
    dec.risk.resize(nc);
    dec.delay.resize(nc);
    for (int i = 0; i < nc; ++i) {
        const auto& s = scored[i][chosen[i]];
        const auto& ctx = in.ctx[i];
        dec.cols[i] = s.eval.col;
        dec.bits[i] = s.eval.weight;
        dec.risk[i] = ctx.attack.attempt_prob * s.rho * model.classes[i].unit_loss * ctx.attack.context_amp;
        dec.delay[i] = s.delay;
        dec.planned_bits += s.eval.weight;
    }
    return dec;
}

Controller::Controller(const Model& model, const planner::OfflinePlan* plan, ControllerOptions options)
    : model_(model), plan_(plan), options_(options) {
    const int nc = static_cast<int>(model.classes.size());
    const int nn = static_cast<int>(model.nodes.size());
    const int nd = static_cast<int>(model.domains.size());
    belief_ = AttackBelief::from_model(model);
    for (int i = 0; i < nc; ++i) base_.push_back(planner::base_column(model, i));
    if (plan && static_cast<int>(plan->warm_start.size()) == nc) {
        prev_ = plan->warm_start;
        prices_ = plan->initial_prices;
    } else {
        prev_ = base_;
    }
    prices_.node.resize(nn, 0.0);
    prices_.domain.resize(nd, 0.0);
    node_share_ = planner::node_shares(model);
    domain_share_ = planner::domain_shares(model);
    nu_ = std::max(model.weights.terminal_key_value, qkdvpp::aggregate_price(model, prices_));
    ewma_decay_ = std::exp2(-1.0 / std::max(1e-9, model.weights.forecast_half_life));

    std::vector<Bits> mean_yield(model.links.size());
    for (std::size_t e = 0; e < model.links.size(); ++e)
        mean_yield[e] = sim::link_yield(model.links[e], model.links[e].qber_mean, 1.0, 1.0);
    const auto g = planner::node_generation(model, mean_yield);
    last_gen_.assign(g.begin(), g.end());
    last_arrivals_.resize(nc);
    last_attack_.resize(nc);
    prev_tau_.assign(nc, model.sim.attack.base_duration);
    for (int i = 0; i < nc; ++i) {
        last_arrivals_[i] = sim::traffic_intensity(model, i, 0);
        last_attack_[i].query_budget = std::exp2(model.sim.attack.base_queries_log2);
        last_attack_[i].duration_slots = model.sim.attack.base_duration;
    }
    delay_var_.assign(nc, 0.0);
    gen_var_.assign(nn, 0.0);
}

double Controller::aggregate_price() const { return qkdvpp::aggregate_price(model_, prices_); }

double Controller::forecast_lambda(int cls, int slot) const {
    if (options_.clairvoyant && slot < static_cast<int>(options_.clairvoyant->size()))
        return static_cast<double>((*options_.clairvoyant)[slot].arrivals[cls]);
    if (options_.use_forecast || !have_history_) return sim::traffic_intensity(model_, cls, slot);
    return last_arrivals_[cls];
}

double Controller::forecast_node_gen(int node, int slot) const {
    if (options_.clairvoyant && slot < static_cast<int>(options_.clairvoyant->size())) {
        const auto& y = (*options_.clairvoyant)[slot].yields;
        const int u0 = node;
        double g = 0.0;
        for (std::size_t e = 0; e < y.size(); ++e) {
            const Bits half = y[e] / 2;
            if (model_.link_from[e] == u0) g += static_cast<double>(half);
            if (model_.link_to[e] == u0) g += static_cast<double>(y[e] - half);
        }
        return g;
    }
    return last_gen_[node];
}

crypto::AttackContext Controller::forecast_attack(int cls, int slot, double p) const {
    if (options_.clairvoyant && slot < static_cast<int>(options_.clairvoyant->size()))
        return (*options_.clairvoyant)[slot].attack[cls];
    crypto::AttackContext c;
    c.attempt_prob = p;
    c.query_budget = last_attack_[cls].query_budget;
    const double tau = last_attack_[cls].duration_slots;
    c.duration_slots = std::max(model_.sim.attack.base_duration, tau + (tau - prev_tau_[cls]));
    c.context_amp = sim::context_amp(model_, cls, slot);
    return c;
}

// Plan quota when there is one, the configured per-slot quota otherwise.
double Controller::quota_of(int slot, int domain) const {
    if (!plan_ || plan_->quotas.empty()) return model_.domains[domain].alloc_quota_per_slot;
    double q = plan_->quotas[std::clamp(slot, 0, static_cast<int>(plan_->quotas.size()) - 1)][domain];
    if (!options_.hold_reserve) q /= 1.0 + std::max(0.0, model_.weights.reserve_margin);
    return q;
}

SlotDecision Controller::decide(int slot, const std::vector<Bits>& pools) {
    const int nc = static_cast<int>(model_.classes.size());
    const int nn = static_cast<int>(model_.nodes.size());
    const bool oracle = options_.clairvoyant != nullptr;

    SlotInputs in;
    in.ctx.resize(nc);
    std::vector<double> lam(nc);
    for (int i = 0; i < nc; ++i) {
        lam[i] = forecast_lambda(i, slot);
        in.ctx[i].lambda = lam[i];
        in.ctx[i].attack = forecast_attack(i, slot, belief_.mean(i));
        in.ctx[i].latency_dual = model_.classes[i].sla_weight;
    }
    const double explore = oracle ? 0.0 : model_.weights.explore_fraction;
    if (explore > 0.0) {
        in.explore_attack.resize(nc);
        for (int i = 0; i < nc; ++i) in.explore_attack[i] = forecast_attack(i, slot, belief_.upper(i));
    }
    in.net.bandwidth_bits_per_slot = model_.queue.bandwidth_bits_per_slot;
    in.net.slot_seconds = model_.sim.slot_seconds;
    in.net.arrivals_per_slot = lam;
    in.net.net_propagation = model_.queue.net_propagation;
    in.util = queueing::utilization(model_.classes, prev_, in.net, model_.queue, model_.crypto);
    in.delay_sigma.resize(nc);
    for (int i = 0; i < nc; ++i) in.delay_sigma[i] = oracle ? 0.0 : std::sqrt(delay_var_[i]);

    // Demand splits across nodes by share, so draining node u takes over_u / share_u bits in total.
    const auto nshare = planner::node_shares(model_);
    double pool = 0.0, gen = 0.0, margin = 0.0, spill = 0.0;
    for (int u = 0; u < nn; ++u) {
        const double g = forecast_node_gen(u, slot);
        pool += static_cast<double>(pools[u]);
        gen += g;
        const double over = static_cast<double>(pools[u]) + g - static_cast<double>(model_.nodes[u].pool_cap);
        if (over > 0.0 && nshare[u] > 0.0) spill = std::max(spill, over / nshare[u]);
        if (!oracle) margin += model_.nodes[u].key_margin_mult * std::sqrt(gen_var_[u]);
    }
    // Keep enough in the pools to cover base demand over the lookahead when generation falls short.
    double reserve = 0.0;
    for (int h = 1; h <= model_.sim.lookahead; ++h) {
        double base = 0.0;
        for (int i = 0; i < nc; ++i) {
            const double l = options_.use_forecast ? sim::traffic_intensity(model_, i, slot + h) : lam[i];
            base += l * crypto::key_cost(model_.classes[i], base_[i], model_.crypto);
        }
        reserve += base - gen;
    }
    reserve = options_.hold_reserve ? std::max(0.0, reserve) : 0.0;
    in.available_bits = pool + gen;
    in.spill_bits = spill;
    in.budget_bits = in.available_bits - margin - reserve;
    const double pbar = aggregate_price();
    in.threshold = std::max(pbar, nu_);

    DecideOptions opt;
    opt.allow_degradation = options_.allow_degradation;
    opt.arbitration = options_.arbitration;
    opt.explore_fraction = explore;
    return decide_slot(model_, in, prev_, opt);
}

void Controller::feedback(int slot, const SlotDecision& decision, const SlotFeedback& fb) {
    const int nc = static_cast<int>(model_.classes.size());
    const int nn = static_cast<int>(model_.nodes.size());
    const int nd = static_cast<int>(model_.domains.size());
    const double k = ewma_decay_;

    DualExcess ex;
    ex.pool = decision.lagrangian_bits - fb.available_bits;
    ex.node.resize(nn);
    for (int u = 0; u < nn; ++u) ex.node[u] = fb.shortfall[u] - fb.slack[u];
    ex.domain.resize(nd);
    for (int d = 0; d < nd; ++d) {
        ex.domain[d] = fb.domain_consumption[d] - quota_of(slot, d);
    }
    prices_ = update_duals(prices_, ex, model_.weights.online_dual_step);
    nu_ = std::max(model_.weights.terminal_key_value, k * nu_ + (1.0 - k) * aggregate_price());

    discount_belief(belief_, model_.weights.belief_discount, model_.weights.prior_alpha, model_.weights.prior_beta);
    std::vector<double> att(nc), quiet(nc);
    for (int i = 0; i < nc; ++i) {
        att[i] = fb.attempted[i] ? 1.0 : 0.0;
        quiet[i] = 1.0 - att[i];
    }
    calibrate_attack(belief_, att, quiet);

    for (int i = 0; i < nc; ++i) {
        const double e = fb.delay[i] - decision.delay[i];
        delay_var_[i] = k * delay_var_[i] + (1.0 - k) * e * e;
        last_arrivals_[i] = static_cast<double>(fb.arrivals[i]);
        prev_tau_[i] = last_attack_[i].duration_slots;
        last_attack_[i] = fb.attack[i];
    }
    for (int u = 0; u < nn; ++u) {
        const double e = static_cast<double>(fb.node_gen[u]) - last_gen_[u];
        gen_var_[u] = k * gen_var_[u] + (1.0 - k) * e * e;
        last_gen_[u] = static_cast<double>(fb.node_gen[u]);
    }
    prev_ = decision.cols;
    have_history_ = true;
}

}  // namespace qkdvpp::controller

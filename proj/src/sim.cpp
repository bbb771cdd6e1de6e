#include "qkdvpp/sim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "qkdvpp/controller.hpp"
#include "qkdvpp/crypto.hpp"
#include "qkdvpp/error.hpp"
#include "qkdvpp/keynet.hpp"
#include "qkdvpp/queueing.hpp"

namespace qkdvpp::sim {

namespace {

bool is_critical(ClassId id) { return id == ClassId::M1 || id == ClassId::M4; }

StrategyColumn fallback_column() { return {Strategy::S3_AES_MAC, 0.0, 1}; }

StrategyColumn static_column(const Model& model, int cls) {
    const auto& sp = model.sim.static_policy;
    StrategyColumn col;
    switch (model.classes[cls].id) {
        case ClassId::M1:
        case ClassId::M4: col = {Strategy::S1_OTP_WC, sp.auth_knob, 1}; break;
        case ClassId::M2:
        case ClassId::M3: col = {Strategy::S2_AES_WC, sp.auth_knob, sp.refresh}; break;
        case ClassId::M5: col = {Strategy::S3_AES_MAC, 0.0, sp.refresh}; break;
    }
    if (!crypto::is_compliant(model.classes[cls], col, model.crypto)) return planner::base_column(model, cls);
    return col;
}

crypto::AttackContext nominal_attack(const Model& model, int cls, int slot) {
    crypto::AttackContext c;
    c.attempt_prob = model.sim.attack.baseline[cls];
    c.query_budget = std::exp2(model.sim.attack.base_queries_log2);
    c.duration_slots = model.sim.attack.base_duration;
    c.context_amp = context_amp(model, cls, slot);
    return c;
}

// Fixed priority: each class in turn takes its strongest column that still leaves room for the base
// columns of the classes after it.
std::vector<StrategyColumn> greedy_columns(const Model& model, int slot, double available) {
    const int nc = static_cast<int>(model.classes.size());
    std::vector<int> order(nc);
    for (int i = 0; i < nc; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return model.classes[a].recovery_weight > model.classes[b].recovery_weight;
    });
    std::vector<double> lam(nc), base_bits(nc);
    std::vector<StrategyColumn> cols(nc);
    for (int i = 0; i < nc; ++i) {
        lam[i] = traffic_intensity(model, i, slot);
        cols[i] = planner::base_column(model, i);
        base_bits[i] = lam[i] * crypto::key_cost(model.classes[i], cols[i], model.crypto);
    }
    double remaining = available;
    for (int k = 0; k < nc; ++k) {
        const int i = order[k];
        double reserve = 0.0;
        for (int j = k + 1; j < nc; ++j) reserve += base_bits[order[j]];
        const auto ctx = nominal_attack(model, i, slot);
        double best_rho = 2.0, best_bits = 0.0;
        StrategyColumn best = cols[i];
        bool found = false;
        for (const auto& col : planner::grid_columns(model, i)) {
            const double bits = lam[i] * crypto::key_cost(model.classes[i], col, model.crypto);
            if (bits > remaining - reserve) continue;
            const double rho = crypto::residual_success(model.classes[i], col, ctx, model.crypto);
            if (!found || rho < best_rho || (rho == best_rho && bits < best_bits)) {
                found = true;
                best = col;
                best_rho = rho;
                best_bits = bits;
            }
        }
        cols[i] = best;
        remaining -= found ? best_bits : base_bits[i];
    }
    return cols;
}

planner::Scenario realized_scenario(const EnvSeries& env) {
    planner::Scenario sc;
    for (const auto& s : env) {
        std::vector<double> lam(s.arrivals.size());
        for (std::size_t i = 0; i < lam.size(); ++i) lam[i] = static_cast<double>(s.arrivals[i]);
        sc.lambda.push_back(std::move(lam));
        sc.attack.push_back(s.attack);
        sc.yields.push_back(s.yields);
        if (s.weather_shock || s.scripted_shock) sc.has_shock = true;
    }
    return sc;
}

nlohmann::json column_json(const StrategyColumn& c) {
    return nlohmann::json::array({to_string(c.strategy), c.auth_knob, c.refresh});
}

}  // namespace

std::string to_string(Policy p) {
    switch (p) {
        case Policy::Proposed: return "proposed";
        case Policy::Static: return "static";
        case Policy::Greedy: return "greedy";
        case Policy::NoQkd: return "no_qkd";
        case Policy::Oracle: return "oracle";
    }
    return "?";
}

Policy policy_from_string(const std::string& s) {
    for (Policy p : {Policy::Proposed, Policy::Static, Policy::Greedy, Policy::NoQkd, Policy::Oracle})
        if (to_string(p) == s) return p;
    throw Error(ErrorCode::Usage, "policy", "unknown policy '" + s + "'");
}

std::string Ablation::label() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += "+";
        out += name;
    };
    add(no_forecast, "no_forecast");
    add(zero_reserve, "zero_reserve");
    add(no_degradation, "no_degradation");
    add(round_robin, "round_robin");
    return out.empty() ? "full" : out;
}

EpisodeTrace run_episode(const Model& model, const planner::OfflinePlan* plan, std::uint64_t seed,
                         const EpisodeOptions& options) {
    const int nc = static_cast<int>(model.classes.size());
    const int nn = static_cast<int>(model.nodes.size());
    const int nl = static_cast<int>(model.links.size());
    const int nd = static_cast<int>(model.domains.size());
    const int horizon = options.horizon < 0 ? model.sim.horizon : options.horizon;
    const Policy policy = options.policy;
    if (policy == Policy::Proposed && plan == nullptr)
        throw Error(ErrorCode::Usage, "plan", "the proposed policy needs an offline plan");

    EpisodeTrace tr;
    tr.policy = policy;
    tr.ablation = options.ablation.label();
    tr.seed = seed;
    tr.config_hash = config_hash(model);
    tr.horizon = horizon;
    tr.yield_scale = options.yield_scale;
    tr.classes.resize(nc);

    EnvOptions eo;
    eo.yield_scale = options.yield_scale;
    const EnvSeries env = generate_env(model, horizon, seed, eo);

    const bool uses_controller = policy == Policy::Proposed || policy == Policy::Oracle;
    planner::OfflinePlan oracle_plan;
    const planner::OfflinePlan* ctl_plan = plan;
    if (policy == Policy::Oracle && horizon > 0) {
        oracle_plan = planner::offline_plan(model, {realized_scenario(env)}, model.sim.oracle_sweeps);
        ctl_plan = &oracle_plan;
    }
    controller::ControllerOptions co;
    co.use_forecast = !options.ablation.no_forecast;
    co.allow_degradation = !options.ablation.no_degradation;
    co.arbitration = options.ablation.round_robin ? planner::Arbitration::RoundRobin : planner::Arbitration::MsvOrder;
    co.hold_reserve = !options.ablation.zero_reserve;
    if (policy == Policy::Oracle) co.clairvoyant = &env;
    std::unique_ptr<controller::Controller> ctl;
    if (uses_controller) ctl = std::make_unique<controller::Controller>(model, ctl_plan, co);

    const auto topo = keynet::Topology::from_model(model);
    const auto nshare = planner::node_shares(model);
    std::vector<Bits> domain_caps(nd);
    for (int d = 0; d < nd; ++d) domain_caps[d] = static_cast<Bits>(std::floor(model.domains[d].transit_cap_per_slot));
    std::vector<keynet::KeyPool> pools(nn);
    Bits cap_total = 0;
    for (int u = 0; u < nn; ++u) {
        pools[u].node = u;
        pools[u].cap = model.nodes[u].pool_cap;
        const Bits init = std::min(model.nodes[u].initial_bits, model.nodes[u].pool_cap);
        if (init > 0) pools[u].buckets.push_back({0, init});
        tr.totals.initial += init;
        cap_total += pools[u].cap;
    }
    std::vector<keynet::CarryRegister> carry(nn);
    std::vector<StrategyColumn> static_cols(nc);
    for (int i = 0; i < nc; ++i) static_cols[i] = static_column(model, i);
    std::vector<StrategyColumn> noqkd_cols(nc, fallback_column());
    std::vector<double> last_gen(nn, 0.0);
    {
        std::vector<Bits> mean_yield(nl);
        for (int e = 0; e < nl; ++e)
            mean_yield[e] = link_yield(model.links[e], model.links[e].qber_mean, 1.0, options.yield_scale);
        const auto g = planner::node_generation(model, mean_yield);
        for (int u = 0; u < nn; ++u) last_gen[u] = static_cast<double>(g[u]);
    }

    double occupancy_sum = 0.0;
    for (int t = 0; t < horizon; ++t) {
        const EnvSlot& es = env[t];
        SlotRecord rec;
        rec.slot = t;
        rec.arrivals = es.arrivals;

        // Expiry happens before anything is drawn this slot.
        Bits pool_sum = 0;
        for (int u = 0; u < nn; ++u) {
            const Bits x = keynet::expire_keys(pools[u], t, model.nodes[u].ttl_slots);
            rec.expired += x;
            pool_sum += pools[u].total();
        }
        std::vector<Bits> pool_levels(nn);
        for (int u = 0; u < nn; ++u) pool_levels[u] = pools[u].total();

        // Decision.
        controller::SlotDecision dec;
        std::vector<double> relax(nc, 0.0);
        const auto t0 = std::chrono::steady_clock::now();
        if (uses_controller) {
            try {
                dec = ctl->decide(t, pool_levels);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::RecoveryFailed) throw;
                throw Error(ErrorCode::RecoveryFailed, "slot " + std::to_string(t), e.what());
            }
            for (int i = 0; i < nc; ++i)
                if (!dec.zeta.empty() && dec.zeta[i] > 0.0)
                    relax[i] = dec.bits[i] > 0.0 ? std::clamp(dec.zeta[i] / dec.bits[i], 0.0, 1.0) : 1.0;
        } else if (policy == Policy::Static) {
            dec.cols = static_cols;
        } else if (policy == Policy::Greedy) {
            double gen = 0.0;
            for (double g : last_gen) gen += g;
            dec.cols = greedy_columns(model, t, static_cast<double>(pool_sum) + gen);
        } else {
            dec.cols = noqkd_cols;
        }
        tr.decision_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        rec.cols = dec.cols;
        rec.recovered = dec.recovered;
        rec.zeta = dec.zeta.empty() ? std::vector<double>(nc, 0.0) : dec.zeta;

        // Key demand on the pools, split across nodes by traffic weight.
        double demand = 0.0;
        if (policy != Policy::NoQkd)
            for (int i = 0; i < nc; ++i)
                demand += static_cast<double>(es.arrivals[i]) * (1.0 - relax[i]) *
                          crypto::key_cost(model.classes[i], dec.cols[i], model.crypto);
        std::vector<Bits> need(nn);
        for (int u = 0; u < nn; ++u) {
            need[u] = carry[u].draw(demand * nshare[u]);
            rec.demand += need[u];
        }

        const auto gen = planner::node_generation(model, es.yields);
        std::vector<Bits> net(nn);
        for (int u = 0; u < nn; ++u) net[u] = need[u] - (pool_levels[u] + gen[u]);
        const auto flows = keynet::route_keys(topo, es.yields, net, domain_caps);

        std::vector<double> domain_cons(nd, 0.0);
        Bits routed_in = 0, routed_out = 0;
        for (int u = 0; u < nn; ++u) {
            const auto r = keynet::step_pool(pools[u], t, gen[u], flows.node_in[u], flows.node_out[u], need[u], 0);
            rec.generated += gen[u];
            rec.consumed += r.consumed;
            rec.overflow += r.overflow;
            rec.deficit += need[u] - r.consumed;
            routed_in += flows.node_in[u];
            routed_out += r.routed_out;
            domain_cons[model.node_domain[u]] += static_cast<double>(r.consumed);
        }
        if (routed_in != routed_out)
            throw Error(ErrorCode::Invariant, "slot " + std::to_string(t), "routed key bits not fully served");
        for (int e = 0; e < nl; ++e) {
            const Bits f = flows.forward[e] + flows.backward[e];
            rec.total_flow += f;
            if (model.link_domain[e] < 0) rec.cross_flow += f;
        }
        for (int u = 0; u < nn; ++u) rec.pool_total += pools[u].total();
        occupancy_sum += cap_total > 0 ? static_cast<double>(rec.pool_total) / static_cast<double>(cap_total) : 0.0;

        // Unserved demand falls back to S3 (or is held, for classes that forbid it) and counts as a timeout.
        const double unserved =
            rec.demand > 0 ? static_cast<double>(rec.deficit) / static_cast<double>(rec.demand) : 0.0;

        queueing::NetSlotState ns;
        ns.bandwidth_bits_per_slot = model.queue.bandwidth_bits_per_slot;
        ns.slot_seconds = model.sim.slot_seconds;
        ns.net_propagation = model.queue.net_propagation;
        ns.arrivals_per_slot.resize(nc);
        for (int i = 0; i < nc; ++i) ns.arrivals_per_slot[i] = static_cast<double>(es.arrivals[i]);
        double util = 0.0;
        const auto delays = queueing::slot_delays(model.classes, dec.cols, ns, model.queue, model.crypto, &util);

        rec.served.resize(nc);
        rec.risk.resize(nc);
        rec.delay.resize(nc);
        rec.sla_rate.resize(nc);
        rec.attempts.resize(nc);
        rec.successes.resize(nc);
        double strong = 0.0, arrivals_total = 0.0;
        controller::SlotFeedback fb;
        fb.attempted.resize(nc);
        for (int i = 0; i < nc; ++i) {
            const auto& cls = model.classes[i];
            const auto& col = dec.cols[i];
            const auto& ctx = es.attack[i];
            const double arr = static_cast<double>(es.arrivals[i]);
            const double timeout = (1.0 - relax[i]) * unserved;
            const double served = 1.0 - relax[i] - timeout;
            const double rho = crypto::residual_success(cls, col, ctx, model.crypto);
            // Held messages of classes that forbid S3 go out later under the chosen column.
            const double rho_fb =
                cls.forbid_s3 ? rho : crypto::residual_success(cls, fallback_column(), ctx, model.crypto);
            const double rho_eff = served * rho + (1.0 - served) * rho_fb;
            rec.served[i] = served;
            rec.risk[i] = ctx.attempt_prob * ctx.context_amp * cls.unit_loss * rho_eff;

            const auto& d = delays[i];
            rec.delay[i] = d.delay;
            const double fixed = d.delay - d.wait;
            const double exceed = d.saturated ? 1.0 : queueing::delay_exceedance(d, util, fixed, cls.sla_delay);
            rec.sla_rate[i] = std::clamp(timeout + (1.0 - timeout) * exceed, 0.0, 1.0);

            auto& ct = tr.classes[i];
            if (d.saturated) {
                ct.delay_hist.add(d.delay, arr);
            } else {
                ct.delay_hist.add_survival(fixed, arr * (1.0 - timeout), [&](double x) {
                    return x < fixed ? 1.0 : queueing::delay_exceedance(d, util, fixed, x);
                });
                ct.delay_hist.add(10.0 * cls.sla_delay, arr * timeout);
            }

            const bool attempted = es.outcome_u_attempt[i] < ctx.attempt_prob;
            const bool success = attempted && es.outcome_u_success[i] < rho_eff;
            rec.attempts[i] = attempted ? 1 : 0;
            rec.successes[i] = success ? 1 : 0;
            fb.attempted[i] = attempted ? 1 : 0;

            ct.messages += arr;
            ct.sla_violations += arr * rec.sla_rate[i];
            ct.risk += rec.risk[i];
            ct.attempts += rec.attempts[i];
            ct.successes += rec.successes[i];
            if (cls.qosec_cap) {
                ct.qosec_slots += 1.0;
                if (rho <= *cls.qosec_cap) ct.qosec_ok_slots += 1.0;
                else rec.qosec_ok = false;
            }
            if (col.strategy == Strategy::S3_AES_MAC) ct.s3_slots += 1;
            else ct.min_tag_bits = std::min(ct.min_tag_bits, static_cast<double>(crypto::mac_len(col.auth_knob, model.crypto)));

            arrivals_total += arr;
            if (col.strategy != Strategy::S3_AES_MAC) strong += arr;
        }
        rec.strong_share = arrivals_total > 0.0 ? strong / arrivals_total : 0.0;

        if (uses_controller) {
            fb.arrivals = es.arrivals;
            fb.node_gen = gen;
            fb.attack = es.attack;
            fb.delay = rec.delay;
            fb.shortfall.resize(nn);
            fb.slack.resize(nn);
            for (int u = 0; u < nn; ++u) {
                fb.shortfall[u] = static_cast<double>(flows.shortfall.empty() ? 0 : flows.shortfall[u]);
                fb.slack[u] = static_cast<double>(std::max<Bits>(0, -net[u]));
            }
            fb.domain_consumption = domain_cons;
            fb.available_bits = static_cast<double>(pool_sum);
            for (Bits g : gen) fb.available_bits += static_cast<double>(g);
            ctl->feedback(t, dec, fb);
            rec.price = ctl->aggregate_price();
            double np = 0.0;
            for (double p : ctl->prices().node) np += p;
            rec.node_price = nn > 0 ? np / nn : 0.0;
        }
        for (int u = 0; u < nn; ++u) last_gen[u] = static_cast<double>(gen[u]);

        auto& tot = tr.totals;
        tot.generated += rec.generated;
        tot.consumed += rec.consumed;
        tot.expired += rec.expired;
        tot.overflow += rec.overflow;
        tot.demand += rec.demand;
        tot.deficit += rec.deficit;
        tot.cross_flow += rec.cross_flow;
        tot.total_flow += rec.total_flow;
        for (double r : rec.risk) tot.risk += r;
        for (int s : rec.successes) tot.successes += s;
        if (rec.recovered) ++tot.recoveries;
        if (options.record_slots) tr.slots.push_back(std::move(rec));
    }
    for (int u = 0; u < nn; ++u) tr.totals.final_bits += pools[u].total();
    tr.totals.pool_occupancy = horizon > 0 ? occupancy_sum / horizon : 0.0;
    return tr;
}

std::vector<std::pair<std::string, double>> episode_metrics(const Model& model, const EpisodeTrace& tr) {
    std::vector<std::pair<std::string, double>> m;
    const auto& tot = tr.totals;
    m.emplace_back("cum_risk", tot.risk);
    m.emplace_back("successes", tot.successes);
    m.emplace_back("key_bits", static_cast<double>(tot.consumed));
    const double supply = static_cast<double>(tot.initial + tot.generated);
    m.emplace_back("expiry_share", supply > 0.0 ? static_cast<double>(tot.expired) / supply : 0.0);
    m.emplace_back("deficit_share", tot.demand > 0 ? static_cast<double>(tot.deficit) / tot.demand : 0.0);
    m.emplace_back("cross_domain_share",
                   tot.total_flow > 0 ? static_cast<double>(tot.cross_flow) / static_cast<double>(tot.total_flow) : 0.0);
    m.emplace_back("pool_occupancy", tot.pool_occupancy);
    m.emplace_back("recoveries", tot.recoveries);

    double qs = 0.0, qok = 0.0, crit_good = 0.0, crit_slots = 0.0, crit_s3 = 0.0, tag_margin = 1e300;
    for (std::size_t i = 0; i < model.classes.size(); ++i) {
        const auto& c = tr.classes[i];
        qs = std::max(qs, c.qosec_slots);
        if (is_critical(model.classes[i].id)) {
            crit_good += c.messages - c.sla_violations - c.successes;
            crit_slots += tr.horizon;
            crit_s3 += c.s3_slots;
            if (c.min_tag_bits < 1e300) tag_margin = std::min(tag_margin, c.min_tag_bits - model.classes[i].min_tag_bits);
        }
    }
    // Slot-level QoSec compliance needs the per-slot records; fall back to the class minimum otherwise.
    if (!tr.slots.empty()) {
        for (const auto& r : tr.slots) qok += r.qosec_ok ? 1.0 : 0.0;
        m.emplace_back("qosec_compliance", tr.slots.empty() ? 1.0 : qok / tr.slots.size());
    } else {
        double worst = 1.0;
        for (const auto& c : tr.classes)
            if (c.qosec_slots > 0.0) worst = std::min(worst, c.qosec_ok_slots / c.qosec_slots);
        m.emplace_back("qosec_compliance", worst);
    }
    m.emplace_back("key_efficiency", tot.consumed > 0 ? std::max(0.0, crit_good) / tot.consumed : 0.0);
    m.emplace_back("critical_s3_share", crit_slots > 0.0 ? crit_s3 / crit_slots : 0.0);
    m.emplace_back("critical_tag_margin", tag_margin < 1e300 ? tag_margin : 0.0);

    for (std::size_t i = 0; i < model.classes.size(); ++i) {
        const auto& c = tr.classes[i];
        const std::string n = to_string(model.classes[i].id);
        m.emplace_back("sla_violation_" + n, c.messages > 0.0 ? c.sla_violations / c.messages : 0.0);
        m.emplace_back("p50_" + n, c.delay_hist.quantile(0.50));
        m.emplace_back("p95_" + n, c.delay_hist.quantile(0.95));
        m.emplace_back("p99_" + n, c.delay_hist.quantile(0.99));
        m.emplace_back("qosec_" + n, c.qosec_slots > 0.0 ? c.qosec_ok_slots / c.qosec_slots : 1.0);
        m.emplace_back("risk_" + n, c.risk);
    }
    double strong = 0.0;
    for (const auto& r : tr.slots) strong += r.strong_share;
    m.emplace_back("strong_share", tr.slots.empty() ? 0.0 : strong / tr.slots.size());
    return m;
}

nlohmann::json slot_to_json(const SlotRecord& r) {
    nlohmann::json j;
    j["t"] = r.slot;
    j["arrivals"] = r.arrivals;
    auto cols = nlohmann::json::array();
    for (const auto& c : r.cols) cols.push_back(column_json(c));
    j["cols"] = cols;
    j["served"] = r.served;
    j["risk"] = r.risk;
    j["delay"] = r.delay;
    j["sla_rate"] = r.sla_rate;
    j["attempts"] = r.attempts;
    j["successes"] = r.successes;
    j["zeta"] = r.zeta;
    j["demand"] = r.demand;
    j["generated"] = r.generated;
    j["consumed"] = r.consumed;
    j["expired"] = r.expired;
    j["overflow"] = r.overflow;
    j["deficit"] = r.deficit;
    j["pool"] = r.pool_total;
    j["cross_flow"] = r.cross_flow;
    j["total_flow"] = r.total_flow;
    j["price"] = r.price;
    j["node_price"] = r.node_price;
    j["strong_share"] = r.strong_share;
    j["qosec_ok"] = r.qosec_ok;
    j["recovered"] = r.recovered;
    return j;
}

void write_trace(std::ostream& out, const EpisodeTrace& tr) {
    nlohmann::json h;
    h["type"] = "header";
    h["policy"] = to_string(tr.policy);
    h["ablation"] = tr.ablation;
    h["seed"] = tr.seed;
    h["config_hash"] = tr.config_hash;
    h["horizon"] = tr.horizon;
    h["yield_scale"] = tr.yield_scale;
    out << h.dump() << '\n';
    for (const auto& r : tr.slots) out << slot_to_json(r).dump() << '\n';
    if (tr.horizon == 0) return;
    const auto& t = tr.totals;
    nlohmann::json f;
    f["type"] = "totals";
    f["initial"] = t.initial;
    f["generated"] = t.generated;
    f["consumed"] = t.consumed;
    f["expired"] = t.expired;
    f["overflow"] = t.overflow;
    f["final"] = t.final_bits;
    f["conserved"] = t.conserved();
    f["risk"] = t.risk;
    f["successes"] = t.successes;
    out << f.dump() << '\n';
}

double RunSummary::mean(const std::string& metric) const { return interval(metric).mean; }

const metrics::Interval& RunSummary::interval(const std::string& metric) const {
    for (const auto& m : metrics)
        if (m.name == metric) return m.ci;
    throw Error(ErrorCode::Usage, metric, "unknown metric");
}

std::vector<RunSummary> run_monte_carlo(const Model& model, const planner::OfflinePlan* plan,
                                        const std::vector<RunSpec>& specs, const std::vector<std::uint64_t>& seeds,
                                        int parallelism, const TraceSink& sink) {
    if (seeds.empty()) throw Error(ErrorCode::Usage, "seeds", "at least one seed is required");
    const std::size_t ns = seeds.size();
    const std::size_t jobs = specs.size() * ns;

    struct Slot {
        bool ready = false;
        EpisodeTrace trace;
        std::exception_ptr error;
    };
    std::vector<Slot> results(jobs);
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs || stop.load()) return;
            Slot s;
            try {
                s.trace = run_episode(model, plan, seeds[k % ns], specs[k / ns].options);
            } catch (...) {
                s.error = std::current_exception();
            }
            std::lock_guard lock(mu);
            results[k] = std::move(s);
            results[k].ready = true;
            cv.notify_all();
        }
    };
    const int threads = std::clamp<int>(parallelism, 1, static_cast<int>(std::max<std::size_t>(1, jobs)));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);

    std::vector<RunSummary> out(specs.size());
    std::exception_ptr failure;
    for (std::size_t k = 0; k < jobs && !failure; ++k) {
        EpisodeTrace tr;
        {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return results[k].ready; });
            if (results[k].error) {
                failure = results[k].error;
                stop = true;
                break;
            }
            tr = std::move(results[k].trace);
            results[k] = Slot{};
        }
        auto& rs = out[k / ns];
        if (k % ns == 0) {
            rs.name = specs[k / ns].name;
            rs.options = specs[k / ns].options;
        }
        rs.seeds.push_back(tr.seed);
        const auto em = episode_metrics(model, tr);
        if (rs.samples.empty()) {
            rs.samples.resize(em.size());
            rs.metrics.resize(em.size());
            for (std::size_t m = 0; m < em.size(); ++m) rs.metrics[m].name = em[m].first;
        }
        for (std::size_t m = 0; m < em.size(); ++m) rs.samples[m].push_back(em[m].second);
        const std::size_t h = tr.slots.size();
        if (rs.mean_price.size() < h) {
            rs.mean_risk.resize(h, 0.0);
            rs.mean_price.resize(h, 0.0);
            rs.mean_strong_share.resize(h, 0.0);
            rs.mean_node_price.resize(h, 0.0);
            rs.peak.resize(h, 0);
        }
        for (std::size_t t = 0; t < h; ++t) {
            for (double r : tr.slots[t].risk) rs.mean_risk[t] += r / ns;
            rs.mean_price[t] += tr.slots[t].price / ns;
            rs.mean_strong_share[t] += tr.slots[t].strong_share / ns;
            rs.mean_node_price[t] += tr.slots[t].node_price / ns;
            rs.peak[t] = in_any_peak(model, static_cast<int>(t)) ? 1 : 0;
        }
        rs.decision_seconds.insert(rs.decision_seconds.end(), tr.decision_seconds.begin(), tr.decision_seconds.end());
        if (sink) sink(specs[k / ns], tr);
    }
    stop = true;
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    for (auto& rs : out)
        for (std::size_t m = 0; m < rs.metrics.size(); ++m) rs.metrics[m].ci = metrics::t_interval(rs.samples[m]);
    return out;
}

planner::OfflinePlan default_plan(const Model& model, int horizon, std::uint64_t seed) {
    const auto scenarios = planner::build_scenarios(model, horizon, model.sim.planner.scenarios, seed);
    return planner::offline_plan(model, scenarios, model.sim.planner.iters);
}

}  // namespace qkdvpp::sim

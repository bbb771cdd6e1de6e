#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qkdvpp/error.hpp"
#include "qkdvpp/planner.hpp"
#include "oracles.hpp"

using namespace qkdvpp;
using namespace qkdvpp::planner;
using namespace qkdvpp::testing;

namespace {

ColumnEval opt(double w, double c) { return {StrategyColumn{}, w, c}; }

// One class, two nodes, one link; all randomness switched off.
nlohmann::json toy_json() {
    auto j = default_config();
    j["classes"] = nlohmann::json::array({j["classes"][0]});
    j["nodes"] = nlohmann::json::array({j["nodes"][0], j["nodes"][1]});
    for (auto& n : j["nodes"]) {
        n["domain"] = "d0";
        n["pool_cap"] = 1;
        n["initial_bits"] = 0;
    }
    auto link = j["links"][0];
    link["from"] = "n0";
    link["to"] = "n1";
    link["yield_max"] = 1000000.0;
    link["env_sensitivity"] = 0.0;
    j["links"] = nlohmann::json::array({link});
    j["domains"] = nlohmann::json::array({j["domains"][0]});
    auto& sim = j["sim"];
    sim["traffic"]["diurnal_amp"] = 0.0;
    sim["traffic"]["peaks"] = nlohmann::json::array();
    sim["attack"]["baseline"] = {{"M1", 0.05}};
    sim["attack"]["drift_amp"] = 0.0;
    sim["attack"]["pulse_rate"] = 0.0;
    sim["weather"]["noise_sd"] = 0.0;
    sim["weather"]["shock_prob"] = 0.0;
    sim["weather"]["outages"] = nlohmann::json::array();
    sim["planner"]["forecast_noise"] = 0.0;
    j["weights"]["delay_margin_mult"] = {{"M1", 1.0}};
    return j;
}

}  // namespace

TEST_SUITE("planner") {

TEST_CASE("knapsack worked example") {
    std::vector<ClassChain> chains{
        build_chain(0, 1.0, {opt(0, 10), opt(100, 5)}),
        build_chain(1, 1.0, {opt(0, 10), opt(200, 6)}),
        build_chain(2, 1.0, {opt(0, 10), opt(300, 7)}),
    };
    CHECK(chains[0].steps[0].density == doctest::Approx(0.05));
    CHECK(chains[1].steps[0].density == doctest::Approx(0.02));
    CHECK(chains[2].steps[0].density == doctest::Approx(0.01));

    auto a = solve_slot_fractional(chains, 250);
    CHECK(a.level == std::vector<int>{1, 0, 0});
    CHECK(a.split == 1);
    CHECK(a.fraction[1] == doctest::Approx(0.75));
    CHECK(a.fraction[2] == 0.0);
    CHECK(a.threshold == doctest::Approx(0.02));
    CHECK(a.objective == doctest::Approx(30 - 5 - 3));

    auto slack = solve_slot_fractional(chains, 600);
    CHECK(slack.level == std::vector<int>{1, 1, 1});
    CHECK(slack.threshold == 0.0);
    CHECK(slack.split == -1);

    auto empty = solve_slot_fractional(chains, 0);
    CHECK(empty.level == std::vector<int>{0, 0, 0});
    CHECK(empty.threshold == doctest::Approx(0.05));

    auto r = round_allocation(chains, a, 250);
    CHECK(r == std::vector<int>{1, 0, 0});  // 0.75 rounds up, then repair undoes the 0.02 step
}

TEST_CASE("infeasible base budget") {
    std::vector<ClassChain> chains{build_chain(0, 1.0, {opt(50, 1), opt(80, 0.5)})};
    CHECK_THROWS_AS(solve_slot_fractional(chains, 49), Error);
    try {
        solve_slot_fractional(chains, 10);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InfeasibleBase);
    }
}

TEST_CASE("chain drops dominated options and ties go to the higher loss class") {
    auto ch = build_chain(0, 1.0, {opt(10, 5), opt(0, 10), opt(5, 9), opt(20, 0), opt(15, 6)});
    // Hull from (0,10): (10,5) density 0.5, (20,0) density 0.5 (colinear, kept as its own step).
    REQUIRE(ch.steps.size() == 2);
    CHECK(ch.options[ch.path[1]].weight == 10);
    CHECK(ch.options[ch.path[2]].weight == 20);
    for (std::size_t k = 1; k < ch.steps.size(); ++k) CHECK(ch.steps[k].density <= ch.steps[k - 1].density);

    std::vector<ClassChain> tie{build_chain(0, 1.0, {opt(0, 2), opt(10, 1)}), build_chain(1, 5.0, {opt(0, 2), opt(10, 1)})};
    auto a = solve_slot_fractional(tie, 10);
    CHECK(a.level == std::vector<int>{0, 1});
}

TEST_CASE("greedy matches the exact LP and the threshold separates steps") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 400; ++trial) {
        const int nc = 1 + static_cast<int>(rng() % 6);
        std::vector<std::vector<std::pair<long, long>>> items(nc);
        std::vector<ClassChain> chains;
        long base = 0, top = 0;
        for (int c = 0; c < nc; ++c) {
            const int no = 1 + static_cast<int>(rng() % 5);
            std::vector<ColumnEval> opts;
            long minw = 1000, maxw = 0;
            for (int k = 0; k < no; ++k) {
                const long w = static_cast<long>(rng() % 100), cost = static_cast<long>(rng() % 1000);
                items[c].emplace_back(w, cost);
                opts.push_back(opt(static_cast<double>(w), static_cast<double>(cost)));
                minw = std::min(minw, w);
                maxw = std::max(maxw, w);
            }
            base += minw;
            top += maxw;
            chains.push_back(build_chain(c, 1.0 + static_cast<double>(rng() % 3), opts));
        }
        const long budget = base + static_cast<long>(rng() % static_cast<unsigned long>(top - base + 1));
        const auto a = solve_slot_fractional(chains, static_cast<double>(budget));
        const Frac exact = lp_value(items, budget);
        const double oracle = static_cast<double>(exact.num) / static_cast<double>(exact.den);
        CHECK(a.objective == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(a.used_bits <= budget + 1e-9);

        double max_density = 0.0;
        for (int c = 0; c < nc; ++c)
            for (int k = 0; k < static_cast<int>(chains[c].steps.size()); ++k) {
                const double d = chains[c].steps[k].density;
                max_density = std::max(max_density, d);
                if (k < a.level[c]) CHECK(d >= a.threshold - 1e-12);
                else if (!(c == a.split && k == a.level[c])) CHECK(d <= a.threshold + 1e-12);
            }
        CHECK(a.threshold >= 0.0);
        CHECK(a.threshold <= max_density + 1e-12);

        const auto chosen = round_allocation(chains, a, static_cast<double>(budget));
        double used = 0.0;
        for (int c = 0; c < nc; ++c) used += chains[c].options[chosen[c]].weight;
        CHECK(used <= budget + 1e-9);
    }
}

TEST_CASE("round robin arbitration stays within budget") {
    std::vector<ClassChain> chains{
        build_chain(0, 1.0, {opt(0, 10), opt(100, 5), opt(200, 4)}),
        build_chain(1, 1.0, {opt(0, 10), opt(100, 9)}),
    };
    auto a = solve_slot_fractional(chains, 200, 0.0, Arbitration::RoundRobin);
    CHECK(a.level == std::vector<int>{1, 1});
    auto b = solve_slot_fractional(chains, 150, 0.0, Arbitration::RoundRobin);
    CHECK(b.level == std::vector<int>{1, 0});
    CHECK(b.split == 1);
    CHECK(b.fraction[1] == doctest::Approx(0.5));
}

TEST_CASE("scenarios are deterministic and degenerate without noise") {
    auto model = validate_config(toy_json());
    auto s1 = build_scenarios(*model, 40, 3, 5);
    auto s2 = build_scenarios(*model, 40, 3, 5);
    REQUIRE(s1.size() == 3);
    for (int w = 0; w < 3; ++w) {
        CHECK(s1[w].lambda == s2[w].lambda);
        CHECK(s1[w].yields == s2[w].yields);
        CHECK(s1[w].weight == doctest::Approx(1.0 / 3));
    }
    auto one = build_scenarios(*model, 10, 1, 5);
    REQUIRE(one.size() == 1);
    const Bits mean_yield = sim::link_yield(model->links[0], model->links[0].qber_mean, 1.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        CHECK(one[0].lambda[t][0] == doctest::Approx(sim::traffic_intensity(*model, 0, t)));
        CHECK(one[0].yields[t][0] == mean_yield);
    }
    CHECK_THROWS_AS(build_scenarios(*model, 10, 0, 5), Error);

    auto full = default_config();
    auto big = validate_config(full);
    auto a = build_scenarios(*big, 60, 8, 42);
    auto b = build_scenarios(*big, 60, 8, 42);
    for (int w = 0; w < 8; ++w) {
        CHECK(a[w].lambda == b[w].lambda);
        CHECK(a[w].yields == b[w].yields);
    }
}

TEST_CASE("shock probability one puts a shock in every scenario") {
    auto j = toy_json();
    j["sim"]["weather"]["shock_prob"] = 1.0;
    j["sim"]["weather"]["shock_qber_add"] = 0.05;
    j["links"][0]["env_sensitivity"] = 1.0;
    auto model = validate_config(j);
    const Bits mean_yield = sim::link_yield(model->links[0], model->links[0].qber_mean, 1.0, 1.0);
    for (const auto& sc : build_scenarios(*model, 20, 4, 9)) {
        CHECK(sc.has_shock);
        bool low = false;
        for (const auto& y : sc.yields) low = low || y[0] < mean_yield;
        CHECK(low);
    }
}

TEST_CASE("pricing") {
    auto model = validate_config(toy_json());
    PricingContext pc;
    pc.model = model.get();
    pc.cls = 0;
    pc.ctx.lambda = 3000;
    pc.ctx.attack = {0.05, std::exp2(20), 1.0, 0.5};
    pc.net.bandwidth_bits_per_slot = model->queue.bandwidth_bits_per_slot;
    pc.net.slot_seconds = model->sim.slot_seconds;
    pc.net.arrivals_per_slot = {3000};
    const std::vector<StrategyColumn> active{base_column(*model, 0)};

    SUBCASE("huge price prices nothing in") {
        pc.price = 1e3;
        CHECK(price_columns(pc, active).empty());
    }
    SUBCASE("zero price picks the strongest column") {
        auto j = toy_json();
        j["crypto"]["impl_epsilon"] = 0.0;
        auto m0 = validate_config(j);
        pc.model = m0.get();
        pc.price = 0.0;
        auto cols = price_columns(pc, {base_column(*m0, 0)});
        REQUIRE(cols.size() == 1);
        double best = 1.0;
        for (const auto& c : grid_columns(*m0, 0))
            best = std::min(best, crypto::residual_success(m0->classes[0], c, pc.ctx.attack, m0->crypto));
        CHECK(crypto::residual_success(m0->classes[0], cols[0], pc.ctx.attack, m0->crypto) == best);
    }
    SUBCASE("mid-range price matches a fine grid within one cell") {
        const double benefit = 0.05 * 20000 * 0.5;
        pc.price = benefit * std::log(2.0) * std::exp2(-40) / 3000.0;
        auto cols = price_columns(pc, active);
        REQUIRE(cols.size() == 1);
        double fine_best = std::numeric_limits<double>::infinity(), fine_a = 0;
        Strategy fine_s = Strategy::S1_OTP_WC;
        for (int r : model->crypto.r_grid)
            for (Strategy s : {Strategy::S1_OTP_WC, Strategy::S2_AES_WC})
                for (int k = 0; k <= 12800; ++k) {
                    StrategyColumn c{s, k * 0.01, s == Strategy::S1_OTP_WC ? 1 : r};
                    if (!crypto::is_compliant(model->classes[0], c, model->crypto)) continue;
                    const double v = column_cost(pc, c);
                    if (v < fine_best) {
                        fine_best = v;
                        fine_a = c.auth_knob;
                        fine_s = s;
                    }
                }
        CHECK(cols[0].strategy == fine_s);
        CHECK(std::abs(cols[0].auth_knob - fine_a) <= 8.0);
        CHECK(column_cost(pc, cols[0]) <= fine_best * (1 + 1e-6));
    }
}

TEST_CASE("single-class toy dual tracks the knapsack threshold") {
    auto j = toy_json();
    j["weights"]["dual_step_schedule"] = {{"initial", 1e-15}, {"decay", 0.6}};
    auto model = validate_config(j);
    auto scen = build_scenarios(*model, 2, 1, 3);
    PlanOptions po;
    po.enable_pricing = false;
    po.enable_routing = false;
    auto plan = offline_plan(*model, scen, 400, po);

    // Exact LP value function V(B) over the plan's columns; threshold = -dV/dB at the slot budget.
    const auto& cls = model->classes[0];
    const double lam = scen[0].lambda[0][0];
    std::vector<std::pair<double, double>> pts;
    for (const auto& c : plan.columns[0])
        pts.emplace_back(lam * crypto::key_cost(cls, c, model->crypto),
                         crypto::expected_class_risk(cls, c, scen[0].attack[0][0], model->crypto));
    auto value = [&](double b) {
        double v = std::numeric_limits<double>::infinity();
        for (const auto& [w1, c1] : pts) {
            if (w1 <= b) v = std::min(v, c1);
            for (const auto& [w2, c2] : pts)
                if (w1 <= b && b <= w2 && w2 > w1) v = std::min(v, c1 + (c2 - c1) * (b - w1) / (w2 - w1));
        }
        return v;
    };
    const double budget = static_cast<double>(scen[0].yields[0][0]);
    const double h = 1.0;
    const double oracle = (value(budget - h) - value(budget + h)) / (2 * h);
    REQUIRE(oracle > 0.0);
    CHECK(plan.initial_prices.pool >= 0.0);
    CHECK(std::abs(plan.initial_prices.pool - oracle) <= 0.1 * oracle);
}

TEST_CASE("uncongested plan has zero duals and margin quotas") {
    auto j = toy_json();
    j["links"][0]["yield_max"] = 1e8;
    auto model = validate_config(j);
    auto scen = build_scenarios(*model, 3, 1, 1);
    auto plan = offline_plan(*model, scen, 5);
    const double full = scen[0].lambda[0][0] * (512 + 128);
    for (int t = 0; t < 3; ++t) {
        CHECK(plan.price_path[t] == 0.0);
        CHECK(plan.quotas[t][0] == doctest::Approx(1.15 * full));
    }
    CHECK(plan.warm_start[0] == StrategyColumn{Strategy::S1_OTP_WC, 128, 1});
}

TEST_CASE("two scenarios with disjoint shocks") {
    auto model = validate_config(toy_json());
    const double lam = 1000;
    const double base = lam * (96 + 64 + 256.0 / 32), full = lam * (512 + 128);
    auto make = [&](int shock_slot) {
        Scenario s;
        s.weight = 0.5;
        for (int t = 0; t < 2; ++t) {
            s.lambda.push_back({lam});
            s.attack.push_back({crypto::AttackContext{0.05, std::exp2(20), 1.0, 1.0}});
            s.yields.push_back({static_cast<Bits>(t == shock_slot ? base : 10 * full)});
        }
        s.has_shock = true;
        return s;
    };
    PlanOptions po;
    po.enable_routing = false;
    po.enable_pricing = false;
    auto plan = offline_plan(*model, {make(0), make(1)}, 1, po);
    for (int t = 0; t < 2; ++t) {
        CHECK(plan.quotas[t][0] == doctest::Approx(1.15 * 0.5 * (base + full)));
        CHECK(plan.quotas[t][0] >= 0.5 * full);
    }
}

TEST_CASE("no feasible base throws with coordinates") {
    auto j = toy_json();
    j["classes"][0]["relax_cap"] = 0.0;
    auto model = validate_config(j);
    auto scen = build_scenarios(*model, 2, 1, 1);
    for (auto& y : scen[0].yields) y[0] = 10;
    try {
        offline_plan(*model, scen, 1);
        FAIL("expected NoBaseFeasible");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoBaseFeasible);
        CHECK(e.subject() == "scenario 0 slot 0");
    }
}

TEST_CASE("plan json round trip") {
    auto model = validate_config(toy_json());
    auto plan = offline_plan(*model, build_scenarios(*model, 4, 2, 1), 2);
    auto back = plan_from_json(to_json(plan), *model);
    CHECK(back.quotas == plan.quotas);
    CHECK(back.warm_start == plan.warm_start);
    CHECK(back.price_path == plan.price_path);
    CHECK(back.config_hash == config_hash(*model));
    auto full = validate_config(default_config());
    CHECK_THROWS_AS(plan_from_json(to_json(plan), *full), Error);
}

}

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "qkdvpp/crypto.hpp"
#include "qkdvpp/env.hpp"
#include "qkdvpp/error.hpp"
#include "qkdvpp/metrics.hpp"
#include "qkdvpp/sim.hpp"

using namespace qkdvpp;
using namespace qkdvpp::sim;

namespace {

Model default_model() { return *validate_config(default_config()); }

std::string trace_text(const EpisodeTrace& tr) {
    std::ostringstream os;
    write_trace(os, tr);
    return os.str();
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

double metric(const std::vector<std::pair<std::string, double>>& ms, const std::string& name) {
    for (const auto& [k, v] : ms)
        if (k == name) return v;
    FAIL("missing metric " << name);
    return 0.0;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("zero intensity draws no arrivals") {
    Model m = default_model();
    m.classes[0].lambda_base = 0.0;
    for (int t = 0; t < 200; ++t) CHECK(gen_traffic(m, t, 7)[0] == 0);
}

TEST_CASE("traffic draws repeat for a fixed seed") {
    const Model m = default_model();
    for (int t = 0; t < 50; ++t) CHECK(gen_traffic(m, t, 11) == gen_traffic(m, t, 11));
}

TEST_CASE("poisson sample mean sits inside the CLT band") {
    Model m = default_model();
    m.sim.traffic.diurnal_amp = 0.0;
    m.sim.traffic.peaks.clear();
    m.classes[0].lambda_base = 3.0;
    const int n = 10000;
    double sum = 0.0;
    for (int t = 0; t < n; ++t) sum += static_cast<double>(gen_traffic(m, t, 5)[0]);
    const double mean = sum / n;
    CHECK(std::abs(mean - 3.0) <= 3.0 * std::sqrt(3.0 / n));
}

TEST_CASE("link yield examples") {
    LinkSpec l;
    l.yield_max = 200000;
    l.qber_threshold = 0.11;
    CHECK(link_yield(l, 0.02, 1.0, 0.0) == 0);
    CHECK(link_yield(l, 0.11, 1.0, 1.0) == 0);
    CHECK(link_yield(l, 0.055, 1.0, 1.0) == 100000);
}

TEST_CASE("link yield does not increase with QBER") {
    LinkSpec l;
    l.yield_max = 173000;
    l.qber_threshold = 0.1;
    Bits prev = link_yield(l, 0.0, 1.0, 1.0);
    for (int k = 1; k <= 300; ++k) {
        const Bits y = link_yield(l, 0.0005 * k, 1.0, 1.0);
        CHECK(y <= prev);
        prev = y;
    }
}

TEST_CASE("outage windows zero the link") {
    const Model m = default_model();
    const auto env = generate_env(m, 300, 3);
    for (int t = 0; t < 300; ++t)
        for (std::size_t e = 0; e < m.links.size(); ++e)
            if (link_in_outage(m, static_cast<int>(e), t)) {
                CHECK(env[t].yields[e] == 0);
                CHECK(env[t].regime[e] == Regime::Outage);
            }
}

TEST_CASE("no baseline and no pulses means no attack") {
    Model m = default_model();
    for (auto& b : m.sim.attack.baseline) b = 0.0;
    m.sim.attack.pulse_rate = 0.0;
    const auto env = generate_env(m, 200, 9);
    for (const auto& s : env)
        for (const auto& a : s.attack) CHECK(a.attempt_prob == 0.0);
}

TEST_CASE("attempt probability rises inside a pulse") {
    Model m = default_model();
    m.sim.attack.drift_amp = 0.0;
    m.sim.attack.pulse_rate = 0.02;
    const auto env = generate_env(m, 1440, 21);
    int checked = 0;
    for (int t = 1; t < 1440; ++t) {
        if (!env[t].pulse_active || env[t - 1].pulse_active) continue;
        for (std::size_t i = 0; i < m.classes.size(); ++i)
            CHECK(env[t].attack[i].attempt_prob > env[t - 1].attack[i].attempt_prob);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("stacked pulses clamp at one") {
    Model m = default_model();
    m.sim.attack.pulse_rate = 1.0;
    m.sim.attack.pulse_magnitude = 2.0;
    const auto env = generate_env(m, 50, 4);
    for (int t = 5; t < 50; ++t)
        for (const auto& a : env[t].attack) CHECK(a.attempt_prob == 1.0);
}

TEST_CASE("switching the attack generator leaves traffic and weather alone") {
    const Model a = default_model();
    Model b = a;
    b.sim.attack.pulse_rate = 0.3;
    b.sim.attack.pulse_magnitude = 0.9;
    const auto ea = generate_env(a, 300, 17);
    const auto eb = generate_env(b, 300, 17);
    for (int t = 0; t < 300; ++t) {
        CHECK(ea[t].arrivals == eb[t].arrivals);
        CHECK(ea[t].yields == eb[t].yields);
    }
}

TEST_CASE("zero horizon gives a header-only trace") {
    const Model m = default_model();
    EpisodeOptions o;
    o.policy = Policy::Static;
    o.horizon = 0;
    const auto tr = run_episode(m, nullptr, 1, o);
    CHECK(tr.slots.empty());
    const auto text = trace_text(tr);
    CHECK(count_lines(text) == 1);
    const auto head = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(head.at("config_hash") == config_hash(m));
    CHECK(head.at("seed") == 1);
}

TEST_CASE("proposed needs a plan") {
    const Model m = default_model();
    EpisodeOptions o;
    o.horizon = 10;
    for (auto p : {Policy::Proposed}) {
        o.policy = p;
        try {
            run_episode(m, nullptr, 1, o);
            FAIL("expected a usage error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Usage);
        }
    }
}

TEST_CASE("policy names round-trip") {
    for (auto p : {Policy::Proposed, Policy::Static, Policy::Greedy, Policy::NoQkd, Policy::Oracle})
        CHECK(policy_from_string(to_string(p)) == p);
    CHECK_THROWS_AS(policy_from_string("random"), Error);
}

TEST_CASE("episodes conserve key, repeat byte for byte and respect compliance") {
    const Model m = default_model();
    const int horizon = 180;
    const auto plan = default_plan(m, horizon, m.seed);
    for (auto p : {Policy::Proposed, Policy::Static, Policy::Greedy, Policy::NoQkd, Policy::Oracle}) {
        CAPTURE(to_string(p));
        EpisodeOptions o;
        o.policy = p;
        o.horizon = horizon;
        const auto a = run_episode(m, &plan, 42, o);
        const auto b = run_episode(m, &plan, 42, o);
        CHECK(a.totals.conserved());
        CHECK(static_cast<int>(a.slots.size()) == horizon);
        CHECK(a.config_hash == config_hash(m));
        CHECK(trace_text(a) == trace_text(b));
        const auto text = trace_text(a);
        CHECK(count_lines(text) == horizon + 2);

        for (const auto& s : a.slots)
            for (std::size_t i = 0; i < m.classes.size(); ++i) {
                const auto& c = m.classes[i];
                CHECK(s.sla_rate[i] >= 0.0);
                CHECK(s.sla_rate[i] <= 1.0);
                if (p == Policy::NoQkd) continue;
                if (c.forbid_s3) CHECK(s.cols[i].strategy != Strategy::S3_AES_MAC);
                if (s.cols[i].strategy != Strategy::S3_AES_MAC)
                    CHECK(crypto::mac_len(s.cols[i].auth_knob, m.crypto) >= c.min_tag_bits);
            }

        const auto ms = episode_metrics(m, a);
        for (const auto& c : m.classes) {
            const std::string id = to_string(c.id);
            CHECK(metric(ms, "p50_" + id) <= metric(ms, "p95_" + id));
            CHECK(metric(ms, "p95_" + id) <= metric(ms, "p99_" + id));
            CHECK(metric(ms, "sla_violation_" + id) >= 0.0);
            CHECK(metric(ms, "sla_violation_" + id) <= 1.0);
        }
        CHECK(metric(ms, "qosec_compliance") >= 0.0);
        CHECK(metric(ms, "qosec_compliance") <= 1.0);
        if (p == Policy::NoQkd) CHECK(a.totals.consumed == 0);
    }
}

TEST_CASE("different seeds give different traces") {
    const Model m = default_model();
    EpisodeOptions o;
    o.policy = Policy::Static;
    o.horizon = 60;
    CHECK(trace_text(run_episode(m, nullptr, 1, o)) != trace_text(run_episode(m, nullptr, 2, o)));
}

TEST_CASE("monte carlo with one seed flags the interval") {
    const Model m = default_model();
    EpisodeOptions o;
    o.policy = Policy::Static;
    o.horizon = 60;
    const auto r = run_monte_carlo(m, nullptr, {{"static", o}}, {3}, 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].interval("cum_risk").degenerate);
    CHECK(r[0].interval("cum_risk").lo == r[0].interval("cum_risk").hi);
}

TEST_CASE("duplicate specs give identical rows and parallelism does not matter") {
    const Model m = default_model();
    EpisodeOptions o;
    o.policy = Policy::Greedy;
    o.horizon = 90;
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
    std::ostringstream one, many;
    const auto r1 = run_monte_carlo(m, nullptr, {{"a", o}, {"b", o}}, seeds, 1,
                                    [&](const RunSpec&, const EpisodeTrace& t) { write_trace(one, t); });
    const auto r3 = run_monte_carlo(m, nullptr, {{"a", o}, {"b", o}}, seeds, 3,
                                    [&](const RunSpec&, const EpisodeTrace& t) { write_trace(many, t); });
    CHECK(one.str() == many.str());
    for (const auto* r : {&r1, &r3}) {
        REQUIRE(r->at(0).metrics.size() == r->at(1).metrics.size());
        for (std::size_t k = 0; k < r->at(0).metrics.size(); ++k) {
            CHECK(r->at(0).metrics[k].ci.mean == r->at(1).metrics[k].ci.mean);
            CHECK(r->at(0).metrics[k].ci.lo == r->at(1).metrics[k].ci.lo);
        }
    }
    for (std::size_t k = 0; k < r1[0].metrics.size(); ++k) CHECK(r1[0].metrics[k].ci.hi == r3[0].metrics[k].ci.hi);
}

TEST_CASE("t interval matches the tabulated quantile") {
    // t_{0.975, 4} = 2.7764451051977987 from standard tables.
    const auto ci = metrics::t_interval({1, 2, 3, 4, 5});
    const double half = 2.7764451051977987 * std::sqrt(2.5) / std::sqrt(5.0);
    CHECK(ci.mean == doctest::Approx(3.0));
    CHECK(ci.hi - ci.mean == doctest::Approx(half).epsilon(1e-12));
    CHECK(ci.mean - ci.lo == doctest::Approx(half).epsilon(1e-12));
    CHECK_FALSE(ci.degenerate);
}

TEST_CASE("log histogram quantiles stay within a bin") {
    metrics::LogHistogram h;
    for (int k = 1; k <= 1000; ++k) h.add(0.001 * k, 1.0);
    const double bin = std::pow(10.0, 1.0 / 50);
    CHECK(h.quantile(0.5) >= 0.5 / bin);
    CHECK(h.quantile(0.5) <= 0.5 * bin);
    CHECK(h.quantile(0.99) >= 0.99 / bin);
    CHECK(h.quantile(0.99) <= 0.99 * bin);
    CHECK(h.quantile(0.5) <= h.quantile(0.95));
}

TEST_CASE("survival mass lands where the tail puts it") {
    metrics::LogHistogram h;
    // Exponential with mean 0.1 s: median 0.1 ln 2.
    h.add_survival(1e-4, 1.0, [](double x) { return std::exp(-x / 0.1); });
    CHECK(h.total() == doctest::Approx(1.0));
    const double bin = std::pow(10.0, 1.0 / 50);
    CHECK(h.quantile(0.5) >= 0.1 * std::log(2.0) / bin);
    CHECK(h.quantile(0.5) <= 0.1 * std::log(2.0) * bin);
}

}

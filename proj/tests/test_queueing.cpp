#include <doctest.h>

#include <cmath>
#include <random>

#include "qkdvpp/error.hpp"
#include "qkdvpp/queueing.hpp"
#include "oracles.hpp"

using namespace qkdvpp;
using namespace qkdvpp::queueing;
using qkdvpp::testing::mm1_wq;

namespace {

CryptoParams cparams() {
    CryptoParams p;
    p.iv_bits = 96;
    p.comp_tag_bits = 128;
    p.mac_len_slope = 1;
    p.mac_len_cap = 128;
    p.a_max = 128;
    return p;
}

QueueParams zero_queue() {
    QueueParams q;
    q.enc_cost_per_bit = 0;
    q.ver_cost_per_bit = 0;
    q.fixed_crypto_overhead = 0;
    q.header_bits = 0;
    return q;
}

MessageClassSpec cls_payload(double L) {
    MessageClassSpec c;
    c.payload_bits = L;
    c.sla_delay = 0.5;
    return c;
}

}  // namespace

TEST_SUITE("queueing") {

TEST_CASE("overhead composition") {
    auto cp = cparams();
    auto q = zero_queue();
    auto c = cls_payload(100);
    CHECK(overhead_bits(c, {Strategy::S1_OTP_WC, 64, 1}, q, cp) == 64);
    CHECK(overhead_bits(c, {Strategy::S1_OTP_WC, 0, 1}, q, cp) == 0);
    q.header_bits = 40;
    CHECK(overhead_bits(c, {Strategy::S3_AES_MAC, 0, 1}, q, cp) == 264);
    CHECK(overhead_bits(c, {Strategy::S2_AES_WC, 64, 4}, q, cp) == 40 + 64 + 96);
}

TEST_CASE("service rate worked examples") {
    auto cp = cparams();
    auto q = zero_queue();
    NetSlotState st;
    st.slot_seconds = 1.0;
    st.bandwidth_bits_per_slot = 1e7;
    auto c = cls_payload(1e6);
    StrategyColumn col{Strategy::S1_OTP_WC, 0, 1};
    CHECK(service_rate(c, col, st, q, cp) == doctest::Approx(10.0).epsilon(1e-12));
    q.fixed_crypto_overhead = 0.05;
    CHECK(service_rate(c, col, st, q, cp) == doctest::Approx(1.0 / 0.15).epsilon(1e-12));
    st.bandwidth_bits_per_slot = 1e6;
    q.fixed_crypto_overhead = 0.0;
    CHECK(service_rate(c, col, st, q, cp) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kingman examples and M/M/1 agreement") {
    CHECK(kingman_wait(0.0, 1, 1, 1) == 0.0);
    CHECK(kingman_wait(0.5, 1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
    try {
        kingman_wait(1.0, 1, 1, 1);
        FAIL("expected E_UNSTABLE");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unstable);
    }
    for (int i = 1; i <= 10; ++i)
        for (int j = 1; j <= 10; ++j) {
            const double rho = 0.095 * i;
            const double mu = 0.37 * j * j;
            const double w = kingman_wait(rho, 1, 1, mu);
            const double ref = mm1_wq(rho * mu, mu);
            CHECK(std::abs(w - ref) <= 1e-12 * std::max(1.0, ref));
        }
}

TEST_CASE("end-to-end delay examples") {
    auto cp = cparams();
    auto q = zero_queue();
    NetSlotState st;
    st.slot_seconds = 1.0;
    st.bandwidth_bits_per_slot = 1.0;
    st.net_propagation = 0.01;
    auto c = cls_payload(1.0);
    StrategyColumn col{Strategy::S1_OTP_WC, 0, 1};
    CHECK(end_to_end_delay(c, col, st, 0.0, q, cp).delay == doctest::Approx(0.01));
    st.net_propagation = 0.02;
    CHECK(end_to_end_delay(c, col, st, 0.5, q, cp).delay == doctest::Approx(1.02).epsilon(1e-12));
    auto sat = end_to_end_delay(c, col, st, 1.3, q, cp);
    CHECK(sat.saturated);
    CHECK(sat.delay == doctest::Approx(10 * c.sla_delay));
}

TEST_CASE("property: delay nondecreasing in auth knob") {
    auto cp = cparams();
    QueueParams q;
    q.header_bits = 40;
    q.enc_cost_per_bit = 2e-7;
    q.ver_cost_per_bit = 2e-7;
    q.fixed_crypto_overhead = 1e-3;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    for (int it = 0; it < 500; ++it) {
        std::vector<MessageClassSpec> classes{cls_payload(200 + 4000 * u(rng)), cls_payload(100 + 1000 * u(rng))};
        NetSlotState st;
        st.bandwidth_bits_per_slot = 1.8e7;
        st.arrivals_per_slot = {2000 * u(rng), 2000 * u(rng)};
        st.net_propagation = 0.01;
        double a1 = 128 * u(rng), a2 = 128 * u(rng);
        if (a1 > a2) std::swap(a1, a2);
        Strategy s = u(rng) < 0.5 ? Strategy::S1_OTP_WC : Strategy::S2_AES_WC;
        std::vector<StrategyColumn> lo{{s, a1, 4}, {Strategy::S3_AES_MAC, 0, 1}};
        std::vector<StrategyColumn> hi{{s, a2, 4}, {Strategy::S3_AES_MAC, 0, 1}};
        auto d1 = slot_delays(classes, lo, st, q, cp);
        auto d2 = slot_delays(classes, hi, st, q, cp);
        for (int i = 0; i < 2; ++i) REQUIRE(d1[i].delay <= d2[i].delay + 1e-15);
    }
}

TEST_CASE("exceedance tail") {
    DelayResult d{0.2, 0.1, false};
    CHECK(delay_exceedance(d, 0.5, 0.1, 0.05) == 1.0);
    CHECK(delay_exceedance(d, 0.5, 0.1, 0.1) == doctest::Approx(0.5));
    CHECK(delay_exceedance(d, 0.5, 0.1, 0.3) == doctest::Approx(0.5 * std::exp(-1.0)));
    CHECK(delay_exceedance({1.0, 1.0, true}, 1.2, 0.0, 100.0) == 1.0);
}

}  // TEST_SUITE

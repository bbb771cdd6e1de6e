#include <doctest.h>

#include <fstream>
#include <sstream>

#include "qkdvpp/error.hpp"
#include "qkdvpp/model.hpp"

using namespace qkdvpp;
using nlohmann::json;

namespace {

ErrorCode code_of(const json& doc, std::string* subject = nullptr) {
    try {
        validate_config(doc);
    } catch (const Error& e) {
        if (subject) *subject = e.subject();
        return e.code();
    }
    FAIL("config unexpectedly valid");
    return ErrorCode::Usage;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default config validates with the testbed sizes") {
    auto m = validate_config(default_config());
    CHECK(m->classes.size() == 5);
    CHECK(m->nodes.size() == 16);
    CHECK(m->links.size() == 28);
    CHECK(m->domains.size() == 3);
    for (ClassId id : {ClassId::M1, ClassId::M4}) {
        const auto& c = m->classes[m->class_index(id)];
        CHECK(c.forbid_s3);
        CHECK(c.min_tag_bits > 0);
    }
}

TEST_CASE("sign guard names the field") {
    auto doc = default_config();
    doc["classes"][0]["lambda_base"] = -1;
    std::string subject;
    CHECK(code_of(doc, &subject) == ErrorCode::Invariant);
    CHECK(subject == "lambda_base");
}

TEST_CASE("strict compliance rejects S3 for M4") {
    auto doc = default_config();
    doc["classes"][3]["forbid_s3"] = false;
    std::string subject;
    CHECK(code_of(doc, &subject) == ErrorCode::Invariant);
    CHECK(subject == "forbid_s3");
    doc["sim"]["strict_compliance"] = false;
    CHECK_NOTHROW(validate_config(doc));
}

TEST_CASE("structural and reference errors") {
    CHECK_THROWS_AS(validate_config_text("{ not json"), Error);
    try {
        validate_config_text("{ not json");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
    }
    auto doc = default_config();
    doc["bogus"] = 1;
    CHECK(code_of(doc) == ErrorCode::Parse);

    doc = default_config();
    doc["queue"]["ca2"] = "one";
    CHECK(code_of(doc) == ErrorCode::Parse);

    doc = default_config();
    doc["links"][0]["to"] = "nowhere";
    CHECK(code_of(doc) == ErrorCode::DanglingRef);

    doc = default_config();
    doc["nodes"][2]["domain"] = "d9";
    CHECK(code_of(doc) == ErrorCode::DanglingRef);

    doc = default_config();
    doc.erase("seed");
    CHECK(code_of(doc) == ErrorCode::Parse);

    doc = default_config();
    doc["nodes"][0]["ttl_slots"] = 0;
    CHECK(code_of(doc) == ErrorCode::Invariant);

    doc = default_config();
    doc["crypto"]["mac_len_cap"] = 300;
    CHECK(code_of(doc) == ErrorCode::Invariant);
}

TEST_CASE("validation is idempotent through serialize") {
    auto m1 = validate_config(default_config());
    auto j1 = serialize(*m1);
    auto m2 = validate_config(j1);
    CHECK(serialize(*m2) == j1);
    CHECK(config_hash(*m1) == config_hash(*m2));
    CHECK(config_hash(*m1).size() == 16);

    auto doc = default_config();
    doc["seed"] = 7;
    CHECK(config_hash(*validate_config(doc)) != config_hash(*m1));
}

TEST_CASE("resolved indices") {
    auto m = validate_config(default_config());
    CHECK(m->node_index("n7") == 7);
    CHECK(m->node_index("zz") == -1);
    CHECK(m->node_domain[7] == 1);
    CHECK(m->link_from[0] == 0);
    CHECK(m->link_to[0] == 1);
    CHECK(m->link_domain[0] == 0);
    CHECK(m->link_domain[5] == -1);  // n5 - n6 crosses d0/d1
}

TEST_CASE("bundled config file matches the built-in default") {
    std::ifstream in(QKDVPP_SOURCE_DIR "/config/default.json");
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    auto from_file = validate_config_text(ss.str());
    auto builtin = validate_config(default_config());
    CHECK(config_hash(*from_file) == config_hash(*builtin));
}

}  // TEST_SUITE

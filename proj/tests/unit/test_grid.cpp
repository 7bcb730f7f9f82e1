#include <doctest.h>

#include <cmath>
#include <queue>
#include <string>

#include "popf/errors.hpp"
#include "popf/grid.hpp"
#include "popf/io.hpp"
#include "support.hpp"

using namespace popf;

namespace {

const char* kTwoBus = R"({
  "format_version": 1, "name": "tiny", "system": {"base_mva": 100},
  "buses": [
    {"id": 0, "kind": "slack", "v_set": 1.0, "v_min": 0.9, "v_max": 1.1, "p_load_mw": 0, "q_load_mvar": 0},
    {"id": 1, "kind": "pq", "v_min": 0.9, "v_max": 1.1, "p_load_mw": 40, "q_load_mvar": 10}],
  "branches": [{"from": 0, "to": 1, "r": 0.01, "x": 0.1, "b": 0.02, "rate_mw": 100}],
  "generators": [{"bus": 0, "p_min_mw": 0, "p_max_mw": 200, "cost_a": 0.01, "cost_b": 10, "cost_c": 5}],
  "sources": []
})";

// BFS over branches, independent of is_connected.
bool bfs_connected(const NetworkCase& c) {
    std::vector<bool> seen(c.n_bus(), false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const auto& br : c.branches) {
            int v = -1;
            if (br.from_bus == u) v = br.to_bus;
            if (br.to_bus == u) v = br.from_bus;
            if (v >= 0 && !seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = true;
                q.push(v);
            }
        }
    }
    for (bool s : seen)
        if (!s) return false;
    return true;
}

bool contains(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("minimal two-bus document parses and converts to per-unit") {
    const auto c = parse_case(kTwoBus);
    CHECK(c.n_bus() == 2);
    CHECK(c.slack_bus() == 0);
    CHECK(c.buses[1].p_load == doctest::Approx(0.4));
    CHECK(c.buses[1].q_load == doctest::Approx(0.1));
    CHECK(c.branches[0].p_limit == doctest::Approx(1.0));
    // cost of 40 MW is the same in either unit system
    CHECK(c.generators[0].cost(0.4) == doctest::Approx(0.01 * 40 * 40 + 10 * 40 + 5));
    CHECK(validate_case(c).empty());
}

TEST_CASE("two slack buses are rejected") {
    std::string doc = kTwoBus;
    doc.replace(doc.find("\"pq\""), 4, "\"slack\"");
    try {
        parse_case(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(contains(e.violations(), "exactly one Slack bus"));
    }
}

TEST_CASE("missing field reports its path") {
    std::string doc = kTwoBus;
    doc.replace(doc.find("\"x\": 0.1, "), 10, "");
    try {
        parse_case(doc);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.path().find("branches[0]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_case("{not json"), SchemaError);
}

TEST_CASE("validate_case names the offending entity") {
    auto c = test::two_bus(0.5);
    CHECK(validate_case(c).empty());

    auto bad_x = c;
    bad_x.branches[0].x = 0.0;
    const auto v = validate_case(bad_x);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "branch 0: x must be nonzero");

    auto bad_gen = c;
    bad_gen.generators[0].p_min = bad_gen.generators[0].p_max;
    const auto g = validate_case(bad_gen);
    REQUIRE(g.size() == 1);
    CHECK(g[0].rfind("generator 0", 0) == 0);
}

TEST_CASE("bundled 14-bus case is connected") {
    const auto c = load_case(test::data("case14.json"));
    CHECK(c.n_bus() == 14);
    CHECK(bfs_connected(c));
    CHECK(is_connected(c));
    CHECK(validate_case(c).empty());
    CHECK(c.n_source() >= 3);
}

TEST_CASE("serialize then parse is the identity") {
    for (const char* name : {"case2.json", "case3_congested.json", "case14.json"}) {
        const auto a = load_case(test::data(name));
        const auto b = parse_case(serialize_case(a));
        CHECK(b.name == a.name);
        REQUIRE(b.n_bus() == a.n_bus());
        REQUIRE(b.n_branch() == a.n_branch());
        REQUIRE(b.n_gen() == a.n_gen());
        REQUIRE(b.n_source() == a.n_source());
        for (std::size_t i = 0; i < a.n_bus(); ++i) {
            CHECK(b.buses[i].kind == a.buses[i].kind);
            CHECK(std::abs(b.buses[i].p_load - a.buses[i].p_load) <= 1e-12);
            CHECK(std::abs(b.buses[i].q_load - a.buses[i].q_load) <= 1e-12);
            CHECK(std::abs(b.buses[i].v_set - a.buses[i].v_set) <= 1e-12);
        }
        for (std::size_t i = 0; i < a.n_branch(); ++i) {
            CHECK(std::abs(b.branches[i].x - a.branches[i].x) <= 1e-12);
            CHECK(std::abs(b.branches[i].p_limit - a.branches[i].p_limit) <= 1e-12);
        }
        for (std::size_t i = 0; i < a.n_gen(); ++i) {
            CHECK(std::abs(b.generators[i].cost_a - a.generators[i].cost_a) <= 1e-12 * (1 + a.generators[i].cost_a));
            CHECK(std::abs(b.generators[i].p_max - a.generators[i].p_max) <= 1e-12);
        }
        for (std::size_t i = 0; i < a.n_source(); ++i) {
            CHECK(b.sources[i].kind() == a.sources[i].kind());
            CHECK(b.sources[i].corr_group == a.sources[i].corr_group);
            CHECK(std::abs(b.sources[i].nominal() - a.sources[i].nominal()) <= 1e-12);
        }
        CHECK(case_hash(a) == case_hash(b));
        CHECK(validate_case(b).empty());
    }
}

TEST_CASE("output layout names round trip") {
    const OutputLayout l(14, 5, 20);
    CHECK(l.size() == 40);
    for (std::size_t i = 0; i < l.size(); ++i) {
        const auto parsed = l.parse_name(l.name(i));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == i);
    }
    CHECK(l.name(0) == "cost");
    CHECK(!l.parse_name("V14").has_value());
    CHECK(!l.parse_name("bogus").has_value());
}

TEST_CASE("io helpers") {
    CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    const double x = 0.1 + 0.2;
    CHECK(std::stod(io::format_full(x)) == x);
    Eigen::MatrixXd m(2, 2);
    m << 1.5, -2, 1e-300, 3.141592653589793;
    const auto t = io::parse_csv(io::to_csv({"a", "b"}, m));
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    CHECK(t.values == m);
}

}

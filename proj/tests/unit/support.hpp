#pragma once

#include <filesystem>
#include <string>

#include "popf/grid.hpp"

namespace test {

inline std::string data(const std::string& name) { return std::string(POPF_TEST_DATA) + "/" + name; }

// Fresh scratch directory per caller.
inline std::string scratch(const std::string& name) {
    const auto dir = std::filesystem::path(POPF_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline popf::Bus bus(int id, popf::BusKind kind, double p = 0.0, double q = 0.0) {
    popf::Bus b;
    b.id = id;
    b.kind = kind;
    b.v_min = 0.9;
    b.v_max = 1.1;
    b.p_load = p;
    b.q_load = q;
    return b;
}

inline popf::Branch branch(int from, int to, double r, double x, double limit = 10.0, double b_sh = 0.0) {
    return popf::Branch{from, to, r, x, b_sh, limit};
}

inline popf::Generator gen(int bus, double p_max, double a, double b, double p_min = 0.0) {
    popf::Generator g;
    g.bus = bus;
    g.p_min = p_min;
    g.p_max = p_max;
    g.cost_a = a;
    g.cost_b = b;
    return g;
}

// Slack bus 0 with a generator, PQ bus 1 with load p (pu), one branch.
inline popf::NetworkCase two_bus(double p_load, double r = 0.0, double x = 0.1) {
    popf::NetworkCase c;
    c.name = "two-bus";
    c.buses = {bus(0, popf::BusKind::Slack), bus(1, popf::BusKind::PQ, p_load)};
    c.branches = {branch(0, 1, r, x, 100.0)};
    c.generators = {gen(0, 100.0, 0.0, 10.0)};
    return c;
}

}  // namespace test

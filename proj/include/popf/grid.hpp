#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace popf {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);

// All power quantities are per-unit on NetworkCase::base_mva. Loads are
// positive when consuming.
struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_set = 1.0;  // voltage setpoint, used for Slack and PV buses
    double v_min = 0.94;
    double v_max = 1.06;
    double p_load = 0.0;
    double q_load = 0.0;
};

// Series impedance r + jx with total line charging b_sh split evenly between
// both ends.
struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_sh = 0.0;
    double p_limit = 0.0;
};

// Cost in $/h is cost_a * p^2 + cost_b * p + cost_c with p in per-unit.
struct Generator {
    int bus = 0;
    double p_min = 0.0;
    double p_max = 0.0;
    double cost_a = 0.0;
    double cost_b = 0.0;
    double cost_c = 0.0;

    double cost(double p) const { return (cost_a * p + cost_b) * p + cost_c; }
};

// Normally distributed active load drawn on top of the bus nominal load.
// Reactive load follows from a constant power factor.
struct GaussianLoad {
    double mean = 0.0;
    double std = 0.0;
    double power_factor = 1.0;
};

struct WindFarm {
    double shape = 2.0;  // Weibull k
    double scale = 8.0;  // Weibull lambda, m/s
    double v_cut_in = 3.0;
    double v_rated = 12.0;
    double v_cut_out = 25.0;
    double rated_power = 0.0;
};

struct PvPlant {
    double alpha = 2.0;
    double beta = 2.0;
    double rated_power = 0.0;
};

enum class SourceKind { GaussianLoad, Wind, Pv };

struct StochasticSource {
    int bus = 0;
    std::variant<GaussianLoad, WindFarm, PvPlant> params;
    std::optional<std::string> corr_group;

    SourceKind kind() const { return static_cast<SourceKind>(params.index()); }
    // Mean of the realized value; used for the nominal (all-at-mean) sample.
    double nominal() const;
};

struct NetworkCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<StochasticSource> sources;

    std::size_t n_bus() const { return buses.size(); }
    std::size_t n_branch() const { return branches.size(); }
    std::size_t n_gen() const { return generators.size(); }
    std::size_t n_source() const { return sources.size(); }

    int slack_bus() const;
    std::vector<int> pq_buses() const;
};

// Index layout of the OPF output vector: cost, then bus voltage magnitudes,
// generator active outputs and branch sending-end active flows.
struct OutputLayout {
    std::size_t n_bus = 0;
    std::size_t n_gen = 0;
    std::size_t n_branch = 0;

    explicit OutputLayout(const NetworkCase& c)
        : n_bus(c.n_bus()), n_gen(c.n_gen()), n_branch(c.n_branch()) {}
    OutputLayout(std::size_t buses, std::size_t gens, std::size_t branches)
        : n_bus(buses), n_gen(gens), n_branch(branches) {}

    std::size_t size() const { return 1 + n_bus + n_gen + n_branch; }
    static constexpr std::size_t cost() { return 0; }
    std::size_t voltage(std::size_t bus) const { return 1 + bus; }
    std::size_t generator(std::size_t g) const { return 1 + n_bus + g; }
    std::size_t branch(std::size_t l) const { return 1 + n_bus + n_gen + l; }

    // "cost", "V3", "G0", "B7"
    std::string name(std::size_t index) const;
    std::optional<std::size_t> parse_name(std::string_view name) const;
};

// Input feature count of the surrogate: active then reactive injection of
// every PQ bus.
std::size_t feature_count(const NetworkCase& c);

std::vector<std::string> validate_case(const NetworkCase& c);

// Throws SchemaError or ValidationError.
NetworkCase parse_case(std::string_view text);
NetworkCase load_case(const std::string& path);
std::string serialize_case(const NetworkCase& c);

// FNV-1a over the canonical serialization.
std::uint64_t case_hash(const NetworkCase& c);
std::string hex64(std::uint64_t v);

bool is_connected(const NetworkCase& c);

}  // namespace popf

#include "popf/grid.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "popf/errors.hpp"
#include "popf/io.hpp"

namespace popf {

using json = nlohmann::json;

namespace {

std::string join_violations(const std::vector<std::string>& v) {
    std::string s = "invalid case:";
    for (const auto& line : v) s += "\n  " + line;
    return s;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

NonConvergence::NonConvergence(int iterations, double mismatch)
    : Error("power flow did not converge after " + std::to_string(iterations) +
            " iterations (max mismatch " + io::format_full(mismatch) + " pu)"),
      iterations_(iterations),
      mismatch_(mismatch) {}

SingularJacobian::SingularJacobian(int iteration)
    : Error("singular power-flow Jacobian at iteration " + std::to_string(iteration)) {}

namespace {

std::string join_list(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
}

}  // namespace

Infeasible::Infeasible(std::vector<std::string> violated)
    : Error("dispatch infeasible; violated: " + join_list(violated)),
      violated_(std::move(violated)) {}

std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "?";
}

double StochasticSource::nominal() const {
    return std::visit(
        [](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianLoad>) {
                return p.mean;
            } else if constexpr (std::is_same_v<T, WindFarm>) {
                // Weibull mean speed through the power curve.
                const double v = p.scale * std::tgamma(1.0 + 1.0 / p.shape);
                if (v < p.v_cut_in || v >= p.v_cut_out) return 0.0;
                if (v >= p.v_rated) return p.rated_power;
                return p.rated_power * std::pow(v / p.v_rated, 3);
            } else {
                return p.rated_power * p.alpha / (p.alpha + p.beta);
            }
        },
        params);
}

int NetworkCase::slack_bus() const {
    for (const auto& b : buses)
        if (b.kind == BusKind::Slack) return b.id;
    return -1;
}

std::vector<int> NetworkCase::pq_buses() const {
    std::vector<int> out;
    for (const auto& b : buses)
        if (b.kind == BusKind::PQ) out.push_back(b.id);
    return out;
}

std::size_t feature_count(const NetworkCase& c) { return 2 * c.pq_buses().size(); }

std::string OutputLayout::name(std::size_t index) const {
    if (index == 0) return "cost";
    if (index < 1 + n_bus) return "V" + std::to_string(index - 1);
    if (index < 1 + n_bus + n_gen) return "G" + std::to_string(index - 1 - n_bus);
    return "B" + std::to_string(index - 1 - n_bus - n_gen);
}

std::optional<std::size_t> OutputLayout::parse_name(std::string_view name) const {
    if (name == "cost") return cost();
    if (name.size() < 2) return std::nullopt;
    std::size_t k = 0;
    for (char ch : name.substr(1)) {
        if (ch < '0' || ch > '9') return std::nullopt;
        k = k * 10 + static_cast<std::size_t>(ch - '0');
    }
    switch (name[0]) {
        case 'V': return k < n_bus ? std::optional(voltage(k)) : std::nullopt;
        case 'G': return k < n_gen ? std::optional(generator(k)) : std::nullopt;
        case 'B': return k < n_branch ? std::optional(branch(k)) : std::nullopt;
        default: return std::nullopt;
    }
}

bool is_connected(const NetworkCase& c) {
    const auto n = c.n_bus();
    if (n == 0) return false;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::size_t components = n;
    for (const auto& br : c.branches) {
        if (br.from_bus < 0 || br.to_bus < 0) continue;
        auto a = static_cast<std::size_t>(br.from_bus), b = static_cast<std::size_t>(br.to_bus);
        if (a >= n || b >= n) continue;
        a = find(a);
        b = find(b);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

std::vector<std::string> validate_case(const NetworkCase& c) {
    std::vector<std::string> v;
    const int n = static_cast<int>(c.n_bus());
    auto bus_ok = [n](int id) { return id >= 0 && id < n; };

    if (!(c.base_mva > 0.0)) v.push_back("system: base_mva must be positive");
    if (c.buses.empty()) v.push_back("system: case has no buses");

    int slack = 0;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        const auto& b = c.buses[i];
        const auto tag = "bus " + std::to_string(i);
        if (b.id != static_cast<int>(i)) v.push_back(tag + ": ids must be 0..n_bus-1 with no gaps");
        if (b.kind == BusKind::Slack) ++slack;
        if (!(b.v_min > 0.0 && b.v_min < b.v_max)) v.push_back(tag + ": requires 0 < v_min < v_max");
        if (!(b.v_set > 0.0)) v.push_back(tag + ": v_set must be positive");
        if (!std::isfinite(b.p_load) || !std::isfinite(b.q_load))
            v.push_back(tag + ": loads must be finite");
    }
    if (!c.buses.empty() && slack != 1) v.push_back("system: exactly one Slack bus required");

    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        const auto& br = c.branches[i];
        const auto tag = "branch " + std::to_string(i);
        if (br.x == 0.0) v.push_back(tag + ": x must be nonzero");
        if (!bus_ok(br.from_bus) || !bus_ok(br.to_bus))
            v.push_back(tag + ": endpoint bus does not exist");
        else if (br.from_bus == br.to_bus)
            v.push_back(tag + ": from_bus and to_bus must differ");
        if (!(br.p_limit > 0.0)) v.push_back(tag + ": p_limit must be positive");
    }

    for (std::size_t i = 0; i < c.generators.size(); ++i) {
        const auto& g = c.generators[i];
        const auto tag = "generator " + std::to_string(i);
        if (!(g.p_min >= 0.0 && g.p_min < g.p_max)) v.push_back(tag + ": requires 0 <= p_min < p_max");
        if (!(g.cost_a >= 0.0)) v.push_back(tag + ": cost_a must be nonnegative (convex cost)");
        if (!bus_ok(g.bus))
            v.push_back(tag + ": bus does not exist");
        else if (c.buses[static_cast<std::size_t>(g.bus)].kind == BusKind::PQ)
            v.push_back(tag + ": generator bus must be Slack or PV");
    }

    if (const int sb = c.slack_bus(); slack == 1 && bus_ok(sb)) {
        bool hosted = false;
        for (const auto& g : c.generators) hosted = hosted || g.bus == sb;
        if (!hosted) v.push_back("bus " + std::to_string(sb) + ": Slack bus must host a generator");
    }

    for (std::size_t i = 0; i < c.sources.size(); ++i) {
        const auto& s = c.sources[i];
        const auto tag = "source " + std::to_string(i);
        if (!bus_ok(s.bus))
            v.push_back(tag + ": bus does not exist");
        else if (c.buses[static_cast<std::size_t>(s.bus)].kind != BusKind::PQ)
            v.push_back(tag + ": source bus must be PQ (inputs are PQ-bus injections)");
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, GaussianLoad>) {
                    if (!(p.std >= 0.0)) v.push_back(tag + ": std must be nonnegative");
                    if (!(p.power_factor > 0.0 && p.power_factor <= 1.0))
                        v.push_back(tag + ": power_factor must be in (0, 1]");
                } else if constexpr (std::is_same_v<T, WindFarm>) {
                    if (!(p.shape > 0.0 && p.scale > 0.0))
                        v.push_back(tag + ": Weibull shape/scale must be positive");
                    if (!(p.v_cut_in < p.v_rated && p.v_rated < p.v_cut_out))
                        v.push_back(tag + ": requires cut-in < rated < cut-out speed");
                    if (!(p.rated_power > 0.0)) v.push_back(tag + ": rated power must be positive");
                } else {
                    if (!(p.alpha > 0.0 && p.beta > 0.0))
                        v.push_back(tag + ": Beta alpha/beta must be positive");
                    if (!(p.rated_power > 0.0)) v.push_back(tag + ": rated power must be positive");
                }
            },
            s.params);
    }

    if (!c.buses.empty() && !is_connected(c)) v.push_back("system: branch graph is not connected");
    return v;
}

// ---------------------------------------------------------------------------
// Case document

namespace {

class Reader {
  public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

    const json& at(const std::string& key) const {
        if (!node_.is_object()) throw SchemaError(path_, "expected an object");
        auto it = node_.find(key);
        if (it == node_.end()) throw SchemaError(child(key), "missing field");
        return *it;
    }
    bool has(const std::string& key) const { return node_.is_object() && node_.contains(key); }

    double number(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_number()) throw SchemaError(child(key), "expected a number");
        return v.get<double>();
    }
    double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    int integer(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_number_integer()) throw SchemaError(child(key), "expected an integer");
        return v.get<int>();
    }
    std::string string(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_string()) throw SchemaError(child(key), "expected a string");
        return v.get<std::string>();
    }
    std::vector<Reader> array(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_array()) throw SchemaError(child(key), "expected an array");
        std::vector<Reader> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out.emplace_back(v[i], child(key) + "[" + std::to_string(i) + "]");
        return out;
    }
    Reader object(const std::string& key) const {
        const auto& v = at(key);
        if (!v.is_object()) throw SchemaError(child(key), "expected an object");
        return {v, child(key)};
    }
    const std::string& path() const { return path_; }
    std::string child(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

  private:
    const json& node_;
    std::string path_;
};

BusKind parse_kind(const Reader& r) {
    const auto s = r.string("kind");
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw SchemaError(r.child("kind"), "expected one of slack, pv, pq");
}

}  // namespace

NetworkCase parse_case(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("not a JSON document: ") + e.what());
    }
    Reader root(doc, "");
    const int version = root.integer("format_version");
    if (version != 1)
        throw SchemaError("format_version", "unsupported version " + std::to_string(version));

    NetworkCase c;
    if (root.has("name")) c.name = root.string("name");
    c.base_mva = root.object("system").number("base_mva");
    if (!(c.base_mva > 0.0)) throw ValidationError({"system: base_mva must be positive"});
    const double base = c.base_mva;

    for (const auto& r : root.array("buses")) {
        Bus b;
        b.id = r.integer("id");
        b.kind = parse_kind(r);
        b.v_set = r.number_or("v_set", 1.0);
        b.v_min = r.number("v_min");
        b.v_max = r.number("v_max");
        b.p_load = r.number_or("p_load_mw", 0.0) / base;
        b.q_load = r.number_or("q_load_mvar", 0.0) / base;
        c.buses.push_back(b);
    }
    for (const auto& r : root.array("branches")) {
        Branch br;
        br.from_bus = r.integer("from");
        br.to_bus = r.integer("to");
        br.r = r.number("r");
        br.x = r.number("x");
        br.b_sh = r.number_or("b", 0.0);
        br.p_limit = r.number("rate_mw") / base;
        c.branches.push_back(br);
    }
    for (const auto& r : root.array("generators")) {
        Generator g;
        g.bus = r.integer("bus");
        g.p_min = r.number("p_min_mw") / base;
        g.p_max = r.number("p_max_mw") / base;
        // $/MW^2h, $/MWh, $/h to per-unit power
        g.cost_a = r.number("cost_a") * base * base;
        g.cost_b = r.number("cost_b") * base;
        g.cost_c = r.number_or("cost_c", 0.0);
        c.generators.push_back(g);
    }
    if (root.has("sources")) {
        for (const auto& r : root.array("sources")) {
            StochasticSource s;
            s.bus = r.integer("bus");
            const auto type = r.string("type");
            if (type == "gaussian_load") {
                s.params = GaussianLoad{r.number("mean_mw") / base, r.number("std_mw") / base,
                                        r.number_or("power_factor", 1.0)};
            } else if (type == "wind") {
                s.params = WindFarm{r.number("shape"),     r.number("scale"),
                                    r.number("v_cut_in"),  r.number("v_rated"),
                                    r.number("v_cut_out"), r.number("rated_mw") / base};
            } else if (type == "pv") {
                s.params = PvPlant{r.number("alpha"), r.number("beta"), r.number("rated_mw") / base};
            } else {
                throw SchemaError(r.child("type"), "expected one of gaussian_load, wind, pv");
            }
            if (r.has("corr_group")) s.corr_group = r.string("corr_group");
            c.sources.push_back(std::move(s));
        }
    }

    if (auto violations = validate_case(c); !violations.empty()) throw ValidationError(violations);
    return c;
}

NetworkCase load_case(const std::string& path) { return parse_case(io::read_file(path)); }

std::string serialize_case(const NetworkCase& c) {
    const double base = c.base_mva;
    json doc;
    doc["format_version"] = 1;
    doc["name"] = c.name;
    doc["system"] = {{"base_mva", base}};
    doc["buses"] = json::array();
    for (const auto& b : c.buses) {
        doc["buses"].push_back({{"id", b.id},
                                {"kind", std::string(to_string(b.kind))},
                                {"v_set", b.v_set},
                                {"v_min", b.v_min},
                                {"v_max", b.v_max},
                                {"p_load_mw", b.p_load * base},
                                {"q_load_mvar", b.q_load * base}});
    }
    doc["branches"] = json::array();
    for (const auto& br : c.branches) {
        doc["branches"].push_back({{"from", br.from_bus},
                                   {"to", br.to_bus},
                                   {"r", br.r},
                                   {"x", br.x},
                                   {"b", br.b_sh},
                                   {"rate_mw", br.p_limit * base}});
    }
    doc["generators"] = json::array();
    for (const auto& g : c.generators) {
        doc["generators"].push_back({{"bus", g.bus},
                                     {"p_min_mw", g.p_min * base},
                                     {"p_max_mw", g.p_max * base},
                                     {"cost_a", g.cost_a / (base * base)},
                                     {"cost_b", g.cost_b / base},
                                     {"cost_c", g.cost_c}});
    }
    doc["sources"] = json::array();
    for (const auto& s : c.sources) {
        json j = {{"bus", s.bus}};
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, GaussianLoad>) {
                    j["type"] = "gaussian_load";
                    j["mean_mw"] = p.mean * base;
                    j["std_mw"] = p.std * base;
                    j["power_factor"] = p.power_factor;
                } else if constexpr (std::is_same_v<T, WindFarm>) {
                    j["type"] = "wind";
                    j["shape"] = p.shape;
                    j["scale"] = p.scale;
                    j["v_cut_in"] = p.v_cut_in;
                    j["v_rated"] = p.v_rated;
                    j["v_cut_out"] = p.v_cut_out;
                    j["rated_mw"] = p.rated_power * base;
                } else {
                    j["type"] = "pv";
                    j["alpha"] = p.alpha;
                    j["beta"] = p.beta;
                    j["rated_mw"] = p.rated_power * base;
                }
            },
            s.params);
        if (s.corr_group) j["corr_group"] = *s.corr_group;
        doc["sources"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

std::uint64_t case_hash(const NetworkCase& c) { return io::fnv1a(serialize_case(c)); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace popf

#include <cmath>

#include "popf/errors.hpp"
#include "popf/oracle.hpp"

namespace popf {

using Eigen::Index;
using Eigen::VectorXd;

OperatingPoint apply_sample(const NetworkCase& c, const VectorXd& sample) {
    if (sample.size() != static_cast<Index>(c.n_source()))
        throw DimensionMismatch("sample length " + std::to_string(sample.size()) + " != source count " +
                                std::to_string(c.n_source()));
    const auto n = static_cast<Index>(c.n_bus());
    OperatingPoint op{VectorXd(n), VectorXd(n)};
    for (const auto& b : c.buses) {
        op.p_load(b.id) = b.p_load;
        op.q_load(b.id) = b.q_load;
    }
    for (std::size_t k = 0; k < c.n_source(); ++k) {
        const auto& s = c.sources[k];
        const double value = sample(static_cast<Index>(k));
        if (const auto* load = std::get_if<GaussianLoad>(&s.params)) {
            const double pf = load->power_factor;
            op.p_load(s.bus) += value;
            op.q_load(s.bus) += value * (std::sqrt(1.0 - pf * pf) / pf);
        } else {
            op.p_load(s.bus) -= value;
        }
    }
    return op;
}

VectorXd extract_features(const NetworkCase& c, const OperatingPoint& op) {
    const auto pq = c.pq_buses();
    const auto m = static_cast<Index>(pq.size());
    VectorXd x(2 * m);
    for (Index k = 0; k < m; ++k) {
        x(k) = -op.p_load(pq[static_cast<std::size_t>(k)]);
        x(m + k) = -op.q_load(pq[static_cast<std::size_t>(k)]);
    }
    return x;
}

VectorXd OpfSolution::to_vector() const {
    VectorXd y(1 + v_mag.size() + p_gen.size() + p_branch.size());
    y << cost, v_mag, p_gen, p_branch;
    return y;
}

OpfOracle::OpfOracle(const NetworkCase& c, PowerFlowOptions pf) : case_(c), pf_(c, pf), dispatch_(c) {
    const int slack = c.slack_bus();
    for (std::size_t g = 0; g < c.n_gen(); ++g) {
        if (c.generators[g].bus == slack) {
            slack_gen_ = static_cast<int>(g);
            break;
        }
    }
}

OpfSolution OpfOracle::solve(const VectorXd& sample) const {
    const OperatingPoint op = apply_sample(case_, sample);
    const DispatchSolution dispatch = dispatch_.solve(op.p_load);

    Injections inj{-op.p_load, -op.q_load};
    for (std::size_t g = 0; g < case_.n_gen(); ++g)
        inj.p(case_.generators[g].bus) += dispatch.p_gen(static_cast<Index>(g));
    const PowerFlowSolution pf = pf_.solve(inj);

    OpfSolution sol;
    sol.v_mag = pf.v_mag;
    sol.p_branch = pf.p_branch;
    sol.p_gen = dispatch.p_gen;
    // The first generator at the slack bus picks up the AC losses.
    const int slack = case_.slack_bus();
    const double slack_gen_total = pf.p_slack + op.p_load(slack);
    double dispatched_at_slack = 0.0;
    for (std::size_t g = 0; g < case_.n_gen(); ++g)
        if (case_.generators[g].bus == slack) dispatched_at_slack += dispatch.p_gen(static_cast<Index>(g));
    sol.p_gen(slack_gen_) += slack_gen_total - dispatched_at_slack;

    sol.cost = 0.0;
    for (std::size_t g = 0; g < case_.n_gen(); ++g)
        sol.cost += case_.generators[g].cost(sol.p_gen(static_cast<Index>(g)));
    return sol;
}

OpfSolution OpfOracle::solve_dc(const VectorXd& sample) const {
    const OperatingPoint op = apply_sample(case_, sample);
    const DispatchSolution dispatch = dispatch_.solve(op.p_load);
    OpfSolution sol;
    sol.cost = dispatch.cost;
    sol.v_mag = VectorXd::Ones(static_cast<Index>(case_.n_bus()));
    sol.p_gen = dispatch.p_gen;
    sol.p_branch = dispatch.p_branch;
    return sol;
}

OpfSolution oracle_opf(const NetworkCase& c, const VectorXd& sample) { return OpfOracle(c).solve(sample); }

}  // namespace popf

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "popf/grid.hpp"

namespace popf {

// Dense bus admittance matrix, per-unit.
using AdmittanceMatrix = Eigen::MatrixXcd;

AdmittanceMatrix build_ybus(const NetworkCase& c);

// Net per-bus injections (generation minus load), per-unit.
struct Injections {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 30;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    Eigen::VectorXd p_branch;  // sending-end active flow
    Eigen::VectorXd p_inj;     // computed active injection at every bus
    Eigen::VectorXd q_inj;
    double p_slack = 0.0;
    double q_slack = 0.0;
    double losses = 0.0;
    int iterations = 0;
    double max_mismatch = 0.0;
};

// Full Newton-Raphson on the polar mismatch equations. The solver keeps the
// admittance matrix and bus ordering, so repeated solves on one case skip the
// setup.
class PowerFlowSolver {
  public:
    explicit PowerFlowSolver(const NetworkCase& c, PowerFlowOptions opts = {});

    // Flat start unless `warm` is given. Throws NonConvergence or
    // SingularJacobian.
    PowerFlowSolution solve(const Injections& spec, const PowerFlowSolution* warm = nullptr) const;

    // Max |dP| over non-slack buses and |dQ| over PQ buses.
    double mismatch(const Injections& spec, const Eigen::VectorXd& v_mag,
                    const Eigen::VectorXd& v_ang) const;

    const AdmittanceMatrix& ybus() const { return ybus_; }

  private:
    const NetworkCase& case_;
    PowerFlowOptions opts_;
    AdmittanceMatrix ybus_;
    std::vector<int> pvpq_;  // buses with an angle unknown
    std::vector<int> pq_;    // buses with a magnitude unknown
};

PowerFlowSolution ac_power_flow(const NetworkCase& c, const Injections& spec,
                                PowerFlowOptions opts = {});

// Sending-end active flow of every branch for a given voltage profile.
Eigen::VectorXd branch_flows(const NetworkCase& c, const Eigen::VectorXd& v_mag,
                             const Eigen::VectorXd& v_ang);

// ---------------------------------------------------------------------------
// Dispatch

struct DispatchSolution {
    Eigen::VectorXd p_gen;
    double cost = 0.0;
    std::vector<std::string> binding;  // active inequality constraints
    Eigen::VectorXd p_branch;          // DC (PTDF) flows
    double balance_multiplier = 0.0;
    Eigen::VectorXd multipliers;  // one per inequality row, >= 0
    double kkt_residual = 0.0;
    int iterations = 0;
};

// Quadratic-cost dispatch under power balance, generator limits and
// PTDF-based branch limits. Inequality rows are ordered: generator lower
// bounds, generator upper bounds, branch +limit, branch -limit.
class DispatchModel {
  public:
    explicit DispatchModel(const NetworkCase& c);

    // `loads` is per-bus active load. Throws Infeasible.
    DispatchSolution solve(const Eigen::VectorXd& loads) const;

    const Eigen::MatrixXd& ptdf() const { return ptdf_; }
    Eigen::VectorXd flows(const Eigen::VectorXd& p_gen, const Eigen::VectorXd& loads) const;

    // Max of stationarity, primal feasibility, dual feasibility and
    // complementarity violations.
    double kkt_residual(const Eigen::VectorXd& loads, const DispatchSolution& s) const;

    std::string constraint_name(Eigen::Index row) const;

  private:
    void build_constraints(const Eigen::VectorXd& loads, Eigen::MatrixXd& g, Eigen::VectorXd& h) const;

    const NetworkCase& case_;
    Eigen::MatrixXd ptdf_;     // n_branch x n_bus, slack column zero
    Eigen::MatrixXd gen_map_;  // n_bus x n_gen incidence
    Eigen::VectorXd hess_diag_;
    Eigen::VectorXd lin_;
};

DispatchSolution dc_opf(const NetworkCase& c, const Eigen::VectorXd& loads);

// Result of a small convex QP  min 1/2 x'Hx + f'x  s.t.  Ax = b, Gx <= h.
struct QpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_multipliers;
    Eigen::VectorXd ineq_multipliers;
    std::vector<Eigen::Index> active;
    int iterations = 0;
};

// Primal active-set method for a positive semidefinite H, starting from a
// feasible x0. Zero-curvature directions are followed to the nearest blocking
// constraint; the feasible set must be bounded along them. Ties in
// constraint selection go to the lowest row index.
QpResult solve_convex_qp(const Eigen::MatrixXd& hess, const Eigen::VectorXd& lin,
                         const Eigen::MatrixXd& a_eq, const Eigen::VectorXd& b_eq,
                         const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                         const Eigen::VectorXd& x0, int max_iter = 500);

// ---------------------------------------------------------------------------
// Oracle

// Bus loads after applying one realized sample of every stochastic source.
struct OperatingPoint {
    Eigen::VectorXd p_load;
    Eigen::VectorXd q_load;
};

OperatingPoint apply_sample(const NetworkCase& c, const Eigen::VectorXd& sample);

// Surrogate input: active injections of PQ buses followed by their reactive
// injections.
Eigen::VectorXd extract_features(const NetworkCase& c, const OperatingPoint& op);

struct OpfSolution {
    double cost = 0.0;
    Eigen::VectorXd v_mag;
    Eigen::VectorXd p_gen;
    Eigen::VectorXd p_branch;

    Eigen::VectorXd to_vector() const;
};

// DC dispatch followed by an AC power flow in which the slack absorbs losses.
// The cost is recomputed from the final generator outputs.
class OpfOracle {
  public:
    explicit OpfOracle(const NetworkCase& c, PowerFlowOptions pf = {});

    OpfSolution solve(const Eigen::VectorXd& sample) const;
    // DC-only analog: dispatch cost and PTDF flows, voltages flat at 1.0 pu.
    OpfSolution solve_dc(const Eigen::VectorXd& sample) const;

    const NetworkCase& network() const { return case_; }
    const PowerFlowSolver& power_flow() const { return pf_; }
    const DispatchModel& dispatch() const { return dispatch_; }

  private:
    const NetworkCase& case_;
    PowerFlowSolver pf_;
    DispatchModel dispatch_;
    int slack_gen_ = -1;
};

OpfSolution oracle_opf(const NetworkCase& c, const Eigen::VectorXd& sample);

}  // namespace popf

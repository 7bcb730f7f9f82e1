#include <cmath>
#include <complex>
#include <limits>

#include "popf/errors.hpp"
#include "popf/oracle.hpp"

namespace popf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

AdmittanceMatrix build_ybus(const NetworkCase& c) {
    const auto n = static_cast<Index>(c.n_bus());
    AdmittanceMatrix y = AdmittanceMatrix::Zero(n, n);
    for (const auto& br : c.branches) {
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const cplx half_shunt(0.0, br.b_sh / 2.0);
        const Index f = br.from_bus, t = br.to_bus;
        y(f, f) += ys + half_shunt;
        y(t, t) += ys + half_shunt;
        y(f, t) -= ys;
        y(t, f) -= ys;
    }
    return y;
}

VectorXd branch_flows(const NetworkCase& c, const VectorXd& v_mag, const VectorXd& v_ang) {
    VectorXd flows(static_cast<Index>(c.n_branch()));
    for (std::size_t l = 0; l < c.n_branch(); ++l) {
        const auto& br = c.branches[l];
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const double vf = v_mag(br.from_bus), vt = v_mag(br.to_bus);
        const double dth = v_ang(br.from_bus) - v_ang(br.to_bus);
        // Line charging is purely reactive and drops out of the active flow.
        flows(static_cast<Index>(l)) =
            vf * vf * ys.real() - vf * vt * (ys.real() * std::cos(dth) + ys.imag() * std::sin(dth));
    }
    return flows;
}

PowerFlowSolver::PowerFlowSolver(const NetworkCase& c, PowerFlowOptions opts)
    : case_(c), opts_(opts), ybus_(build_ybus(c)) {
    for (const auto& b : c.buses) {
        if (b.kind != BusKind::Slack) pvpq_.push_back(b.id);
        if (b.kind == BusKind::PQ) pq_.push_back(b.id);
    }
}

namespace {

VectorXcd phasors(const VectorXd& v_mag, const VectorXd& v_ang) {
    VectorXcd v(v_mag.size());
    for (Index i = 0; i < v.size(); ++i) v(i) = std::polar(v_mag(i), v_ang(i));
    return v;
}

}  // namespace

double PowerFlowSolver::mismatch(const Injections& spec, const VectorXd& v_mag,
                                 const VectorXd& v_ang) const {
    const VectorXcd v = phasors(v_mag, v_ang);
    const VectorXcd s = v.cwiseProduct((ybus_ * v).conjugate());
    double worst = 0.0;
    for (int i : pvpq_) worst = std::max(worst, std::abs(s(i).real() - spec.p(i)));
    for (int i : pq_) worst = std::max(worst, std::abs(s(i).imag() - spec.q(i)));
    return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

PowerFlowSolution PowerFlowSolver::solve(const Injections& spec, const PowerFlowSolution* warm) const {
    const auto n = static_cast<Index>(case_.n_bus());
    if (spec.p.size() != n || spec.q.size() != n)
        throw DimensionMismatch("power flow: injections must have one entry per bus");

    VectorXd vm(n), va(n);
    if (warm) {
        vm = warm->v_mag;
        va = warm->v_ang;
    } else {
        vm.setOnes();
        va.setZero();
    }
    for (const auto& b : case_.buses)
        if (b.kind != BusKind::PQ) vm(b.id) = b.v_set;
    va(case_.slack_bus()) = 0.0;

    const auto npvpq = static_cast<Index>(pvpq_.size());
    const auto npq = static_cast<Index>(pq_.size());
    const Index dim = npvpq + npq;

    std::vector<Index> pq_pos(static_cast<std::size_t>(n), -1);
    for (Index k = 0; k < npq; ++k) pq_pos[static_cast<std::size_t>(pq_[k])] = k;

    VectorXd f(dim);
    MatrixXd jac(dim, dim);
    int iter = 0;
    double worst = 0.0;
    while (true) {
        const VectorXcd v = phasors(vm, va);
        const VectorXcd ibus = ybus_ * v;
        const VectorXcd s = v.cwiseProduct(ibus.conjugate());

        worst = 0.0;
        for (Index k = 0; k < npvpq; ++k) {
            const int i = pvpq_[k];
            f(k) = s(i).real() - spec.p(i);
            worst = std::max(worst, std::abs(f(k)));
        }
        for (Index k = 0; k < npq; ++k) {
            const int i = pq_[k];
            f(npvpq + k) = s(i).imag() - spec.q(i);
            worst = std::max(worst, std::abs(f(npvpq + k)));
        }
        if (!std::isfinite(worst)) throw NonConvergence(iter, std::numeric_limits<double>::infinity());
        if (worst <= opts_.tol) break;
        if (iter >= opts_.max_iter) throw NonConvergence(iter, worst);

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        auto ds_dva = [&](Index i, Index k) {
            cplx term = -ybus_(i, k) * v(k);
            if (i == k) term += ibus(i);
            return cplx(0.0, 1.0) * v(i) * std::conj(term);
        };
        auto ds_dvm = [&](Index i, Index k) {
            const cplx unit_k = v(k) / vm(k);
            cplx d = v(i) * std::conj(ybus_(i, k) * unit_k);
            if (i == k) d += std::conj(ibus(i)) * unit_k;
            return d;
        };
        for (Index r = 0; r < npvpq; ++r) {
            const Index i = pvpq_[r];
            for (Index col = 0; col < npvpq; ++col) jac(r, col) = ds_dva(i, pvpq_[col]).real();
            for (Index col = 0; col < npq; ++col) jac(r, npvpq + col) = ds_dvm(i, pq_[col]).real();
        }
        for (Index r = 0; r < npq; ++r) {
            const Index i = pq_[r];
            for (Index col = 0; col < npvpq; ++col) jac(npvpq + r, col) = ds_dva(i, pvpq_[col]).imag();
            for (Index col = 0; col < npq; ++col)
                jac(npvpq + r, npvpq + col) = ds_dvm(i, pq_[col]).imag();
        }

        Eigen::PartialPivLU<MatrixXd> lu(jac);
        if (!(lu.rcond() > 1e-14)) throw SingularJacobian(iter);
        const VectorXd dx = lu.solve(-f);
        for (Index k = 0; k < npvpq; ++k) va(pvpq_[k]) += dx(k);
        for (Index k = 0; k < npq; ++k) vm(pq_[k]) += dx(npvpq + k);
        ++iter;
    }

    PowerFlowSolution sol;
    sol.v_mag = vm;
    sol.v_ang = va;
    const VectorXcd v = phasors(vm, va);
    const VectorXcd s = v.cwiseProduct((ybus_ * v).conjugate());
    sol.p_inj = s.real();
    sol.q_inj = s.imag();
    const int slack = case_.slack_bus();
    sol.p_slack = s(slack).real();
    sol.q_slack = s(slack).imag();
    sol.p_branch = branch_flows(case_, vm, va);
    sol.losses = sol.p_inj.sum();
    sol.iterations = iter;
    sol.max_mismatch = worst;
    return sol;
}

PowerFlowSolution ac_power_flow(const NetworkCase& c, const Injections& spec, PowerFlowOptions opts) {
    return PowerFlowSolver(c, opts).solve(spec);
}

}  // namespace popf

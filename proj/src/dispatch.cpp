#include <algorithm>
#include <cmath>
#include <limits>

#include "popf/errors.hpp"
#include "popf/oracle.hpp"

namespace popf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kStepTol = 1e-12;
constexpr double kMultiplierTol = 1e-10;

MatrixXd stack_rows(const MatrixXd& a_eq, const MatrixXd& g, const std::vector<Index>& active) {
    MatrixXd a(a_eq.rows() + static_cast<Index>(active.size()), a_eq.cols());
    a.topRows(a_eq.rows()) = a_eq;
    for (std::size_t k = 0; k < active.size(); ++k)
        a.row(a_eq.rows() + static_cast<Index>(k)) = g.row(active[k]);
    return a;
}

// Orthonormal basis of the null space of `a` (rows assumed independent).
MatrixXd null_space(const MatrixXd& a, Index n) {
    if (a.rows() == 0) return MatrixXd::Identity(n, n);
    if (a.rows() >= n) return MatrixXd(n, 0);
    Eigen::HouseholderQR<MatrixXd> qr(a.transpose());
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
    return q.rightCols(n - a.rows());
}

}  // namespace

QpResult solve_convex_qp(const MatrixXd& hess, const VectorXd& lin, const MatrixXd& a_eq,
                         const VectorXd& b_eq, const MatrixXd& g, const VectorXd& h,
                         const VectorXd& x0, int max_iter) {
    const Index n = x0.size();
    if (a_eq.rows() > 0 && (a_eq * x0 - b_eq).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, b_eq.cwiseAbs().maxCoeff()))
        throw Error("quadratic program: starting point violates the equality constraints");
    QpResult res;
    res.x = x0;
    std::vector<Index> active;
    std::vector<char> in_set(static_cast<std::size_t>(g.rows()), 0);

    for (int iter = 0; iter < max_iter; ++iter) {
        res.iterations = iter + 1;
        const VectorXd grad = hess * res.x + lin;
        const MatrixXd z = null_space(stack_rows(a_eq, g, active), n);

        VectorXd d = VectorXd::Zero(n);
        bool newton = true;
        if (z.cols() > 0) {
            const MatrixXd hr = z.transpose() * hess * z;
            const VectorXd gr = z.transpose() * grad;
            Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hr);
            const VectorXd lam = eig.eigenvalues();
            const MatrixXd u = eig.eigenvectors();
            const VectorXd c = u.transpose() * gr;
            const double curv_tol = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
            const double grad_tol = 1e-12 * std::max(1.0, grad.cwiseAbs().maxCoeff());

            VectorXd flat = VectorXd::Zero(c.size());
            for (Index k = 0; k < c.size(); ++k)
                if (lam(k) <= curv_tol && std::abs(c(k)) > grad_tol) flat(k) = c(k);
            if (flat.squaredNorm() > 0.0) {
                // Linear descent along zero curvature: go to the nearest wall.
                d = -z * (u * flat);
                newton = false;
            } else {
                VectorXd step = VectorXd::Zero(c.size());
                for (Index k = 0; k < c.size(); ++k)
                    if (lam(k) > curv_tol) step(k) = c(k) / lam(k);
                d = -z * (u * step);
            }
        }

        const double scale = std::max(1.0, res.x.cwiseAbs().maxCoeff());
        if (newton && d.cwiseAbs().maxCoeff() <= kStepTol * scale) {
            // Stationary on the working set: check inequality multipliers.
            const MatrixXd a = stack_rows(a_eq, g, active);
            VectorXd mu = VectorXd::Zero(a.rows());
            if (a.rows() > 0) mu = a.transpose().colPivHouseholderQr().solve(-grad);
            Index drop = -1;
            double most_negative = -kMultiplierTol * std::max(1.0, grad.cwiseAbs().maxCoeff());
            for (std::size_t k = 0; k < active.size(); ++k) {
                const double m = mu(a_eq.rows() + static_cast<Index>(k));
                if (m < most_negative ||
                    (drop >= 0 && m == most_negative && active[k] < active[static_cast<std::size_t>(drop)])) {
                    most_negative = m;
                    drop = static_cast<Index>(k);
                }
            }
            if (drop < 0) {
                res.eq_multipliers = mu.head(a_eq.rows());
                res.ineq_multipliers = VectorXd::Zero(g.rows());
                for (std::size_t k = 0; k < active.size(); ++k)
                    res.ineq_multipliers(active[k]) =
                        std::max(0.0, mu(a_eq.rows() + static_cast<Index>(k)));
                res.active = active;
                std::sort(res.active.begin(), res.active.end());
                return res;
            }
            in_set[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
            active.erase(active.begin() + drop);
            continue;
        }

        double alpha = newton ? 1.0 : std::numeric_limits<double>::infinity();
        Index blocking = -1;
        const VectorXd gd = g * d;
        const VectorXd slack = h - g * res.x;
        for (Index i = 0; i < g.rows(); ++i) {
            if (in_set[static_cast<std::size_t>(i)]) continue;
            const double tol = kStepTol * std::max(1.0, g.row(i).cwiseAbs().maxCoeff()) * d.norm();
            if (gd(i) <= tol) continue;
            const double a = std::max(0.0, slack(i)) / gd(i);
            if (a < alpha) {
                alpha = a;
                blocking = i;
            }
        }
        if (!std::isfinite(alpha)) throw Error("quadratic program unbounded along a zero-curvature direction");
        res.x += alpha * d;
        if (blocking >= 0) {
            active.push_back(blocking);
            in_set[static_cast<std::size_t>(blocking)] = 1;
        }
    }
    throw Error("active-set iteration limit reached");
}

// ---------------------------------------------------------------------------

DispatchModel::DispatchModel(const NetworkCase& c) : case_(c) {
    const auto nb = static_cast<Index>(c.n_bus());
    const auto nl = static_cast<Index>(c.n_branch());
    const auto ng = static_cast<Index>(c.n_gen());
    const int slack = c.slack_bus();

    // Reduced DC susceptance matrix, slack row/column removed.
    MatrixXd bbus = MatrixXd::Zero(nb, nb);
    MatrixXd bf = MatrixXd::Zero(nl, nb);
    for (Index l = 0; l < nl; ++l) {
        const auto& br = c.branches[static_cast<std::size_t>(l)];
        const double b = 1.0 / br.x;
        bbus(br.from_bus, br.from_bus) += b;
        bbus(br.to_bus, br.to_bus) += b;
        bbus(br.from_bus, br.to_bus) -= b;
        bbus(br.to_bus, br.from_bus) -= b;
        bf(l, br.from_bus) = b;
        bf(l, br.to_bus) = -b;
    }
    std::vector<Index> keep;
    for (Index i = 0; i < nb; ++i)
        if (i != slack) keep.push_back(i);
    const auto nk = static_cast<Index>(keep.size());
    MatrixXd bred(nk, nk);
    MatrixXd bfred(nl, nk);
    for (Index r = 0; r < nk; ++r) {
        for (Index col = 0; col < nk; ++col) bred(r, col) = bbus(keep[r], keep[col]);
    }
    for (Index col = 0; col < nk; ++col) bfred.col(col) = bf.col(keep[col]);

    ptdf_ = MatrixXd::Zero(nl, nb);
    if (nk > 0) {
        const MatrixXd red = bfred * bred.partialPivLu().inverse();
        for (Index col = 0; col < nk; ++col) ptdf_.col(keep[col]) = red.col(col);
    }

    gen_map_ = MatrixXd::Zero(nb, ng);
    hess_diag_.resize(ng);
    lin_.resize(ng);
    for (Index k = 0; k < ng; ++k) {
        const auto& gen = c.generators[static_cast<std::size_t>(k)];
        gen_map_(gen.bus, k) = 1.0;
        hess_diag_(k) = 2.0 * gen.cost_a;
        lin_(k) = gen.cost_b;
    }
}

VectorXd DispatchModel::flows(const VectorXd& p_gen, const VectorXd& loads) const {
    return ptdf_ * (gen_map_ * p_gen - loads);
}

void DispatchModel::build_constraints(const VectorXd& loads, MatrixXd& g, VectorXd& h) const {
    const auto ng = static_cast<Index>(case_.n_gen());
    const auto nl = static_cast<Index>(case_.n_branch());
    g = MatrixXd::Zero(2 * ng + 2 * nl, ng);
    h.resize(2 * ng + 2 * nl);
    for (Index k = 0; k < ng; ++k) {
        const auto& gen = case_.generators[static_cast<std::size_t>(k)];
        g(k, k) = -1.0;
        h(k) = -gen.p_min;
        g(ng + k, k) = 1.0;
        h(ng + k) = gen.p_max;
    }
    const MatrixXd sens = ptdf_ * gen_map_;
    const VectorXd base = ptdf_ * loads;
    for (Index l = 0; l < nl; ++l) {
        const double lim = case_.branches[static_cast<std::size_t>(l)].p_limit;
        g.row(2 * ng + l) = sens.row(l);
        h(2 * ng + l) = lim + base(l);
        g.row(2 * ng + nl + l) = -sens.row(l);
        h(2 * ng + nl + l) = lim - base(l);
    }
}

std::string DispatchModel::constraint_name(Index row) const {
    const auto ng = static_cast<Index>(case_.n_gen());
    const auto nl = static_cast<Index>(case_.n_branch());
    if (row < ng) return "generator " + std::to_string(row) + " p_min";
    if (row < 2 * ng) return "generator " + std::to_string(row - ng) + " p_max";
    if (row < 2 * ng + nl) return "branch " + std::to_string(row - 2 * ng) + " +limit";
    return "branch " + std::to_string(row - 2 * ng - nl) + " -limit";
}

DispatchSolution DispatchModel::solve(const VectorXd& loads) const {
    const auto ng = static_cast<Index>(case_.n_gen());
    const auto nl = static_cast<Index>(case_.n_branch());
    if (loads.size() != static_cast<Index>(case_.n_bus()))
        throw DimensionMismatch("dispatch: loads must have one entry per bus");
    const double total = loads.sum();

    VectorXd pmin(ng), pmax(ng);
    for (Index k = 0; k < ng; ++k) {
        pmin(k) = case_.generators[static_cast<std::size_t>(k)].p_min;
        pmax(k) = case_.generators[static_cast<std::size_t>(k)].p_max;
    }
    if (total > pmax.sum() + 1e-12) throw Infeasible({"power balance (load above total p_max)"});
    if (total < pmin.sum() - 1e-12) throw Infeasible({"power balance (load below total p_min)"});

    MatrixXd g;
    VectorXd h;
    build_constraints(loads, g, h);
    const MatrixXd a_eq = MatrixXd::Ones(1, ng);
    const VectorXd b_eq = VectorXd::Constant(1, total);

    // Generation-proportional starting point inside the generator box.
    const double span = pmax.sum() - pmin.sum();
    const double frac = span > 0.0 ? std::clamp((total - pmin.sum()) / span, 0.0, 1.0) : 0.0;
    VectorXd x0 = pmin + frac * (pmax - pmin);

    // Phase one over (p, t): minimize t with branch rows relaxed by t.
    const VectorXd line_slack = g.bottomRows(2 * nl) * x0 - h.tail(2 * nl);
    const double t0 = std::max(0.0, line_slack.size() ? line_slack.maxCoeff() : 0.0);
    if (t0 > 0.0) {
        MatrixXd g1 = MatrixXd::Zero(g.rows() + 1, ng + 1);
        g1.topLeftCorner(g.rows(), ng) = g;
        g1.block(2 * ng, ng, 2 * nl, 1).setConstant(-1.0);
        g1(g.rows(), ng) = -1.0;  // t >= 0
        VectorXd h1(g.rows() + 1);
        h1 << h, 0.0;
        MatrixXd a1 = MatrixXd::Zero(1, ng + 1);
        a1.leftCols(ng).setOnes();
        VectorXd f1 = VectorXd::Zero(ng + 1);
        f1(ng) = 1.0;
        VectorXd start(ng + 1);
        start << x0, t0;
        const QpResult phase1 =
            solve_convex_qp(MatrixXd::Zero(ng + 1, ng + 1), f1, a1, b_eq, g1, h1, start);
        if (phase1.x(ng) > 1e-9) {
            std::vector<std::string> violated;
            const VectorXd viol = g * phase1.x.head(ng) - h;
            for (Index i = 2 * ng; i < g.rows(); ++i)
                if (viol(i) > 1e-9) violated.push_back(constraint_name(i));
            throw Infeasible(violated);
        }
        x0 = phase1.x.head(ng);
    }

    const MatrixXd hess = hess_diag_.asDiagonal();
    const QpResult qp = solve_convex_qp(hess, lin_, a_eq, b_eq, g, h, x0);

    DispatchSolution sol;
    sol.p_gen = qp.x;
    sol.cost = 0.0;
    for (Index k = 0; k < ng; ++k) sol.cost += case_.generators[static_cast<std::size_t>(k)].cost(qp.x(k));
    for (Index row : qp.active) sol.binding.push_back(constraint_name(row));
    sol.p_branch = flows(qp.x, loads);
    sol.balance_multiplier = qp.eq_multipliers.size() ? qp.eq_multipliers(0) : 0.0;
    sol.multipliers = qp.ineq_multipliers;
    sol.iterations = qp.iterations;
    sol.kkt_residual = kkt_residual(loads, sol);
    return sol;
}

double DispatchModel::kkt_residual(const VectorXd& loads, const DispatchSolution& s) const {
    MatrixXd g;
    VectorXd h;
    build_constraints(loads, g, h);
    const VectorXd grad = hess_diag_.cwiseProduct(s.p_gen) + lin_;
    const VectorXd stationarity =
        grad + VectorXd::Constant(grad.size(), s.balance_multiplier) + g.transpose() * s.multipliers;
    const VectorXd gap = g * s.p_gen - h;
    double r = stationarity.cwiseAbs().maxCoeff();
    r = std::max(r, std::abs(s.p_gen.sum() - loads.sum()));
    r = std::max(r, gap.maxCoeff() > 0.0 ? gap.maxCoeff() : 0.0);
    r = std::max(r, (-s.multipliers).maxCoeff() > 0.0 ? (-s.multipliers).maxCoeff() : 0.0);
    r = std::max(r, s.multipliers.cwiseProduct(gap).cwiseAbs().maxCoeff());
    return r;
}

DispatchSolution dc_opf(const NetworkCase& c, const VectorXd& loads) {
    return DispatchModel(c).solve(loads);
}

}  // namespace popf

#include <algorithm>
#include <cmath>

#include "popf/errors.hpp"
#include "popf/pipeline.hpp"

namespace popf {

using Eigen::ArrayXd;
using Eigen::Index;

VectorXd Density::centers() const {
    VectorXd c(density.size());
    for (Index i = 0; i < c.size(); ++i) c(i) = 0.5 * (edges(i) + edges(i + 1));
    return c;
}

double Density::integral() const {
    double total = 0.0;
    for (Index i = 0; i < density.size(); ++i) total += density(i) * (edges(i + 1) - edges(i));
    return total;
}

Density histogram(const VectorXd& values, std::size_t bins, double lo, double hi) {
    if (bins < 1) throw Error("histogram: bins must be at least 1");
    if (values.size() == 0) throw Error("histogram: no values");
    Density d;
    if (!(hi > lo)) {
        d.degenerate = true;
        d.edges = (VectorXd(2) << lo - 0.5, lo + 0.5).finished();
        d.density = VectorXd::Ones(1);
        return d;
    }
    const auto nb = static_cast<Index>(bins);
    d.edges.resize(nb + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (Index i = 0; i <= nb; ++i) d.edges(i) = lo + width * static_cast<double>(i);
    d.edges(nb) = hi;
    VectorXd counts = VectorXd::Zero(nb);
    for (Index i = 0; i < values.size(); ++i) {
        auto k = static_cast<Index>(std::floor((values(i) - lo) / width));
        counts(std::clamp<Index>(k, 0, nb - 1)) += 1.0;
    }
    d.density.resize(nb);
    const double n = static_cast<double>(values.size());
    for (Index i = 0; i < nb; ++i) d.density(i) = counts(i) / (n * (d.edges(i + 1) - d.edges(i)));
    return d;
}

std::vector<IndexStatistics> compute_statistics(const MatrixXd& values, std::size_t bins) {
    if (values.rows() < 1) throw Error("statistics: no samples");
    std::vector<IndexStatistics> out;
    out.reserve(static_cast<std::size_t>(values.cols()));
    const auto n = static_cast<double>(values.rows());
    for (Index j = 0; j < values.cols(); ++j) {
        const VectorXd col = values.col(j);
        IndexStatistics s;
        s.mean = col.mean();
        if (values.rows() >= 2) {
            s.std = std::sqrt((col.array() - s.mean).square().sum() / (n - 1.0));
        } else {
            s.std = 0.0;
            s.std_defined = false;
        }
        s.density = histogram(col, bins, col.minCoeff(), col.maxCoeff());
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

enum class IndexClass { Cost, Voltage, Generator, Branch };

IndexClass classify(const OutputLayout& layout, std::size_t i) {
    if (i == 0) return IndexClass::Cost;
    if (i < 1 + layout.n_bus) return IndexClass::Voltage;
    if (i < 1 + layout.n_bus + layout.n_gen) return IndexClass::Generator;
    return IndexClass::Branch;
}

double sample_std(const VectorXd& col) {
    if (col.size() < 2) return 0.0;
    return std::sqrt((col.array() - col.mean()).square().sum() / static_cast<double>(col.size() - 1));
}

}  // namespace

ErrorMetrics error_metrics(const MatrixXd& reference, const MatrixXd& candidate, const OutputLayout& layout,
                           double base_mva, const ExceedanceThresholds& t) {
    if (reference.rows() != candidate.rows() || reference.cols() != candidate.cols())
        throw DimensionMismatch("error metrics need seed-matched sample sets of equal shape");
    if (static_cast<std::size_t>(reference.cols()) != layout.size())
        throw DimensionMismatch("error metrics: output width does not match layout");
    if (reference.rows() == 0) throw Error("error metrics: no samples");

    const Index d = reference.cols();
    ErrorMetrics m;
    m.e1.resize(d);
    m.e2.resize(d);
    m.e1_absolute.assign(static_cast<std::size_t>(d), false);
    m.e2_absolute.assign(static_cast<std::size_t>(d), false);
    m.per_index.resize(d, 2);

    const double gen_pu = t.generator_mw / base_mva;
    const double branch_pu = t.branch_mw / base_mva;
    double exceed[6] = {0, 0, 0, 0, 0, 0};
    double pooled_count[4] = {0, 0, 0, 0};  // samples per class

    for (Index j = 0; j < d; ++j) {
        const VectorXd ref = reference.col(j);
        const VectorXd cand = candidate.col(j);
        const double mean0 = ref.mean(), mean1 = cand.mean();
        const double std0 = sample_std(ref), std1 = sample_std(cand);
        if (std::abs(mean0) < 1e-12) {
            m.e1(j) = std::abs(mean1 - mean0);
            m.e1_absolute[static_cast<std::size_t>(j)] = true;
        } else {
            m.e1(j) = std::abs(mean1 - mean0) / std::abs(mean0);
        }
        if (std0 < 1e-12) {
            m.e2(j) = std::abs(std1 - std0);
            m.e2_absolute[static_cast<std::size_t>(j)] = true;
        } else {
            m.e2(j) = std::abs(std1 - std0) / std0;
        }

        const ArrayXd err = (cand - ref).cwiseAbs().array();
        const double n = static_cast<double>(err.size());
        const auto cls = classify(layout, static_cast<std::size_t>(j));
        double tau1 = 0.0, tau2 = 0.0;
        switch (cls) {
            case IndexClass::Voltage: tau1 = t.voltage_coarse; tau2 = t.voltage_fine; break;
            case IndexClass::Generator: tau1 = tau2 = gen_pu; break;
            case IndexClass::Branch: tau1 = tau2 = branch_pu; break;
            case IndexClass::Cost: tau1 = t.cost_fine; tau2 = t.cost_coarse; break;
        }
        const double over1 = (err > tau1).count(), over2 = (err > tau2).count();
        m.per_index(j, 0) = over1 / n;
        m.per_index(j, 1) = over2 / n;
        switch (cls) {
            case IndexClass::Voltage: exceed[0] += over1; exceed[1] += over2; pooled_count[0] += n; break;
            case IndexClass::Generator: exceed[2] += over1; pooled_count[1] += n; break;
            case IndexClass::Branch: exceed[3] += over1; pooled_count[2] += n; break;
            case IndexClass::Cost: exceed[4] += over1; exceed[5] += over2; pooled_count[3] += n; break;
        }
    }
    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
    m.pooled.p_ev1 = ratio(exceed[0], pooled_count[0]);
    m.pooled.p_ev2 = ratio(exceed[1], pooled_count[0]);
    m.pooled.p_eg = ratio(exceed[2], pooled_count[1]);
    m.pooled.p_eb = ratio(exceed[3], pooled_count[2]);
    m.pooled.p_ef1 = ratio(exceed[4], pooled_count[3]);
    m.pooled.p_ef2 = ratio(exceed[5], pooled_count[3]);
    return m;
}

}  // namespace popf

#include "popf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>
#include <json.hpp>

#include "popf/errors.hpp"
#include "popf/io.hpp"

namespace popf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

NormalStream::NormalStream(std::uint64_t seed, std::size_t columns) {
    columns_.reserve(columns);
    for (std::size_t j = 0; j < columns; ++j)
        columns_.push_back({std::mt19937_64(splitmix64(seed + j * 0x9E3779B97F4A7C15ULL))});
}

double NormalStream::draw(Column& col) {
    if (col.has_spare) {
        col.has_spare = false;
        return col.spare;
    }
    // u1 in (0, 1], u2 in [0, 1), both on a 2^-53 grid.
    const double u1 = (static_cast<double>(col.engine() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(col.engine() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    col.spare = r * std::sin(theta);
    col.has_spare = true;
    return r * std::cos(theta);
}

MatrixXd NormalStream::next(std::size_t rows) {
    MatrixXd z(static_cast<Index>(rows), static_cast<Index>(columns_.size()));
    for (std::size_t j = 0; j < columns_.size(); ++j)
        for (std::size_t i = 0; i < rows; ++i)
            z(static_cast<Index>(i), static_cast<Index>(j)) = draw(columns_[j]);
    return z;
}

MatrixXd draw_standard_normals(std::size_t n, std::size_t d, std::uint64_t seed) {
    return NormalStream(seed, d).next(n);
}

CorrelationSpec parse_correlation_spec(const NetworkCase& c, std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("not a JSON document: ") + e.what());
    }
    CorrelationSpec spec;
    if (!doc.contains("groups")) return spec;
    if (!doc["groups"].is_object()) throw SchemaError("groups", "expected an object");
    for (const auto& [label, rows] : doc["groups"].items()) {
        const std::string path = "groups." + label;
        CorrelationGroup g;
        g.name = label;
        for (std::size_t k = 0; k < c.n_source(); ++k)
            if (c.sources[k].corr_group == label) g.columns.push_back(k);
        if (g.columns.empty()) throw SchemaError(path, "no source carries this corr_group");
        const auto m = static_cast<Index>(g.columns.size());
        if (!rows.is_array() || static_cast<Index>(rows.size()) != m)
            throw SchemaError(path, "expected a " + std::to_string(m) + "x" + std::to_string(m) + " matrix");
        g.corr.resize(m, m);
        for (Index i = 0; i < m; ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (!row.is_array() || static_cast<Index>(row.size()) != m)
                throw SchemaError(path + "[" + std::to_string(i) + "]", "row length must be " + std::to_string(m));
            for (Index j = 0; j < m; ++j) {
                const auto& cell = row[static_cast<std::size_t>(j)];
                if (!cell.is_number()) throw SchemaError(path, "expected numbers");
                g.corr(i, j) = cell.get<double>();
            }
        }
        for (Index i = 0; i < m; ++i) {
            if (std::abs(g.corr(i, i) - 1.0) > 1e-12) throw SchemaError(path, "diagonal must be 1");
            for (Index j = 0; j < i; ++j)
                if (std::abs(g.corr(i, j) - g.corr(j, i)) > 1e-12) throw SchemaError(path, "matrix must be symmetric");
        }
        if (g.corr.llt().info() != Eigen::Success) throw NotPositiveDefinite(label);
        spec.groups.push_back(std::move(g));
    }
    return spec;
}

MatrixXd correlate(const MatrixXd& z, const CorrelationSpec& spec) {
    MatrixXd out = z;
    for (const auto& g : spec.groups) {
        Eigen::LLT<MatrixXd> llt(g.corr);
        if (llt.info() != Eigen::Success) throw NotPositiveDefinite(g.name);
        const MatrixXd lower = llt.matrixL();
        const auto m = static_cast<Index>(g.columns.size());
        if (lower.rows() != m) throw DimensionMismatch("correlation group '" + g.name + "' size mismatch");
        MatrixXd block(z.rows(), m);
        for (Index k = 0; k < m; ++k) {
            if (static_cast<Index>(g.columns[static_cast<std::size_t>(k)]) >= z.cols())
                throw DimensionMismatch("correlation group '" + g.name + "' column out of range");
            block.col(k) = z.col(static_cast<Index>(g.columns[static_cast<std::size_t>(k)]));
        }
        const MatrixXd mixed = block * lower.transpose();
        for (Index k = 0; k < m; ++k) out.col(static_cast<Index>(g.columns[static_cast<std::size_t>(k)])) = mixed.col(k);
    }
    return out;
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double wind_power(const WindFarm& w, double speed) {
    if (speed < w.v_cut_in || speed >= w.v_cut_out) return 0.0;
    if (speed >= w.v_rated) return w.rated_power;
    const double r = speed / w.v_rated;
    return std::clamp(w.rated_power * r * r * r, 0.0, w.rated_power);
}

double transform_marginal(double z, const StochasticSource& source) {
    return std::visit(
        [z](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianLoad>) {
                return p.mean + p.std * z;
            } else if constexpr (std::is_same_v<T, WindFarm>) {
                const double u = standard_normal_cdf(z);
                // Weibull inverse CDF; the upper tail maps past cut-out.
                const double tail = -std::log1p(-u);
                const double speed = std::isfinite(tail) ? p.scale * std::pow(tail, 1.0 / p.shape)
                                                         : std::numeric_limits<double>::infinity();
                return wind_power(p, speed);
            } else {
                const double u = standard_normal_cdf(z);
                if (u <= 0.0) return 0.0;
                if (u >= 1.0) return p.rated_power;
                return boost::math::ibeta_inv(p.alpha, p.beta, u) * p.rated_power;
            }
        },
        source.params);
}

std::vector<std::string> source_column_names(const NetworkCase& c) {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < c.n_source(); ++k) {
        static constexpr const char* kinds[] = {"load", "wind", "pv"};
        names.push_back("s" + std::to_string(k) + "_" + kinds[c.sources[k].params.index()] + "_bus" +
                        std::to_string(c.sources[k].bus));
    }
    return names;
}

OperatingConditionSampler::OperatingConditionSampler(const NetworkCase& c, CorrelationSpec spec,
                                                     std::uint64_t seed)
    : case_(c), spec_(std::move(spec)), normals_(seed, c.n_source()) {}

MatrixXd OperatingConditionSampler::next(std::size_t rows) {
    MatrixXd z = correlate(normals_.next(rows), spec_);
    for (Index j = 0; j < z.cols(); ++j) {
        const auto& src = case_.sources[static_cast<std::size_t>(j)];
        for (Index i = 0; i < z.rows(); ++i) z(i, j) = transform_marginal(z(i, j), src);
    }
    return z;
}

SampleMatrix sample_operating_conditions(const NetworkCase& c, std::size_t n, const CorrelationSpec& spec,
                                         std::uint64_t seed) {
    SampleMatrix s;
    s.values = OperatingConditionSampler(c, spec, seed).next(n);
    s.seed = seed;
    s.columns = source_column_names(c);
    return s;
}

void write_sample_matrix(const SampleMatrix& s, const std::string& csv_path, const std::string& sidecar_path) {
    io::write_file_atomic(csv_path, io::to_csv(s.columns, s.values));
    json meta = {{"seed", s.seed}, {"n_samples", s.values.rows()}, {"columns", s.columns}};
    io::write_file_atomic(sidecar_path, meta.dump(2) + "\n");
}

SampleMatrix read_sample_matrix(const std::string& csv_path, const std::string& sidecar_path) {
    auto table = io::parse_csv(io::read_file(csv_path));
    json meta;
    try {
        meta = json::parse(io::read_file(sidecar_path));
    } catch (const json::parse_error& e) {
        throw IoError("bad sample sidecar '" + sidecar_path + "': " + e.what());
    }
    SampleMatrix s;
    s.values = std::move(table.values);
    s.columns = std::move(table.header);
    s.seed = meta.at("seed").get<std::uint64_t>();
    return s;
}

// ---------------------------------------------------------------------------

VectorXd ConvergenceState::std_dev() const {
    if (count < 2) return VectorXd::Zero(mean.size());
    return (m2 / static_cast<double>(count - 1)).cwiseSqrt();
}

VectorXd ConvergenceState::variance_coefficients() const {
    const VectorXd se = std_dev() / std::sqrt(static_cast<double>(std::max<std::size_t>(count, 1)));
    VectorXd cv(mean.size());
    for (Index i = 0; i < mean.size(); ++i)
        cv(i) = std::abs(mean(i)) < 1e-12 ? se(i) : se(i) / std::abs(mean(i));
    return cv;
}

bool update_convergence(ConvergenceState& state, const VectorXd& values) {
    if (values.size() != state.mean.size())
        throw DimensionMismatch("convergence: expected " + std::to_string(state.mean.size()) + " values");
    ++state.count;
    const double n = static_cast<double>(state.count);
    const VectorXd delta = values - state.mean;
    state.mean += delta / n;
    state.m2 += delta.cwiseProduct(values - state.mean);

    if (state.count >= state.max_samples) return true;
    if (state.count < 2) return false;
    return (state.variance_coefficients().array() <= state.threshold).all();
}

}  // namespace popf

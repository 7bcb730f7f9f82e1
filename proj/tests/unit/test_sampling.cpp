#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "popf/errors.hpp"
#include "popf/io.hpp"
#include "popf/sampling.hpp"
#include "support.hpp"

using namespace popf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Regularized incomplete beta by composite Simpson on the density.
double beta_cdf(double x, double a, double b) {
    const int n = 20000;
    auto pdf = [&](double t) { return std::pow(t, a - 1) * std::pow(1 - t, b - 1); };
    auto integrate = [&](double hi) {
        const double h = hi / n;
        double s = pdf(0.0) + pdf(hi);
        for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 ? 4 : 2);
        return s * h / 3;
    };
    return integrate(x) / integrate(1.0);
}

NetworkCase case_with_sources(std::vector<StochasticSource> sources) {
    NetworkCase c;
    c.buses = {test::bus(0, BusKind::Slack)};
    for (std::size_t i = 0; i < sources.size(); ++i) {
        c.buses.push_back(test::bus(static_cast<int>(i + 1), BusKind::PQ, 0.5));
        c.branches.push_back(test::branch(0, static_cast<int>(i + 1), 0.01, 0.1));
        sources[i].bus = static_cast<int>(i + 1);
    }
    c.generators = {test::gen(0, 50.0, 0.0, 1.0)};
    c.sources = std::move(sources);
    return c;
}

StochasticSource gaussian(double mean, double std, std::optional<std::string> group = {}) {
    StochasticSource s;
    s.params = GaussianLoad{mean, std, 1.0};
    s.corr_group = std::move(group);
    return s;
}

double corr(const VectorXd& a, const VectorXd& b) {
    const VectorXd da = a.array() - a.mean(), db = b.array() - b.mean();
    return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("standard normals are deterministic and well scaled") {
    const MatrixXd a = draw_standard_normals(100000, 1, 42);
    const MatrixXd b = draw_standard_normals(100000, 1, 42);
    CHECK((a.array() == b.array()).all());
    CHECK(!(a.array() == draw_standard_normals(100000, 1, 43).array()).all());
    CHECK(!(draw_standard_normals(10, 2, 0).array() == draw_standard_normals(10, 2, 1).array()).all());
    const double mean = a.mean();
    const double var = (a.array() - mean).square().sum() / (a.rows() - 1);
    CHECK(std::abs(mean) <= 0.02);
    CHECK(var >= 0.97);
    CHECK(var <= 1.03);
}

TEST_CASE("normal streams are prefix stable") {
    NormalStream s(9, 3);
    MatrixXd first = s.next(7);
    MatrixXd second = s.next(6);
    MatrixXd all = draw_standard_normals(13, 3, 9);
    CHECK((all.topRows(7).array() == first.array()).all());
    CHECK((all.bottomRows(6).array() == second.array()).all());
}

TEST_CASE("correlation via Cholesky") {
    const auto c = case_with_sources({gaussian(0, 1, "g"), gaussian(0, 1, "g"), gaussian(0, 1)});
    const MatrixXd z = draw_standard_normals(100000, 3, 5);

    CHECK((correlate(z, parse_correlation_spec(c, R"({"groups": {"g": [[1, 0], [0, 1]]}})")).array() == z.array()).all());
    CHECK((correlate(z, CorrelationSpec{}).array() == z.array()).all());

    const auto spec = parse_correlation_spec(c, R"({"groups": {"g": [[1, 0.8], [0.8, 1]]}})");
    const MatrixXd y = correlate(z, spec);
    CHECK(std::abs(corr(y.col(0), y.col(1)) - 0.8) <= 0.01);
    CHECK((y.col(2).array() == z.col(2).array()).all());
    for (int j = 0; j < 2; ++j) {
        const double var = (y.col(j).array() - y.col(j).mean()).square().sum() / (y.rows() - 1);
        CHECK(std::abs(var - 1.0) <= 0.03);
    }

    CHECK_THROWS_AS(parse_correlation_spec(c, R"({"groups": {"g": [[1, 1], [1, 1]]}})"), NotPositiveDefinite);
    CorrelationSpec bad;
    bad.groups.push_back({"g", {0, 1}, (MatrixXd(2, 2) << 1, 1, 1, 1).finished()});
    CHECK_THROWS_AS(correlate(z, bad), NotPositiveDefinite);
    CHECK_THROWS(parse_correlation_spec(c, R"({"groups": {"g": [[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]]}})"));
}

TEST_CASE("marginal transforms") {
    CHECK(transform_marginal(0.0, gaussian(1.0, 0.1)) == 1.0);
    CHECK(transform_marginal(2.0, gaussian(1.0, 0.1)) == doctest::Approx(1.2));

    StochasticSource pv;
    pv.params = PvPlant{2.0, 2.0, 0.3};
    CHECK(std::abs(transform_marginal(0.0, pv) - 0.15) < 1e-12);
    pv.params = PvPlant{2.0, 5.0, 0.3};
    for (double z : {-1.5, -0.3, 0.4, 1.7}) {
        const double v = transform_marginal(z, pv);
        CHECK(std::abs(beta_cdf(v / 0.3, 2.0, 5.0) - phi_cdf(z)) < 1e-6);
    }

    StochasticSource wind;
    const WindFarm w{2.0, 8.0, 3.0, 12.0, 25.0, 0.4};
    wind.params = w;
    for (double z : {-3.0, -1.0, 0.0, 0.8, 1.5, 2.5, 4.0}) {
        const double speed = 8.0 * std::pow(-std::log(1.0 - phi_cdf(z)), 0.5);
        double expected = 0.0;
        if (speed >= 3.0 && speed < 12.0) expected = 0.4 * std::pow(speed / 12.0, 3);
        if (speed >= 12.0 && speed <= 25.0) expected = 0.4;
        CHECK(std::abs(transform_marginal(z, wind) - expected) < 1e-9);
    }
    // speed below cut-in
    CHECK(transform_marginal(-3.0, wind) == 0.0);
    CHECK(wind_power(w, 2.9) == 0.0);
    CHECK(wind_power(w, 12.0) == doctest::Approx(0.4));
    CHECK(wind_power(w, 30.0) == 0.0);
}

TEST_CASE("sample matrix properties") {
    const auto zero = case_with_sources({gaussian(0.2, 0.0), gaussian(-0.1, 0.0)});
    const auto s = sample_operating_conditions(zero, 50, {}, 1);
    for (Eigen::Index r = 0; r < 50; ++r) {
        CHECK(s.values(r, 0) == 0.2);
        CHECK(s.values(r, 1) == -0.1);
    }

    const auto c = case_with_sources({gaussian(1.0, 0.1)});
    const auto big = sample_operating_conditions(c, 100000, {}, 11);
    CHECK(std::abs(big.values.col(0).mean() - 1.0) <= 0.002);

    const auto c14 = load_case(test::data("case14.json"));
    const auto spec = parse_correlation_spec(c14, io::read_file(test::data("case14_correlation.json")));
    const auto a = sample_operating_conditions(c14, 200, spec, 4);
    const auto b = sample_operating_conditions(c14, 200, spec, 4);
    CHECK((a.values.array() == b.values.array()).all());

    OperatingConditionSampler inc(c14, spec, 4);
    MatrixXd first = inc.next(120);
    MatrixXd second = inc.next(80);
    CHECK((a.values.topRows(120).array() == first.array()).all());
    CHECK((a.values.bottomRows(80).array() == second.array()).all());
}

TEST_CASE("sample matrix file round trip") {
    const auto c14 = load_case(test::data("case14.json"));
    const auto s = sample_operating_conditions(c14, 25, {}, 77);
    const auto dir = test::scratch("samples");
    write_sample_matrix(s, dir + "/s.csv", dir + "/s.json");
    const auto r = read_sample_matrix(dir + "/s.csv", dir + "/s.json");
    CHECK(r.seed == 77);
    CHECK(r.columns == s.columns);
    CHECK((r.values.array() == s.values.array()).all());
}

TEST_CASE("Welford matches two-pass statistics") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(5.0, 2.0);
    MatrixXd stream(100000, 2);
    for (Eigen::Index r = 0; r < stream.rows(); ++r) stream.row(r) << nd(rng), 1e3 + nd(rng);
    ConvergenceState st(2, 0.0, 1000000);
    for (Eigen::Index r = 0; r < stream.rows(); ++r) update_convergence(st, stream.row(r).transpose());
    for (Eigen::Index j = 0; j < 2; ++j) {
        const double mean = stream.col(j).mean();
        const double sd = std::sqrt((stream.col(j).array() - mean).square().sum() / (stream.rows() - 1));
        CHECK(std::abs(st.mean(j) - mean) <= 1e-10);
        CHECK(std::abs(st.std_dev()(j) - sd) <= 1e-10);
    }
}

TEST_CASE("stopping rule") {
    SUBCASE("identical values converge at two samples") {
        ConvergenceState st(1);
        CHECK(!update_convergence(st, VectorXd::Constant(1, 3.0)));
        CHECK(update_convergence(st, VectorXd::Constant(1, 3.0)));
        CHECK(st.variance_coefficients()(0) == 0.0);
    }
    SUBCASE("alternating stream stops where the direct formula says") {
        MatrixXd stream(1000, 1);
        for (Eigen::Index r = 0; r < stream.rows(); ++r) stream(r, 0) = r % 2 ? 1.1 : 0.9;
        const auto expected = oracle::direct_stopping_count(stream, 0.05, 50000);
        REQUIRE(expected > 2);
        ConvergenceState st(1);
        std::size_t n = 0;
        for (Eigen::Index r = 0; r < stream.rows(); ++r) {
            ++n;
            if (update_convergence(st, stream.row(r).transpose())) break;
        }
        CHECK(n == expected);
    }
    SUBCASE("cap applies when the coefficient stays high") {
        ConvergenceState st(1, 0.05, 300);
        std::size_t n = 0;
        while (true) {
            ++n;
            const double v = (n % 2 ? 1.0 : -1.0) + 1e-3;
            if (update_convergence(st, VectorXd::Constant(1, v))) break;
        }
        CHECK(n == 300);
        CHECK(st.variance_coefficients()(0) > 0.05);
    }
    SUBCASE("dimension mismatch") {
        ConvergenceState st(2);
        CHECK_THROWS_AS(update_convergence(st, VectorXd::Zero(3)), DimensionMismatch);
    }
}

}

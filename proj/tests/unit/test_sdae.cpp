#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "popf/errors.hpp"
#include "popf/sdae.hpp"

using namespace popf;
using namespace popf::sdae;

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

// Straight-line forward pass, one row and one neuron at a time.
MatrixXd reference_forward(const SdaeModel& m, const MatrixXd& x) {
    MatrixXd out(x.rows(), m.output_width());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::vector<double> h;
        for (Eigen::Index k = 0; k < x.cols(); ++k) h.push_back(x(r, k));
        auto apply = [&](const MatrixXd& w, const VectorXd& b) {
            std::vector<double> next;
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                double s = b(i);
                for (Eigen::Index k = 0; k < w.cols(); ++k) s += w(i, k) * h[static_cast<std::size_t>(k)];
                next.push_back(s > 0 ? s : 0);
            }
            h = next;
        };
        for (const auto& l : m.layers) apply(l.w, l.b);
        apply(m.top.w, m.top.b);
        for (Eigen::Index k = 0; k < out.cols(); ++k) out(r, k) = h[static_cast<std::size_t>(k)];
    }
    return out;
}

}  // namespace

TEST_SUITE("sdae") {

TEST_CASE("relu") {
    CHECK(VectorXd(relu(vec({-1, 0, 2}))) == vec({0, 0, 2}));
    CHECK(VectorXd(relu(vec({0.5, 3}))) == vec({0.5, 3}));
    CHECK(VectorXd(relu(vec({-0.5, -3}))) == vec({0, 0}));
}

TEST_CASE("normalization branches") {
    Bounds b{vec({0, 4, 0, -2}), vec({10, 4, 0, 6})};
    const auto n = normalize(vec({5, 4, 0, 2}), b);
    CHECK(n(0) == 0.5);
    CHECK(n(1) == 1.0);
    CHECK(n(2) == 0.0);
    CHECK(n(3) == 0.5);
    const auto back = denormalize(n, b);
    CHECK((back - vec({5, 4, 0, 2})).cwiseAbs().maxCoeff() <= 1e-12);

    // row form agrees with the vector form
    MatrixXd rows(2, 4);
    rows << 5, 4, 0, 2, 7.5, 4, 0, -1;
    const MatrixXd nr = normalize_rows(rows, b);
    for (Eigen::Index r = 0; r < 2; ++r) CHECK((nr.row(r).transpose() - normalize(rows.row(r).transpose(), b)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((denormalize_rows(nr, b) - rows).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(normalize(vec({1, 2}), b), DimensionMismatch);
}

TEST_CASE("normalization round trip on random data") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100, 100);
    for (int t = 0; t < 50; ++t) {
        MatrixXd d(20, 5);
        for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = u(rng);
        d.col(1).setConstant(u(rng));  // constant nonzero
        d.col(2).setZero();            // constant zero
        const auto b = Bounds::from_rows(d);
        const MatrixXd n = normalize_rows(d, b);
        CHECK((n.col(1).array() == 1.0).all());
        CHECK((n.col(2).array() == 0.0).all());
        CHECK(n.minCoeff() >= 0.0);
        CHECK(n.maxCoeff() <= 1.0);
        const MatrixXd back = denormalize_rows(n, b);
        CHECK(((back - d).array().abs() <= 1e-12 * (1.0 + d.array().abs())).all());
    }
}

TEST_CASE("corruption zeroes exactly round(level * dim) entries") {
    VectorXd x = VectorXd::LinSpaced(100, 1.0, 100.0);
    Rng rng(5);
    CHECK(corrupt(x, 0.0, rng) == x);
    for (double level : {0.1, 0.3, 0.55, 0.999}) {
        const auto y = corrupt(x, level, rng);
        const auto zeros = (y.array() == 0.0).count();
        CHECK(zeros == std::llround(level * 100));
        CHECK(((y.array() == 0.0) || (y.array() == x.array())).all());
    }
    Rng a(9), b(9);
    CHECK(corrupt(x, 0.3, a) == corrupt(x, 0.3, b));
    CHECK_THROWS(corrupt(x, 1.0, a));
    CHECK_THROWS(corrupt(x, -0.1, a));

    MatrixXd rows = MatrixXd::Ones(40, 10);
    Rng c(3);
    corrupt_rows(rows, 0.3, c);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) CHECK((rows.row(r).array() == 0.0).count() == 3);
}

TEST_CASE("forward pass") {
    SUBCASE("identity layer passes nonnegative input through") {
        SdaeModel m;
        m.corruption_level = 0.0;
        m.top.w = MatrixXd::Identity(3, 3);
        m.top.b = VectorXd::Zero(3);
        MatrixXd x(2, 3);
        x << 0, 1, 2, 3.5, 0.25, 7;
        CHECK(forward(m, x, Mode::Infer).output == x);
        CHECK(predict(m, x) == x);
    }
    SUBCASE("zero input and zero biases give zero output") {
        const auto m = SdaeModel::create(4, {5, 6}, 3, 0.1, 1);
        const MatrixXd x = MatrixXd::Zero(3, 4);
        CHECK(forward(m, x, Mode::Infer).output.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("random 2-4-3 net matches a straight-line evaluation") {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> nd;
        auto m = SdaeModel::create(2, {4}, 3, 0.0, 2);
        for (auto* p : {&m.layers[0].b, &m.top.b}) *p = p->unaryExpr([&](double) { return nd(rng); });
        MatrixXd x(6, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
        const MatrixXd ref = reference_forward(m, x);
        CHECK((forward(m, x, Mode::Infer).output - ref).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((predict(m, x) - ref).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("train mode corrupts only the first input") {
        auto m = SdaeModel::create(10, {4}, 2, 0.3, 3);
        const MatrixXd x = MatrixXd::Ones(5, 10);
        Rng rng(1);
        const auto cache = forward(m, x, Mode::Train, &rng);
        for (Eigen::Index r = 0; r < 5; ++r) CHECK((cache.inputs[0].row(r).array() == 0.0).count() == 3);
        CHECK_THROWS(forward(m, x, Mode::Train));
        // infer mode never needs an RNG
        CHECK(forward(m, x, Mode::Infer).inputs[0] == x);
    }
    SUBCASE("dimension mismatch") {
        const auto m = SdaeModel::create(3, {4}, 2, 0.1, 1);
        CHECK_THROWS_AS(forward(m, MatrixXd::Zero(1, 4), Mode::Infer), DimensionMismatch);
        CHECK_THROWS_AS(predict(m, MatrixXd::Zero(1, 2)), DimensionMismatch);
    }
}

TEST_CASE("predict does not depend on batch partitioning") {
    const auto m = SdaeModel::create(7, {9, 5}, 4, 0.1, 8);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    MatrixXd x(203, 7);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    const MatrixXd all = predict(m, x);
    for (Eigen::Index r = 0; r < x.rows(); r += 37) {
        const Eigen::Index n = std::min<Eigen::Index>(37, x.rows() - r);
        CHECK((predict(m, x.middleRows(r, n)).array() == all.middleRows(r, n).array()).all());
    }
    CHECK((forward(m, x, Mode::Infer).output - all).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("model creation") {
    const auto m = SdaeModel::create(6, {8, 4}, 3, 0.2, 5);
    CHECK(m.widths() == std::vector<Eigen::Index>{6, 8, 4, 3});
    const double lim0 = std::sqrt(6.0 / 14.0);
    CHECK(m.layers[0].w.cwiseAbs().maxCoeff() <= lim0);
    CHECK(m.layers[0].w.minCoeff() < 0.0);
    CHECK(m.top.w.minCoeff() >= 0.0);
    CHECK(m.layers[1].b.isZero());
    const auto again = SdaeModel::create(6, {8, 4}, 3, 0.2, 5);
    CHECK(again.layers[1].w == m.layers[1].w);
    CHECK(again.top.w == m.top.w);
}

TEST_CASE("squared error loss") {
    CHECK(mse_loss(vec({1, 2}), vec({1, 2})) == 0.0);
    CHECK(mse_loss(vec({1, 0}), vec({0, 0})) == 0.5);
    CHECK(mse_loss(vec({0, 0}), vec({3, 4})) == 12.5);
    CHECK_THROWS_AS(mse_loss(vec({0}), vec({3, 4})), DimensionMismatch);
    MatrixXd y(2, 2), yh(2, 2);
    y << 0, 0, 1, 0;
    yh << 3, 4, 0, 0;
    CHECK(batch_loss(y, yh) == (12.5 + 0.5) / 2);
}

TEST_CASE("gradients") {
    SUBCASE("exact fit gives zero gradient") {
        const auto m = SdaeModel::create(3, {4}, 2, 0.0, 1);
        MatrixXd x = MatrixXd::Random(5, 3).cwiseAbs();
        const auto cache = forward(m, x, Mode::Infer);
        const auto g = backward(m, cache, cache.output);
        for (const auto& v : gradient_views(g)) CHECK(v.abs().maxCoeff() == 0.0);
    }
    SUBCASE("identical rows average to the single-row gradient") {
        const auto m = SdaeModel::create(3, {4, 3}, 2, 0.0, 2);
        MatrixXd x1(1, 3), y1(1, 2);
        x1 << 0.2, 0.7, 0.4;
        y1 << 0.9, 0.1;
        const MatrixXd xm = x1.replicate(6, 1), ym = y1.replicate(6, 1);
        const auto g1 = backward(m, forward(m, x1, Mode::Infer), y1);
        const auto gm = backward(m, forward(m, xm, Mode::Infer), ym);
        const auto a = gradient_views(g1), b = gradient_views(gm);
        for (std::size_t k = 0; k < a.size(); ++k) CHECK((a[k] - b[k]).abs().maxCoeff() <= 1e-15);
    }
    SUBCASE("finite differences on random networks") {
        std::mt19937_64 rng(99);
        std::uniform_int_distribution<int> batch(1, 16);
        std::normal_distribution<double> nd;
        std::size_t compared = 0, skipped = 0;
        for (int t = 0; t < 25; ++t) {
            const auto m = oracle::random_network(rng);
            const Eigen::Index rows = batch(rng);
            MatrixXd x(rows, m.input_width()), y(rows, m.output_width());
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
            for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = nd(rng);
            const auto g = backward(m, forward(m, x, Mode::Infer), y);
            const auto r = oracle::check_gradients(m, g, x, y);
            CHECK(r.failures == 0);
            compared += r.compared;
            skipped += r.skipped_kinks;
        }
        CHECK(compared > 500);
        CHECK(skipped * 100 < compared);
    }
    SUBCASE("shape mismatch") {
        const auto m = SdaeModel::create(3, {4}, 2, 0.0, 1);
        const auto cache = forward(m, MatrixXd::Zero(2, 3), Mode::Infer);
        CHECK_THROWS_AS(backward(m, cache, MatrixXd::Zero(3, 2)), DimensionMismatch);
    }
}

}

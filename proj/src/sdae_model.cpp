#include <cmath>

#include "popf/errors.hpp"
#include "popf/sdae.hpp"

namespace popf::sdae {

using Eigen::Index;

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection keeps the draw unbiased: reject the low (2^64 mod n) values.
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t r = engine_();
        if (r >= threshold) return r % n;
    }
}

// ---------------------------------------------------------------------------

Bounds Bounds::from_rows(const MatrixXd& data) {
    if (data.rows() == 0) throw DimensionMismatch("bounds: no rows");
    return {data.colwise().minCoeff().transpose(), data.colwise().maxCoeff().transpose()};
}

namespace {

void check_bounds(Index n, const Bounds& b) {
    if (b.min.size() != n || b.max.size() != n)
        throw DimensionMismatch("bounds have " + std::to_string(b.min.size()) + " dimensions, data has " +
                                std::to_string(n));
}

double scale_one(double x, double lo, double hi) {
    if (hi != lo) return (x - lo) / (hi - lo);
    if (hi != 0.0) return lo / hi;
    return x;
}

double unscale_one(double x, double lo, double hi) {
    if (hi != lo) return x * (hi - lo) + lo;
    return lo;
}

}  // namespace

VectorXd normalize(const VectorXd& v, const Bounds& b) {
    check_bounds(v.size(), b);
    VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out(i) = scale_one(v(i), b.min(i), b.max(i));
    return out;
}

VectorXd denormalize(const VectorXd& v, const Bounds& b) {
    check_bounds(v.size(), b);
    VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out(i) = unscale_one(v(i), b.min(i), b.max(i));
    return out;
}

MatrixXd normalize_rows(const MatrixXd& rows, const Bounds& b) {
    check_bounds(rows.cols(), b);
    MatrixXd out(rows.rows(), rows.cols());
    for (Index j = 0; j < rows.cols(); ++j) {
        const double lo = b.min(j), hi = b.max(j);
        if (hi != lo)
            out.col(j) = (rows.col(j).array() - lo) / (hi - lo);
        else if (hi != 0.0)
            out.col(j).setConstant(lo / hi);
        else
            out.col(j) = rows.col(j);
    }
    return out;
}

MatrixXd denormalize_rows(const MatrixXd& rows, const Bounds& b) {
    MatrixXd out(rows.rows(), rows.cols());
    denormalize_rows_into(rows, b, out);
    return out;
}

void denormalize_rows_into(const MatrixXd& rows, const Bounds& b, Eigen::Ref<MatrixXd> out) {
    check_bounds(rows.cols(), b);
    if (out.rows() != rows.rows() || out.cols() != rows.cols())
        throw DimensionMismatch("denormalize_rows_into: output shape mismatch");
    for (Index j = 0; j < rows.cols(); ++j) {
        const double lo = b.min(j), hi = b.max(j);
        if (hi != lo)
            out.col(j) = rows.col(j).array() * (hi - lo) + lo;
        else
            out.col(j).setConstant(lo);
    }
}

namespace {

template <typename Vec>
void corrupt_in_place(Vec&& x, double level, Rng& rng, std::vector<Index>& order) {
    const auto n = static_cast<Index>(x.size());
    const auto k = static_cast<Index>(std::llround(level * static_cast<double>(n)));
    order.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < k; ++i) {
        const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        x(order[static_cast<std::size_t>(i)]) = 0.0;
    }
}

void check_level(double level) {
    if (!(level >= 0.0 && level < 1.0)) throw Error("corruption level must be in [0, 1)");
}

}  // namespace

VectorXd corrupt(const VectorXd& x, double level, Rng& rng) {
    check_level(level);
    VectorXd out = x;
    std::vector<Index> order;
    corrupt_in_place(out, level, rng, order);
    return out;
}

void corrupt_rows(MatrixXd& rows, double level, Rng& rng) {
    check_level(level);
    if (level == 0.0) return;
    std::vector<Index> order;
    for (Index i = 0; i < rows.rows(); ++i) corrupt_in_place(rows.row(i), level, rng, order);
}

// ---------------------------------------------------------------------------

namespace {

MatrixXd scaled_uniform(Index rows, Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd w(rows, cols);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    return w;
}

}  // namespace

DaeLayer DaeLayer::init(Index in, Index out, Rng& rng) {
    DaeLayer l;
    l.w = scaled_uniform(out, in, rng);
    l.b = VectorXd::Zero(out);
    l.w_dec = scaled_uniform(in, out, rng);
    l.b_dec = VectorXd::Zero(in);
    return l;
}

Index SdaeModel::input_width() const {
    return layers.empty() ? top.w.cols() : layers.front().input_width();
}

std::vector<Index> SdaeModel::widths() const {
    std::vector<Index> w{input_width()};
    for (const auto& l : layers) w.push_back(l.output_width());
    w.push_back(output_width());
    return w;
}

SdaeModel SdaeModel::create(Index input, const std::vector<Index>& hidden, Index output, double corruption,
                            std::uint64_t seed) {
    if (input < 1 || output < 1) throw DimensionMismatch("model widths must be positive");
    check_level(corruption);
    SdaeModel m;
    m.corruption_level = corruption;
    Rng rng(seed);
    Index prev = input;
    for (Index width : hidden) {
        if (width < 1) throw DimensionMismatch("hidden widths must be positive");
        m.layers.push_back(DaeLayer::init(prev, width, rng));
        prev = width;
    }
    // Nonnegative top weights: hidden activations are >= 0, so every output
    // starts with a nonnegative pre-activation instead of half of them being
    // dead ReLUs from the first batch on.
    m.top.w = scaled_uniform(output, prev, rng).cwiseAbs();
    m.top.b = VectorXd::Zero(output);
    return m;
}

// ---------------------------------------------------------------------------

namespace {

MatrixXd affine(const MatrixXd& in, const MatrixXd& w, const VectorXd& b) {
    MatrixXd out = in * w.transpose();
    out.rowwise() += b.transpose();
    return out;
}

}  // namespace

ForwardCache forward(const SdaeModel& model, const MatrixXd& x, Mode mode, Rng* rng) {
    if (x.cols() != model.input_width())
        throw DimensionMismatch("forward: input width " + std::to_string(x.cols()) + ", model expects " +
                                std::to_string(model.input_width()));
    ForwardCache cache;
    cache.inputs.reserve(model.layers.size() + 1);
    cache.pre.reserve(model.layers.size() + 1);
    cache.inputs.push_back(x);
    if (mode == Mode::Train && model.corruption_level > 0.0) {
        if (!rng) throw Error("forward: training mode with corruption needs an RNG");
        corrupt_rows(cache.inputs.back(), model.corruption_level, *rng);
    }
    for (const auto& layer : model.layers) {
        cache.pre.push_back(affine(cache.inputs.back(), layer.w, layer.b));
        cache.inputs.push_back(relu(cache.pre.back()));
    }
    cache.pre.push_back(affine(cache.inputs.back(), model.top.w, model.top.b));
    cache.output = relu(cache.pre.back());
    return cache;
}

namespace {

// Multiply-add with one rounding when the target has FMA, so the blocked
// and the scalar paths below round identically whatever the compiler
// decides to contract.
inline double madd(double acc, double x, double w) {
#ifdef __FMA__
    return std::fma(x, w, acc);
#else
    return acc + x * w;
#endif
}

// relu(b_j + sum_k in(i, k) * w(j, k)) with k ascending for every row, so a
// row's result never depends on which other rows share the batch.
void dense_relu(const MatrixXd& in, const MatrixXd& w, const VectorXd& b, MatrixXd& out) {
    const Index n = in.rows(), n_in = w.cols(), n_out = w.rows();
    out.resize(n, n_out);
    constexpr Index kBlock = 32;
    const double* src = in.data();
    Index i0 = 0;
    for (; i0 + kBlock <= n; i0 += kBlock) {
        for (Index j = 0; j < n_out; ++j) {
            double acc[kBlock];
            for (Index i = 0; i < kBlock; ++i) acc[i] = b(j);
            for (Index k = 0; k < n_in; ++k) {
                const double wk = w(j, k);
                const double* col = src + k * n + i0;
                for (Index i = 0; i < kBlock; ++i) acc[i] = madd(acc[i], col[i], wk);
            }
            double* dst = out.data() + j * n + i0;
            for (Index i = 0; i < kBlock; ++i) dst[i] = acc[i] > 0.0 ? acc[i] : 0.0;
        }
    }
    for (Index i = i0; i < n; ++i) {
        for (Index j = 0; j < n_out; ++j) {
            double acc = b(j);
            for (Index k = 0; k < n_in; ++k) acc = madd(acc, src[k * n + i], w(j, k));
            out(i, j) = acc > 0.0 ? acc : 0.0;
        }
    }
}

}  // namespace

MatrixXd predict(const SdaeModel& model, const MatrixXd& x) {
    MatrixXd out;
    PredictBuffers buf;
    predict_into(model, x, out, buf);
    return out;
}

void predict_into(const SdaeModel& model, const MatrixXd& x, MatrixXd& out, PredictBuffers& buf) {
    if (x.cols() != model.input_width())
        throw DimensionMismatch("predict: input width " + std::to_string(x.cols()) + ", model expects " +
                                std::to_string(model.input_width()));
    if (model.layers.empty()) {
        dense_relu(x, model.top.w, model.top.b, out);
        return;
    }
    dense_relu(x, model.layers.front().w, model.layers.front().b, buf.a);
    for (std::size_t l = 1; l < model.layers.size(); ++l) {
        dense_relu(buf.a, model.layers[l].w, model.layers[l].b, buf.b);
        buf.a.swap(buf.b);
    }
    dense_relu(buf.a, model.top.w, model.top.b, out);
}

double mse_loss(const VectorXd& y, const VectorXd& y_hat) {
    if (y.size() != y_hat.size()) throw DimensionMismatch("mse_loss: length mismatch");
    return 0.5 * (y_hat - y).squaredNorm();
}

double batch_loss(const MatrixXd& y, const MatrixXd& y_hat) {
    if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols())
        throw DimensionMismatch("batch_loss: shape mismatch");
    if (y.rows() == 0) return 0.0;
    return 0.5 * (y_hat - y).squaredNorm() / static_cast<double>(y.rows());
}

Gradients backward(const SdaeModel& model, const ForwardCache& cache, const MatrixXd& y_true) {
    const std::size_t n_layers = model.layers.size();
    if (cache.pre.size() != n_layers + 1 || cache.inputs.size() != n_layers + 1)
        throw DimensionMismatch("backward: cache does not match model depth");
    if (y_true.rows() != cache.output.rows() || y_true.cols() != cache.output.cols())
        throw DimensionMismatch("backward: target shape mismatch");

    const double m = static_cast<double>(y_true.rows());
    Gradients g;
    g.layers.resize(n_layers);

    MatrixXd delta = ((cache.output - y_true) / m).cwiseProduct(
        (cache.pre.back().array() > 0.0).cast<double>().matrix());
    g.top.dw = delta.transpose() * cache.inputs.back();
    g.top.db = delta.colwise().sum().transpose();
    const MatrixXd* w_above = &model.top.w;

    for (std::size_t l = n_layers; l-- > 0;) {
        delta = (delta * *w_above).cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
        g.layers[l].dw = delta.transpose() * cache.inputs[l];
        g.layers[l].db = delta.colwise().sum().transpose();
        w_above = &model.layers[l].w;
    }
    return g;
}

}  // namespace popf::sdae

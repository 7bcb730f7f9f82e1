#include <cmath>
#include <numeric>

#include "popf/errors.hpp"
#include "popf/io.hpp"
#include "popf/sampling.hpp"
#include "popf/sdae.hpp"

namespace popf::sdae {

using Eigen::Index;

void validate(const TrainConfig& cfg) {
    if (!(cfg.eta_unsup > 0.0) || !(cfg.eta_sup > 0.0)) throw Error("learning rates must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw Error("momentum must be in [0, 1)");
    if (cfg.batch_size < 1) throw Error("batch size must be at least 1");
    if (!(cfg.corruption >= 0.0 && cfg.corruption < 1.0)) throw Error("corruption must be in [0, 1)");
    if (!(cfg.finetune_level() >= 0.0 && cfg.finetune_level() < 1.0))
        throw Error("fine-tuning corruption must be in [0, 1)");
    for (Index w : cfg.hidden)
        if (w < 1) throw Error("hidden widths must be positive");
}

namespace {

MatrixXd affine(const MatrixXd& in, const MatrixXd& w, const VectorXd& b) {
    MatrixXd out = in * w.transpose();
    out.rowwise() += b.transpose();
    return out;
}

void shuffle(std::vector<Index>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
}

MatrixXd gather(const MatrixXd& src, const std::vector<Index>& order, std::size_t start, std::size_t count) {
    MatrixXd out(static_cast<Index>(count), src.cols());
    for (std::size_t k = 0; k < count; ++k) out.row(static_cast<Index>(k)) = src.row(order[start + k]);
    return out;
}

std::vector<Index> identity_order(Index n) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    return order;
}

OptState make_opt(double eta, const TrainConfig& cfg) {
    OptState opt;
    opt.eta = eta;
    opt.momentum = cfg.momentum;
    return opt;
}

}  // namespace

PretrainResult pretrain_layer(DaeLayer layer, const MatrixXd& inputs, const TrainConfig& cfg, double corruption,
                              std::uint64_t seed) {
    validate(cfg);
    if (inputs.cols() != layer.input_width())
        throw DimensionMismatch("pretrain: input width does not match layer");
    if (layer.w_dec.rows() != layer.input_width() || layer.w_dec.cols() != layer.output_width())
        throw DimensionMismatch("pretrain: layer has no decoder of matching shape");

    Rng rng(seed);
    OptState opt = make_opt(cfg.eta_unsup, cfg);
    PretrainResult result;
    auto order = identity_order(inputs.rows());
    const auto n = static_cast<std::size_t>(inputs.rows());

    for (std::size_t epoch = 0; epoch < cfg.epochs_unsup; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            const MatrixXd clean = gather(inputs, order, start, count);
            MatrixXd noisy = clean;
            corrupt_rows(noisy, corruption, rng);

            const MatrixXd pre_a = affine(noisy, layer.w, layer.b);
            const MatrixXd a = relu(pre_a);
            const MatrixXd pre_z = affine(a, layer.w_dec, layer.b_dec);
            const MatrixXd z = relu(pre_z);
            total += batch_loss(clean, z) * static_cast<double>(count);

            const double m = static_cast<double>(count);
            const MatrixXd dz = ((z - clean) / m).cwiseProduct((pre_z.array() > 0.0).cast<double>().matrix());
            const MatrixXd dw_dec = dz.transpose() * a;
            const VectorXd db_dec = dz.colwise().sum().transpose();
            const MatrixXd da = (dz * layer.w_dec).cwiseProduct((pre_a.array() > 0.0).cast<double>().matrix());
            const MatrixXd dw = da.transpose() * noisy;
            const VectorXd db = da.colwise().sum().transpose();

            std::vector<ParamView> params{{layer.w.data(), layer.w.size()},
                                          {layer.b.data(), layer.b.size()},
                                          {layer.w_dec.data(), layer.w_dec.size()},
                                          {layer.b_dec.data(), layer.b_dec.size()}};
            const std::vector<GradView> grads{
                {dw.data(), dw.size()}, {db.data(), db.size()}, {dw_dec.data(), dw_dec.size()}, {db_dec.data(), db_dec.size()}};
            rmsprop_momentum_step(params, grads, opt);
        }
        const double loss = total / static_cast<double>(n);
        if (!std::isfinite(loss))
            throw NonFiniteLoss("reconstruction loss diverged at epoch " + std::to_string(epoch + 1));
        result.losses.push_back(loss);
    }
    result.layer = std::move(layer);
    return result;
}

StackPretrainReport pretrain_stack(SdaeModel& model, const MatrixXd& x, const TrainConfig& cfg,
                                   bool keep_layer_inputs) {
    StackPretrainReport report;
    MatrixXd h = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        PretrainResult r;
        try {
            r = pretrain_layer(model.layers[l], h, cfg, model.corruption_level, splitmix64(cfg.seed + 101 + l));
        } catch (const NonFiniteLoss& e) {
            throw NonFiniteLoss("layer " + std::to_string(l) + ": " + e.what());
        }
        model.layers[l] = std::move(r.layer);
        model.layers[l].w_dec.resize(0, 0);
        model.layers[l].b_dec.resize(0);
        report.losses.push_back(std::move(r.losses));
        if (keep_layer_inputs) report.layer_inputs.push_back(h);
        h = relu(affine(h, model.layers[l].w, model.layers[l].b));
    }
    return report;
}

bool EarlyStopping::observe(std::size_t epoch, double loss) {
    if (loss < best) {
        best = loss;
        best_epoch = epoch;
        stale = 0;
        return true;
    }
    ++stale;
    return false;
}

FinetuneResult finetune(SdaeModel& model, const MatrixXd& x_train, const MatrixXd& y_train, const MatrixXd& x_val,
                        const MatrixXd& y_val, const TrainConfig& cfg) {
    validate(cfg);
    if (x_train.rows() != y_train.rows() || x_val.rows() != y_val.rows())
        throw DimensionMismatch("finetune: X and Y row counts differ");
    if (x_train.rows() == 0 || x_val.rows() == 0) throw DimensionMismatch("finetune: empty training or validation set");
    if (y_train.cols() != model.output_width() || y_val.cols() != model.output_width())
        throw DimensionMismatch("finetune: target width does not match model");

    Rng rng(splitmix64(cfg.seed + 0x5eed));
    OptState opt = make_opt(cfg.eta_sup, cfg);
    EarlyStopping stopper{cfg.patience};
    FinetuneResult result;
    SdaeModel best = model;
    auto order = identity_order(x_train.rows());
    const auto n = static_cast<std::size_t>(x_train.rows());

    for (std::size_t epoch = 1; epoch <= cfg.epochs_sup; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            MatrixXd xb = gather(x_train, order, start, count);
            const MatrixXd yb = gather(y_train, order, start, count);
            corrupt_rows(xb, cfg.finetune_level(), rng);
            const ForwardCache cache = forward(model, xb, Mode::Infer);
            total += batch_loss(yb, cache.output) * static_cast<double>(count);
            const Gradients grads = backward(model, cache, yb);
            auto params = parameter_views(model);
            const auto gviews = gradient_views(grads);
            rmsprop_momentum_step(params, gviews, opt);
        }
        const double train_loss = total / static_cast<double>(n);
        const double val_loss = batch_loss(y_val, predict(model, x_val));
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw NonFiniteLoss("supervised loss diverged at epoch " + std::to_string(epoch));
        result.history.push_back({epoch, train_loss, val_loss});
        if (stopper.observe(epoch, val_loss)) best = model;
        if (stopper.should_stop()) {
            result.reason = StopReason::EarlyStop;
            break;
        }
    }
    result.best_epoch = stopper.best_epoch;
    model = std::move(best);
    return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& r : history)
        out += std::to_string(r.epoch) + "," + io::format_full(r.train_loss) + "," + io::format_full(r.val_loss) + "\n";
    return out;
}

}  // namespace popf::sdae

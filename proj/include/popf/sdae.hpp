#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace popf::sdae {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Seeded generator with portable bounded draws (the std distributions are
// implementation-defined, which would break checkpoint reproducibility).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform();                        // [0, 1)
    std::uint64_t below(std::uint64_t n);    // [0, n)
    std::uint64_t next() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Activation and scaling

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(0.0);
}

// Per-dimension min/max captured from training data.
struct Bounds {
    VectorXd min;
    VectorXd max;

    static Bounds from_rows(const MatrixXd& data);
    Eigen::Index size() const { return min.size(); }
};

// Min-max scaling with the three cases for a dimension: a proper range maps
// to (x - min) / (max - min); a constant nonzero dimension maps to
// min / max = 1; a constant zero dimension passes through.
VectorXd normalize(const VectorXd& v, const Bounds& b);
VectorXd denormalize(const VectorXd& v, const Bounds& b);
MatrixXd normalize_rows(const MatrixXd& rows, const Bounds& b);
MatrixXd denormalize_rows(const MatrixXd& rows, const Bounds& b);
// denormalize_rows into caller storage of the same shape.
void denormalize_rows_into(const MatrixXd& rows, const Bounds& b, Eigen::Ref<MatrixXd> out);

// Zeroes exactly round(level * size) positions picked by a partial
// Fisher-Yates shuffle.
VectorXd corrupt(const VectorXd& x, double level, Rng& rng);
void corrupt_rows(MatrixXd& rows, double level, Rng& rng);

// ---------------------------------------------------------------------------
// Model

struct DaeLayer {
    MatrixXd w;      // out x in
    VectorXd b;
    MatrixXd w_dec;  // in x out, empty once pretraining is done
    VectorXd b_dec;

    Eigen::Index input_width() const { return w.cols(); }
    Eigen::Index output_width() const { return w.rows(); }

    static DaeLayer init(Eigen::Index in, Eigen::Index out, Rng& rng);
};

struct AffineLayer {
    MatrixXd w;
    VectorXd b;
};

struct SdaeModel {
    std::vector<DaeLayer> layers;
    AffineLayer top;
    Bounds x_bounds;
    Bounds y_bounds;
    double corruption_level = 0.1;

    Eigen::Index input_width() const;
    Eigen::Index output_width() const { return top.w.rows(); }
    std::vector<Eigen::Index> widths() const;  // input, hidden..., output

    // Scaled-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases;
    // the top layer draws magnitudes only (weights in [0, limit]).
    static SdaeModel create(Eigen::Index input, const std::vector<Eigen::Index>& hidden,
                            Eigen::Index output, double corruption, std::uint64_t seed);
};

enum class Mode { Train, Infer };

// Activations kept for backpropagation. inputs[l] feeds layer l (the last
// entry feeds the top layer); pre[l] is that layer's affine output.
struct ForwardCache {
    std::vector<MatrixXd> inputs;
    std::vector<MatrixXd> pre;
    MatrixXd output;
};

// Rows of `x` are samples, already normalized. In Train mode the first-layer
// input is corrupted with the model's corruption level using `rng`; Infer mode
// never touches an RNG. Every layer, the top one included, applies ReLU.
ForwardCache forward(const SdaeModel& model, const MatrixXd& x, Mode mode, Rng* rng = nullptr);
// Inference-mode forward pass. Each row is computed independently with a
// fixed accumulation order, so results do not depend on batch partitioning;
// they agree with forward(..., Mode::Infer) to rounding.
MatrixXd predict(const SdaeModel& model, const MatrixXd& x);

// Hidden-layer scratch for predict_into, reused across calls.
struct PredictBuffers {
    MatrixXd a;
    MatrixXd b;
};

// Same values as predict(); `out` and `buf` keep their storage between
// calls with the same batch size.
void predict_into(const SdaeModel& model, const MatrixXd& x, MatrixXd& out, PredictBuffers& buf);

// 1/2 * sum_k (y_hat_k - y_k)^2
double mse_loss(const VectorXd& y, const VectorXd& y_hat);
// Mean over rows of mse_loss.
double batch_loss(const MatrixXd& y, const MatrixXd& y_hat);

struct LayerGrad {
    MatrixXd dw;
    VectorXd db;
};

struct Gradients {
    std::vector<LayerGrad> layers;
    LayerGrad top;
};

// Gradient of batch_loss (averaged over the batch rows). ReLU'(0) = 0.
Gradients backward(const SdaeModel& model, const ForwardCache& cache, const MatrixXd& y_true);

// ---------------------------------------------------------------------------
// Optimizer

// RMSProp with momentum blending:
//   acc     = rho * acc + (1 - rho) * g^2
//   raw     = eta / sqrt(eps + acc) * g
//   applied = p * raw + (1 - p) * applied_prev
//   param  -= applied
struct OptState {
    double eta = 1e-3;
    double rho = 0.99;
    double eps = 1e-8;
    double momentum = 0.9;
    std::size_t steps = 0;
    std::vector<ArrayXd> acc;   // one per parameter block
    std::vector<ArrayXd> prev;  // previously applied update
};

using ParamView = Eigen::Map<ArrayXd>;
using GradView = Eigen::Map<const ArrayXd>;

// Throws NonFiniteGradient before touching any parameter.
void rmsprop_momentum_step(std::span<ParamView> params, std::span<const GradView> grads, OptState& opt);

std::vector<ParamView> parameter_views(SdaeModel& model);
std::vector<GradView> gradient_views(const Gradients& g);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double eta_unsup = 1e-4;
    double eta_sup = 1e-3;
    std::size_t batch_size = 500;
    double momentum = 0.9;
    std::size_t epochs_unsup = 500;
    std::size_t epochs_sup = 300;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    double corruption = 0.1;
    // Input corruption during fine-tuning; unset means `corruption`.
    std::optional<double> finetune_corruption;
    std::vector<Eigen::Index> hidden = {200, 400, 300};

    double finetune_level() const { return finetune_corruption.value_or(corruption); }
};

// Throws Error on out-of-range values.
void validate(const TrainConfig& cfg);

struct PretrainResult {
    DaeLayer layer;               // decoder still attached
    std::vector<double> losses;   // mean reconstruction loss per epoch
};

// Trains one denoising autoencoder to reconstruct `inputs` from a corrupted
// copy. Throws NonFiniteLoss.
PretrainResult pretrain_layer(DaeLayer init, const MatrixXd& inputs, const TrainConfig& cfg,
                              double corruption, std::uint64_t seed);

struct StackPretrainReport {
    std::vector<std::vector<double>> losses;
    std::vector<MatrixXd> layer_inputs;  // filled when requested
};

// Bottom-to-top pretraining; layer l+1 trains on the uncorrupted activations
// of trained layer l. Decoders are dropped afterwards.
StackPretrainReport pretrain_stack(SdaeModel& model, const MatrixXd& x, const TrainConfig& cfg,
                                   bool keep_layer_inputs = false);

struct EarlyStopping {
    std::size_t patience = 20;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t stale = 0;

    // Records one epoch; returns true when `loss` is a new best.
    bool observe(std::size_t epoch, double loss);
    bool should_stop() const { return stale >= patience; }
};

enum class StopReason { EarlyStop, EpochCap };

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct FinetuneResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    StopReason reason = StopReason::EpochCap;
};

// Supervised training of the whole stack. `model` ends up holding the
// snapshot with the lowest validation loss.
FinetuneResult finetune(SdaeModel& model, const MatrixXd& x_train, const MatrixXd& y_train,
                        const MatrixXd& x_val, const MatrixXd& y_val, const TrainConfig& cfg);

std::string history_csv(const std::vector<EpochRecord>& history);

// ---------------------------------------------------------------------------
// Checkpoint: little-endian binary, header {magic, version, widths,
// corruption}, bounds, row-major weights and biases per layer, then a 64-bit
// FNV-1a checksum of everything before it.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(const SdaeModel& model);
SdaeModel deserialize_model(std::string_view bytes);
void save_model(const SdaeModel& model, const std::string& path);
SdaeModel load_model(const std::string& path);

}  // namespace popf::sdae

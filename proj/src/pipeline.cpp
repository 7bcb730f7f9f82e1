#include "popf/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "popf/errors.hpp"
#include "popf/io.hpp"

namespace popf {

using Eigen::Index;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kTrainingStream = 0x747261696e696e67ULL;  // "training"
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;

}  // namespace

std::vector<std::string> feature_names(const NetworkCase& c) {
    std::vector<std::string> names;
    const auto pq = c.pq_buses();
    for (int b : pq) names.push_back("P" + std::to_string(b));
    for (int b : pq) names.push_back("Q" + std::to_string(b));
    return names;
}

std::vector<std::string> output_names(const NetworkCase& c) {
    const OutputLayout layout(c);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < layout.size(); ++i) names.push_back(layout.name(i));
    return names;
}

// Column-wise form of extract_features(apply_sample(.)): the features are
// affine in the sample, and accumulating per source in case order gives the
// same rounding as the per-sample path.
MatrixXd features_for_samples(const NetworkCase& c, const MatrixXd& samples) {
    if (samples.cols() != static_cast<Index>(c.n_source()))
        throw DimensionMismatch("sample width " + std::to_string(samples.cols()) + " != source count " +
                                std::to_string(c.n_source()));
    const auto pq = c.pq_buses();
    const auto m = static_cast<Index>(pq.size());
    std::vector<Index> slot(c.n_bus(), -1);
    for (Index k = 0; k < m; ++k) slot[static_cast<std::size_t>(pq[static_cast<std::size_t>(k)])] = k;

    MatrixXd p_load(samples.rows(), m), q_load(samples.rows(), m);
    for (Index k = 0; k < m; ++k) {
        const auto& bus = c.buses[static_cast<std::size_t>(pq[static_cast<std::size_t>(k)])];
        p_load.col(k).setConstant(bus.p_load);
        q_load.col(k).setConstant(bus.q_load);
    }
    for (std::size_t j = 0; j < c.n_source(); ++j) {
        const auto& s = c.sources[j];
        const Index k = slot[static_cast<std::size_t>(s.bus)];
        if (k < 0) throw DimensionMismatch("source " + std::to_string(j) + " is not on a PQ bus");
        const auto col = samples.col(static_cast<Index>(j));
        if (const auto* load = std::get_if<GaussianLoad>(&s.params)) {
            const double pf = load->power_factor;
            p_load.col(k) += col;
            q_load.col(k) += col * (std::sqrt(1.0 - pf * pf) / pf);
        } else {
            p_load.col(k) -= col;
        }
    }
    MatrixXd x(samples.rows(), 2 * m);
    x.leftCols(m) = -p_load;
    x.rightCols(m) = -q_load;
    return x;
}

TrainingDataset generate_training_data(const NetworkCase& c, std::size_t n, const CorrelationSpec& spec,
                                       std::uint64_t seed) {
    if (n < 1) throw Error("training data: n must be at least 1");
    TrainingDataset d;
    d.case_name = c.name;
    d.case_hash = case_hash(c);
    d.seed = seed;
    d.source_names = source_column_names(c);
    d.x_names = feature_names(c);
    d.y_names = output_names(c);

    const OpfOracle oracle(c, d.power_flow);
    OperatingConditionSampler sampler(c, spec, splitmix64(seed ^ kTrainingStream));
    const auto nsrc = static_cast<Index>(c.n_source());
    const auto ny = static_cast<Index>(OutputLayout(c).size());
    d.sources.resize(static_cast<Index>(n), nsrc);
    d.y.resize(static_cast<Index>(n), ny);

    std::size_t kept = 0;
    while (kept < n) {
        const MatrixXd draws = sampler.next(n - kept);
        for (Index i = 0; i < draws.rows(); ++i) {
            ++d.attempts;
            const VectorXd s = draws.row(i).transpose();
            try {
                const VectorXd y = oracle.solve(s).to_vector();
                d.sources.row(static_cast<Index>(kept)) = s.transpose();
                d.y.row(static_cast<Index>(kept)) = y.transpose();
                ++kept;
            } catch (const Infeasible&) {
                ++d.dropped;
            } catch (const NonConvergence&) {
                ++d.dropped;
            } catch (const SingularJacobian&) {
                ++d.dropped;
            }
        }
        if (2 * d.dropped > d.attempts)
            throw TooManyRejections(std::to_string(d.dropped) + " of " + std::to_string(d.attempts) +
                                    " draws rejected by the oracle");
    }
    d.x = features_for_samples(c, d.sources);
    return d;
}

double verify_dataset(const NetworkCase& c, const TrainingDataset& d) {
    const OpfOracle oracle(c, d.power_flow);
    double worst = 0.0;
    for (Index i = 0; i < d.sources.rows(); ++i) {
        const VectorXd y = oracle.solve(d.sources.row(i).transpose()).to_vector();
        worst = std::max(worst, (y - d.y.row(i).transpose()).cwiseAbs().maxCoeff());
        const VectorXd x = extract_features(c, apply_sample(c, d.sources.row(i).transpose()));
        worst = std::max(worst, (x - d.x.row(i).transpose()).cwiseAbs().maxCoeff());
    }
    return worst;
}

void write_dataset(const TrainingDataset& d, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path root(dir);
    io::write_file_atomic((root / "dataset_X.csv").string(), io::to_csv(d.x_names, d.x));
    io::write_file_atomic((root / "dataset_Y.csv").string(), io::to_csv(d.y_names, d.y));
    io::write_file_atomic((root / "dataset_sources.csv").string(), io::to_csv(d.source_names, d.sources));
    json meta = {{"format_version", 1},
                 {"case_name", d.case_name},
                 {"case_hash", hex64(d.case_hash)},
                 {"seed", d.seed},
                 {"rows", d.y.rows()},
                 {"attempts", d.attempts},
                 {"dropped", d.dropped},
                 {"oracle",
                  {{"dispatch", "dc-opf active-set"},
                   {"power_flow", "newton-raphson"},
                   {"pf_tol", d.power_flow.tol},
                   {"pf_max_iter", d.power_flow.max_iter}}}};
    io::write_file_atomic((root / "dataset.json").string(), meta.dump(2) + "\n");
}

TrainingDataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    TrainingDataset d;
    auto x = io::parse_csv(io::read_file((root / "dataset_X.csv").string()));
    auto y = io::parse_csv(io::read_file((root / "dataset_Y.csv").string()));
    if (x.values.rows() != y.values.rows()) throw IoError("dataset X and Y row counts differ");
    d.x = std::move(x.values);
    d.x_names = std::move(x.header);
    d.y = std::move(y.values);
    d.y_names = std::move(y.header);
    const auto src_path = root / "dataset_sources.csv";
    if (fs::exists(src_path)) {
        auto s = io::parse_csv(io::read_file(src_path.string()));
        d.sources = std::move(s.values);
        d.source_names = std::move(s.header);
    }
    try {
        const json meta = json::parse(io::read_file((root / "dataset.json").string()));
        d.case_name = meta.value("case_name", "");
        d.case_hash = std::stoull(meta.at("case_hash").get<std::string>(), nullptr, 16);
        d.seed = meta.at("seed").get<std::uint64_t>();
        d.attempts = meta.value("attempts", std::size_t{0});
        d.dropped = meta.value("dropped", std::size_t{0});
    } catch (const json::exception& e) {
        throw IoError(std::string("bad dataset.json: ") + e.what());
    }
    return d;
}

// ---------------------------------------------------------------------------

TrainValidationSplit split_train_validation(std::size_t rows, std::uint64_t seed) {
    std::vector<Index> perm(rows);
    std::iota(perm.begin(), perm.end(), Index{0});
    sdae::Rng rng(splitmix64(seed ^ kSplitStream));
    for (std::size_t i = rows; i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(rows) / 6.0));
    TrainValidationSplit s;
    s.validation.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    return s;
}

namespace {

MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
    MatrixXd out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
    return out;
}

}  // namespace

TrainOutcome train_popf_model(const TrainingDataset& d, const sdae::TrainConfig& cfg) {
    sdae::validate(cfg);
    const auto rows = static_cast<std::size_t>(d.x.rows());
    if (static_cast<std::size_t>(d.y.rows()) != rows) throw DimensionMismatch("dataset X/Y row mismatch");
    if (rows < 2 * cfg.batch_size)
        throw Error("training needs at least 2 * batch_size = " + std::to_string(2 * cfg.batch_size) + " rows, got " +
                    std::to_string(rows));

    const auto split = split_train_validation(rows, cfg.seed);
    const MatrixXd x_train = take_rows(d.x, split.train);
    const MatrixXd y_train = take_rows(d.y, split.train);
    const MatrixXd x_val = take_rows(d.x, split.validation);
    const MatrixXd y_val = take_rows(d.y, split.validation);

    TrainOutcome out;
    out.train_rows = split.train.size();
    out.validation_rows = split.validation.size();
    out.model = sdae::SdaeModel::create(d.x.cols(), cfg.hidden, d.y.cols(), cfg.corruption,
                                        splitmix64(cfg.seed ^ kInitStream));
    out.model.x_bounds = sdae::Bounds::from_rows(x_train);
    out.model.y_bounds = sdae::Bounds::from_rows(y_train);

    const MatrixXd xn = sdae::normalize_rows(x_train, out.model.x_bounds);
    const MatrixXd yn = sdae::normalize_rows(y_train, out.model.y_bounds);
    const MatrixXd xv = sdae::normalize_rows(x_val, out.model.x_bounds);
    const MatrixXd yv = sdae::normalize_rows(y_val, out.model.y_bounds);

    auto t0 = Clock::now();
    out.pretrain = sdae::pretrain_stack(out.model, xn, cfg);
    out.pretrain_seconds = seconds_since(t0);
    t0 = Clock::now();
    out.finetune = sdae::finetune(out.model, xn, yn, xv, yv, cfg);
    out.finetune_seconds = seconds_since(t0);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Rows per inference chunk. The chunk buffers below are allocated once per
// call and reused, so the loop does not touch fresh pages. predict() is
// row-independent, so the chunking does not change any value.
constexpr Index kInferChunk = 512;

struct InferScratch {
    MatrixXd normalized;
    MatrixXd predicted;
    sdae::PredictBuffers hidden;
};

void infer_chunk(const sdae::SdaeModel& model, const MatrixXd& features, Eigen::Ref<MatrixXd> out,
                 InferScratch& s) {
    s.normalized = sdae::normalize_rows(features, model.x_bounds);
    sdae::predict_into(model, s.normalized, s.predicted, s.hidden);
    sdae::denormalize_rows_into(s.predicted, model.y_bounds, out);
}

void check_feature_width(const sdae::SdaeModel& model, Index width) {
    if (width != model.input_width())
        throw DimensionMismatch("model expects " + std::to_string(model.input_width()) + " input features, case has " +
                                std::to_string(width));
}

}  // namespace

MatrixXd infer_outputs(const sdae::SdaeModel& model, const MatrixXd& features) {
    check_feature_width(model, features.cols());
    MatrixXd out(features.rows(), model.output_width());
    InferScratch scratch;
    MatrixXd chunk;
    for (Index i = 0; i < features.rows(); i += kInferChunk) {
        const Index n = std::min(kInferChunk, features.rows() - i);
        chunk = features.middleRows(i, n);
        infer_chunk(model, chunk, out.middleRows(i, n), scratch);
    }
    return out;
}

MatrixXd surrogate_outputs(const sdae::SdaeModel& model, const NetworkCase& c, const MatrixXd& samples) {
    check_feature_width(model, static_cast<Index>(feature_count(c)));
    MatrixXd out(samples.rows(), model.output_width());
    InferScratch scratch;
    for (Index i = 0; i < samples.rows(); i += kInferChunk) {
        const Index n = std::min(kInferChunk, samples.rows() - i);
        infer_chunk(model, features_for_samples(c, samples.middleRows(i, n)), out.middleRows(i, n), scratch);
    }
    return out;
}

namespace {

std::size_t count_outside(const MatrixXd& x, const sdae::Bounds& b) {
    std::size_t n = 0;
    for (Index j = 0; j < x.cols(); ++j)
        for (Index i = 0; i < x.rows(); ++i)
            if (x(i, j) < b.min(j) || x(i, j) > b.max(j)) ++n;
    return n;
}

}  // namespace

PopfRun run_popf(const sdae::SdaeModel& model, const NetworkCase& c, const PopfOptions& opts,
                 const CorrelationSpec& spec, std::uint64_t seed) {
    const auto d_x = static_cast<Index>(feature_count(c));
    const auto d_y = static_cast<Index>(OutputLayout(c).size());
    if (model.input_width() != d_x || model.output_width() != d_y)
        throw DimensionMismatch("model dimensions " + std::to_string(model.input_width()) + "->" +
                                std::to_string(model.output_width()) + " do not match case (" + std::to_string(d_x) +
                                "->" + std::to_string(d_y) + ")");
    if (opts.batch < 1) throw Error("popf: batch must be at least 1");

    PopfRun run;
    run.samples.seed = seed;
    run.samples.columns = source_column_names(c);
    OperatingConditionSampler sampler(c, spec, seed);

    if (!opts.converge) {
        if (opts.n_samples < 1) throw Error("popf: n_samples must be at least 1");
        auto t0 = Clock::now();
        run.samples.values = sampler.next(opts.n_samples);
        const MatrixXd x = features_for_samples(c, run.samples.values);
        run.sampling_seconds = seconds_since(t0);
        t0 = Clock::now();
        run.predictions = infer_outputs(model, x);
        run.inference_seconds = seconds_since(t0);
        run.extrapolated = count_outside(x, model.x_bounds);
        return run;
    }

    ConvergenceState state(static_cast<std::size_t>(d_y), opts.threshold, opts.max_samples);
    std::vector<MatrixXd> sample_chunks, pred_chunks;
    std::size_t total = 0;
    while (!run.converged) {
        const std::size_t want = std::min(opts.batch, opts.max_samples - total);
        auto t0 = Clock::now();
        MatrixXd s = sampler.next(want);
        const MatrixXd x = features_for_samples(c, s);
        run.sampling_seconds += seconds_since(t0);
        t0 = Clock::now();
        MatrixXd p = infer_outputs(model, x);
        run.inference_seconds += seconds_since(t0);

        Index used = 0;
        while (used < p.rows() && !run.converged) {
            run.converged = update_convergence(state, p.row(used).transpose());
            ++used;
        }
        run.extrapolated += count_outside(x.topRows(used), model.x_bounds);
        sample_chunks.push_back(s.topRows(used));
        pred_chunks.push_back(p.topRows(used));
        total += static_cast<std::size_t>(used);
    }
    run.samples.values.resize(static_cast<Index>(total), static_cast<Index>(c.n_source()));
    run.predictions.resize(static_cast<Index>(total), d_y);
    Index row = 0;
    for (std::size_t k = 0; k < sample_chunks.size(); ++k) {
        run.samples.values.middleRows(row, sample_chunks[k].rows()) = sample_chunks[k];
        run.predictions.middleRows(row, pred_chunks[k].rows()) = pred_chunks[k];
        row += sample_chunks[k].rows();
    }
    return run;
}

}  // namespace popf

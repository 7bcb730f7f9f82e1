#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "popf/grid.hpp"
#include "popf/oracle.hpp"
#include "popf/sampling.hpp"
#include "popf/sdae.hpp"

namespace popf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Training data

struct TrainingDataset {
    MatrixXd sources;  // realized source values, one row per sample
    MatrixXd x;        // PQ-bus injections
    MatrixXd y;        // OPF output vectors
    std::vector<std::string> source_names;
    std::vector<std::string> x_names;
    std::vector<std::string> y_names;
    std::string case_name;
    std::uint64_t case_hash = 0;
    std::uint64_t seed = 0;
    std::size_t attempts = 0;
    std::size_t dropped = 0;
    PowerFlowOptions power_flow;
};

std::vector<std::string> feature_names(const NetworkCase& c);
std::vector<std::string> output_names(const NetworkCase& c);

// Training draws use their own stream derived from `seed`, so a dataset and
// an evaluation run with the same seed never share samples. Samples the
// oracle rejects are dropped and replaced; throws TooManyRejections when more
// than half of the draws fail.
TrainingDataset generate_training_data(const NetworkCase& c, std::size_t n, const CorrelationSpec& spec,
                                       std::uint64_t seed);

// Largest absolute difference between stored labels and a fresh oracle run.
double verify_dataset(const NetworkCase& c, const TrainingDataset& d);

// dataset_X.csv, dataset_Y.csv, dataset_sources.csv and dataset.json
void write_dataset(const TrainingDataset& d, const std::string& dir);
TrainingDataset read_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Training

struct TrainValidationSplit {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> validation;
};

// 5:1 split over a seeded permutation.
TrainValidationSplit split_train_validation(std::size_t rows, std::uint64_t seed);

struct TrainOutcome {
    sdae::SdaeModel model;
    sdae::StackPretrainReport pretrain;
    sdae::FinetuneResult finetune;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    double pretrain_seconds = 0.0;
    double finetune_seconds = 0.0;
};

TrainOutcome train_popf_model(const TrainingDataset& d, const sdae::TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Inference

// Normalize, forward in inference mode, denormalize. Throws DimensionMismatch
// when the model was trained for different dimensions.
MatrixXd infer_outputs(const sdae::SdaeModel& model, const MatrixXd& features);
MatrixXd features_for_samples(const NetworkCase& c, const MatrixXd& samples);
// features_for_samples followed by infer_outputs, chunked.
MatrixXd surrogate_outputs(const sdae::SdaeModel& model, const NetworkCase& c, const MatrixXd& samples);

struct PopfOptions {
    std::size_t n_samples = 10000;
    bool converge = false;
    double threshold = 0.05;
    std::size_t max_samples = 50000;
    std::size_t batch = 1000;
};

struct PopfRun {
    SampleMatrix samples;
    MatrixXd predictions;
    bool converged = false;
    std::size_t extrapolated = 0;  // feature entries outside the training bounds
    double sampling_seconds = 0.0;
    double inference_seconds = 0.0;
};

PopfRun run_popf(const sdae::SdaeModel& model, const NetworkCase& c, const PopfOptions& opts,
                 const CorrelationSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Statistics

struct Density {
    VectorXd edges;    // bins + 1 entries
    VectorXd density;  // per bin, integrates to 1
    bool degenerate = false;

    VectorXd centers() const;
    double integral() const;
};

// Equal-width histogram over [lo, hi], normalized to unit area. A zero-width
// range gives one bin of width 1 centered on the value.
Density histogram(const VectorXd& values, std::size_t bins, double lo, double hi);

struct IndexStatistics {
    double mean = 0.0;
    double std = 0.0;   // n - 1 divisor
    bool std_defined = true;
    Density density;
};

std::vector<IndexStatistics> compute_statistics(const MatrixXd& values, std::size_t bins);

// ---------------------------------------------------------------------------
// Accuracy metrics

struct ExceedanceThresholds {
    double voltage_coarse = 0.01;  // pu
    double voltage_fine = 0.001;   // pu
    double generator_mw = 3.0;
    double branch_mw = 3.0;
    double cost_fine = 1000.0;  // $
    double cost_coarse = 3000.0;
};

// Pooled exceedance probabilities, one per error class and threshold.
struct Exceedance {
    double p_ev1 = 0.0;  // voltage > voltage_coarse
    double p_ev2 = 0.0;  // voltage > voltage_fine
    double p_eg = 0.0;
    double p_eb = 0.0;
    double p_ef1 = 0.0;  // cost > cost_fine
    double p_ef2 = 0.0;  // cost > cost_coarse
};

struct ErrorMetrics {
    VectorXd e1;  // relative error of the mean per index
    VectorXd e2;  // relative error of the std per index
    std::vector<bool> e1_absolute;  // reference mean was zero; e1 is absolute
    std::vector<bool> e2_absolute;
    Exceedance pooled;
    // Per-index exceedance at the class's first and second threshold
    // (generator and branch classes repeat their single threshold).
    MatrixXd per_index;
};

ErrorMetrics error_metrics(const MatrixXd& reference, const MatrixXd& candidate, const OutputLayout& layout,
                           double base_mva, const ExceedanceThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Method comparison

struct MethodResult {
    std::string name;
    std::string description;
    bool ok = false;
    std::string failure;
    MatrixXd outputs;  // rows aligned with PopfReport::valid_rows
    VectorXd mean;
    VectorXd std;
    double seconds = 0.0;
};

struct PlottedDensity {
    std::size_t index = 0;
    std::string name;
    std::vector<Density> per_method;  // aligned with PopfReport::methods
};

struct CompareOptions {
    std::size_t n_samples = 10000;
    std::size_t bins = 50;
    std::vector<std::string> plotted;  // output names; empty picks defaults
    bool self_compare = false;         // M1 := M0
    ExceedanceThresholds thresholds;
};

struct PopfReport {
    std::string case_name;
    std::uint64_t case_hash = 0;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    std::vector<Eigen::Index> valid_rows;
    std::size_t failed_samples = 0;
    std::size_t extrapolated = 0;
    std::vector<std::string> index_names;
    std::vector<MethodResult> methods;                // M0, M1, M3
    std::vector<std::optional<ErrorMetrics>> errors;  // vs methods[0]
    std::vector<PlottedDensity> densities;
    double base_mva = 100.0;
};

// M0 (oracle MCS), M1 (surrogate inference), M3 (DC dispatch only), all on
// one shared sample matrix. `model` may be null; that method is then reported
// as failed.
PopfReport compare_methods(const NetworkCase& c, const sdae::SdaeModel* model, const CorrelationSpec& spec,
                           std::uint64_t seed, const CompareOptions& opts);

std::string report_json(const PopfReport& r, bool include_timing = true);
std::string summary_table(const PopfReport& r);
std::string exceedance_table(const PopfReport& r);
// report.json plus density_<index>_<method>.csv files.
void write_report(const PopfReport& r, const std::string& dir);

}  // namespace popf

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "popf/grid.hpp"

namespace popf {

// Correlated members of one corr_group, as column indices into the sample
// matrix (source order) plus their correlation matrix.
struct CorrelationGroup {
    std::string name;
    std::vector<std::size_t> columns;
    Eigen::MatrixXd corr;
};

struct CorrelationSpec {
    std::vector<CorrelationGroup> groups;
};

// Builds a spec from a JSON document {"groups": {"<label>": [[...], ...]}}.
// Each matrix is ordered like the case's sources carrying that corr_group
// label. Labels without a matrix are treated as independent. Throws
// SchemaError for shape problems and NotPositiveDefinite for bad matrices.
CorrelationSpec parse_correlation_spec(const NetworkCase& c, std::string_view json_text);

// Standard normals, one independent stream per column. Column j draws from a
// mt19937_64 seeded with splitmix64(seed + j * 0x9E3779B97F4A7C15) and maps
// uniform pairs through Box-Muller. Streams are prefix-stable: drawing n rows
// then m rows equals drawing n + m rows at once.
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::size_t columns);
    Eigen::MatrixXd next(std::size_t rows);

  private:
    struct Column {
        std::mt19937_64 engine;
        double spare = 0.0;
        bool has_spare = false;
    };
    double draw(Column& col);
    std::vector<Column> columns_;
};

std::uint64_t splitmix64(std::uint64_t x);

Eigen::MatrixXd draw_standard_normals(std::size_t n, std::size_t d, std::uint64_t seed);

// Applies the lower Cholesky factor of each group to that group's columns;
// other columns pass through. Throws NotPositiveDefinite.
Eigen::MatrixXd correlate(const Eigen::MatrixXd& z, const CorrelationSpec& spec);

double standard_normal_cdf(double z);

// Maps one standard-normal value to the per-unit realized value of a source.
double transform_marginal(double z, const StochasticSource& source);

double wind_power(const WindFarm& w, double speed);

struct SampleMatrix {
    Eigen::MatrixXd values;  // n_samples x n_sources, per-unit active values
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
};

std::vector<std::string> source_column_names(const NetworkCase& c);

// Incremental sampler; successive next() calls continue the same streams.
class OperatingConditionSampler {
  public:
    OperatingConditionSampler(const NetworkCase& c, CorrelationSpec spec, std::uint64_t seed);
    Eigen::MatrixXd next(std::size_t rows);

  private:
    const NetworkCase& case_;
    CorrelationSpec spec_;
    NormalStream normals_;
};

SampleMatrix sample_operating_conditions(const NetworkCase& c, std::size_t n,
                                         const CorrelationSpec& spec, std::uint64_t seed);

// Delimited text plus a JSON sidecar carrying the seed.
void write_sample_matrix(const SampleMatrix& s, const std::string& csv_path,
                         const std::string& sidecar_path);
SampleMatrix read_sample_matrix(const std::string& csv_path, const std::string& sidecar_path);

// ---------------------------------------------------------------------------
// MCS stopping rule

struct ConvergenceState {
    std::size_t count = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd m2;
    double threshold = 0.05;
    std::size_t max_samples = 50000;

    explicit ConvergenceState(std::size_t indexes = 0, double threshold_ = 0.05,
                              std::size_t max_samples_ = 50000)
        : mean(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(indexes))),
          m2(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(indexes))),
          threshold(threshold_),
          max_samples(max_samples_) {}

    Eigen::VectorXd std_dev() const;
    // Per-index variance coefficient (standard error over |mean|); for
    // |mean| < 1e-12 the bare standard error. Needs count >= 2.
    Eigen::VectorXd variance_coefficients() const;
};

// Welford update with one value per index. Returns true when every index
// meets the threshold (count >= 2) or count has reached max_samples.
bool update_convergence(ConvergenceState& state, const Eigen::VectorXd& values);

}  // namespace popf

// popf: command-line front end for case validation, training-data generation,
// surrogate training, probabilistic OPF runs and method comparison.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "popf/errors.hpp"
#include "popf/grid.hpp"
#include "popf/io.hpp"
#include "popf/pipeline.hpp"
#include "popf/sampling.hpp"
#include "popf/sdae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsage = 2;

// Thrown for bad invocations that CLI11 cannot catch itself (missing paths,
// n = 0, ...). Maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string case_path;
    std::string correlation_path;
    std::uint64_t seed = 0;
    std::string dataset_dir = "dataset";
    std::string model_path = "model.sdae";
    std::string out_dir = "out";
};

std::string num6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path not set");
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

popf::NetworkCase load_case_checked(const Globals& g) {
    require_file(g.case_path, "case file");
    try {
        return popf::load_case(g.case_path);
    } catch (const popf::SchemaError& e) {
        throw UsageError(std::string("cannot parse case: ") + e.what());
    }
}

popf::CorrelationSpec load_correlation(const Globals& g, const popf::NetworkCase& c) {
    if (g.correlation_path.empty()) return {};
    require_file(g.correlation_path, "correlation file");
    return popf::parse_correlation_spec(c, popf::io::read_file(g.correlation_path));
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw popf::IoError("cannot create directory '" + dir + "': " + ec.message());
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
    require_file(path, "case file");
    popf::NetworkCase c;
    try {
        c = popf::parse_case(popf::io::read_file(path));
    } catch (const popf::ValidationError& e) {
        for (const auto& v : e.violations()) std::cout << v << "\n";
        return kDomainFailure;
    } catch (const popf::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    const auto violations = popf::validate_case(c);
    for (const auto& v : violations) std::cout << v << "\n";
    if (!violations.empty()) return kDomainFailure;
    if (!popf::is_connected(c)) {
        std::cout << "system: network is not connected\n";
        return kDomainFailure;
    }
    return kOk;
}

int cmd_gen_data(const Globals& g, std::size_t n) {
    if (n < 1) throw UsageError("--n must be at least 1");
    const auto c = load_case_checked(g);
    const auto spec = load_correlation(g, c);
    const auto d = popf::generate_training_data(c, n, spec, g.seed);
    popf::write_dataset(d, g.dataset_dir);
    std::cout << "rows " << d.y.rows() << ", attempts " << d.attempts << ", dropped " << d.dropped << "\n";
    std::cout << "case " << d.case_name << " hash " << popf::hex64(d.case_hash) << ", seed " << d.seed << "\n";
    std::cout << "wrote " << g.dataset_dir << "\n";
    return kOk;
}

int cmd_train(const Globals& g, popf::sdae::TrainConfig cfg, const std::string& history_path) {
    if (!fs::exists(fs::path(g.dataset_dir) / "dataset_X.csv")) throw UsageError("dataset not found in " + g.dataset_dir);
    const auto d = popf::read_dataset(g.dataset_dir);
    popf::sdae::validate(cfg);
    const auto out = popf::train_popf_model(d, cfg);
    popf::sdae::save_model(out.model, g.model_path);
    const std::string hist = history_path.empty() ? g.model_path + ".history.csv" : history_path;
    popf::io::write_file_atomic(hist, popf::sdae::history_csv(out.finetune.history));

    const auto& h = out.finetune.history;
    std::string widths;
    for (auto w : cfg.hidden) widths += (widths.empty() ? "" : ",") + std::to_string(w);
    std::cout << "hidden " << widths << ", eta " << num6(cfg.eta_unsup) << "/" << num6(cfg.eta_sup) << ", batch "
              << cfg.batch_size << ", momentum " << num6(cfg.momentum) << ", epochs " << cfg.epochs_unsup << "/"
              << cfg.epochs_sup << ", patience " << cfg.patience << ", corruption " << num6(cfg.corruption)
              << " (fine-tune " << num6(cfg.finetune_level()) << ")\n";
    std::cout << "train rows " << out.train_rows << ", validation rows " << out.validation_rows << "\n";
    for (std::size_t l = 0; l < out.pretrain.losses.size(); ++l)
        if (!out.pretrain.losses[l].empty())
            std::cout << "pretrain layer " << l << ": reconstruction loss " << num6(out.pretrain.losses[l].front())
                      << " -> " << num6(out.pretrain.losses[l].back()) << "\n";
    if (!h.empty())
        std::cout << "final train loss " << num6(h.back().train_loss) << ", validation loss "
                  << num6(h.back().val_loss) << "\n";
    std::cout << "epochs " << h.size() << ", best epoch " << out.finetune.best_epoch << ", stop reason "
              << (out.finetune.reason == popf::sdae::StopReason::EarlyStop ? "early stop" : "epoch cap") << "\n";
    std::cout << "pretrain " << num6(out.pretrain_seconds) << " s, finetune " << num6(out.finetune_seconds) << " s\n";
    std::cout << "wrote " << g.model_path << " and " << hist << "\n";
    return kOk;
}

struct PopfArgs {
    std::size_t samples = 10000;
    bool converge = false;
    double threshold = 0.05;
    std::size_t max_samples = 50000;
    std::size_t batch = 1000;
    std::size_t bins = 50;
};

int cmd_popf(const Globals& g, const PopfArgs& a) {
    if (!a.converge && a.samples < 1) throw UsageError("--samples must be at least 1");
    if (a.bins < 1) throw UsageError("--bins must be at least 1");
    const auto c = load_case_checked(g);
    const auto spec = load_correlation(g, c);
    require_file(g.model_path, "model");
    const auto model = popf::sdae::load_model(g.model_path);

    popf::PopfOptions opts;
    opts.n_samples = a.samples;
    opts.converge = a.converge;
    opts.threshold = a.threshold;
    opts.max_samples = a.max_samples;
    opts.batch = a.batch;
    const auto run = popf::run_popf(model, c, opts, spec, g.seed);
    const auto stats = popf::compute_statistics(run.predictions, a.bins);
    const popf::OutputLayout layout(c);

    ensure_dir(g.out_dir);
    json doc = {{"case", {{"name", c.name}, {"hash", popf::hex64(popf::case_hash(c))}}},
                {"seed", g.seed},
                {"n_samples", run.predictions.rows()},
                {"mode", a.converge ? "converge" : "fixed"},
                {"converged", run.converged},
                {"extrapolated_features", run.extrapolated},
                {"sampling_seconds", run.sampling_seconds},
                {"inference_seconds", run.inference_seconds}};
    json indexes = json::array();
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto& s = stats[i];
        json e = {{"name", layout.name(i)}, {"mean", s.mean}, {"std_defined", s.std_defined}};
        e["std"] = s.std_defined ? json(s.std) : json(nullptr);
        e["density_degenerate"] = s.density.degenerate;
        indexes.push_back(e);
        const Eigen::MatrixXd table =
            (Eigen::MatrixXd(s.density.density.size(), 2) << s.density.centers(), s.density.density).finished();
        popf::io::write_file_atomic(g.out_dir + "/density_" + layout.name(i) + ".csv",
                                    popf::io::to_csv({"bin_center", "density"}, table));
    }
    doc["indexes"] = indexes;
    popf::io::write_file_atomic(g.out_dir + "/popf.json", doc.dump(2) + "\n");

    std::cout << "samples " << run.predictions.rows() << (a.converge ? (run.converged ? " (converged)" : "") : "")
              << ", inference " << num6(run.inference_seconds) << " s\n";
    if (run.extrapolated > 0)
        std::cout << "warning: " << run.extrapolated << " feature values outside the training range\n";
    std::cout << "index       mean          std\n";
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto name = layout.name(i);
        std::cout << name << std::string(name.size() < 12 ? 12 - name.size() : 1, ' ') << num6(stats[i].mean)
                  << std::string(14 - std::min<std::size_t>(13, num6(stats[i].mean).size()), ' ')
                  << (stats[i].std_defined ? num6(stats[i].std) : std::string("undefined")) << "\n";
    }
    std::cout << "wrote " << g.out_dir << "\n";
    return kOk;
}

struct CompareArgs {
    std::size_t samples = 10000;
    std::size_t bins = 50;
    std::vector<std::string> plot;
    bool self_compare = false;
};

int cmd_compare(const Globals& g, const CompareArgs& a) {
    if (a.samples < 1) throw UsageError("--samples must be at least 1");
    if (a.bins < 1) throw UsageError("--bins must be at least 1");
    const auto c = load_case_checked(g);
    const auto spec = load_correlation(g, c);
    std::optional<popf::sdae::SdaeModel> model;
    if (!a.self_compare) {
        require_file(g.model_path, "model");
        model = popf::sdae::load_model(g.model_path);
    }
    popf::CompareOptions opts;
    opts.n_samples = a.samples;
    opts.bins = a.bins;
    opts.plotted = a.plot;
    opts.self_compare = a.self_compare;
    const auto r = popf::compare_methods(c, model ? &*model : nullptr, spec, g.seed, opts);
    ensure_dir(g.out_dir);
    popf::write_report(r, g.out_dir);

    std::cout << popf::summary_table(r) << "\n" << popf::exceedance_table(r);
    if (r.failed_samples > 0) std::cout << "dropped " << r.failed_samples << " samples the oracle could not solve\n";
    if (r.extrapolated > 0) std::cout << "warning: " << r.extrapolated << " feature values outside the training range\n";
    bool all_ok = true;
    for (const auto& m : r.methods)
        if (!m.ok) {
            all_ok = false;
            std::cout << m.name << " failed: " << m.failure << "\n";
        }
    std::cout << "wrote " << g.out_dir << "\n";
    return all_ok ? kOk : kDomainFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic optimal power flow with a stacked denoising autoencoder surrogate", "popf"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "INI file; command-line flags override its values");

    Globals g;
    app.add_option("--case", g.case_path, "Case file (JSON)");
    app.add_option("--correlation", g.correlation_path, "Correlation groups (JSON)");
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--dataset", g.dataset_dir, "Dataset directory")->capture_default_str();
    app.add_option("--model", g.model_path, "Model checkpoint path")->capture_default_str();
    app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a case file");
    validate->add_option("case", validate_path, "Case file")->required();

    std::size_t n_rows = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate oracle-labeled training data");
    gen->add_option("--n", n_rows, "Number of rows")->required();

    popf::sdae::TrainConfig cfg;
    std::vector<Eigen::Index> hidden(cfg.hidden.begin(), cfg.hidden.end());
    double finetune_corruption = -1.0;
    std::string history_path;
    auto* train = app.add_subcommand("train", "Train the surrogate on a dataset");
    train->add_option("--eta_unsup", cfg.eta_unsup, "Pretraining learning rate")->capture_default_str();
    train->add_option("--eta_sup", cfg.eta_sup, "Fine-tuning learning rate")->capture_default_str();
    train->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
    train->add_option("--momentum", cfg.momentum, "Momentum blend p")->capture_default_str();
    train->add_option("--epochs_unsup", cfg.epochs_unsup, "Pretraining epochs per layer")->capture_default_str();
    train->add_option("--epochs_sup", cfg.epochs_sup, "Fine-tuning epoch cap")->capture_default_str();
    train->add_option("--patience", cfg.patience, "Early-stopping patience")->capture_default_str();
    train->add_option("--corruption", cfg.corruption, "Input corruption level")->capture_default_str();
    train->add_option("--finetune_corruption", finetune_corruption,
                      "Corruption during fine-tuning (default: same as --corruption)");
    train->add_option("--hidden", hidden, "Hidden layer widths, e.g. 200,400,300")->delimiter(',')->capture_default_str();
    train->add_option("--history", history_path, "History CSV (default: <model>.history.csv)");

    PopfArgs pa;
    auto* popf_cmd = app.add_subcommand("popf", "Run probabilistic OPF with a trained model");
    auto* samples_opt = popf_cmd->add_option("--samples", pa.samples, "Fixed sample count")->capture_default_str();
    popf_cmd->add_flag("--converge", pa.converge, "Sample until the variance-coefficient rule is met")
        ->excludes(samples_opt);
    popf_cmd->add_option("--threshold", pa.threshold, "Variance-coefficient threshold")->capture_default_str();
    popf_cmd->add_option("--max_samples", pa.max_samples, "Sample cap for --converge")->capture_default_str();
    popf_cmd->add_option("--batch", pa.batch, "Samples per inference batch in --converge mode")->capture_default_str();
    popf_cmd->add_option("--bins", pa.bins, "Histogram bins")->capture_default_str();

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "Compare oracle MCS, surrogate and DC-only methods");
    compare->add_option("--samples", ca.samples, "Monte-Carlo samples")->capture_default_str();
    compare->add_option("--bins", ca.bins, "Histogram bins")->capture_default_str();
    compare->add_option("--plot", ca.plot, "Output indexes for density files (e.g. cost,V3,G1,B7)")->delimiter(',');
    compare->add_flag("--self_compare", ca.self_compare, "Use the oracle results in place of the surrogate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*validate) return cmd_validate(validate_path);
        if (*gen) return cmd_gen_data(g, n_rows);
        if (*train) {
            cfg.seed = g.seed;
            cfg.hidden = hidden;
            if (finetune_corruption >= 0.0) cfg.finetune_corruption = finetune_corruption;
            return cmd_train(g, cfg, history_path);
        }
        if (*popf_cmd) return cmd_popf(g, pa);
        if (*compare) return cmd_compare(g, ca);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const popf::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const popf::DimensionMismatch& e) {
        std::cerr << "error: dimension mismatch: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const popf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainFailure;
    }
    return kUsage;
}

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "popf/errors.hpp"
#include "popf/io.hpp"
#include "popf/pipeline.hpp"

namespace popf {

using Eigen::Index;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string short_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

json to_json(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

// Runs the per-sample oracle loop; rows that fail are flagged in `failed`.
MatrixXd solve_each(const OpfOracle& oracle, const MatrixXd& samples, bool dc, std::vector<char>& failed,
                    std::size_t d_y) {
    MatrixXd out = MatrixXd::Zero(samples.rows(), static_cast<Index>(d_y));
    for (Index i = 0; i < samples.rows(); ++i) {
        try {
            const VectorXd s = samples.row(i).transpose();
            out.row(i) = (dc ? oracle.solve_dc(s) : oracle.solve(s)).to_vector().transpose();
        } catch (const Error&) {
            failed[static_cast<std::size_t>(i)] = 1;
        }
    }
    return out;
}

MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
    MatrixXd out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
    return out;
}

std::vector<std::size_t> default_plotted(const OutputLayout& layout, const MethodResult& ref) {
    std::vector<std::size_t> picks{0};
    auto widest = [&](std::size_t first, std::size_t count) {
        if (count == 0) return;
        std::size_t best = first;
        for (std::size_t k = first; k < first + count; ++k)
            if (ref.ok && ref.std(static_cast<Index>(k)) > ref.std(static_cast<Index>(best))) best = k;
        picks.push_back(best);
    };
    widest(layout.voltage(0), layout.n_bus);
    widest(layout.generator(0), layout.n_gen);
    widest(layout.branch(0), layout.n_branch);
    return picks;
}

}  // namespace

PopfReport compare_methods(const NetworkCase& c, const sdae::SdaeModel* model, const CorrelationSpec& spec,
                           std::uint64_t seed, const CompareOptions& opts) {
    if (opts.n_samples < 1) throw Error("compare: n_samples must be at least 1");
    const OutputLayout layout(c);
    const std::size_t d_y = layout.size();

    PopfReport r;
    r.case_name = c.name;
    r.case_hash = case_hash(c);
    r.seed = seed;
    r.n_samples = opts.n_samples;
    r.base_mva = c.base_mva;
    for (std::size_t k = 0; k < d_y; ++k) r.index_names.push_back(layout.name(k));

    const SampleMatrix samples = sample_operating_conditions(c, opts.n_samples, spec, seed);
    const auto n = static_cast<std::size_t>(samples.values.rows());
    std::vector<char> failed(n, 0);
    const OpfOracle oracle(c);

    MethodResult m0;
    m0.name = "M0";
    m0.description = "MCS with the AC oracle (reference)";
    MethodResult m1;
    m1.name = "M1";
    m1.description = "MCS with SDAE inference";
    MethodResult m3;
    m3.name = "M3";
    m3.description = "MCS with DC dispatch only";

    auto t0 = Clock::now();
    MatrixXd y0 = solve_each(oracle, samples.values, false, failed, d_y);
    m0.seconds = seconds_since(t0);
    m0.ok = true;

    t0 = Clock::now();
    MatrixXd y3 = solve_each(oracle, samples.values, true, failed, d_y);
    m3.seconds = seconds_since(t0);
    m3.ok = true;

    MatrixXd y1;
    if (opts.self_compare) {
        m1.description = "self-comparison: M0 outputs";
        y1 = y0;
        m1.seconds = m0.seconds;
        m1.ok = true;
    } else if (model == nullptr) {
        m1.failure = "no trained model supplied";
    } else {
        try {
            if (model->input_width() != static_cast<Index>(feature_count(c)))
                throw DimensionMismatch("model expects " + std::to_string(model->input_width()) +
                                        " input features, case has " + std::to_string(feature_count(c)));
            t0 = Clock::now();
            y1 = surrogate_outputs(*model, c, samples.values);
            m1.seconds = seconds_since(t0);
            const MatrixXd x = features_for_samples(c, samples.values);
            if (y1.cols() != static_cast<Index>(d_y))
                throw DimensionMismatch("model output width " + std::to_string(y1.cols()) + ", case needs " +
                                        std::to_string(d_y));
            for (Index j = 0; j < x.cols(); ++j)
                for (Index i = 0; i < x.rows(); ++i)
                    if (x(i, j) < model->x_bounds.min(j) || x(i, j) > model->x_bounds.max(j)) ++r.extrapolated;
            m1.ok = true;
        } catch (const Error& e) {
            m1.failure = e.what();
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (failed[i])
            ++r.failed_samples;
        else
            r.valid_rows.push_back(static_cast<Index>(i));
    }
    if (r.valid_rows.empty()) {
        m0.ok = m3.ok = false;
        m0.failure = m3.failure = "every sample failed in the oracle";
    }

    auto finish = [&](MethodResult& m, const MatrixXd& y) {
        if (!m.ok) return;
        m.outputs = take_rows(y, r.valid_rows);
        const auto stats = compute_statistics(m.outputs, opts.bins);
        m.mean.resize(static_cast<Index>(d_y));
        m.std.resize(static_cast<Index>(d_y));
        for (std::size_t k = 0; k < d_y; ++k) {
            m.mean(static_cast<Index>(k)) = stats[k].mean;
            m.std(static_cast<Index>(k)) = stats[k].std;
        }
    };
    finish(m0, y0);
    finish(m1, y1);
    finish(m3, y3);
    r.methods = {std::move(m0), std::move(m1), std::move(m3)};

    const MethodResult& ref = r.methods[0];
    for (const auto& m : r.methods) {
        if (ref.ok && m.ok)
            r.errors.emplace_back(error_metrics(ref.outputs, m.outputs, layout, c.base_mva, opts.thresholds));
        else
            r.errors.emplace_back(std::nullopt);
    }

    std::vector<std::size_t> plotted;
    if (opts.plotted.empty()) {
        plotted = default_plotted(layout, ref);
    } else {
        for (const auto& name : opts.plotted) {
            const auto k = layout.parse_name(name);
            if (!k) throw Error("compare: unknown output index '" + name + "'");
            plotted.push_back(*k);
        }
    }
    for (std::size_t k : plotted) {
        PlottedDensity pd;
        pd.index = k;
        pd.name = layout.name(k);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& m : r.methods) {
            if (!m.ok) continue;
            lo = std::min(lo, m.outputs.col(static_cast<Index>(k)).minCoeff());
            hi = std::max(hi, m.outputs.col(static_cast<Index>(k)).maxCoeff());
        }
        for (const auto& m : r.methods)
            pd.per_method.push_back(m.ok ? histogram(m.outputs.col(static_cast<Index>(k)), opts.bins, lo, hi)
                                         : Density{});
        r.densities.push_back(std::move(pd));
    }
    return r;
}

std::string report_json(const PopfReport& r, bool include_timing) {
    json j;
    j["case"] = {{"name", r.case_name}, {"hash", hex64(r.case_hash)}, {"base_mva", r.base_mva}};
    j["seed"] = r.seed;
    j["n_samples"] = r.n_samples;
    j["n_valid"] = r.valid_rows.size();
    j["failed_samples"] = r.failed_samples;
    j["extrapolated_features"] = r.extrapolated;
    j["index_names"] = r.index_names;

    json methods = json::array();
    for (std::size_t k = 0; k < r.methods.size(); ++k) {
        const auto& m = r.methods[k];
        json jm{{"name", m.name}, {"description", m.description}, {"ok", m.ok}};
        if (!m.ok) jm["failure"] = m.failure;
        if (include_timing) jm["seconds"] = m.seconds;
        if (m.ok) {
            jm["mean"] = to_json(m.mean);
            jm["std"] = to_json(m.std);
        }
        if (k < r.errors.size() && r.errors[k]) {
            const auto& e = *r.errors[k];
            json je{{"e1", to_json(e.e1)}, {"e2", to_json(e.e2)}, {"e1_absolute", e.e1_absolute},
                    {"e2_absolute", e.e2_absolute}};
            je["exceedance"] = {{"p_ev1", e.pooled.p_ev1}, {"p_ev2", e.pooled.p_ev2}, {"p_eg", e.pooled.p_eg},
                                {"p_eb", e.pooled.p_eb},   {"p_ef1", e.pooled.p_ef1}, {"p_ef2", e.pooled.p_ef2}};
            je["per_index_exceedance"] = {{"first", to_json(e.per_index.col(0))},
                                          {"second", to_json(e.per_index.col(1))}};
            jm["errors_vs_M0"] = std::move(je);
        }
        methods.push_back(std::move(jm));
    }
    j["methods"] = std::move(methods);

    if (include_timing && r.methods.size() >= 2 && r.methods[0].ok && r.methods[1].ok && r.methods[1].seconds > 0.0)
        j["speedup_M0_over_M1"] = r.methods[0].seconds / r.methods[1].seconds;

    json dens = json::array();
    for (const auto& pd : r.densities) {
        json jd{{"index", pd.index}, {"name", pd.name}};
        json per = json::object();
        for (std::size_t k = 0; k < pd.per_method.size() && k < r.methods.size(); ++k) {
            const auto& d = pd.per_method[k];
            if (d.density.size() == 0) continue;
            per[r.methods[k].name] = {{"edges", to_json(d.edges)}, {"density", to_json(d.density)},
                                      {"degenerate", d.degenerate}};
        }
        jd["methods"] = std::move(per);
        dens.push_back(std::move(jd));
    }
    j["densities"] = std::move(dens);
    return j.dump(2) + "\n";
}

std::string summary_table(const PopfReport& r) {
    std::string out;
    out += pad("method", 8) + pad("index", 8) + pad("mean", 14) + pad("std", 14) + pad("e1(%)", 12) +
           pad("e2(%)", 12) + "time(s)\n";
    for (std::size_t k = 0; k < r.methods.size(); ++k) {
        const auto& m = r.methods[k];
        if (!m.ok) {
            out += pad(m.name, 8) + "failed: " + m.failure + "\n";
            continue;
        }
        std::string e1 = "-", e2 = "-";
        if (k < r.errors.size() && r.errors[k]) {
            e1 = short_num(100.0 * r.errors[k]->e1(0));
            e2 = short_num(100.0 * r.errors[k]->e2(0));
        }
        out += pad(m.name, 8) + pad("cost", 8) + pad(short_num(m.mean(0)), 14) + pad(short_num(m.std(0)), 14) +
               pad(e1, 12) + pad(e2, 12) + short_num(m.seconds) + "\n";
    }
    return out;
}

std::string exceedance_table(const PopfReport& r) {
    std::string out = pad("method", 8) + pad("P_ev1", 12) + pad("P_ev2", 12) + pad("P_eg", 12) + pad("P_eb", 12) +
                      pad("P_ef1", 12) + "P_ef2\n";
    auto pct = [](double p) { return short_num(100.0 * p) + "%"; };
    for (std::size_t k = 1; k < r.methods.size(); ++k) {
        if (k >= r.errors.size() || !r.errors[k]) {
            out += pad(r.methods[k].name, 8) + "n/a\n";
            continue;
        }
        const auto& e = r.errors[k]->pooled;
        out += pad(r.methods[k].name, 8) + pad(pct(e.p_ev1), 12) + pad(pct(e.p_ev2), 12) + pad(pct(e.p_eg), 12) +
               pad(pct(e.p_eb), 12) + pad(pct(e.p_ef1), 12) + pct(e.p_ef2) + "\n";
    }
    return out;
}

void write_report(const PopfReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir + "/report.json", report_json(r, true));
    for (const auto& pd : r.densities) {
        for (std::size_t k = 0; k < pd.per_method.size() && k < r.methods.size(); ++k) {
            const auto& d = pd.per_method[k];
            if (d.density.size() == 0) continue;
            MatrixXd table(d.density.size(), 2);
            table.col(0) = d.centers();
            table.col(1) = d.density;
            io::write_file_atomic(dir + "/density_" + pd.name + "_" + r.methods[k].name + ".csv",
                                  io::to_csv({"bin_center", "density"}, table));
        }
    }
}

}  // namespace popf

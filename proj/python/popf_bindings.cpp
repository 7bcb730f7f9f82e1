#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "popf/errors.hpp"
#include "popf/grid.hpp"
#include "popf/io.hpp"
#include "popf/oracle.hpp"
#include "popf/pipeline.hpp"
#include "popf/sampling.hpp"
#include "popf/sdae.hpp"

namespace py = pybind11;
using namespace popf;

namespace {

CorrelationSpec correlation(const NetworkCase& c, const std::string& path) {
    if (path.empty()) return {};
    return parse_correlation_spec(c, io::read_file(path));
}

sdae::TrainConfig config_from(const py::dict& d) {
    sdae::TrainConfig cfg;
    for (const auto& [key, value] : d) {
        const auto k = key.cast<std::string>();
        if (k == "eta_unsup") cfg.eta_unsup = value.cast<double>();
        else if (k == "eta_sup") cfg.eta_sup = value.cast<double>();
        else if (k == "batch") cfg.batch_size = value.cast<std::size_t>();
        else if (k == "momentum") cfg.momentum = value.cast<double>();
        else if (k == "epochs_unsup") cfg.epochs_unsup = value.cast<std::size_t>();
        else if (k == "epochs_sup") cfg.epochs_sup = value.cast<std::size_t>();
        else if (k == "patience") cfg.patience = value.cast<std::size_t>();
        else if (k == "seed") cfg.seed = value.cast<std::uint64_t>();
        else if (k == "corruption") cfg.corruption = value.cast<double>();
        else if (k == "finetune_corruption") cfg.finetune_corruption = value.cast<double>();
        else if (k == "hidden") cfg.hidden = value.cast<std::vector<Eigen::Index>>();
        else throw py::key_error("unknown training option '" + k + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(popf_py, m) {
    m.doc() = "Probabilistic OPF with an SDAE surrogate";

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
#if PYBIND11_VERSION_HEX >= 0x020C0000
            py::set_error(error, e.what());
#else
            error(e.what());
#endif
        }
    });

    py::class_<NetworkCase>(m, "Case")
        .def_readonly("name", &NetworkCase::name)
        .def_readonly("base_mva", &NetworkCase::base_mva)
        .def_property_readonly("n_bus", &NetworkCase::n_bus)
        .def_property_readonly("n_gen", &NetworkCase::n_gen)
        .def_property_readonly("n_branch", &NetworkCase::n_branch)
        .def_property_readonly("n_source", &NetworkCase::n_source)
        .def_property_readonly("feature_names", [](const NetworkCase& c) { return feature_names(c); })
        .def_property_readonly("output_names", [](const NetworkCase& c) { return output_names(c); })
        .def_property_readonly("source_names", [](const NetworkCase& c) { return source_column_names(c); })
        .def("to_json", &serialize_case)
        .def("__repr__", [](const NetworkCase& c) {
            return "<Case " + c.name + ": " + std::to_string(c.n_bus()) + " buses, " + std::to_string(c.n_gen()) +
                   " generators>";
        });

    m.def("load_case", &load_case, py::arg("path"));
    m.def("parse_case", [](const std::string& text) { return parse_case(text); }, py::arg("text"));
    m.def("validate", &validate_case, py::arg("case"), "Violation messages; empty when the case is valid.");

    m.def(
        "sample",
        [](const NetworkCase& c, std::size_t n, std::uint64_t seed, const std::string& correlation_path) {
            return sample_operating_conditions(c, n, correlation(c, correlation_path), seed).values;
        },
        py::arg("case"), py::arg("n"), py::arg("seed") = 0, py::arg("correlation") = "",
        "Per-unit source realizations, one row per sample.");

    m.def(
        "oracle",
        [](const NetworkCase& c, const Eigen::VectorXd& sample) { return oracle_opf(c, sample).to_vector(); },
        py::arg("case"), py::arg("sample"), "OPF output vector [cost, V..., Pg..., Pbranch...] for one sample.");

    m.def(
        "features",
        [](const NetworkCase& c, const Eigen::MatrixXd& samples) { return features_for_samples(c, samples); },
        py::arg("case"), py::arg("samples"));

    m.def(
        "generate_dataset",
        [](const NetworkCase& c, std::size_t n, std::uint64_t seed, const std::string& correlation_path,
           const std::string& out_dir) {
            const auto d = generate_training_data(c, n, correlation(c, correlation_path), seed);
            if (!out_dir.empty()) write_dataset(d, out_dir);
            return py::make_tuple(d.x, d.y);
        },
        py::arg("case"), py::arg("n"), py::arg("seed") = 0, py::arg("correlation") = "", py::arg("out_dir") = "",
        "Oracle-labelled (X, Y); also written to out_dir when given.");

    py::class_<sdae::SdaeModel>(m, "Model")
        .def_property_readonly("widths", &sdae::SdaeModel::widths)
        .def("predict",
             [](const sdae::SdaeModel& model, const Eigen::MatrixXd& features) {
                 return infer_outputs(model, features);
             },
             py::arg("features"), "Physical-unit outputs for raw feature rows.")
        .def("surrogate",
             [](const sdae::SdaeModel& model, const NetworkCase& c, const Eigen::MatrixXd& samples) {
                 return surrogate_outputs(model, c, samples);
             },
             py::arg("case"), py::arg("samples"))
        .def("save", [](const sdae::SdaeModel& model, const std::string& path) { sdae::save_model(model, path); },
             py::arg("path"));

    m.def("load_model", &sdae::load_model, py::arg("path"));

    m.def(
        "train",
        [](const std::string& dataset_dir, const py::dict& options) {
            const auto d = read_dataset(dataset_dir);
            auto outcome = train_popf_model(d, config_from(options));
            py::list history;
            for (const auto& e : outcome.finetune.history)
                history.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss));
            return py::make_tuple(std::move(outcome.model), history);
        },
        py::arg("dataset_dir"), py::arg("options") = py::dict(),
        "Train on a dataset directory; returns (model, [(epoch, train_loss, val_loss), ...]).");

    m.def(
        "compare",
        [](const NetworkCase& c, const sdae::SdaeModel* model, std::uint64_t seed, std::size_t n_samples,
           const std::string& correlation_path) {
            CompareOptions opts;
            opts.n_samples = n_samples;
            const auto r = compare_methods(c, model, correlation(c, correlation_path), seed, opts);
            return py::module_::import("json").attr("loads")(report_json(r, true));
        },
        py::arg("case"), py::arg("model"), py::arg("seed") = 0, py::arg("n_samples") = 10000,
        py::arg("correlation") = "", "Method comparison report as a dict (same layout as report.json).");
}

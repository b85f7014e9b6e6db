#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "gradflow/closed_form.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/experiment.hpp"
#include "gradflow/graph.hpp"
#include "gradflow/lipschitz.hpp"
#include "gradflow/similarity.hpp"
#include "gradflow/train.hpp"

namespace py = pybind11;
using namespace gradflow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_dense(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    const auto r = static_cast<std::size_t>(a.shape(0));
    const auto c = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const DenseMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

std::vector<DenseMatrix> to_dense_list(const std::vector<Array>& ws) {
    std::vector<DenseMatrix> out;
    out.reserve(ws.size());
    for (const auto& w : ws) out.push_back(to_dense(w));
    return out;
}

py::list to_array_list(const std::vector<DenseMatrix>& ms) {
    py::list out;
    for (const auto& m : ms) out.append(to_array(m));
    return out;
}

py::dict fit_dict(const DecayFit& f) {
    py::dict d;
    d["slope"] = f.slope;
    d["intercept"] = f.intercept;
    d["r_squared"] = f.r_squared;
    d["first_layer"] = f.first_layer;
    d["last_layer"] = f.last_layer;
    d["points"] = f.points;
    return d;
}

py::dict bound_dict(const BoundReport& r) {
    py::dict d;
    d["layer"] = r.layer;
    d["lhs"] = r.lhs;
    d["rhs"] = r.rhs;
    d["terms"] = r.terms;
    d["max_w_spectral"] = r.max_w_spectral;
    d["satisfied"] = r.satisfied;
    d["assumptions_hold"] = r.assumptions_hold;
    d["envelope_rhs"] = r.envelope_rhs;
    return d;
}

py::dict train_dict(const TrainLog& log) {
    py::list epochs;
    for (const auto& e : log.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["train_loss"] = e.train_loss;
        d["train_acc"] = e.train_acc;
        d["val_acc"] = e.val_acc;
        d["test_acc"] = e.test_acc;
        epochs.append(d);
    }
    py::dict d;
    d["epochs"] = epochs;
    d["best_epoch"] = log.best_epoch;
    d["best_val_acc"] = log.best_val_acc;
    d["train_at_best"] = log.train_at_best;
    d["test_at_best"] = log.test_at_best;
    d["representation_similarity_at_best"] = log.representation_similarity_at_best;
    if (log.gradient_profile_at_best) {
        d["gradient_profile"] = log.gradient_profile_at_best->values;
    } else {
        d["gradient_profile"] = py::none();
    }
    d["diverged"] = log.diverged;
    d["divergence_epoch"] = log.divergence_epoch;
    d["divergence_reason"] = log.divergence_reason;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gradient similarity analysis for deep graph convolutional networks";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ParseError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IntegrityError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const FitError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<Graph>(m, "Graph")
        .def_static(
            "sbm",
            [](std::size_t blocks, std::size_t per_block, double p_in, double p_out, std::size_t feat_dim,
               std::uint64_t seed) { return sbm_generate({blocks, per_block, p_in, p_out, feat_dim, seed}); },
            py::arg("blocks") = 2, py::arg("per_block") = 10, py::arg("p_in") = 0.5, py::arg("p_out") = 0.05,
            py::arg("feat_dim") = 8, py::arg("seed") = 0)
        .def_static(
            "load",
            [](const std::filesystem::path& dir, std::optional<std::string> validate_as) {
                return load_dataset(DatasetFiles::in_directory(dir), std::move(validate_as));
            },
            py::arg("directory"), py::arg("validate_as") = py::none())
        .def("save", [](const Graph& g, const std::filesystem::path& dir) {
            std::filesystem::create_directories(dir);
            write_dataset(g, DatasetFiles::in_directory(dir));
        })
        .def_property_readonly("num_nodes", &Graph::num_nodes)
        .def_property_readonly("num_classes", &Graph::num_classes)
        .def_property_readonly("num_edges", [](const Graph& g) { return g.edges().size(); })
        .def_property_readonly("features", [](const Graph& g) { return to_array(g.features()); })
        .def_property_readonly("labels", &Graph::labels)
        .def_property_readonly("norm_adj", [](const Graph& g) { return to_array(g.norm_adj().to_dense()); })
        .def_property_readonly("connected", [](const Graph& g) { return graph_properties(g).connected; })
        .def_property_readonly("bipartite", [](const Graph& g) { return graph_properties(g).bipartite; });

    m.def(
        "node_similarity", [](const Array& x) { return node_similarity(to_dense(x)); }, py::arg("x"),
        "mu(X): Frobenius norm of X after subtracting the column means.");
    m.def(
        "b_power_norm", [](const Graph& g, std::size_t k) { return b_power_norm(g.norm_adj(), k).value; },
        py::arg("graph"), py::arg("k"));
    m.def(
        "spectral_norm", [](const Array& a) { return spectral_norm(to_dense(a)).value; }, py::arg("a"));
    m.def(
        "fit_decay",
        [](std::vector<double> values) { return fit_dict(fit_decay(make_profile(ProfileKind::Gradient, values))); },
        py::arg("values"), "Log-linear fit of a layer-indexed profile against distance from the last layer.");
    m.def(
        "frobenius_normalize", [](const Array& w, double c) { return to_array(frobenius_normalize(to_dense(w), c)); },
        py::arg("w"), py::arg("c"));

    m.def(
        "plain_chain_gradient",
        [](std::size_t layer, const std::vector<Array>& weights, const Graph& g, const Array& grad_last) {
            return to_array(lgn_input_gradient(layer, to_dense_list(weights), g.norm_adj(), to_dense(grad_last)));
        },
        py::arg("layer"), py::arg("weights"), py::arg("graph"), py::arg("grad_last"));
    m.def(
        "residual_chain_gradient",
        [](std::size_t layer, const std::vector<Array>& weights, const Graph& g, const Array& grad_last) {
            const auto r = reslgn_input_gradient(layer, to_dense_list(weights), g.norm_adj(), to_dense(grad_last));
            return py::make_tuple(to_array(r.gradient), r.monomials);
        },
        py::arg("layer"), py::arg("weights"), py::arg("graph"), py::arg("grad_last"));
    m.def(
        "smoothing_bound",
        [](std::size_t layer, const std::vector<Array>& weights, const Graph& g, const Array& grad_last,
           bool residual) {
            const auto w = to_dense_list(weights);
            const auto props = graph_properties(g);
            return bound_dict(residual ? residual_smoothing_bound(layer, w, g.norm_adj(), to_dense(grad_last), props)
                                       : plain_smoothing_bound(layer, w, g.norm_adj(), to_dense(grad_last), props));
        },
        py::arg("layer"), py::arg("weights"), py::arg("graph"), py::arg("grad_last"), py::arg("residual") = false);

    m.def(
        "linear_instance",
        [](std::uint64_t seed, std::size_t depth, bool residual, std::size_t width) {
            auto inst = make_linear_instance(seed, depth, residual, width);
            py::dict d;
            d["weights"] = to_array_list(inst.model.layers);
            d["grad_x"] = to_array_list(inst.tape.grad_x);
            d["grad_w"] = to_array_list(inst.tape.grad_w);
            d["graph"] = std::move(inst.graph);
            return d;
        },
        py::arg("seed"), py::arg("depth"), py::arg("residual") = false, py::arg("width") = 4,
        "Random identity-activation model on a connected non-bipartite graph, with backprop gradients.");

    m.def(
        "train",
        [](const Graph& g, std::size_t depth, std::size_t hidden_dim, const std::string& activation, bool residual,
           std::optional<double> c, double lr, std::size_t max_epochs, std::size_t patience, bool early_stop,
           std::uint64_t seed) {
            TrainConfig tc;
            tc.model.depth = depth;
            tc.model.hidden_dim = hidden_dim;
            tc.model.activation = parse_activation(activation);
            tc.model.residual = residual;
            tc.model.lipschitz_c = c;
            tc.lr = lr;
            tc.max_epochs = max_epochs;
            tc.patience = patience;
            tc.early_stop = early_stop;
            tc.seed = seed;
            TrainLog log;
            {
                py::gil_scoped_release release;
                log = train(g, tc);
            }
            return train_dict(log);
        },
        py::arg("graph"), py::arg("depth"), py::arg("hidden_dim") = 64, py::arg("activation") = "relu",
        py::arg("residual") = false, py::arg("c") = py::none(), py::arg("lr") = 0.01, py::arg("max_epochs") = 200,
        py::arg("patience") = 100, py::arg("early_stop") = true, py::arg("seed") = 0);

    m.def(
        "run_experiment",
        [](const std::string& command, const std::map<std::string, std::string>& config, std::size_t jobs) {
            const auto cmd = parse_command(command);
            if (!cmd) throw ConfigError("unknown command '" + command + "'");
            Config cfg;
            for (const auto& [k, v] : config) cfg.set(k, v);
            auto spec = ExperimentSpec::from_config(*cmd, cfg);
            spec.jobs = jobs;
            ExperimentResult res;
            {
                py::gil_scoped_release release;
                res = run_experiment(spec);
            }
            py::dict d;
            d["exit_code"] = res.exit_code;
            d["artifacts"] = res.artifacts;
            d["seeds"] = res.seeds;
            d["messages"] = res.messages;
            return d;
        },
        py::arg("command"), py::arg("config") = std::map<std::string, std::string>{}, py::arg("jobs") = 1,
        "Runs one CLI command with `key = value` settings given as a dict of strings.");
}

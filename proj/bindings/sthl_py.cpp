#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>

#include "sthl/autograd.hpp"
#include "sthl/dataset.hpp"
#include "sthl/model.hpp"
#include "sthl/run_config.hpp"
#include "sthl/train.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

sthl::Matrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    sthl::Matrix m(a.shape(0), a.shape(1));
    std::memcpy(m.flat().data(), a.data(), sizeof(double) * m.size());
    return m;
}

py::array_t<double> from_matrix(const sthl::Matrix& m) {
    py::array_t<double> a({m.rows(), m.cols()});
    std::memcpy(a.mutable_data(), m.flat().data(), sizeof(double) * m.size());
    return a;
}

sthl::WindowedDataset to_dataset(const DoubleArray& features, const py::array_t<long>& labels,
                                 int num_classes) {
    if (features.ndim() != 3) throw std::invalid_argument("features must be (T, N, d)");
    if (labels.ndim() != 1 || labels.shape(0) != features.shape(0)) {
        throw std::invalid_argument("labels must be 1-d with one entry per timestamp");
    }
    const auto T = std::size_t(features.shape(0));
    const auto N = std::size_t(features.shape(1));
    const auto d = std::size_t(features.shape(2));
    sthl::WindowedDataset ds;
    ds.num_classes = num_classes;
    ds.features.assign(T, sthl::Matrix(N, d));
    auto f = features.unchecked<3>();
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < d; ++k) ds.features[t](i, k) = f(t, i, k);
        }
    }
    auto l = labels.unchecked<1>();
    ds.labels.resize(T);
    for (std::size_t t = 0; t < T; ++t) ds.labels[t] = static_cast<int>(l(t));
    ds.channel_names.resize(N);
    for (std::size_t i = 0; i < N; ++i) ds.channel_names[i] = "ch" + std::to_string(i);
    ds.validate();
    return ds;
}

py::tuple dataset_to_py(const sthl::WindowedDataset& ds) {
    const auto T = ds.timestamps();
    const auto N = ds.channels();
    const auto d = ds.feature_dim();
    py::array_t<double> features({T, N, d});
    auto f = features.mutable_unchecked<3>();
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < d; ++k) f(t, i, k) = ds.features[t](i, k);
        }
    }
    py::array_t<long> labels(T);
    auto l = labels.mutable_unchecked<1>();
    for (std::size_t t = 0; t < T; ++t) l(t) = ds.labels[t];
    return py::make_tuple(features, labels, ds.num_classes);
}

py::dict metrics_to_dict(const sthl::MetricsReport& report) {
    py::dict out;
    out["accuracy"] = report.accuracy;
    out["weighted_f1"] = report.weighted_f1;
    out["mean_loss"] = report.mean_loss;
    py::list per_class;
    for (const auto& cm : report.per_class) {
        py::dict c;
        c["precision"] = cm.precision;
        c["recall"] = cm.recall;
        c["f1"] = cm.f1;
        c["support"] = cm.support;
        per_class.append(c);
    }
    out["per_class"] = per_class;
    out["confusion"] = report.confusion;
    return out;
}

sthl::SamplePair to_pair(const DoubleArray& current, const DoubleArray& previous, int label) {
    return {to_matrix(current), to_matrix(previous), label};
}

}  // namespace

PYBIND11_MODULE(_sthl, m) {
    m.doc() = "Spatial-temporal hypergraph learning for multichannel time series";

    m.def(
        "generate_synthetic",
        [](int num_classes, int timestamps, int channels, int features,
           double class_separation, double noise_std, double interaction_strength,
           std::uint64_t seed) {
            sthl::SyntheticSpec spec{num_classes, timestamps, channels,   features,
                                     class_separation, noise_std, interaction_strength,
                                     seed};
            return dataset_to_py(sthl::generate_synthetic(spec));
        },
        py::arg("num_classes") = 5, py::arg("timestamps") = 200, py::arg("channels") = 10,
        py::arg("features") = 16, py::arg("class_separation") = 3.0,
        py::arg("noise_std") = 0.5, py::arg("interaction_strength") = 0.4,
        py::arg("seed") = 7,
        "Deterministic labeled signal generator; returns (features, labels, num_classes).");

    m.def(
        "save_dataset",
        [](const DoubleArray& features, const py::array_t<long>& labels, int num_classes,
           const std::string& path, const std::string& format) {
            sthl::save_dataset(to_dataset(features, labels, num_classes), path,
                               sthl::parse_dataset_format(format));
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("path"),
        py::arg("format") = "dense-binary");

    m.def(
        "load_dataset",
        [](const std::string& path, const std::string& format) {
            return dataset_to_py(sthl::load_dataset(path, sthl::parse_dataset_format(format)));
        },
        py::arg("path"), py::arg("format") = "dense-binary");

    m.def(
        "reconstruction_error",
        [](const DoubleArray& master, const DoubleArray& candidates, const DoubleArray& theta,
           const DoubleArray& p) {
            const sthl::Matrix mm = to_matrix(master);
            const sthl::Matrix pm = to_matrix(p);
            return sthl::reconstruction_error(mm.row(0), to_matrix(candidates),
                                              to_matrix(theta), pm.row(0));
        },
        py::arg("master"), py::arg("candidates"), py::arg("theta"), py::arg("p"),
        "L2 norm of master . theta - p . candidates (master and p as 1 x n arrays).");

    m.def("edge_weights", &sthl::edge_weights, py::arg("score_spa"), py::arg("score_tem"),
          "Two-way softmax over the spatial/temporal attention scores.");

    m.def(
        "total_loss",
        [](const std::vector<double>& logits, int label, double recon_loss, double alpha) {
            return sthl::total_loss(logits, label, recon_loss, alpha);
        },
        py::arg("logits"), py::arg("label"), py::arg("recon_loss"), py::arg("alpha"));

    m.def(
        "pearson_adjacency",
        [](const DoubleArray& feats) { return from_matrix(sthl::pearson_adjacency(to_matrix(feats))); },
        py::arg("features"));

    py::class_<sthl::SthlModel>(m, "Model")
        .def(py::init([](int channels, int features, int classes, int heads, double lambda_,
                         double gamma, double alpha, std::uint64_t seed,
                         const std::string& ablation) {
                 sthl::ModelConfig cfg;
                 cfg.channels = channels;
                 cfg.feature_dim = features;
                 cfg.num_classes = classes;
                 cfg.num_heads = heads;
                 cfg.lambda = lambda_;
                 cfg.gamma = gamma;
                 cfg.alpha = alpha;
                 cfg.rng_seed = seed;
                 cfg.ablation = sthl::parse_ablation(ablation);
                 return std::make_unique<sthl::SthlModel>(sthl::init_model(cfg));
             }),
             py::arg("channels"), py::arg("features"), py::arg("classes"),
             py::arg("heads") = 2, py::arg("lambda_") = 0.01, py::arg("gamma") = 0.2,
             py::arg("alpha") = 0.1, py::arg("seed") = 1, py::arg("ablation") = "none")
        .def_property_readonly("num_params",
                               [](const sthl::SthlModel& model) {
                                   return model.store.total_params();
                               })
        .def_property_readonly("slot_names",
                               [](const sthl::SthlModel& model) {
                                   std::vector<std::string> names;
                                   for (const auto& slot : model.store) names.push_back(slot.name);
                                   return names;
                               })
        .def(
            "forward",
            [](const sthl::SthlModel& model, const DoubleArray& current,
               const DoubleArray& previous) {
                const auto r = sthl::forward(model, to_pair(current, previous, 0));
                return py::make_tuple(r.logits, r.recon_loss);
            },
            py::arg("current"), py::arg("previous"),
            "Returns (logits, reconstruction_loss) for one sample pair.")
        .def(
            "incidence",
            [](const sthl::SthlModel& model, const DoubleArray& current,
               const DoubleArray& previous) {
                const auto r = sthl::forward(model, to_pair(current, previous, 0));
                if (!r.snapshot) throw std::runtime_error("variant builds no incidence matrix");
                return from_matrix(r.snapshot->incidence);
            },
            py::arg("current"), py::arg("previous"),
            "2N x 2N incidence matrix of the sample's hypergraph snapshot.")
        .def(
            "gradcheck",
            [](const sthl::SthlModel& model, const DoubleArray& current,
               const DoubleArray& previous, int label, double epsilon, double tolerance) {
                const auto report = sthl::gradcheck(model, to_pair(current, previous, label),
                                                    model.config.alpha, epsilon, tolerance);
                py::dict out;
                out["pass"] = report.pass;
                const auto* worst = report.worst();
                out["worst_slot"] = worst != nullptr ? worst->name : "";
                out["max_rel_err"] = worst != nullptr ? worst->max_rel_err : 0.0;
                return out;
            },
            py::arg("current"), py::arg("previous"), py::arg("label"),
            py::arg("epsilon") = 1e-5, py::arg("tolerance") = 1e-4)
        .def(
            "fit",
            [](sthl::SthlModel& model, const DoubleArray& features,
               const py::array_t<long>& labels, int epochs, int batch_size,
               double learning_rate, double train_fraction, double val_fraction,
               std::uint64_t shuffle_seed, int threads) {
                const auto ds = to_dataset(features, labels, model.config.num_classes);
                sthl::TrainConfig cfg;
                cfg.epochs = epochs;
                cfg.batch_size = batch_size;
                cfg.learning_rate = learning_rate;
                cfg.train_fraction = train_fraction;
                cfg.val_fraction = val_fraction;
                cfg.shuffle_seed = shuffle_seed;
                cfg.ablation = model.config.ablation;
                cfg.threads = threads;
                const auto result = sthl::train(model, ds, cfg);
                py::dict out;
                out["best_epoch"] = result.best_epoch;
                out["train"] = metrics_to_dict(result.train);
                out["validation"] = metrics_to_dict(result.validation);
                py::list history;
                for (const auto& r : result.history) {
                    py::dict e;
                    e["epoch"] = r.epoch;
                    e["train_loss"] = r.train_loss;
                    e["train_acc"] = r.train_acc;
                    e["train_f1"] = r.train_f1;
                    e["val_loss"] = r.val_loss;
                    e["val_acc"] = r.val_acc;
                    e["val_f1"] = r.val_f1;
                    history.append(e);
                }
                out["history"] = history;
                return out;
            },
            py::arg("features"), py::arg("labels"), py::arg("epochs") = 50,
            py::arg("batch_size") = 16, py::arg("learning_rate") = 1e-3,
            py::arg("train_fraction") = 0.7, py::arg("val_fraction") = 0.3,
            py::arg("shuffle_seed") = 1, py::arg("threads") = 1)
        .def(
            "evaluate",
            [](const sthl::SthlModel& model, const DoubleArray& features,
               const py::array_t<long>& labels, int threads) {
                const auto ds = to_dataset(features, labels, model.config.num_classes);
                return metrics_to_dict(sthl::evaluate(model, sthl::make_pairs(ds), threads));
            },
            py::arg("features"), py::arg("labels"), py::arg("threads") = 1)
        .def("save",
             [](const sthl::SthlModel& model, const std::string& path) {
                 sthl::save_checkpoint(model, path);
             })
        .def_static("load", [](const std::string& path) {
            return std::make_unique<sthl::SthlModel>(sthl::load_checkpoint(path));
        });
}

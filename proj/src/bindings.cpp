#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "helioaim/cli.hpp"
#include "helioaim/config.hpp"
#include "helioaim/milp.hpp"
#include "helioaim/optimizer.hpp"
#include "helioaim/scoring.hpp"
#include "helioaim/surrogate.hpp"

namespace py = pybind11;
using namespace helioaim;

namespace {

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["collected_energy"] = m.collected_energy;
    d["distribution_difference"] = m.distribution_difference;
    d["spl"] = m.spl;
    d["max_suns"] = m.max_suns;
    return d;
}

py::array_t<double> flux_array(const FluxMap& f) {
    py::array_t<double> a({f.panels, f.vertical, f.horizontal});
    std::copy(f.C.begin(), f.C.end(), a.mutable_data());
    return a;
}

FluxMap flux_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& C, double dv) {
    if (C.ndim() != 3) fail(ErrorKind::Shape, "flux array must have shape (panels, vertical, horizontal)");
    FluxMap f;
    f.panels = static_cast<int>(C.shape(0));
    f.vertical = static_cast<int>(C.shape(1));
    f.horizontal = static_cast<int>(C.shape(2));
    f.dv = dv;
    f.C.assign(C.data(), C.data() + C.size());
    return f;
}

// Field, sun and evaluator for one config and solar hour.
class Plant {
public:
    Plant(const RunConfig& config, std::optional<double> hour) : config_(config) {
        const double h = hour.value_or(config_.sun.hours.front());
        field_ = generate_field(config_.plant, config_.layout_seed);
        sun_ = solar_position(config_.plant.latitude, config_.sun.day, h);
        evaluator_ = std::make_unique<QualityEvaluator>(field_, sun_, config_.plant, config_.score.lambda,
                                                        config_.score.central_fraction);
    }

    int group_count() const { return field_.group_count(); }
    std::vector<int> sector_counts() const { return field_.sector_counts(); }
    std::pair<double, double> sun() const { return {sun_.azimuth, sun_.elevation}; }

    py::array_t<double> flux(const std::vector<double>& k) const { return flux_array(evaluator_->model().evaluate(k)); }

    py::dict evaluate(const std::vector<double>& k) const {
        const auto e = evaluator_->evaluate(k);
        py::dict d;
        d["score"] = e.score.score;
        d["metrics"] = metrics_dict(e.metrics);
        return d;
    }

    std::vector<double> sweep() const {
        return sweep_baseline(field_, sun_, config_.plant, config_.sweep_step).k;
    }
    std::vector<double> equatorial() const { return equatorial_baseline(group_count(), config_.plant.k_max).k; }

    std::pair<Eigen::MatrixXd, Eigen::VectorXd> sample(int t, int n, std::optional<std::vector<double>> incumbent,
                                                       std::uint64_t seed) const {
        std::optional<AimVector> inc;
        if (incumbent) inc = AimVector{*incumbent};
        const Dataset d = generate_data(t, n, inc ? &*inc : nullptr, config_.optimizer.sampler, *evaluator_,
                                        config_.optimizer.k, seed, config_.optimizer.threads);
        return {d.X, d.y};
    }

    py::dict optimize(const std::function<void(const std::string&)>& on_iteration) const {
        auto backend = make_backend(config_.solver);
        RunResult r;
        {
            py::gil_scoped_release release;
            r = run(*evaluator_, config_.optimizer, *backend, [&](const IterationRecord& rec) {
                if (!on_iteration) return;
                py::gil_scoped_acquire acquire;
                on_iteration(rec.to_json());
            });
        }
        py::list log;
        for (const auto& rec : r.history) log.append(rec.to_json());
        py::dict d;
        d["aims"] = r.best.k;
        d["score"] = r.best_score;
        d["metrics"] = metrics_dict(r.metrics);
        d["log"] = log;
        return d;
    }

private:
    RunConfig config_;
    Field field_;
    SunState sun_;
    std::unique_ptr<QualityEvaluator> evaluator_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Heliostat aiming optimisation core";

    static py::exception<Error> error(m, "HelioError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
            PyErr_SetString(error.ptr(), msg.c_str());
        }
    });

    py::class_<RunConfig>(m, "RunConfig")
        .def_static("from_json", &RunConfig::from_json)
        .def_static("load", &RunConfig::load)
        .def("to_json", &RunConfig::to_json)
        .def_readwrite("output_directory", &RunConfig::output_directory)
        .def_property(
            "lam", [](const RunConfig& c) { return c.score.lambda; },
            [](RunConfig& c, double v) { c.score.lambda = v; })
        .def_property(
            "iterations", [](const RunConfig& c) { return c.optimizer.iterations; },
            [](RunConfig& c, int v) { c.optimizer.iterations = v; })
        .def_property(
            "seed", [](const RunConfig& c) { return c.optimizer.seed; },
            [](RunConfig& c, std::uint64_t v) { c.optimizer.seed = v; });

    py::class_<Plant>(m, "Plant")
        .def(py::init<const RunConfig&, std::optional<double>>(), py::arg("config"), py::arg("hour") = py::none())
        .def_property_readonly("group_count", &Plant::group_count)
        .def_property_readonly("sector_counts", &Plant::sector_counts)
        .def_property_readonly("sun", &Plant::sun, "(azimuth, elevation) in degrees")
        .def("flux", &Plant::flux, py::arg("k"), "concentration map, shape (panels, vertical, horizontal)")
        .def("evaluate", &Plant::evaluate, py::arg("k"))
        .def("sweep", &Plant::sweep)
        .def("equatorial", &Plant::equatorial)
        .def("sample", &Plant::sample, py::arg("t"), py::arg("n"), py::arg("incumbent") = py::none(),
             py::arg("seed") = 0)
        .def("optimize", &Plant::optimize, py::arg("on_iteration") = nullptr);

    m.def(
        "quality_score",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& C, double dv,
           const std::vector<int>& weights, double lam, double central_fraction) {
            return quality_score(flux_from_array(C, dv), lam, weights, central_fraction).score;
        },
        py::arg("C"), py::arg("dv"), py::arg("weights"), py::arg("lam"),
        py::arg("central_fraction") = kDefaultCentralFraction);

    py::class_<SurrogateModel>(m, "Surrogate")
        .def_static("from_json", &SurrogateModel::from_json)
        .def("to_json", &SurrogateModel::to_json)
        .def("predict", [](const SurrogateModel& s, const std::vector<double>& k) { return s.predict(k); })
        .def_property_readonly("widths", &SurrogateModel::widths)
        .def("attach_bounds", py::overload_cast<>(&SurrogateModel::attach_bounds));

    m.def(
        "train",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<int> hidden, int max_epochs,
           double learning_rate, int batch_size, std::uint64_t seed, double k_min, double k_max) {
            Dataset d;
            d.X = X;
            d.y = y;
            d.k_min = k_min;
            d.k_max = k_max;
            TrainParams p;
            p.hidden = std::move(hidden);
            p.max_epochs = max_epochs;
            p.learning_rate = learning_rate;
            p.batch_size = batch_size;
            p.seed = seed;
            TrainReport rep;
            SurrogateModel model;
            {
                py::gil_scoped_release release;
                model = train(d, p, &rep);
            }
            py::dict r;
            r["epochs"] = rep.epochs;
            r["best_epoch"] = rep.best_epoch;
            r["validation_rmse"] = rep.validation_rmse;
            r["initial_validation_rmse"] = rep.initial_validation_rmse;
            return std::make_pair(model, r);
        },
        py::arg("X"), py::arg("y"), py::arg("hidden") = std::vector<int>{50}, py::arg("max_epochs") = 500,
        py::arg("learning_rate") = 5e-4, py::arg("batch_size") = 512, py::arg("seed") = 0, py::arg("k_min") = 0.0,
        py::arg("k_max") = 3.0);

    m.def(
        "solve_surrogate",
        [](SurrogateModel model, const Eigen::MatrixXd& X, double epsilon, double k_min, double k_max,
           const std::string& backend, double time_limit) {
            if (!model.has_bounds()) model.attach_bounds();
            Dataset d;
            d.X = X;
            d.y = Eigen::VectorXd::Zero(X.rows());
            d.k_min = k_min;
            d.k_max = k_max;
            const TrustRegion tr = TrustRegion::from_dataset(d, model.input_scaler(), epsilon);
            SolverConfig sc;
            sc.backend = backend;
            auto b = make_backend(sc);
            const MilpSolution s = solve(encode(model, tr, {k_min, k_max}), *b, time_limit);
            py::dict r;
            r["status"] = to_string(s.status);
            r["x"] = s.x.k;
            r["objective"] = s.objective;
            return r;
        },
        py::arg("model"), py::arg("X"), py::arg("epsilon"), py::arg("k_min") = 0.0, py::arg("k_max") = 3.0,
        py::arg("backend") = "branch-and-bound", py::arg("time_limit") = 60.0,
        "maximise the surrogate over the epsilon-dilated convex hull of the rows of X");

    m.def("percent_delta", &percent_delta);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "runs the helioaim command line; returns (exit code, stdout, stderr)");
}

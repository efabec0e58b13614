#include "nbmq/baselines.hpp"
#include "nbmq/bootstrap.hpp"
#include "nbmq/dataset.hpp"
#include "nbmq/io.hpp"
#include "nbmq/mquantile.hpp"
#include "nbmq/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace nbmq;

namespace {

using Adjacency = std::vector<std::vector<std::size_t>>;

RegressionDesign design(const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
    return RegressionDesign(X, t, y);
}

NbmqOptions options(std::size_t n, double c, std::size_t grid_size, double epsilon, const std::string& correction,
                    bool exact_inversion) {
    NbmqOptions o;
    o.control.huber = HuberConfig(c);
    if (correction == "exact-split")
        o.control.correction = CorrectionMode::ExactSplit;
    else if (correction == "literal")
        o.control.correction = CorrectionMode::ObservedWeight;
    else
        throw std::invalid_argument("correction must be 'exact-split' or 'literal'");
    o.grid = QuantileGrid::empirical(n, grid_size);
    o.epsilon = epsilon;
    o.exact_inversion = exact_inversion;
    return o;
}

py::dict dataset_dict(const AreaDataset& d) {
    py::dict out;
    out["ids"] = d.ids;
    out["covariates"] = d.covariate_names;
    out["X"] = d.design.X();
    out["t"] = d.design.offsets();
    out["y"] = d.design.counts();
    return out;
}

Adjacency adjacency_lists(const SpatialStructure& s) {
    Adjacency out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s.neighbours(i);
    return out;
}

Eigen::VectorXd field(const std::vector<AreaPrediction>& p, double AreaPrediction::*member) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v[static_cast<Eigen::Index>(i)] = p[i].*member;
    return v;
}

}  // namespace

PYBIND11_MODULE(_nbmq, m) {
    m.doc() = "Negative Binomial M-quantile small area estimation";
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

    m.def(
        "nb_pmf", [](std::int64_t y, double mu, double theta) { return nb_pmf(y, NegBin2(mu, theta)); }, py::arg("y"),
        py::arg("mu"), py::arg("theta"), "NB2 probability mass with mean mu and shape theta.");

    m.def(
        "smr", [](const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
            return smr(design(X, t, y));
        },
        py::arg("X"), py::arg("t"), py::arg("y"), "Standardized ratios y / t.");

    m.def(
        "fit_robust_nb",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y, double c) {
            FitControl control;
            control.huber = HuberConfig(c);
            const auto fit = fit_robust_nb(design(X, t, y), control);
            py::dict out;
            out["beta"] = fit.beta;
            out["theta"] = fit.theta;
            out["cov"] = fit.cov;
            out["converged"] = fit.converged;
            out["iterations"] = fit.iterations;
            return out;
        },
        py::arg("X"), py::arg("t"), py::arg("y"), py::arg("c") = 1.345, "Robust NB regression with sandwich covariance.");

    m.def(
        "fit_eb",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
            const auto fit = fit_eb(design(X, t, y));
            py::dict out;
            out["beta"] = fit.beta;
            out["nu"] = fit.nu;
            out["risks"] = fit.risks;
            out["converged"] = fit.converged;
            return out;
        },
        py::arg("X"), py::arg("t"), py::arg("y"), "Poisson-Gamma empirical Bayes relative risks.");

    m.def(
        "run_nbmq",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y, double c,
           std::size_t grid_size, double epsilon, const std::string& correction, bool exact_inversion,
           std::optional<Adjacency> adjacency) {
            const auto d = design(X, t, y);
            const auto opts = options(static_cast<std::size_t>(d.rows()), c, grid_size, epsilon, correction,
                                      exact_inversion);
            std::optional<SpatialStructure> spatial;
            if (adjacency) spatial = SpatialStructure::from_adjacency(*adjacency);
            const auto r = spatial ? run_nbmq(d, opts, &*spatial, SmoothingOptions{}) : run_nbmq(d, opts);
            py::dict out;
            out["q"] = r.q;
            out["risk"] = field(r.nbmq, &AreaPrediction::relative_risk);
            out["predicted_count"] = field(r.nbmq, &AreaPrediction::predicted_count);
            out["pseudo_effect"] = field(r.nbmq, &AreaPrediction::pseudo_effect);
            std::vector<double> grid_q;
            std::vector<Eigen::VectorXd> grid_beta;
            for (const auto* k : r.fit.knots()) {
                grid_q.push_back(k->q);
                grid_beta.push_back(k->beta);
            }
            out["grid_q"] = grid_q;
            out["grid_beta"] = grid_beta;
            if (spatial) {
                out["q_sp"] = *r.q_sp;
                out["risk_sp"] = field(r.nbmq_sp, &AreaPrediction::relative_risk);
            }
            return out;
        },
        py::arg("X"), py::arg("t"), py::arg("y"), py::arg("c") = 1.345, py::arg("grid_size") = 99,
        py::arg("epsilon") = 1e-3, py::arg("correction") = "exact-split", py::arg("exact_inversion") = false,
        py::arg("adjacency") = py::none(),
        "NBMQ fit; with an adjacency list also the spatially smoothed predictor.");

    m.def(
        "bootstrap_mse",
        [](const Eigen::MatrixXd& X, const Eigen::VectorXd& t, const Eigen::VectorXd& y, std::size_t B,
           std::uint64_t seed, const std::string& mode, std::optional<Adjacency> adjacency, unsigned threads) {
            const auto d = design(X, t, y);
            const auto opts = options(static_cast<std::size_t>(d.rows()), 1.345, 99, 1e-3, "exact-split", false);
            BootstrapConfig cfg;
            cfg.replicates = B;
            cfg.seed = seed;
            cfg.threads = threads;
            if (mode == "NBMQ")
                cfg.mode = PredictorMode::NBMQ;
            else if (mode == "NBMQsp")
                cfg.mode = PredictorMode::NBMQsp;
            else
                throw std::invalid_argument("mode must be 'NBMQ' or 'NBMQsp'");
            std::optional<SpatialStructure> spatial;
            if (adjacency) spatial = SpatialStructure::from_adjacency(*adjacency);
            if (cfg.mode == PredictorMode::NBMQsp && !spatial) throw std::invalid_argument("NBMQsp needs an adjacency");
            py::gil_scoped_release release;
            const auto fitted = spatial ? run_nbmq(d, opts, &*spatial, SmoothingOptions{}) : run_nbmq(d, opts);
            return run_bootstrap(d, fitted, opts, spatial ? &*spatial : nullptr, cfg).mse;
        },
        py::arg("X"), py::arg("t"), py::arg("y"), py::arg("B") = 1000, py::arg("seed") = 1, py::arg("mode") = "NBMQ",
        py::arg("adjacency") = py::none(), py::arg("threads") = 1, "Bootstrap MSE of the predicted counts.");

    m.def(
        "simulate",
        [](double sigma2, std::size_t n_reps, std::uint64_t seed, const std::vector<std::string>& estimators,
           const std::string& target) {
            auto d = lip_cancer_design(sigma2, n_reps, seed);
            if (target == "replicate")
                d.target = RiskTarget::Replicate;
            else if (target == "marginal")
                d.target = RiskTarget::MarginalMean;
            else
                throw std::invalid_argument("target must be 'replicate' or 'marginal'");
            std::vector<Estimator> est;
            for (const auto& name : estimators) {
                if (name == "oracle")
                    est.push_back(oracle_estimator());
                else if (name == "smr")
                    est.push_back(smr_estimator());
                else if (name == "eb")
                    est.push_back(eb_estimator());
                else if (name == "nbmq")
                    est.push_back(nbmq_estimator());
                else
                    throw std::invalid_argument("unknown estimator '" + name + "'");
            }
            SimulationReport rep;
            {
                py::gil_scoped_release release;
                rep = run_study(d, est);
            }
            py::dict out;
            for (const auto& s : rep.estimators) {
                py::dict e;
                e["bias"] = s.bias;
                e["rmse"] = s.rmse;
                e["average_bias"] = s.average_bias;
                e["average_rmse"] = s.average_rmse;
                e["failures"] = s.failures;
                out[py::str(s.name)] = e;
            }
            return out;
        },
        py::arg("sigma2"), py::arg("n_reps") = 200, py::arg("seed") = 1,
        py::arg("estimators") = std::vector<std::string>{"smr", "eb", "nbmq"}, py::arg("target") = "replicate",
        "Lip-cancer design Monte Carlo study; average and per-area Bias and RMSE of relative risks.");

    m.def("lip_cancer", [] { return dataset_dict(scottish_lip_cancer()); }, "56-district Scottish lip cancer data.");
    m.def("lip_cancer_adjacency", [] { return adjacency_lists(scottish_lip_cancer_adjacency()); },
          "Neighbour lists of the lip cancer districts (0-based).");
    m.def(
        "load_dataset", [](const std::string& path) { return dataset_dict(load_dataset(path)); }, py::arg("path"),
        "Area CSV with area_id, y, t and covariate columns.");
}

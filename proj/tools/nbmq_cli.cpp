#include "nbmq/baselines.hpp"
#include "nbmq/bootstrap.hpp"
#include "nbmq/io.hpp"
#include "nbmq/mquantile.hpp"
#include "nbmq/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace nbmq;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

unsigned default_threads() {
    if (const char* env = std::getenv("NBMQ_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw std::invalid_argument("NBMQ_THREADS must be a positive integer");
    }
    return 1;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

/// Values from a key=value file fill options not given on the command line.
void apply_config(CLI::App* cmd, const std::string& path) {
    for (const auto& [key, cv] : load_key_values(path)) {
        if (key == "config") throw ValidationError(path, cv.line, key, "config files cannot nest");
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt) throw ValidationError(path, cv.line, key, "unknown key for '" + cmd->get_name() + "'");
        if (opt->count() > 0) continue;
        try {
            opt->add_result(cv.value);
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw ValidationError(path, cv.line, key, e.what());
        }
    }
}

void require(const std::string& value, const std::string& name) {
    if (value.empty()) throw std::invalid_argument("--" + name + " is required");
}

double number_arg(const std::string& text, const std::string& name) {
    return parse_number(text, "command line", 0, name);
}

struct FitFlags {
    std::string data;
    std::string covariates;
    double c = 1.345;
    std::size_t grid_size = 99;
    double epsilon = 1e-3;
    std::string leverage = "none";
    std::string correction = "exact-split";
    std::string config;
    unsigned threads = 0;

    void add(CLI::App* cmd) {
        cmd->add_option("--data", data, "Area CSV with area_id, y, t and covariates");
        cmd->add_option("--covariates", covariates, "Comma-separated covariate columns (default: all)");
        cmd->add_option("--c", c, "Huber tuning constant")->capture_default_str();
        cmd->add_option("--grid-size", grid_size, "Maximum number of quantile grid points")->capture_default_str();
        cmd->add_option("--epsilon", epsilon, "Boundary value used for zero counts")->capture_default_str();
        cmd->add_option("--leverage", leverage, "Leverage weights: none or mallows")->capture_default_str();
        cmd->add_option("--correction", correction, "Consistency correction: exact-split or literal")
            ->capture_default_str();
        cmd->add_option("--config", config, "key=value file supplying any option");
        cmd->add_option("--threads", threads, "Worker threads (default: NBMQ_THREADS or 1)");
    }

    NbmqOptions options(std::size_t n) const {
        if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("--c must be positive and finite");
        NbmqOptions o;
        o.control.huber = HuberConfig(c);
        if (leverage == "none")
            o.control.leverage = LeverageWeighting::None;
        else if (leverage == "mallows")
            o.control.leverage = LeverageWeighting::Mallows;
        else
            throw std::invalid_argument("--leverage must be none or mallows");
        if (correction == "exact-split")
            o.control.correction = CorrectionMode::ExactSplit;
        else if (correction == "literal")
            o.control.correction = CorrectionMode::ObservedWeight;
        else
            throw std::invalid_argument("--correction must be exact-split or literal");
        if (grid_size < 1) throw std::invalid_argument("--grid-size must be at least 1");
        if (!(epsilon > 0.0)) throw std::invalid_argument("--epsilon must be positive");
        o.control.validate();
        o.grid = QuantileGrid::empirical(n, grid_size);
        o.epsilon = epsilon;
        return o;
    }

    AreaDataset load() const {
        require(data, "data");
        return load_dataset(data, split_list(covariates));
    }

    unsigned thread_count() const { return threads > 0 ? threads : default_threads(); }
};

struct SpatialFlags {
    std::string adjacency;
    std::string centroids;
    std::string mode;
    std::string bandwidth = "1";

    void add(CLI::App* cmd) {
        cmd->add_option("--adjacency", adjacency, "Adjacency file, lines 'area_id: neighbours'");
        cmd->add_option("--centroids", centroids, "Centroid CSV with area_id, x_coord, y_coord");
        cmd->add_option("--mode", mode, "Smoothing: adjacency or distance (default from the files given)");
        cmd->add_option("--bandwidth", bandwidth, "Gaussian kernel bandwidth; 'inf' gives uniform weights")
            ->capture_default_str();
    }

    bool given() const { return !adjacency.empty() || !centroids.empty(); }

    std::pair<SpatialStructure, SmoothingOptions> load(const AreaDataset& data) const {
        SmoothingOptions how;
        std::string m = mode;
        if (m.empty()) m = adjacency.empty() ? "distance" : "adjacency";
        if (m == "adjacency") {
            how.kind = SmoothingKind::Adjacency;
            if (adjacency.empty()) throw std::invalid_argument("adjacency smoothing needs --adjacency");
        } else if (m == "distance") {
            how.kind = SmoothingKind::Distance;
            if (centroids.empty()) throw std::invalid_argument("distance smoothing needs --centroids");
        } else {
            throw std::invalid_argument("--mode must be adjacency or distance");
        }
        how.bandwidth = number_arg(bandwidth, "bandwidth");
        if (!(how.bandwidth > 0.0)) throw std::invalid_argument("--bandwidth must be positive");
        SpatialStructure s;
        if (!adjacency.empty()) {
            std::vector<std::string> warnings;
            s = load_adjacency(adjacency, data.ids, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
        }
        if (!centroids.empty()) {
            auto pts = load_centroids(centroids, data.ids);
            s = adjacency.empty() ? SpatialStructure::from_centroids(std::move(pts)) : s.with_centroids(std::move(pts));
        }
        return {std::move(s), how};
    }
};

std::vector<std::vector<std::string>> area_rows(const AreaDataset& data, const NbmqResult& res, bool spatial) {
    const auto& d = data.design;
    const Eigen::VectorXd smr_risk = smr(d);
    const EBFit eb = fit_eb(d);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < data.ids.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto& p = res.nbmq[i];
        std::vector<std::string> row{data.ids[i],
                                     format_number(d.counts()[ii]),
                                     format_number(d.offsets()[ii]),
                                     format_number(smr_risk[ii]),
                                     format_number(eb.risks[ii]),
                                     format_number(p.relative_risk),
                                     format_number(p.q_i),
                                     format_number(p.pseudo_effect),
                                     format_number(p.theta)};
        if (spatial) {
            const auto& s = res.nbmq_sp[i];
            row.push_back(format_number(*s.q_i_sp));
            row.push_back(format_number(s.relative_risk));
            row.push_back(format_number(s.pseudo_effect));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> area_header(bool spatial) {
    std::vector<std::string> h{"area_id", "y", "t", "smr", "eb_risk", "nbmq_risk", "q_i", "pseudo_effect", "theta_q"};
    if (spatial) {
        h.emplace_back("q_i_sp");
        h.emplace_back("nbmq_sp_risk");
        h.emplace_back("pseudo_effect_sp");
    }
    return h;
}

/// Per grid point coefficients and shapes, plus the robust fit with sandwich standard errors.
std::string model_block(const AreaDataset& data, const NbmqResult& res, const NbmqOptions& options) {
    std::vector<std::string> names{"(intercept)"};
    names.insert(names.end(), data.covariate_names.begin(), data.covariate_names.end());
    std::vector<std::vector<std::string>> rows;
    const std::string nan = format_number(std::nan(""));
    for (const QuantileFit* k : res.fit.knots()) {
        for (std::size_t j = 0; j < names.size(); ++j)
            rows.push_back({"grid", format_number(k->q), names[j], format_number(k->beta[static_cast<Eigen::Index>(j)]), nan});
        rows.push_back({"grid", format_number(k->q), "theta", format_number(k->theta), nan});
    }
    const RobustNBFit robust = fit_robust_nb(data.design, options.control);
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        rows.push_back({"robust", "0.5", names[j], format_number(robust.beta[jj]), format_number(std::sqrt(robust.cov(jj, jj)))});
    }
    rows.push_back({"robust", "0.5", "theta", format_number(robust.theta), nan});
    return to_csv({"block", "q", "parameter", "estimate", "std_error"}, rows);
}

int cmd_fit(FitFlags& f, const std::string& out, const std::string& model_out) {
    require(out, "out");
    const AreaDataset data = f.load();
    const NbmqOptions opts = f.options(data.ids.size());
    const NbmqResult res = run_nbmq(data.design, opts);
    const std::string main = to_csv(area_header(false), area_rows(data, res, false));
    const std::string model = model_out.empty() ? std::string() : model_block(data, res, opts);
    write_file_atomic(out, main);
    if (!model_out.empty()) write_file_atomic(model_out, model);
    if (res.fit.failures() > 0)
        std::cerr << "warning: " << res.fit.failures() << " grid fits did not converge and were skipped\n";
    return 0;
}

int cmd_map(FitFlags& f, SpatialFlags& s, const std::string& out, const std::string& join_out) {
    require(out, "out");
    if (!s.given()) throw std::invalid_argument("map needs --adjacency or --centroids");
    const AreaDataset data = f.load();
    const auto [spatial, how] = s.load(data);
    const NbmqOptions opts = f.options(data.ids.size());
    const NbmqResult res = run_nbmq(data.design, opts, &spatial, how);
    const std::string main = to_csv(area_header(true), area_rows(data, res, true));
    std::string join;
    if (!join_out.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < data.ids.size(); ++i)
            rows.push_back({data.ids[i], format_number(res.nbmq_sp[i].relative_risk)});
        join = to_csv({"area_id", "value"}, rows);
    }
    write_file_atomic(out, main);
    if (!join_out.empty()) write_file_atomic(join_out, join);
    return 0;
}

int cmd_bootstrap(FitFlags& f, SpatialFlags& s, std::size_t B, std::uint64_t seed, const std::string& mode,
                  const std::string& out) {
    require(out, "out");
    std::vector<PredictorMode> modes;
    if (mode == "NBMQ" || mode == "nbmq")
        modes = {PredictorMode::NBMQ};
    else if (mode == "NBMQsp" || mode == "nbmqsp")
        modes = {PredictorMode::NBMQsp};
    else if (mode == "both")
        modes = {PredictorMode::NBMQ, PredictorMode::NBMQsp};
    else
        throw std::invalid_argument("--estimator must be NBMQ, NBMQsp or both");
    const AreaDataset data = f.load();
    const NbmqOptions opts = f.options(data.ids.size());
    const bool need_sp = modes.back() == PredictorMode::NBMQsp;
    std::optional<std::pair<SpatialStructure, SmoothingOptions>> sp;
    if (need_sp) {
        if (!s.given()) throw std::invalid_argument("NBMQsp needs --adjacency or --centroids");
        sp = s.load(data);
    }
    const NbmqResult fitted = need_sp ? run_nbmq(data.design, opts, &sp->first, sp->second) : run_nbmq(data.design, opts);
    std::vector<std::vector<std::string>> rows;
    for (auto m : modes) {
        BootstrapConfig cfg;
        cfg.replicates = B;
        cfg.seed = seed;
        cfg.mode = m;
        cfg.area_keys = data.ids;
        cfg.threads = f.thread_count();
        if (sp) cfg.smoothing = sp->second;
        const BootstrapResult r = run_bootstrap(data.design, fitted, opts, sp ? &sp->first : nullptr, cfg);
        const std::string name = m == PredictorMode::NBMQ ? "NBMQ" : "NBMQsp";
        if (r.unreliable)
            std::cerr << "warning: " << name << " bootstrap unreliable, " << r.failed << " of " << B
                      << " replicates failed\n";
        for (std::size_t i = 0; i < data.ids.size(); ++i) {
            const double mse = r.mse[static_cast<Eigen::Index>(i)];
            rows.push_back({data.ids[i], name, format_number(mse), format_number(std::sqrt(mse))});
        }
    }
    write_file_atomic(out, to_csv({"area_id", "estimator", "mse", "rmse"}, rows));
    return 0;
}

struct SimFlags {
    std::string data;
    std::string adjacency;
    double sigma2 = 0.15;
    std::size_t n_reps = 200;
    std::uint64_t seed = 1;
    std::string beta = "-0.35,0.72";
    double delta = -0.08;
    std::size_t n_perturbed = 4;
    double threshold = 0.08;
    std::string estimators = "smr,eb,nbmq,nbmqsp";
    std::string target = "replicate";
    std::size_t bootstrap_b = 0;
    std::string correction = "exact-split";
    std::string out;
    std::string summary_out;
    std::string bootstrap_out;
    std::string config;
    unsigned threads = 0;

    void add(CLI::App* cmd) {
        cmd->add_option("--data", data, "Area CSV supplying offsets and covariates (default: lip-cancer fixture)");
        cmd->add_option("--adjacency", adjacency, "Adjacency file for NBMQsp when --data is given");
        cmd->add_option("--sigma2", sigma2, "Heterogeneity variance")->capture_default_str();
        cmd->add_option("--n_reps", n_reps, "Monte Carlo replicates")->capture_default_str();
        cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
        cmd->add_option("--beta", beta, "True coefficients, comma-separated")->capture_default_str();
        cmd->add_option("--delta", delta, "Covariate perturbation")->capture_default_str();
        cmd->add_option("--n_areas", n_perturbed, "Number of perturbed areas")->capture_default_str();
        cmd->add_option("--threshold", threshold, "Covariate value above which areas may be perturbed")
            ->capture_default_str();
        cmd->add_option("--estimators", estimators, "Comma list from oracle, smr, eb, nbmq, nbmqsp")
            ->capture_default_str();
        cmd->add_option("--target", target, "Risk target: replicate or marginal")->capture_default_str();
        cmd->add_option("--bootstrap_B", bootstrap_b, "Bootstrap replicates per outer replicate (0: none)")
            ->capture_default_str();
        cmd->add_option("--correction", correction, "Consistency correction: exact-split or literal")
            ->capture_default_str();
        cmd->add_option("--out", out, "Per-area Bias/RMSE CSV");
        cmd->add_option("--summary_out", summary_out, "JSON summary");
        cmd->add_option("--bootstrap_out", bootstrap_out, "Per-area bootstrap diagnostics CSV");
        cmd->add_option("--config", config, "key=value file supplying any option");
        cmd->add_option("--threads", threads, "Worker threads (default: NBMQ_THREADS or 1)");
    }
};

int cmd_simulate(SimFlags& f) {
    require(f.out, "out");
    SimDesign design = lip_cancer_design(f.sigma2, f.n_reps, f.seed);
    std::vector<std::string> ids;
    if (!f.data.empty()) {
        const AreaDataset data = load_dataset(f.data);
        design.base_design = data.design;
        design.spatial.reset();
        if (!f.adjacency.empty()) design.spatial = load_adjacency(f.adjacency, data.ids);
        ids = data.ids;
    } else {
        for (std::size_t i = 1; i <= 56; ++i) ids.push_back(std::to_string(i));
    }
    const auto b = split_list(f.beta);
    design.beta_true.resize(static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j)
        design.beta_true[static_cast<Eigen::Index>(j)] = number_arg(b[j], "beta");
    design.perturbation.delta = f.delta;
    design.perturbation.n_areas = f.n_perturbed;
    design.perturbation.eligibility_threshold = f.threshold;
    if (f.target == "replicate")
        design.target = RiskTarget::Replicate;
    else if (f.target == "marginal")
        design.target = RiskTarget::MarginalMean;
    else
        throw std::invalid_argument("--target must be replicate or marginal");
    design.validate();

    FitFlags fit_defaults;
    fit_defaults.correction = f.correction;
    NbmqOptions opts = fit_defaults.options(ids.size());
    opts.grid.reset();

    std::vector<Estimator> estimators;
    bool nbmq = false, nbmqsp = false;
    for (const auto& name : split_list(f.estimators)) {
        if (name == "oracle")
            estimators.push_back(oracle_estimator());
        else if (name == "smr")
            estimators.push_back(smr_estimator());
        else if (name == "eb")
            estimators.push_back(eb_estimator());
        else if (name == "nbmq")
            nbmq = true;
        else if (name == "nbmqsp")
            nbmqsp = true;
        else
            throw std::invalid_argument("unknown estimator '" + name + "'");
    }
    if (nbmqsp && !design.spatial) throw std::invalid_argument("nbmqsp needs an adjacency structure");
    if (nbmq || nbmqsp) {
        Estimator e = nbmq_estimator(opts, nbmqsp ? std::optional<SmoothingOptions>(SmoothingOptions{}) : std::nullopt);
        if (!nbmq) {
            // Keep only the smoothed column.
            auto run = e.run;
            e = {{"NBMQsp"}, [run](const EstimatorInput& in) { return std::vector<Eigen::VectorXd>{run(in)[1]}; }};
        }
        estimators.push_back(std::move(e));
    }
    if (estimators.empty()) throw std::invalid_argument("no estimators selected");
    std::optional<StudyBootstrap> boot;
    if (f.bootstrap_b > 0) {
        StudyBootstrap sb;
        sb.config.replicates = f.bootstrap_b;
        sb.options = opts;
        sb.modes = {PredictorMode::NBMQ};
        if (design.spatial) sb.modes.push_back(PredictorMode::NBMQsp);
        boot = sb;
    }
    const unsigned threads = f.threads > 0 ? f.threads : default_threads();
    const SimulationReport rep = run_study(design, estimators, boot, threads);

    std::vector<std::vector<std::string>> rows, avg;
    for (const auto& s : rep.estimators) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            rows.push_back({s.name, ids[i], format_number(s.bias[ii]), format_number(s.rmse[ii]),
                            std::to_string(s.replicates_used), std::to_string(s.failures)});
        }
        avg.push_back({s.name, "average", format_number(s.average_bias), format_number(s.average_rmse),
                       std::to_string(s.replicates_used), std::to_string(s.failures)});
    }
    rows.insert(rows.end(), avg.begin(), avg.end());
    const std::string main = to_csv({"estimator", "area_id", "bias", "rmse", "replicates", "failures"}, rows);

    nlohmann::ordered_json summary;
    summary["sigma2"] = rep.sigma2;
    summary["n_reps"] = rep.n_reps;
    summary["seed"] = f.seed;
    summary["target"] = f.target;
    summary["estimators"] = nlohmann::ordered_json::array();
    for (const auto& s : rep.estimators)
        summary["estimators"].push_back({{"name", s.name},
                                         {"average_bias", s.average_bias},
                                         {"average_rmse", s.average_rmse},
                                         {"replicates_used", s.replicates_used},
                                         {"failures", s.failures}});
    std::string boot_csv;
    if (boot) {
        summary["bootstrap"] = nlohmann::ordered_json::array();
        std::vector<std::vector<std::string>> brows;
        for (const auto& d : rep.bootstrap) {
            summary["bootstrap"].push_back({{"name", d.name},
                                            {"B", f.bootstrap_b},
                                            {"median_ratio", d.median_ratio},
                                            {"median_coverage", d.median_coverage},
                                            {"median_risk_ratio", d.median_risk_ratio},
                                            {"median_risk_coverage", d.median_risk_coverage},
                                            {"replicates_used", d.replicates_used},
                                            {"failures", d.failures},
                                            {"unreliable", d.unreliable}});
            if (d.replicates_used == 0) continue;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                brows.push_back({d.name, ids[i], format_number(d.ratio[ii]), format_number(d.coverage[ii]),
                                 format_number(d.risk_ratio[ii]), format_number(d.risk_coverage[ii])});
            }
            brows.push_back({d.name, "median", format_number(d.median_ratio), format_number(d.median_coverage),
                             format_number(d.median_risk_ratio), format_number(d.median_risk_coverage)});
        }
        boot_csv = to_csv({"estimator", "area_id", "ratio", "coverage", "risk_ratio", "risk_coverage"}, brows);
    }
    write_file_atomic(f.out, main);
    if (!f.summary_out.empty()) write_file_atomic(f.summary_out, summary.dump(2) + "\n");
    if (boot && !f.bootstrap_out.empty()) write_file_atomic(f.bootstrap_out, boot_csv);

    std::cout << "sigma2 = " << format_number(rep.sigma2) << ", " << rep.n_reps << " replicates\n";
    std::cout << "estimator        Bias        RMSE\n";
    for (const auto& s : rep.estimators) {
        char line[128];
        std::snprintf(line, sizeof line, "%-10s %10.3f  %10.3f\n", s.name.c_str(), s.average_bias, s.average_rmse);
        std::cout << line;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Negative Binomial M-quantile disease mapping"};
    app.require_subcommand(1);

    FitFlags fit_flags;
    std::string fit_out, model_out;
    CLI::App* fit = app.add_subcommand("fit", "Fit NBMQ and baselines; write per-area estimates");
    fit_flags.add(fit);
    fit->add_option("--out", fit_out, "Per-area estimates CSV");
    fit->add_option("--model-out", model_out, "Model-level CSV: grid coefficients and robust fit");

    FitFlags map_flags;
    SpatialFlags map_spatial;
    std::string map_out, join_out;
    CLI::App* map = app.add_subcommand("map", "Add spatially smoothed NBMQ estimates");
    map_flags.add(map);
    map_spatial.add(map);
    map->add_option("--out", map_out, "Per-area estimates CSV");
    map->add_option("--join-out", join_out, "area_id,value file with the smoothed risks");

    FitFlags boot_flags;
    SpatialFlags boot_spatial;
    std::size_t B = 1000;
    std::uint64_t seed = 1;
    std::string boot_mode = "NBMQ", boot_out;
    CLI::App* boot = app.add_subcommand("bootstrap", "Bootstrap MSE of NBMQ or NBMQsp");
    boot_flags.add(boot);
    boot_spatial.add(boot);
    boot->add_option("--B", B, "Bootstrap replicates")->capture_default_str();
    boot->add_option("--seed", seed, "Random seed")->capture_default_str();
    boot->add_option("--estimator", boot_mode, "NBMQ, NBMQsp or both")->capture_default_str();
    boot->add_option("--out", boot_out, "CSV area_id, estimator, mse, rmse");

    SimFlags sim_flags;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo comparison of estimators");
    sim_flags.add(sim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (fit->parsed()) {
            if (!fit_flags.config.empty()) apply_config(fit, fit_flags.config);
            return cmd_fit(fit_flags, fit_out, model_out);
        }
        if (map->parsed()) {
            if (!map_flags.config.empty()) apply_config(map, map_flags.config);
            return cmd_map(map_flags, map_spatial, map_out, join_out);
        }
        if (boot->parsed()) {
            if (!boot_flags.config.empty()) apply_config(boot, boot_flags.config);
            return cmd_bootstrap(boot_flags, boot_spatial, B, seed, boot_mode, boot_out);
        }
        if (sim->parsed()) {
            if (!sim_flags.config.empty()) apply_config(sim, sim_flags.config);
            return cmd_simulate(sim_flags);
        }
    } catch (const FitError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}

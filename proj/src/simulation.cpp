#include "nbmq/simulation.hpp"

#include "nbmq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace nbmq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct EstimatorOutcome {
    bool ok = false;
    Eigen::VectorXd risks;
};

struct BootstrapOutcome {
    bool ok = false;
    bool unreliable = false;
    Eigen::VectorXd estimate;
    Eigen::VectorXd mse;
};

struct ReplicateRecord {
    Eigen::VectorXd target;
    Eigen::VectorXd counts;
    std::vector<EstimatorOutcome> estimates;
    std::vector<BootstrapOutcome> bootstrap;
};

const char* mode_name(PredictorMode m) { return m == PredictorMode::NBMQ ? "NBMQ" : "NBMQsp"; }

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

void SimDesign::validate() const {
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sigma2 must be nonnegative");
    if (n_reps == 0) throw std::invalid_argument("n_reps must be at least 1");
    if (beta_true.size() != base_design.cols())
        throw std::invalid_argument("beta_true length does not match the design columns");
    if (!beta_true.allFinite()) throw std::invalid_argument("beta_true has non-finite entries");
    if (!std::isfinite(perturbation.delta)) throw std::invalid_argument("perturbation delta must be finite");
    if (perturbation.n_areas > 0) {
        if (perturbation.column < 0 || perturbation.column >= base_design.cols())
            throw std::invalid_argument("perturbation column out of range");
        const auto col = base_design.X().col(perturbation.column);
        const auto eligible = static_cast<std::size_t>((col.array() > perturbation.eligibility_threshold).count());
        if (perturbation.n_areas > eligible)
            throw std::invalid_argument("perturbation needs more areas than are eligible");
    }
    if (spatial && spatial->size() != static_cast<std::size_t>(base_design.rows()))
        throw std::invalid_argument("spatial structure size does not match the design");
}

SimDesign lip_cancer_design(double sigma2, std::size_t n_reps, std::uint64_t seed) {
    const auto data = scottish_lip_cancer();
    Eigen::VectorXd beta(2);
    beta << -0.35, 0.72;
    SimDesign d{data.design, beta, sigma2, n_reps, {}, seed, RiskTarget::Replicate, scottish_lip_cancer_adjacency()};
    return d;
}

Replicate generate_replicate(const SimDesign& design, Rng& rng) {
    const auto& X = design.base_design.X();
    const auto& t = design.base_design.offsets();
    const auto n = X.rows();
    Replicate rep;
    rep.true_risks.resize(n);
    rep.counts.resize(n);
    std::normal_distribution<double> gamma(0.0, std::sqrt(design.sigma2));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = design.sigma2 > 0.0 ? gamma(rng) : 0.0;
        rep.true_risks[i] = std::exp(X.row(i).dot(design.beta_true) + g);
        std::poisson_distribution<long long> pois(t[i] * rep.true_risks[i]);
        rep.counts[i] = static_cast<double>(pois(rng));
    }
    rep.perturbed_x = X;
    const auto& p = design.perturbation;
    if (p.n_areas > 0) {
        std::vector<std::size_t> eligible;
        for (Eigen::Index i = 0; i < n; ++i)
            if (X(i, p.column) > p.eligibility_threshold) eligible.push_back(static_cast<std::size_t>(i));
        // Partial Fisher-Yates: the first n_areas entries are a uniform sample without replacement.
        for (std::size_t k = 0; k < p.n_areas; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, eligible.size() - 1);
            std::swap(eligible[k], eligible[pick(rng)]);
        }
        rep.perturbed_areas.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(p.n_areas));
        std::sort(rep.perturbed_areas.begin(), rep.perturbed_areas.end());
        for (auto i : rep.perturbed_areas) rep.perturbed_x(static_cast<Eigen::Index>(i), p.column) += p.delta;
    }
    return rep;
}

Estimator oracle_estimator() {
    return {{"Oracle"}, [](const EstimatorInput& in) { return std::vector<Eigen::VectorXd>{in.replicate.true_risks}; }};
}

Estimator smr_estimator() {
    return {{"SMR"}, [](const EstimatorInput& in) { return std::vector<Eigen::VectorXd>{smr(in.data)}; }};
}

Estimator eb_estimator(MLControl control) {
    return {{"EB"}, [control](const EstimatorInput& in) {
                return std::vector<Eigen::VectorXd>{fit_eb(in.data, control).risks};
            }};
}

Estimator nbmq_estimator(NbmqOptions options, std::optional<SmoothingOptions> smoothing) {
    std::vector<std::string> names{"NBMQ"};
    if (smoothing) names.emplace_back("NBMQsp");
    return {names, [options, smoothing](const EstimatorInput& in) {
                const auto fit = run_nbmq(in.data, options, in.spatial, smoothing);
                const auto n = in.data.rows();
                std::vector<Eigen::VectorXd> out(1, Eigen::VectorXd(n));
                for (Eigen::Index i = 0; i < n; ++i) out[0][i] = fit.nbmq[static_cast<std::size_t>(i)].relative_risk;
                if (smoothing) {
                    out.emplace_back(n);
                    for (Eigen::Index i = 0; i < n; ++i)
                        out[1][i] = fit.nbmq_sp[static_cast<std::size_t>(i)].relative_risk;
                }
                return out;
            }};
}

const EstimatorSummary& SimulationReport::summary(const std::string& name) const {
    for (const auto& s : estimators)
        if (s.name == name) return s;
    throw std::out_of_range("no estimator named " + name);
}

SimulationReport run_study(const SimDesign& design, const std::vector<Estimator>& estimators,
                           const std::optional<StudyBootstrap>& bootstrap, unsigned threads) {
    design.validate();
    if (estimators.empty() && !bootstrap) throw std::invalid_argument("run_study needs at least one estimator");
    for (const auto& e : estimators)
        if (e.names.empty() || !e.run) throw std::invalid_argument("estimator without a name or body");
    const SpatialStructure* spatial = design.spatial ? &*design.spatial : nullptr;
    if (bootstrap) {
        bootstrap->config.validate();
        for (auto m : bootstrap->modes)
            if (m == PredictorMode::NBMQsp && !spatial)
                throw std::invalid_argument("NBMQsp bootstrap needs a spatial structure in the design");
    }

    std::size_t columns = 0;
    for (const auto& e : estimators) columns += e.names.size();
    const auto n = design.base_design.rows();
    const Eigen::VectorXd marginal =
        ((design.base_design.X() * design.beta_true).array() + 0.5 * design.sigma2).exp().matrix();

    std::vector<ReplicateRecord> records(design.n_reps);
    parallel_for(design.n_reps, threads, [&](std::size_t r) {
        Rng rng = stream_for(design.seed, r, "replicate");
        const Replicate rep = generate_replicate(design, rng);
        const RegressionDesign data(rep.perturbed_x, design.base_design.offsets(), rep.counts);
        const EstimatorInput input{data, spatial, rep};
        ReplicateRecord rec;
        rec.target = design.target == RiskTarget::Replicate ? rep.true_risks : marginal;
        rec.counts = rep.counts;
        rec.estimates.reserve(columns);
        for (const auto& e : estimators) {
            std::vector<Eigen::VectorXd> out;
            bool ok = true;
            try {
                out = e.run(input);
                ok = out.size() == e.names.size();
                for (const auto& v : out) ok = ok && v.size() == n && v.allFinite();
            } catch (const FitError&) {
                ok = false;
            } catch (const std::domain_error&) {
                ok = false;
            }
            for (std::size_t k = 0; k < e.names.size(); ++k)
                rec.estimates.push_back(ok ? EstimatorOutcome{true, out[k]} : EstimatorOutcome{});
        }
        if (bootstrap) {
            const bool need_sp = std::find(bootstrap->modes.begin(), bootstrap->modes.end(), PredictorMode::NBMQsp) !=
                                 bootstrap->modes.end();
            std::optional<NbmqResult> fit;
            try {
                fit = need_sp ? run_nbmq(data, bootstrap->options, spatial, bootstrap->config.smoothing)
                              : run_nbmq(data, bootstrap->options);
            } catch (const FitError&) {
            } catch (const std::domain_error&) {
            }
            for (auto mode : bootstrap->modes) {
                BootstrapOutcome bo;
                if (fit) {
                    BootstrapConfig cfg = bootstrap->config;
                    cfg.mode = mode;
                    cfg.threads = 1;
                    cfg.seed = splitmix64(design.seed ^ splitmix64(r + 1));
                    try {
                        const auto res = run_bootstrap(data, *fit, bootstrap->options, spatial, cfg);
                        const auto& preds = mode == PredictorMode::NBMQ ? fit->nbmq : fit->nbmq_sp;
                        bo.estimate.resize(n);
                        for (Eigen::Index i = 0; i < n; ++i)
                            bo.estimate[i] = preds[static_cast<std::size_t>(i)].relative_risk;
                        bo.mse = res.mse;
                        bo.unreliable = res.unreliable;
                        bo.ok = true;
                    } catch (const FitError&) {
                    } catch (const std::domain_error&) {
                    }
                }
                rec.bootstrap.push_back(std::move(bo));
            }
        }
        records[r] = std::move(rec);
    });

    SimulationReport report;
    report.n_reps = design.n_reps;
    report.sigma2 = design.sigma2;
    std::size_t col = 0;
    for (const auto& e : estimators) {
        for (const auto& name : e.names) {
            EstimatorSummary s;
            s.name = name;
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(n), sq = Eigen::VectorXd::Zero(n);
            for (const auto& rec : records) {
                const auto& o = rec.estimates[col];
                if (!o.ok) {
                    ++s.failures;
                    continue;
                }
                ++s.replicates_used;
                const Eigen::VectorXd err = o.risks - rec.target;
                sum += err;
                sq.array() += err.array().square();
            }
            if (s.replicates_used > 0) {
                const double k = static_cast<double>(s.replicates_used);
                s.bias = sum / k;
                s.rmse = (sq / k).cwiseSqrt();
                s.average_bias = s.bias.mean();
                s.average_rmse = s.rmse.mean();
            } else {
                s.bias = Eigen::VectorXd::Constant(n, std::nan(""));
                s.rmse = s.bias;
                s.average_bias = s.average_rmse = std::nan("");
            }
            report.estimators.push_back(std::move(s));
            ++col;
        }
    }

    if (bootstrap) {
        const Eigen::ArrayXd t = design.base_design.offsets().array();
        for (std::size_t m = 0; m < bootstrap->modes.size(); ++m) {
            BootstrapDiagnostics d;
            d.name = mode_name(bootstrap->modes[m]);
            Eigen::ArrayXd boot = Eigen::ArrayXd::Zero(n), mc = Eigen::ArrayXd::Zero(n), cover = Eigen::ArrayXd::Zero(n);
            Eigen::ArrayXd cmc = Eigen::ArrayXd::Zero(n), ccover = Eigen::ArrayXd::Zero(n);
            for (const auto& rec : records) {
                const auto& o = rec.bootstrap[m];
                if (!o.ok) {
                    ++d.failures;
                    continue;
                }
                ++d.replicates_used;
                if (o.unreliable) ++d.unreliable;
                const Eigen::ArrayXd mse = o.mse.array();
                const Eigen::ArrayXd err = o.estimate.array() - rec.target.array();
                const Eigen::ArrayXd cerr = o.estimate.array() * t - rec.counts.array();
                boot += mse;
                mc += err.square();
                cmc += cerr.square();
                cover += (err.abs() <= 1.96 * mse.sqrt() / t).cast<double>();
                ccover += (cerr.abs() <= 1.96 * mse.sqrt()).cast<double>();
            }
            if (d.replicates_used > 0) {
                const double k = static_cast<double>(d.replicates_used);
                d.ratio = ((boot / k) / (cmc / k)).matrix();
                d.coverage = (ccover / k).matrix();
                d.risk_ratio = ((boot / k) / (t.square() * (mc / k))).matrix();
                d.risk_coverage = (cover / k).matrix();
                auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
                d.median_ratio = median(vec(d.ratio));
                d.median_coverage = median(vec(d.coverage));
                d.median_risk_ratio = median(vec(d.risk_ratio));
                d.median_risk_coverage = median(vec(d.risk_coverage));
            }
            report.bootstrap.push_back(std::move(d));
        }
    }
    return report;
}

}  // namespace nbmq

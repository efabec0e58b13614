#pragma once

#include "nbmq/baselines.hpp"
#include "nbmq/bootstrap.hpp"
#include "nbmq/mquantile.hpp"
#include "nbmq/spatial.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nbmq {

/// Shift added to the covariate of randomly chosen eligible areas (estimation inputs only).
struct Perturbation {
    double delta = -0.08;
    std::size_t n_areas = 4;
    /// Areas whose covariate exceeds this value are eligible.
    double eligibility_threshold = 0.08;
    /// Design column that is perturbed.
    Eigen::Index column = 1;
};

/// What the Bias and RMSE of the relative-risk estimates are measured against.
enum class RiskTarget {
    /// exp(x_i beta + gamma_i) of the replicate.
    Replicate,
    /// exp(x_i beta + sigma2 / 2), the mean risk over the heterogeneity distribution.
    MarginalMean,
};

struct SimDesign {
    /// Supplies covariates and offsets; its counts are ignored.
    RegressionDesign base_design;
    Eigen::VectorXd beta_true;
    double sigma2 = 0.15;
    std::size_t n_reps = 200;
    Perturbation perturbation{};
    std::uint64_t seed = 1;
    RiskTarget target = RiskTarget::Replicate;
    /// Needed by spatially smoothed estimators.
    std::optional<SpatialStructure> spatial;

    void validate() const;
};

/// Lip-cancer offsets and covariate with beta = (-0.35, 0.72) and the adjacency graph.
SimDesign lip_cancer_design(double sigma2, std::size_t n_reps = 200, std::uint64_t seed = 1);

struct Replicate {
    Eigen::VectorXd counts;
    Eigen::VectorXd true_risks;
    Eigen::MatrixXd perturbed_x;
    std::vector<std::size_t> perturbed_areas;
};

Replicate generate_replicate(const SimDesign& design, Rng& rng);

/// Inputs an estimator sees for one replicate: counts with perturbed covariates.
struct EstimatorInput {
    const RegressionDesign& data;
    const SpatialStructure* spatial;
    const Replicate& replicate;
};

/// Produces one relative-risk vector per name from a single run.
struct Estimator {
    std::vector<std::string> names;
    std::function<std::vector<Eigen::VectorXd>(const EstimatorInput&)> run;
};

/// Returns the true risks (diagnostic).
Estimator oracle_estimator();
Estimator smr_estimator();
Estimator eb_estimator(MLControl control = {});
/// "NBMQ", plus "NBMQsp" when smoothing is given.
Estimator nbmq_estimator(NbmqOptions options = {}, std::optional<SmoothingOptions> smoothing = SmoothingOptions{});

/// Bootstrap diagnostics run inside each outer replicate.
struct StudyBootstrap {
    BootstrapConfig config{};
    NbmqOptions options{};
    std::vector<PredictorMode> modes{PredictorMode::NBMQ, PredictorMode::NBMQsp};
};

struct EstimatorSummary {
    std::string name;
    Eigen::VectorXd bias;
    Eigen::VectorXd rmse;
    double average_bias = 0.0;
    double average_rmse = 0.0;
    std::size_t replicates_used = 0;
    std::size_t failures = 0;
};

struct BootstrapDiagnostics {
    std::string name;
    /// Mean bootstrap mse over replicates divided by the Monte Carlo MSE of the predicted count
    /// against the realized count.
    Eigen::VectorXd ratio;
    /// Share of replicates with |predicted count - realized count| <= 1.96 sqrt(mse_i).
    Eigen::VectorXd coverage;
    /// Same diagnostics on the risk scale (mse_i / t_i^2) against the study target risk.
    Eigen::VectorXd risk_ratio;
    Eigen::VectorXd risk_coverage;
    double median_ratio = 0.0;
    double median_coverage = 0.0;
    double median_risk_ratio = 0.0;
    double median_risk_coverage = 0.0;
    std::size_t replicates_used = 0;
    std::size_t failures = 0;
    std::size_t unreliable = 0;
};

struct SimulationReport {
    std::size_t n_reps = 0;
    double sigma2 = 0.0;
    std::vector<EstimatorSummary> estimators;
    std::vector<BootstrapDiagnostics> bootstrap;

    const EstimatorSummary& summary(const std::string& name) const;
};

SimulationReport run_study(const SimDesign& design, const std::vector<Estimator>& estimators,
                           const std::optional<StudyBootstrap>& bootstrap = std::nullopt, unsigned threads = 1);

double median(std::vector<double> values);

}  // namespace nbmq

#pragma once

#include "nbmq/mquantile.hpp"
#include "nbmq/spatial.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace nbmq {

enum class PredictorMode { NBMQ, NBMQsp };

/// How each area picks its (effect, shape) pair from the pool.
enum class Resampling {
    /// One uniform index h per area selects effect and shape together.
    JointIndex,
    /// Area i keeps its own pair (h = i); a deterministic diagnostic mode.
    Identity,
};

/// How bootstrap counts are generated from the resampled means.
enum class CountSampling {
    NegativeBinomial,
    /// y* = round(mu*); a deterministic diagnostic mode.
    RoundedMean,
};

struct BootstrapConfig {
    std::size_t replicates = 1000;
    std::uint64_t seed = 1;
    PredictorMode mode = PredictorMode::NBMQ;
    Resampling resampling = Resampling::JointIndex;
    CountSampling sampling = CountSampling::NegativeBinomial;
    /// Smoothing used by NBMQsp replicates.
    SmoothingOptions smoothing{};
    /// Stable per-area keys for the random streams; empty means "0", "1", ...
    std::vector<std::string> area_keys;
    unsigned threads = 1;

    void validate() const;
};

/// Resampling pool of step 1: centred pseudo effects and shapes, plus the q = 0.5 coefficients.
struct BootstrapPool {
    Eigen::VectorXd effects;
    Eigen::VectorXd shapes;
    Eigen::VectorXd beta_median;
};

/// Pool from a fitted NBMQ run; NBMQsp mode uses the smoothed coefficients.
BootstrapPool make_pool(const RegressionDesign& design, const NbmqResult& fitted, PredictorMode mode);

struct AreaBootstrapSummary {
    double mean_prediction = 0.0;
    double mean_target = 0.0;
    double mse = 0.0;
};

struct BootstrapResult {
    /// Mean squared difference between bootstrap predictions and bootstrap counts, per area.
    Eigen::VectorXd mse;
    std::vector<AreaBootstrapSummary> summaries;
    std::size_t successful = 0;
    std::size_t failed = 0;
    /// More than 10% of the replicates failed to fit.
    bool unreliable = false;
};

/// Semiparametric bootstrap MSE of the NBMQ (or NBMQsp) predictor of the counts.
BootstrapResult run_bootstrap(const RegressionDesign& design, const BootstrapPool& pool, const NbmqOptions& options,
                              const SpatialStructure* spatial, const BootstrapConfig& cfg);

BootstrapResult run_bootstrap(const RegressionDesign& design, const NbmqResult& fitted, const NbmqOptions& options,
                              const SpatialStructure* spatial, const BootstrapConfig& cfg);

/// Random stream for one (seed, replicate, area key) triple.
Rng stream_for(std::uint64_t seed, std::uint64_t replicate, const std::string& key);

/// Runs body(0..count-1) on up to `threads` workers; each index runs exactly once.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace nbmq

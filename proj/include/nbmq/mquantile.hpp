#pragma once

#include "nbmq/robust_glm.hpp"
#include "nbmq/spatial.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

namespace nbmq {

/// Strictly increasing set of M-quantile orders in (0, 1).
class QuantileGrid {
public:
    /// Sorts the values; rejects duplicates and values outside (0, 1).
    static QuantileGrid from_values(std::vector<double> values);
    /// {1/(n+1), ..., n/(n+1)}, uniformly thinned to at most `max_points` values.
    static QuantileGrid empirical(std::size_t n, std::size_t max_points = 99);

    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double front() const { return values_.front(); }
    double back() const { return values_.back(); }

private:
    std::vector<double> values_;
};

struct QuantileFit {
    double q = 0.5;
    Eigen::VectorXd beta;
    double theta = 0.0;
    ThetaStatus theta_status = ThetaStatus::Interior;
    int iterations = 0;
    bool converged = false;
    double equation_norm = 0.0;
};

/// The NBMQ ensemble: one coefficient vector and shape per grid point, plus the q = 0.5 fit.
struct MQFit {
    QuantileGrid grid;
    std::vector<QuantileFit> fits;
    QuantileFit median;
    FitControl control;
    Eigen::VectorXd weights;

    /// Converged grid fits with the median fit merged in, ordered by q.
    std::vector<const QuantileFit*> knots() const;
    std::size_t failures() const;
};

QuantileFit fit_beta_at_q(const RegressionDesign& design, double q, const FitControl& control = {},
                          std::optional<Eigen::VectorXd> warm_start = std::nullopt,
                          std::optional<double> theta_start = std::nullopt);
QuantileFit fit_beta_at_q(const RegressionDesign& design, double q, const FitControl& control,
                          const Eigen::VectorXd& weights, std::optional<Eigen::VectorXd> warm_start,
                          std::optional<double> theta_start);

/// Fits the median first, then walks outwards through the grid warm-starting from the neighbour.
/// A failing grid point is recorded (converged = false) and never aborts the ensemble.
MQFit fit_nbmq(const RegressionDesign& design, const QuantileGrid& grid, const FitControl& control = {});

/// Value whose M-quantile coefficient is sought: y_i, or the positive boundary value when y_i = 0.
double coefficient_target(double y, double median_fitted, double epsilon);

/// M-quantile coefficient per area by interpolation on the monotonically rearranged fitted values.
Eigen::VectorXd assign_q(const RegressionDesign& design, const MQFit& fit, double epsilon = 1e-3);

struct AreaPrediction {
    std::size_t area = 0;
    double q_i = 0.5;
    std::optional<double> q_i_sp;
    Eigen::VectorXd beta;
    double theta = 0.0;
    double predicted_count = 0.0;
    double relative_risk = 0.0;
    double pseudo_effect = 0.0;
    std::optional<double> mse;
    /// Refit at this q failed; coefficients were interpolated from the grid.
    bool refit_failed = false;
};

/// Coefficients at arbitrary q: grid and median fits are reused, other values are refitted once
/// (values closer than 1e-6 share a refit) and cached.
class CoefficientBank {
public:
    CoefficientBank(const RegressionDesign& design, const MQFit& fit);

    struct Entry {
        QuantileFit fit;
        bool interpolated = false;
    };
    const Entry& at(double q);
    /// Root of t_i exp(x_i beta_q) = target in q, bracketed by the knots nearest to `q_start`; every
    /// evaluation is a refit. The final fit is cached at the returned q. Empty when no knot pair brackets
    /// the target or a refit fails.
    std::optional<double> solve_q(Eigen::Index area, double target, double q_start, double tol = 1e-12);
    /// Linear interpolation of coefficients (and log-shape) between neighbouring knots.
    QuantileFit interpolate(double q) const;
    std::size_t refits() const noexcept { return refits_; }

private:
    const RegressionDesign& design_;
    const MQFit& fit_;
    std::vector<const QuantileFit*> knots_;
    std::map<double, Entry> cache_;
    std::size_t refits_ = 0;
};

std::vector<AreaPrediction> predict(const RegressionDesign& design, const MQFit& fit, const Eigen::VectorXd& q);
std::vector<AreaPrediction> predict(const RegressionDesign& design, CoefficientBank& bank, const MQFit& fit,
                                    const Eigen::VectorXd& q);

enum class SmoothingKind { Adjacency, Distance };

struct SmoothingOptions {
    SmoothingKind kind = SmoothingKind::Adjacency;
    double bandwidth = 1.0;
};

struct NbmqOptions {
    FitControl control{};
    /// Defaults to QuantileGrid::empirical(n).
    std::optional<QuantileGrid> grid;
    double epsilon = 1e-3;
    /// Replace interpolated coefficients by exact roots of the fitted-value equation (slower).
    bool exact_inversion = false;
};

struct NbmqResult {
    MQFit fit;
    Eigen::VectorXd q;
    std::vector<AreaPrediction> nbmq;
    std::optional<Eigen::VectorXd> q_sp;
    std::vector<AreaPrediction> nbmq_sp;
    std::size_t refits = 0;
};

/// Full pipeline: ensemble fit, coefficient assignment, prediction, and (when `smoothing` is given)
/// the spatially smoothed predictor.
NbmqResult run_nbmq(const RegressionDesign& design, const NbmqOptions& options,
                    const SpatialStructure* spatial = nullptr,
                    std::optional<SmoothingOptions> smoothing = std::nullopt);

Eigen::VectorXd smooth_q(const Eigen::VectorXd& q, const SpatialStructure& spatial, const SmoothingOptions& how);

}  // namespace nbmq

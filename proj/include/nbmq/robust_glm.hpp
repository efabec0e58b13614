#pragma once

#include "nbmq/negbin.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace nbmq {

/// Numerical failure inside a fit (singular scoring matrix, degenerate data).
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Log-linear count regression inputs: design matrix (with intercept column),
/// positive offsets t and nonnegative integer counts y.
class RegressionDesign {
public:
    RegressionDesign(Eigen::MatrixXd X, Eigen::VectorXd offsets, Eigen::VectorXd counts);

    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::VectorXd& offsets() const noexcept { return t_; }
    const Eigen::VectorXd& counts() const noexcept { return y_; }
    Eigen::Index rows() const noexcept { return X_.rows(); }
    Eigen::Index cols() const noexcept { return X_.cols(); }

    /// Same covariates and offsets, new counts.
    RegressionDesign with_counts(Eigen::VectorXd counts) const;
    /// Same offsets and counts, new covariates (rank is re-checked).
    RegressionDesign with_covariates(Eigen::MatrixXd X) const;
    /// Offsets scaled by k > 0.
    RegressionDesign with_scaled_offsets(double k) const;

private:
    RegressionDesign(Eigen::MatrixXd X, Eigen::VectorXd offsets, Eigen::VectorXd counts, bool check_rank);

    Eigen::MatrixXd X_;
    Eigen::VectorXd t_;
    Eigen::VectorXd y_;
};

enum class LeverageWeighting {
    None,     ///< w(x) = 1
    Mallows,  ///< w(x) = sqrt(1 - h_ii)
};

struct FitControl {
    HuberConfig huber{};
    int max_iter = 100;
    double tol = 1e-8;
    double theta_min = 1e-2;
    double theta_max = 1e4;
    LeverageWeighting leverage = LeverageWeighting::None;
    CorrectionMode correction = CorrectionMode::ExactSplit;

    void validate() const;
};

/// Where the shape root ended up relative to the search bracket.
enum class ThetaStatus {
    Interior,
    /// Scale equation still positive at theta_max: no detectable overdispersion.
    NearPoisson,
    /// Scale equation still negative at theta_min.
    AtLowerBound,
};

struct ThetaSolution {
    double theta = 0.0;
    ThetaStatus status = ThetaStatus::Interior;
    double residual = 0.0;
};

struct RobustNBFit {
    Eigen::VectorXd beta;
    double theta = 0.0;
    Eigen::MatrixXd cov;
    Eigen::VectorXd leverage_weights;
    Eigen::VectorXd pearson_residuals;
    int iterations = 0;
    bool converged = false;
    ThetaStatus theta_status = ThetaStatus::Interior;
    /// Max-norm of the coefficient estimating function at the returned estimate.
    double equation_norm = 0.0;
};

Eigen::VectorXd leverage_weights(const Eigen::MatrixXd& X, LeverageWeighting kind);

RobustNBFit fit_robust_nb(const RegressionDesign& design, const FitControl& control = {});
RobustNBFit fit_robust_nb(const RegressionDesign& design, const FitControl& control,
                          const Eigen::VectorXd& weights);

/// Fisher-consistency term a(beta) = n^-1 sum E[psi(r_i)] V^-1/2(mu_i) w_i mu_i x_i.
Eigen::VectorXd correction_term(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                                const HuberConfig& huber, const Eigen::VectorXd& weights);

/// Robust scale equation for theta at fixed beta, root-found in 1/theta.
ThetaSolution solve_theta(const Eigen::VectorXd& beta, const RegressionDesign& design,
                          const FitControl& control = {});

/// Left side of the robust scale equation, n^-1 sum {psi^2(r_i) - E[psi^2]} at (beta, theta).
double theta_equation(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                      const HuberConfig& huber);

/// Sandwich covariance n^-1 W^-1 V W^-T of the coefficient estimator.
Eigen::MatrixXd sandwich_variance(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                                  const HuberConfig& huber, const Eigen::VectorXd& weights);

/// Poisson log-linear GLM by IRLS; used to start the robust fit.
Eigen::VectorXd fit_poisson_glm(const RegressionDesign& design, int max_iter = 100, double tol = 1e-10);

namespace detail {

/// Estimating function for the q-th M-quantile coefficients (q = 0.5 gives the robust NB fit).
struct QuantileEquation {
    const RegressionDesign& design;
    const Eigen::VectorXd& weights;
    double q;
    HuberConfig huber;
    CorrectionMode mode;

    /// n^-1 sum (psi_q(r_i) - E_i) w_i mu_i / sqrt(V_i) x_i.
    Eigen::VectorXd evaluate(const Eigen::VectorXd& beta, double theta) const;
    /// Fisher-scoring direction at (beta, theta); also returns the equation value.
    Eigen::VectorXd scoring_step(const Eigen::VectorXd& beta, double theta, Eigen::VectorXd* value) const;
    /// n^-1 sum {psi_q^2(r_i) - E[psi_q^2]} at (beta, theta).
    double scale_equation(const Eigen::VectorXd& beta, double theta) const;
    /// Coefficient equation stacked over the scale equation, from one pass over the data.
    Eigen::VectorXd system(const Eigen::VectorXd& beta, double theta) const;
};

struct QuantileSolution {
    Eigen::VectorXd beta;
    double theta = 0.0;
    ThetaStatus theta_status = ThetaStatus::Interior;
    int iterations = 0;
    bool converged = false;
    double equation_norm = 0.0;
};

ThetaSolution solve_quantile_theta(const QuantileEquation& eq, const Eigen::VectorXd& beta,
                                   const FitControl& control, std::optional<double> theta_hint = std::nullopt);

/// Alternating Fisher-scoring / scale-root iteration for one quantile order.
QuantileSolution solve_quantile(const RegressionDesign& design, double q, const FitControl& control,
                                const Eigen::VectorXd& weights, const Eigen::VectorXd& beta_start,
                                std::optional<double> theta_start);

/// Method-of-moments shape from Pearson residuals, clamped into the control bracket.
double moment_theta(const RegressionDesign& design, const Eigen::VectorXd& beta, const FitControl& control);

}  // namespace detail

}  // namespace nbmq

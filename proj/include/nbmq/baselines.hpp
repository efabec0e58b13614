#pragma once

#include "nbmq/robust_glm.hpp"

#include <Eigen/Dense>

#include <optional>

namespace nbmq {

/// Standardized ratio y_i / t_i.
Eigen::VectorXd smr(const RegressionDesign& design);

struct NBMLFit {
    Eigen::VectorXd beta;
    double theta = 0.0;
    double log_likelihood = 0.0;
    bool theta_capped = false;
    bool converged = false;
    int iterations = 0;
};

struct MLControl {
    double theta_min = 1e-3;
    /// Shapes above this are treated as "no overdispersion".
    double theta_cap = 1e6;
    int max_iter = 200;
    double tol = 1e-10;
};

double nb_log_likelihood(const RegressionDesign& design, const Eigen::VectorXd& beta, double theta);

/// Negative Binomial GLM maximum likelihood: IRLS for beta alternating with a 1-D maximisation in log theta.
NBMLFit fit_nb_ml(const RegressionDesign& design, const MLControl& control = {});

/// Poisson-Gamma empirical Bayes with ecological covariates:
/// lambda_i = exp(x_i beta) delta_i, delta_i ~ Gamma(nu, nu).
struct EBFit {
    Eigen::VectorXd beta;
    double nu = 0.0;
    Eigen::VectorXd risks;
    bool nu_capped = false;
    bool converged = false;
    /// Intercept-only designs: the Gamma(shape, rate) prior on lambda, posterior mean (y + shape)/(t + rate).
    std::optional<double> prior_shape;
    std::optional<double> prior_rate;
};

EBFit fit_eb(const RegressionDesign& design, const MLControl& control = {});

/// exp(x_i beta) (y_i + nu) / (t_i exp(x_i beta) + nu).
Eigen::VectorXd eb_posterior_risks(const RegressionDesign& design, const Eigen::VectorXd& beta, double nu);

}  // namespace nbmq

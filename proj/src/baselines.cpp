#include "nbmq/baselines.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>

namespace nbmq {

Eigen::VectorXd smr(const RegressionDesign& design) {
    return design.counts().array() / design.offsets().array();
}

double nb_log_likelihood(const RegressionDesign& design, const Eigen::VectorXd& beta, double theta) {
    const Eigen::VectorXd eta = design.X() * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const double mu = design.offsets()[i] * std::exp(eta[i]);
        ll += nb_log_pmf(static_cast<std::int64_t>(design.counts()[i]), NegBin2(mu, theta));
    }
    return ll;
}

namespace {

// Weighted IRLS for beta at fixed theta; weights mu / (1 + mu/theta).
Eigen::VectorXd irls_step(const RegressionDesign& design, const Eigen::VectorXd& beta, double theta) {
    const auto& X = design.X();
    const Eigen::VectorXd eta = X * beta;
    const Eigen::ArrayXd mu = design.offsets().array() * eta.array().exp();
    const Eigen::ArrayXd w = mu / (1.0 + mu / theta);
    const Eigen::VectorXd z = (eta.array() + (design.counts().array() - mu) / mu).matrix();
    const Eigen::MatrixXd XtW = X.transpose() * w.matrix().asDiagonal();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(XtW * X);
    if (ldlt.info() != Eigen::Success) throw FitError("NB IRLS: singular weighted cross-product");
    return ldlt.solve(XtW * z);
}

}  // namespace

NBMLFit fit_nb_ml(const RegressionDesign& design, const MLControl& control) {
    if (design.counts().maxCoeff() <= 0.0) throw FitError("all counts are zero; nothing to fit");
    NBMLFit fit;
    fit.beta = fit_poisson_glm(design);
    {
        FitControl fc;
        fc.theta_min = control.theta_min;
        fc.theta_max = control.theta_cap;
        fit.theta = detail::moment_theta(design, fit.beta, fc);
    }
    const double log_lo = std::log(control.theta_min);
    const double log_hi = std::log(control.theta_cap);
    for (int it = 1; it <= control.max_iter; ++it) {
        fit.iterations = it;
        Eigen::VectorXd beta = fit.beta;
        double beta_change = 0.0;
        for (int inner = 0; inner < 100; ++inner) {
            const Eigen::VectorXd next = irls_step(design, beta, fit.theta);
            const double change = (next - beta).cwiseAbs().maxCoeff();
            beta = next;
            if (change < control.tol) break;
        }
        beta_change = (beta - fit.beta).cwiseAbs().maxCoeff();
        fit.beta = beta;

        const auto negative_ll = [&](double log_theta) {
            return -nb_log_likelihood(design, fit.beta, std::exp(log_theta));
        };
        std::uintmax_t max_iter = 500;
        const auto [best, value] = boost::math::tools::brent_find_minima(negative_ll, log_lo, log_hi, 52, max_iter);
        const double theta = std::exp(best);
        const double theta_change = std::abs(best - std::log(fit.theta));
        fit.theta = theta;
        fit.log_likelihood = -value;
        fit.theta_capped = best > log_hi - 1e-6;
        if (beta_change < control.tol && theta_change < 1e-8) {
            fit.converged = true;
            break;
        }
    }
    fit.log_likelihood = nb_log_likelihood(design, fit.beta, fit.theta);
    return fit;
}

Eigen::VectorXd eb_posterior_risks(const RegressionDesign& design, const Eigen::VectorXd& beta, double nu) {
    const Eigen::ArrayXd rate = (design.X() * beta).array().exp();
    return (rate * (design.counts().array() + nu) / (design.offsets().array() * rate + nu)).matrix();
}

EBFit fit_eb(const RegressionDesign& design, const MLControl& control) {
    const auto ml = fit_nb_ml(design, control);
    EBFit eb;
    eb.beta = ml.beta;
    eb.nu = ml.theta;
    eb.nu_capped = ml.theta_capped;
    eb.converged = ml.converged;
    eb.risks = eb_posterior_risks(design, eb.beta, eb.nu);
    if (design.cols() == 1 && (design.X().col(0).array() == 1.0).all()) {
        eb.prior_shape = eb.nu;
        eb.prior_rate = eb.nu / std::exp(eb.beta[0]);
    }
    return eb;
}

}  // namespace nbmq

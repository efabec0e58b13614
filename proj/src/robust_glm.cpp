#include "nbmq/robust_glm.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nbmq {

namespace {

constexpr double kMuFloor = 1e-250;
constexpr double kMuCeil = 1e250;

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

// Linear predictor on the mean scale; nullopt when the iterate has left the representable range.
std::optional<Eigen::VectorXd> fitted_means(const RegressionDesign& design, const Eigen::VectorXd& beta) {
    Eigen::VectorXd mu = (design.X() * beta).array().exp() * design.offsets().array();
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (!(mu[i] > kMuFloor && mu[i] < kMuCeil)) return std::nullopt;
    return mu;
}

bool is_median(double q) { return q == 0.5; }

// Per-observation pieces of the coefficient equation, its scoring matrix and the scale equation,
// all taken from one set of moment evaluations.
struct ObservationTerms {
    double u;      // (psi_q(r) - E) w mu / s
    double b;      // E[psi_q(r) (Y - mu)/V] w mu^2 / s
    double scale;  // psi_q(r)^2 - E[psi_q(r)^2]
};

ObservationTerms observation_terms(double y, double mu, double theta, double w, double q, const HuberConfig& h,
                                   CorrectionMode mode) {
    const NegBin2 d(mu, theta);
    const double s = std::sqrt(d.variance());
    const double r = (y - mu) / s;
    const double psi = huber_psi(r, h);
    double wq = 1.0;
    double centre = 0.0;
    double score = 0.0;
    double scale = 0.0;
    if (is_median(q)) {
        const auto m = huber_moments(d, h);
        centre = m.psi;
        score = m.psi_score;
        scale = psi * psi - m.psi_sq;
    } else if (mode == CorrectionMode::ExactSplit) {
        wq = quantile_weight(r, q);
        const auto m = quantile_huber_moments(d, q, h);
        centre = m.psi;
        score = m.psi_score;
        scale = wq * wq * psi * psi - m.psi_sq;
    } else {
        wq = quantile_weight(r, q);
        const auto m = huber_moments(d, h);
        centre = wq * m.psi;
        score = wq * m.psi_score;
        scale = wq * wq * (psi * psi - m.psi_sq);
    }
    return {(wq * psi - centre) * w * mu / s, score * w * mu * mu / s, scale};
}

}  // namespace

RegressionDesign::RegressionDesign(Eigen::MatrixXd X, Eigen::VectorXd offsets, Eigen::VectorXd counts)
    : RegressionDesign(std::move(X), std::move(offsets), std::move(counts), true) {}

RegressionDesign::RegressionDesign(Eigen::MatrixXd X, Eigen::VectorXd offsets, Eigen::VectorXd counts,
                                   bool check_rank)
    : X_(std::move(X)), t_(std::move(offsets)), y_(std::move(counts)) {
    const auto n = X_.rows();
    require(X_.cols() >= 1, "design matrix needs at least one column");
    require(t_.size() == n && y_.size() == n, "design matrix, offsets and counts differ in length");
    require(n >= X_.cols(), "fewer observations than coefficients");
    require(X_.allFinite(), "design matrix has non-finite entries");
    for (Eigen::Index i = 0; i < n; ++i) {
        require(t_[i] > 0.0 && std::isfinite(t_[i]), "offset " + std::to_string(i) + " is not positive");
        require(y_[i] >= 0.0 && std::isfinite(y_[i]) && y_[i] == std::floor(y_[i]),
                "count " + std::to_string(i) + " is not a nonnegative integer");
    }
    if (check_rank) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X_);
        require(qr.rank() == X_.cols(), "design matrix is not of full column rank");
    }
}

RegressionDesign RegressionDesign::with_counts(Eigen::VectorXd counts) const {
    return RegressionDesign(X_, t_, std::move(counts), false);
}

RegressionDesign RegressionDesign::with_covariates(Eigen::MatrixXd X) const {
    return RegressionDesign(std::move(X), t_, y_, true);
}

RegressionDesign RegressionDesign::with_scaled_offsets(double k) const {
    require(k > 0.0 && std::isfinite(k), "offset scale must be positive");
    return RegressionDesign(X_, t_ * k, y_, false);
}

void FitControl::validate() const {
    require(max_iter >= 1, "max_iter must be at least 1");
    require(tol > 0.0, "tolerance must be positive");
    require(theta_min > 0.0 && theta_max > theta_min && std::isfinite(theta_max), "invalid theta bracket");
}

Eigen::VectorXd leverage_weights(const Eigen::MatrixXd& X, LeverageWeighting kind) {
    if (kind == LeverageWeighting::None) return Eigen::VectorXd::Ones(X.rows());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(X.rows(), X.cols());
    Eigen::VectorXd w(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) w[i] = std::sqrt(std::max(0.0, 1.0 - Q.row(i).squaredNorm()));
    return w;
}

Eigen::VectorXd fit_poisson_glm(const RegressionDesign& design, int max_iter, double tol) {
    const auto& X = design.X();
    const auto& y = design.counts();
    const Eigen::VectorXd log_t = design.offsets().array().log();
    Eigen::VectorXd mu = y.array() + 0.5;
    Eigen::VectorXd eta = mu.array().log() - log_t.array();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd z = eta.array() + (y - mu).array() / mu.array();
        const Eigen::MatrixXd XtW = X.transpose() * mu.asDiagonal();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(XtW * X);
        if (ldlt.info() != Eigen::Success) throw FitError("Poisson IRLS: singular weighted cross-product");
        const Eigen::VectorXd next = ldlt.solve(XtW * z);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        eta = X * beta;
        mu = (eta + log_t).array().exp();
        if (!mu.allFinite()) throw FitError("Poisson IRLS diverged");
        if (it > 0 && change < tol) break;
    }
    return beta;
}

namespace detail {

Eigen::VectorXd QuantileEquation::evaluate(const Eigen::VectorXd& beta, double theta) const {
    const auto mu = fitted_means(design, beta);
    const auto p = design.cols();
    if (!mu) return Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    const auto n = design.rows();
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i)
        u[i] = observation_terms(design.counts()[i], (*mu)[i], theta, weights[i], q, huber, mode).u;
    return design.X().transpose() * u / static_cast<double>(n);
}

Eigen::VectorXd QuantileEquation::scoring_step(const Eigen::VectorXd& beta, double theta,
                                               Eigen::VectorXd* value) const {
    const auto mu = fitted_means(design, beta);
    if (!mu) throw FitError("fitted means left the representable range");
    const auto n = design.rows();
    Eigen::VectorXd u(n);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto terms = observation_terms(design.counts()[i], (*mu)[i], theta, weights[i], q, huber, mode);
        u[i] = terms.u;
        b[i] = terms.b;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::VectorXd psi = design.X().transpose() * u * inv_n;
    const Eigen::MatrixXd W = design.X().transpose() * b.asDiagonal() * design.X() * inv_n;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(W);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
        throw FitError("scoring matrix is singular");
    if (value) *value = psi;
    return ldlt.solve(psi);
}

double QuantileEquation::scale_equation(const Eigen::VectorXd& beta, double theta) const {
    const auto mu = fitted_means(design, beta);
    if (!mu) throw FitError("fitted means left the representable range");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < design.rows(); ++i)
        acc += observation_terms(design.counts()[i], (*mu)[i], theta, weights[i], q, huber, mode).scale;
    return acc / static_cast<double>(design.rows());
}

Eigen::VectorXd QuantileEquation::system(const Eigen::VectorXd& beta, double theta) const {
    const auto p = design.cols();
    const auto mu = fitted_means(design, beta);
    if (!mu) return Eigen::VectorXd::Constant(p + 1, std::numeric_limits<double>::infinity());
    const auto n = design.rows();
    Eigen::VectorXd u(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto terms = observation_terms(design.counts()[i], (*mu)[i], theta, weights[i], q, huber, mode);
        u[i] = terms.u;
        acc += terms.scale;
    }
    Eigen::VectorXd out(p + 1);
    out.head(p) = design.X().transpose() * u / static_cast<double>(n);
    out[p] = acc / static_cast<double>(n);
    return out;
}

ThetaSolution solve_quantile_theta(const QuantileEquation& eq, const Eigen::VectorXd& beta,
                                   const FitControl& control, std::optional<double> theta_hint) {
    // Root in phi = 1/theta; the equation decreases in phi as residuals shrink.
    const auto f = [&](double phi) { return eq.scale_equation(beta, 1.0 / phi); };
    const double phi_lo = 1.0 / control.theta_max;
    const double phi_hi = 1.0 / control.theta_min;
    boost::math::tools::eps_tolerance<double> tolerance(46);

    const auto solve = [&](double a, double b, double fa, double fb) {
        std::uintmax_t max_iter = 200;
        const auto [x0, x1] = boost::math::tools::toms748_solve(f, a, b, fa, fb, tolerance, max_iter);
        const double phi = 0.5 * (x0 + x1);
        return ThetaSolution{1.0 / phi, ThetaStatus::Interior, f(phi)};
    };

    if (theta_hint && *theta_hint > control.theta_min && *theta_hint < control.theta_max) {
        const double phi0 = 1.0 / *theta_hint;
        const double a = std::max(phi_lo, phi0 / 1.5);
        const double b = std::min(phi_hi, phi0 * 1.5);
        const double fa = f(a);
        const double fb = f(b);
        if (fa > 0.0 && fb < 0.0) return solve(a, b, fa, fb);
    }
    const double f_lo = f(phi_lo);
    if (f_lo <= 0.0) return {control.theta_max, ThetaStatus::NearPoisson, f_lo};
    const double f_hi = f(phi_hi);
    if (f_hi >= 0.0) return {control.theta_min, ThetaStatus::AtLowerBound, f_hi};
    return solve(phi_lo, phi_hi, f_lo, f_hi);
}

double moment_theta(const RegressionDesign& design, const Eigen::VectorXd& beta, const FitControl& control) {
    const auto mu = fitted_means(design, beta);
    if (!mu) return control.theta_max;
    const Eigen::ArrayXd m = mu->array();
    const Eigen::ArrayXd e = design.counts().array() - m;
    const double excess = (e.square() - m).sum();
    if (!(excess > 0.0)) return control.theta_max;
    return std::clamp(m.square().sum() / excess, control.theta_min, control.theta_max);
}

namespace {

// Quasi-Newton iteration on the stacked system in (beta, log theta). The Jacobian starts from forward
// differences and is then kept current with Broyden rank-one updates, refreshed by differencing
// whenever a step fails to reduce the residual. Converges far faster than the alternating scheme;
// returns false when it cannot make progress or the shape leaves the bracket, in which case the
// caller keeps alternating.
bool joint_newton(const QuantileEquation& eq, const FitControl& control, QuantileSolution& sol) {
    constexpr int kMaxSteps = 60;
    constexpr int kHalvings = 30;
    const auto p = eq.design.cols();
    const double log_lo = std::log(control.theta_min);
    const double log_hi = std::log(control.theta_max);
    const auto F = [&](const Eigen::VectorXd& z) { return eq.system(z.head(p), std::exp(z[p])); };

    Eigen::VectorXd z(p + 1);
    z << sol.beta, std::log(sol.theta);
    Eigen::VectorXd f = F(z);
    if (!f.allFinite()) return false;
    Eigen::MatrixXd J(p + 1, p + 1);
    const auto difference = [&] {
        for (Eigen::Index j = 0; j <= p; ++j) {
            Eigen::VectorXd zj = z;
            zj[j] += 1e-7 * std::max(1.0, std::abs(z[j]));
            J.col(j) = (F(zj) - f) / (zj[j] - z[j]);
        }
    };
    difference();
    bool fresh = true;
    bool converged = false;
    for (int it = 1; it <= kMaxSteps && !converged; ++it) {
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
        Eigen::VectorXd step = qr.rank() > p ? Eigen::VectorXd(-qr.solve(f)) : Eigen::VectorXd();
        if (step.size() == 0 || !step.allFinite()) {
            if (fresh) return false;
            difference();
            fresh = true;
            continue;
        }

        const double base = f.norm();
        double scale = 1.0;
        bool accepted = false;
        Eigen::VectorXd candidate;
        Eigen::VectorXd fc;
        for (int h = 0; h < kHalvings && !accepted; ++h, scale *= 0.5) {
            candidate = z + scale * step;
            if (candidate[p] < log_lo || candidate[p] > log_hi) continue;
            fc = F(candidate);
            accepted = fc.allFinite() && fc.norm() <= base;
            if (!fresh && !accepted) break;  // stale Jacobian: refresh rather than backtrack
        }
        if (!accepted) {
            if (fresh && step.cwiseAbs().maxCoeff() < control.tol) {
                converged = true;
                break;
            }
            if (fresh) return false;
            difference();
            fresh = true;
            continue;
        }
        const Eigen::VectorXd dz = candidate - z;
        const double moved = dz.cwiseAbs().maxCoeff();
        J += (fc - f - J * dz) * dz.transpose() / dz.squaredNorm();
        const bool confirmed = fresh;
        fresh = false;
        z = candidate;
        f = fc;
        sol.iterations = it;
        if (moved < control.tol) {
            // Only a step taken with a differenced Jacobian certifies convergence.
            converged = confirmed;
            if (!converged) {
                difference();
                fresh = true;
            }
        }
    }
    if (!converged) return false;
    sol.beta = z.head(p);
    sol.theta = std::exp(z[p]);
    return true;
}

}  // namespace

namespace {

// The residual-sign weighting jumps where a fitted mean equals its count; a stalled iterate sitting on
// such a point is a generalized root of the discontinuous equation.
bool at_kink(const RegressionDesign& design, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design.X() * beta;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const double y = design.counts()[i];
        if (y > 0.0 && std::abs(std::log(design.offsets()[i]) + eta[i] - std::log(y)) < 1e-7) return true;
    }
    return false;
}

// A joint solution whose shape sits on an end of the bracket is reported like the scalar search would.
ThetaStatus bracket_status(double theta, const FitControl& control) {
    if (theta <= control.theta_min * (1.0 + 1e-6)) return ThetaStatus::AtLowerBound;
    if (theta >= control.theta_max * (1.0 - 1e-6)) return ThetaStatus::NearPoisson;
    return ThetaStatus::Interior;
}

}  // namespace

QuantileSolution solve_quantile(const RegressionDesign& design, double q, const FitControl& control,
                                const Eigen::VectorXd& weights, const Eigen::VectorXd& beta_start,
                                std::optional<double> theta_start) {
    control.validate();
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("quantile order must lie in (0, 1)");
    require(beta_start.size() == design.cols(), "starting coefficients have the wrong length");
    require(weights.size() == design.rows(), "leverage weights have the wrong length");
    if (design.counts().maxCoeff() <= 0.0) throw FitError("all counts are zero; nothing to fit");

    const QuantileEquation eq{design, weights, q, control.huber, control.correction};
    QuantileSolution sol;
    sol.beta = beta_start;

    constexpr int kInnerSteps = 50;
    constexpr int kHalvings = 40;
    // Damped scoring on the coefficient equation at fixed theta. Returns the size of the first accepted
    // step and whether the line search failed before the steps fell below tolerance.
    const auto descend = [&](double theta, bool& stalled) {
        double first_step = 0.0;
        stalled = false;
        for (int inner = 0; inner < kInnerSteps; ++inner) {
            Eigen::VectorXd value;
            const Eigen::VectorXd step = eq.scoring_step(sol.beta, theta, &value);
            const double base = value.norm();
            double scale = 1.0;
            bool accepted = false;
            Eigen::VectorXd candidate;
            for (int h = 0; h < kHalvings; ++h, scale *= 0.5) {
                candidate = sol.beta + scale * step;
                const double trial = eq.evaluate(candidate, theta).norm();
                if (trial <= base) {
                    accepted = true;
                    break;
                }
            }
            const double moved = accepted ? (scale * step).cwiseAbs().maxCoeff() : 0.0;
            if (inner == 0) first_step = moved;
            if (!accepted) {
                stalled = step.cwiseAbs().maxCoeff() >= control.tol;
                break;
            }
            sol.beta = candidate;
            if (moved < control.tol) break;
        }
        return first_step;
    };

    if (theta_start) {
        sol.theta = *theta_start;
    } else {
        // The Poisson start is pulled by gross outliers, and the moment shape computed from it can sit in
        // the basin of a degenerate small-theta root. Bounded-influence scoring at the Poisson limit
        // moves the coefficients back to the bulk of the data first.
        bool ignored = false;
        descend(control.theta_max, ignored);
        if (!sol.beta.allFinite()) sol.beta = beta_start;
        sol.theta = moment_theta(design, sol.beta, control);
    }
    sol.theta = std::clamp(sol.theta, control.theta_min, control.theta_max);

    // A warm start is usually inside Newton's basin already.
    if (theta_start && sol.theta > control.theta_min && sol.theta < control.theta_max) {
        QuantileSolution polished = sol;
        if (joint_newton(eq, control, polished)) {
            polished.theta_status = bracket_status(polished.theta, control);
            polished.equation_norm = eq.evaluate(polished.beta, polished.theta).cwiseAbs().maxCoeff();
            polished.converged = true;
            return polished;
        }
    }

    for (int outer = 1; outer <= control.max_iter; ++outer) {
        sol.iterations = outer;
        bool stalled = false;
        const double first_step = descend(sol.theta, stalled);
        const ThetaSolution th = solve_quantile_theta(eq, sol.beta, control, sol.theta);
        const double theta_change = std::abs(std::log(th.theta) - std::log(sol.theta));
        sol.theta = th.theta;
        sol.theta_status = th.status;
        if (th.status == ThetaStatus::Interior && !stalled && theta_change >= control.tol) {
            QuantileSolution polished = sol;
            if (joint_newton(eq, control, polished)) {
                polished.theta_status = bracket_status(polished.theta, control);
                polished.equation_norm = eq.evaluate(polished.beta, polished.theta).cwiseAbs().maxCoeff();
                polished.converged = true;
                return polished;
            }
        }
        if (first_step < control.tol && theta_change < control.tol) {
            sol.equation_norm = eq.evaluate(sol.beta, sol.theta).cwiseAbs().maxCoeff();
            sol.converged = !stalled || sol.equation_norm < std::sqrt(control.tol) ||
                            (control.correction == CorrectionMode::ObservedWeight && at_kink(design, sol.beta));
            return sol;
        }
    }
    sol.equation_norm = eq.evaluate(sol.beta, sol.theta).cwiseAbs().maxCoeff();
    sol.converged = false;
    return sol;
}

}  // namespace detail

Eigen::VectorXd correction_term(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                                const HuberConfig& huber, const Eigen::VectorXd& weights) {
    const auto mu = fitted_means(design, beta);
    if (!mu) throw FitError("fitted means left the representable range");
    const auto n = design.rows();
    Eigen::VectorXd a_i(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const NegBin2 d((*mu)[i], theta);
        a_i[i] = e_psi(d, huber) / std::sqrt(d.variance()) * weights[i] * d.mu();
    }
    return design.X().transpose() * a_i / static_cast<double>(n);
}

double theta_equation(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                      const HuberConfig& huber) {
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(design.rows());
    const detail::QuantileEquation eq{design, unit, 0.5, huber, CorrectionMode::ExactSplit};
    return eq.scale_equation(beta, theta);
}

ThetaSolution solve_theta(const Eigen::VectorXd& beta, const RegressionDesign& design, const FitControl& control) {
    control.validate();
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(design.rows());
    const detail::QuantileEquation eq{design, unit, 0.5, control.huber, control.correction};
    return detail::solve_quantile_theta(eq, beta, control);
}

Eigen::MatrixXd sandwich_variance(const Eigen::VectorXd& beta, double theta, const RegressionDesign& design,
                                  const HuberConfig& huber, const Eigen::VectorXd& weights) {
    const auto mu = fitted_means(design, beta);
    if (!mu) throw FitError("fitted means left the representable range");
    const auto n = design.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd dd(n), bb(n), aa(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const NegBin2 d((*mu)[i], theta);
        const double v = d.variance();
        const double s = std::sqrt(v);
        const double m = d.mu();
        const auto moments = huber_moments(d, huber);
        dd[i] = moments.psi_sq * weights[i] * weights[i] / v * m * m;
        bb[i] = moments.psi_score / s * weights[i] * m * m;
        aa[i] = moments.psi / s * weights[i] * m;
    }
    const auto& X = design.X();
    const Eigen::VectorXd a = X.transpose() * aa * inv_n;
    const Eigen::MatrixXd V = X.transpose() * dd.asDiagonal() * X * inv_n - a * a.transpose();
    const Eigen::MatrixXd W = X.transpose() * bb.asDiagonal() * X * inv_n;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(W);
    if (!lu.isInvertible()) throw FitError("sandwich: W matrix is singular");
    const Eigen::MatrixXd Winv = lu.inverse();
    Eigen::MatrixXd cov = Winv * V * Winv.transpose() * inv_n;
    return 0.5 * (cov + cov.transpose());
}

RobustNBFit fit_robust_nb(const RegressionDesign& design, const FitControl& control) {
    return fit_robust_nb(design, control, leverage_weights(design.X(), control.leverage));
}

RobustNBFit fit_robust_nb(const RegressionDesign& design, const FitControl& control, const Eigen::VectorXd& weights) {
    control.validate();
    require(weights.size() == design.rows(), "leverage weights have the wrong length");
    require((weights.array() >= 0.0).all() && weights.allFinite(), "leverage weights must be nonnegative");
    if (design.counts().maxCoeff() <= 0.0) throw FitError("all counts are zero; nothing to fit");

    const Eigen::VectorXd start = fit_poisson_glm(design);
    const auto sol = detail::solve_quantile(design, 0.5, control, weights, start, std::nullopt);

    RobustNBFit fit;
    fit.beta = sol.beta;
    fit.theta = sol.theta;
    fit.theta_status = sol.theta_status;
    fit.iterations = sol.iterations;
    fit.converged = sol.converged;
    fit.equation_norm = sol.equation_norm;
    fit.leverage_weights = weights;
    fit.cov = sandwich_variance(sol.beta, sol.theta, design, control.huber, weights);
    const auto mu = fitted_means(design, sol.beta);
    fit.pearson_residuals.resize(design.rows());
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const NegBin2 d((*mu)[i], sol.theta);
        fit.pearson_residuals[i] = (design.counts()[i] - d.mu()) / std::sqrt(d.variance());
    }
    return fit;
}

}  // namespace nbmq

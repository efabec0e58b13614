#include "nbmq/mquantile.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nbmq {

namespace {

constexpr double kShareTolerance = 1e-6;
constexpr double kTargetFloor = 1e-6;

QuantileFit to_quantile_fit(double q, const detail::QuantileSolution& sol) {
    QuantileFit out;
    out.q = q;
    out.beta = sol.beta;
    out.theta = sol.theta;
    out.theta_status = sol.theta_status;
    out.iterations = sol.iterations;
    out.converged = sol.converged;
    out.equation_norm = sol.equation_norm;
    return out;
}

// Neighbouring q values give nearby surfaces; a fitted mean moving by more than this factor (on the
// log scale) relative to the warm start means the iteration slid into a degenerate root.
constexpr double kMaxLogJump = 2.0;

// A fit is usable when it converged, its shape is not pinned at the lower bracket end, and its
// fitted surface stays close to the warm start.
bool plausible(const RegressionDesign& design, const QuantileFit& fit, const Eigen::VectorXd& start_beta) {
    if (!fit.converged || fit.theta_status == ThetaStatus::AtLowerBound) return false;
    return (design.X() * (fit.beta - start_beta)).cwiseAbs().maxCoeff() <= kMaxLogJump;
}

QuantileFit fit_or_record(const RegressionDesign& design, double q, const FitControl& control,
                          const Eigen::VectorXd& weights, const QuantileFit& start) {
    try {
        QuantileFit fit = fit_beta_at_q(design, q, control, weights, start.beta, start.theta);
        fit.converged = plausible(design, fit, start.beta);
        return fit;
    } catch (const FitError&) {
        QuantileFit failed = start;
        failed.q = q;
        failed.converged = false;
        failed.iterations = 0;
        return failed;
    }
}

}  // namespace

QuantileGrid QuantileGrid::from_values(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("quantile grid is empty");
    std::sort(values.begin(), values.end());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0 && values[i] < 1.0))
            throw std::invalid_argument("quantile grid values must lie in (0, 1)");
        if (i > 0 && values[i] == values[i - 1]) throw std::invalid_argument("quantile grid has duplicate values");
    }
    QuantileGrid g;
    g.values_ = std::move(values);
    return g;
}

QuantileGrid QuantileGrid::empirical(std::size_t n, std::size_t max_points) {
    if (n == 0 || max_points == 0) throw std::invalid_argument("empirical grid needs n >= 1 and max_points >= 1");
    const double denom = static_cast<double>(n + 1);
    std::vector<double> values;
    if (n <= max_points) {
        for (std::size_t k = 1; k <= n; ++k) values.push_back(static_cast<double>(k) / denom);
    } else if (max_points == 1) {
        values.push_back(static_cast<double>((n + 1) / 2) / denom);
    } else {
        const double stride = static_cast<double>(n - 1) / static_cast<double>(max_points - 1);
        for (std::size_t j = 0; j < max_points; ++j) {
            const auto k = static_cast<std::size_t>(std::llround(1.0 + static_cast<double>(j) * stride));
            if (values.empty() || static_cast<double>(k) / denom > values.back())
                values.push_back(static_cast<double>(k) / denom);
        }
    }
    return from_values(std::move(values));
}

std::vector<const QuantileFit*> MQFit::knots() const {
    std::vector<const QuantileFit*> out;
    out.reserve(fits.size() + 1);
    bool median_placed = false;
    for (const auto& f : fits) {
        if (!f.converged) continue;
        if (!median_placed && f.q >= median.q) {
            if (f.q != median.q) out.push_back(&median);
            median_placed = true;
        }
        out.push_back(&f);
    }
    if (!median_placed) out.push_back(&median);
    return out;
}

std::size_t MQFit::failures() const {
    return static_cast<std::size_t>(std::count_if(fits.begin(), fits.end(), [](const auto& f) { return !f.converged; }));
}

QuantileFit fit_beta_at_q(const RegressionDesign& design, double q, const FitControl& control,
                          std::optional<Eigen::VectorXd> warm_start, std::optional<double> theta_start) {
    return fit_beta_at_q(design, q, control, leverage_weights(design.X(), control.leverage), std::move(warm_start),
                         theta_start);
}

QuantileFit fit_beta_at_q(const RegressionDesign& design, double q, const FitControl& control,
                          const Eigen::VectorXd& weights, std::optional<Eigen::VectorXd> warm_start,
                          std::optional<double> theta_start) {
    const Eigen::VectorXd start = warm_start ? *warm_start : fit_poisson_glm(design);
    return to_quantile_fit(q, detail::solve_quantile(design, q, control, weights, start, theta_start));
}

MQFit fit_nbmq(const RegressionDesign& design, const QuantileGrid& grid, const FitControl& control) {
    control.validate();
    MQFit out;
    out.grid = grid;
    out.control = control;
    out.weights = leverage_weights(design.X(), control.leverage);
    out.median = fit_beta_at_q(design, 0.5, control, out.weights, std::nullopt, std::nullopt);
    if (!out.median.converged) throw FitError("the q = 0.5 fit did not converge");

    const auto& qs = grid.values();
    out.fits.resize(qs.size());
    const auto first_upper = static_cast<std::size_t>(std::lower_bound(qs.begin(), qs.end(), 0.5) - qs.begin());
    const QuantileFit* previous = &out.median;
    for (std::size_t k = first_upper; k < qs.size(); ++k) {
        if (qs[k] == 0.5) {
            out.fits[k] = out.median;
            continue;
        }
        out.fits[k] = fit_or_record(design, qs[k], control, out.weights, *previous);
        if (out.fits[k].converged) previous = &out.fits[k];
    }
    previous = &out.median;
    for (std::size_t k = first_upper; k-- > 0;) {
        out.fits[k] = fit_or_record(design, qs[k], control, out.weights, *previous);
        if (out.fits[k].converged) previous = &out.fits[k];
    }
    return out;
}

double coefficient_target(double y, double median_fitted, double epsilon) {
    if (y >= 1.0) return y;
    return std::max(kTargetFloor, std::min(1.0 - epsilon, 1.0 / median_fitted));
}

Eigen::VectorXd assign_q(const RegressionDesign& design, const MQFit& fit, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    const auto knots = fit.knots();
    const std::size_t L = knots.size();
    const auto n = design.rows();
    Eigen::VectorXd q(n);
    std::vector<double> fitted(L);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto x = design.X().row(i);
        const double t = design.offsets()[i];
        for (std::size_t l = 0; l < L; ++l) fitted[l] = t * std::exp(x.dot(knots[l]->beta));
        // Monotone rearrangement: the sorted fitted values are paired with the ordered q knots.
        std::sort(fitted.begin(), fitted.end());
        const double median_fitted = t * std::exp(x.dot(fit.median.beta));
        const double target = coefficient_target(design.counts()[i], median_fitted, epsilon);

        const auto it = std::lower_bound(fitted.begin(), fitted.end(), target);
        const auto idx = static_cast<std::size_t>(it - fitted.begin());
        if (idx == 0) {
            q[i] = knots.front()->q;
        } else if (idx == L) {
            q[i] = knots.back()->q;
        } else if (fitted[idx] == target) {
            q[i] = knots[idx]->q;
        } else {
            const double f0 = fitted[idx - 1];
            const double f1 = fitted[idx];
            const double q0 = knots[idx - 1]->q;
            const double q1 = knots[idx]->q;
            q[i] = q0 + (target - f0) / (f1 - f0) * (q1 - q0);
        }
    }
    return q;
}

CoefficientBank::CoefficientBank(const RegressionDesign& design, const MQFit& fit)
    : design_(design), fit_(fit), knots_(fit.knots()) {}

QuantileFit CoefficientBank::interpolate(double q) const {
    if (q <= knots_.front()->q) return *knots_.front();
    if (q >= knots_.back()->q) return *knots_.back();
    const auto it = std::lower_bound(knots_.begin(), knots_.end(), q,
                                     [](const QuantileFit* k, double v) { return k->q < v; });
    const QuantileFit& hi = **it;
    const QuantileFit& lo = **(it - 1);
    const double w = (q - lo.q) / (hi.q - lo.q);
    QuantileFit out;
    out.q = q;
    out.beta = (1.0 - w) * lo.beta + w * hi.beta;
    out.theta = std::exp((1.0 - w) * std::log(lo.theta) + w * std::log(hi.theta));
    out.converged = lo.converged && hi.converged;
    return out;
}

const CoefficientBank::Entry& CoefficientBank::at(double q) {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("quantile order must lie in (0, 1)");
    if (const auto exact = cache_.find(q); exact != cache_.end()) return exact->second;
    const auto near = cache_.lower_bound(q - kShareTolerance);
    if (near != cache_.end() && near->first <= q + kShareTolerance) return near->second;

    for (const auto* k : knots_)
        if (std::abs(k->q - q) <= kShareTolerance) return cache_.emplace(q, Entry{*k, false}).first->second;

    const QuantileFit start = interpolate(q);
    Entry entry{start, true};
    try {
        QuantileFit refit = fit_beta_at_q(design_, q, fit_.control, fit_.weights, start.beta, start.theta);
        ++refits_;
        if (plausible(design_, refit, start.beta)) entry = Entry{std::move(refit), false};
    } catch (const FitError&) {
        ++refits_;
    }
    return cache_.emplace(q, std::move(entry)).first->second;
}

std::optional<double> CoefficientBank::solve_q(Eigen::Index area, double target, double q_start, double tol) {
    if (!(target > 0.0)) throw std::invalid_argument("target must be positive");
    const auto x = design_.X().row(area);
    const double log_target = std::log(target) - std::log(design_.offsets()[area]);
    const std::size_t L = knots_.size();
    if (L < 2) return std::nullopt;
    std::vector<double> g(L);
    for (std::size_t l = 0; l < L; ++l) g[l] = x.dot(knots_[l]->beta) - log_target;
    for (std::size_t l = 0; l < L; ++l)
        if (g[l] == 0.0) {
            cache_.insert_or_assign(knots_[l]->q, Entry{*knots_[l], false});
            return knots_[l]->q;
        }

    // Bracketing knot pair closest to the starting value.
    std::optional<std::size_t> best;
    double best_dist = 0.0;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        if ((g[l] < 0.0) == (g[l + 1] < 0.0)) continue;
        const double lo = knots_[l]->q, hi = knots_[l + 1]->q;
        const double dist = q_start < lo ? lo - q_start : (q_start > hi ? q_start - hi : 0.0);
        if (!best || dist < best_dist) {
            best = l;
            best_dist = dist;
        }
    }
    if (!best) return std::nullopt;

    // Near a kink of the estimating function the refit depends on its start, so the fit that produced
    // the smallest residual during the search is kept rather than refitted.
    std::optional<QuantileFit> last, best_fit;
    double best_abs = std::numeric_limits<double>::infinity();
    bool failed = false;
    auto refit = [&](double q, const QuantileFit& start) -> std::optional<QuantileFit> {
        try {
            QuantileFit f = fit_beta_at_q(design_, q, fit_.control, fit_.weights, start.beta, start.theta);
            ++refits_;
            if (plausible(design_, f, start.beta)) return f;
        } catch (const FitError&) {
            ++refits_;
        }
        return std::nullopt;
    };
    auto eval = [&](double q) {
        if (failed) return 0.0;
        std::optional<QuantileFit> f;
        if (last && std::abs(last->q - q) < 0.05) f = refit(q, *last);
        if (!f) f = refit(q, interpolate(q));
        if (!f) {
            failed = true;
            return 0.0;
        }
        const double v = x.dot(f->beta) - log_target;
        if (std::abs(v) < best_abs) {
            best_abs = std::abs(v);
            best_fit = f;
        }
        last = std::move(f);
        return v;
    };
    const std::size_t l = *best;
    for (std::size_t e : {l, l + 1})
        if (std::abs(g[e]) < best_abs) {
            best_abs = std::abs(g[e]);
            best_fit = *knots_[e];
        }
    std::uintmax_t max_iter = 60;
    const auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    boost::math::tools::toms748_solve(eval, knots_[l]->q, knots_[l + 1]->q, g[l], g[l + 1], stop, max_iter);
    if (failed || !best_fit) return std::nullopt;
    const double q = best_fit->q;
    cache_.insert_or_assign(q, Entry{std::move(*best_fit), false});
    return q;
}

std::vector<AreaPrediction> predict(const RegressionDesign& design, const MQFit& fit, const Eigen::VectorXd& q) {
    CoefficientBank bank(design, fit);
    return predict(design, bank, fit, q);
}

std::vector<AreaPrediction> predict(const RegressionDesign& design, CoefficientBank& bank, const MQFit& fit,
                                    const Eigen::VectorXd& q) {
    const auto n = design.rows();
    if (q.size() != n) throw std::invalid_argument("q vector length does not match the design");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return q[a] < q[b]; });

    std::vector<AreaPrediction> out(static_cast<std::size_t>(n));
    for (const auto i : order) {
        const auto& entry = bank.at(q[i]);
        const auto x = design.X().row(i);
        const double eta = x.dot(entry.fit.beta);
        auto& p = out[static_cast<std::size_t>(i)];
        p.area = static_cast<std::size_t>(i);
        p.q_i = q[i];
        p.beta = entry.fit.beta;
        p.theta = entry.fit.theta;
        p.relative_risk = std::exp(eta);
        p.predicted_count = design.offsets()[i] * p.relative_risk;
        p.pseudo_effect = x.dot(entry.fit.beta - fit.median.beta);
        p.refit_failed = entry.interpolated;
    }
    return out;
}

Eigen::VectorXd smooth_q(const Eigen::VectorXd& q, const SpatialStructure& spatial, const SmoothingOptions& how) {
    return how.kind == SmoothingKind::Adjacency ? smooth_q_adjacency(q, spatial)
                                                : smooth_q_distance(q, spatial, how.bandwidth);
}

NbmqResult run_nbmq(const RegressionDesign& design, const NbmqOptions& options, const SpatialStructure* spatial,
                    std::optional<SmoothingOptions> smoothing) {
    NbmqResult out;
    const QuantileGrid grid = options.grid ? *options.grid : QuantileGrid::empirical(static_cast<std::size_t>(design.rows()));
    out.fit = fit_nbmq(design, grid, options.control);
    out.q = assign_q(design, out.fit, options.epsilon);
    CoefficientBank bank(design, out.fit);
    if (options.exact_inversion) {
        for (Eigen::Index i = 0; i < design.rows(); ++i) {
            const double median_fitted = design.offsets()[i] * std::exp(design.X().row(i).dot(out.fit.median.beta));
            const double target = coefficient_target(design.counts()[i], median_fitted, options.epsilon);
            if (const auto q = bank.solve_q(i, target, out.q[i])) out.q[i] = *q;
        }
    }
    out.nbmq = predict(design, bank, out.fit, out.q);
    if (smoothing) {
        if (!spatial) throw std::invalid_argument("spatial smoothing requested without a spatial structure");
        out.q_sp = smooth_q(out.q, *spatial, *smoothing);
        out.nbmq_sp = predict(design, bank, out.fit, *out.q_sp);
        for (std::size_t i = 0; i < out.nbmq_sp.size(); ++i) {
            out.nbmq_sp[i].q_i_sp = out.nbmq_sp[i].q_i;
            out.nbmq_sp[i].q_i = out.q[static_cast<Eigen::Index>(i)];
        }
    }
    out.refits = bank.refits();
    return out;
}

}  // namespace nbmq

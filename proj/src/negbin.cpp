#include "nbmq/negbin.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbmq {

namespace {

// Indices beyond this are treated as +infinity; the pmf there underflows anyway.
constexpr double kIndexCap = 1e15;

std::int64_t floor_index(double x) {
    if (x >= kIndexCap) return static_cast<std::int64_t>(kIndexCap);
    if (x <= -kIndexCap) return -static_cast<std::int64_t>(kIndexCap);
    return static_cast<std::int64_t>(std::floor(x));
}

double pmf_or_zero(std::int64_t y, const NegBin2& d) {
    if (y < 0 || y >= static_cast<std::int64_t>(kIndexCap)) return 0.0;
    return std::exp(nb_log_pmf(y, d));
}

double cdf_or_zero(std::int64_t y, const NegBin2& d) {
    if (y < 0) return 0.0;
    if (y >= static_cast<std::int64_t>(kIndexCap)) return 1.0;
    const double p = d.theta() / (d.mu() + d.theta());
    return boost::math::ibeta(d.theta(), static_cast<double>(y) + 1.0, p);
}

double sf_or_one(std::int64_t y, const NegBin2& d) {
    if (y < 0) return 1.0;
    if (y >= static_cast<std::int64_t>(kIndexCap)) return 0.0;
    const double p = d.theta() / (d.mu() + d.theta());
    return boost::math::ibetac(d.theta(), static_cast<double>(y) + 1.0, p);
}

// Beyond this many recurrence steps pmf/cdf values come from incomplete-beta evaluations instead.
constexpr std::int64_t kMaxWalk = 20000;
constexpr std::size_t kMaxPoints = 8;

const std::vector<double>& reciprocals() {
    static const std::vector<double> table = [] {
        std::vector<double> t(static_cast<std::size_t>(kMaxWalk) + 1, 0.0);
        for (std::size_t k = 1; k < t.size(); ++k) t[k] = 1.0 / static_cast<double>(k);
        return t;
    }();
    return table;
}

// P(Y = idx[i]) and P(Y <= idx[i]) for a few indices from one pass of the recurrence
// p(k) = p(k-1) (k - 1 + theta) / k * mu / (mu + theta). The running values are kept scaled
// so a vanishing p(0) does not underflow. Negative indices give zeros.
void pmf_cdf_at(const NegBin2& d, const std::int64_t* idx, std::size_t count, double* pmf, double* cdf) {
    std::size_t order[kMaxPoints];
    std::int64_t top = -1;
    for (std::size_t i = 0; i < count; ++i) {
        pmf[i] = 0.0;
        cdf[i] = 0.0;
        order[i] = i;
        top = std::max(top, idx[i]);
    }
    if (top > kMaxWalk) {
        for (std::size_t i = 0; i < count; ++i) {
            pmf[i] = pmf_or_zero(idx[i], d);
            cdf[i] = cdf_or_zero(idx[i], d);
        }
        return;
    }
    std::sort(order, order + count, [&](std::size_t a, std::size_t b) { return idx[a] < idx[b]; });

    constexpr double kRescale = 1e200;
    const double* inv = reciprocals().data();
    const double theta = d.theta();
    const double step = d.mu() / (d.mu() + theta);
    const double shifted = theta - 1.0;
    double log_scale = -theta * std::log1p(d.mu() / theta);
    double p = 1.0;
    double cum = 1.0;
    std::int64_t k = 0;
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t i = order[j];
        const std::int64_t target = idx[i];
        if (target < 0) continue;
        for (; k < target; ) {
            ++k;
            p *= (static_cast<double>(k) + shifted) * inv[k] * step;
            cum += p;
            if (cum > kRescale) {
                p /= kRescale;
                cum /= kRescale;
                log_scale += std::log(kRescale);
            }
        }
        const double f = std::exp(log_scale);
        pmf[i] = p * f;
        cdf[i] = std::min(1.0, cum * f);
    }
}

// P, E[Y I], E[Y^2 I] over {a, ..., b-1}; `b` absent means unbounded.
struct IntervalMoments {
    double p = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
};

// From the endpoint pmf values and the interval probability, via the one-step recursion
// (k+1) p(k+1) = (k + theta) p(k) mu / (mu + theta).
IntervalMoments interval_moments_from(double a, double pa, double b, double pb, double prob, const NegBin2& d) {
    const double mu = d.mu();
    const double theta = d.theta();
    const double ratio = (mu + theta) / theta;
    IntervalMoments out;
    out.p = prob;
    out.m1 = ratio * (a * pa - b * pb) + mu * prob;
    out.m2 = ratio * (a * a * pa - b * b * pb) + mu * (theta + 1.0) / theta * out.m1 + mu * prob;
    return out;
}

IntervalMoments interval_moments(std::int64_t a, std::optional<std::int64_t> b, const NegBin2& d) {
    if (b && *b <= a) return {};
    const std::int64_t idx[4] = {a, a - 1, b ? *b : -1, b ? *b - 1 : -1};
    double pmf[4];
    double cdf[4];
    pmf_cdf_at(d, idx, b ? 4 : 2, pmf, cdf);
    if (!b) {
        // The upper tail is taken from the complementary function to keep relative accuracy.
        return interval_moments_from(static_cast<double>(a), pmf[0], 0.0, 0.0, sf_or_one(a - 1, d), d);
    }
    return interval_moments_from(static_cast<double>(a), pmf[0], static_cast<double>(*b), pmf[2], cdf[3] - cdf[1], d);
}

// Lower/upper clipping points of the Pearson residual on the integer support.
struct ClipPoints {
    std::int64_t j1;  // Y <= j1  <=>  r < -c
    std::int64_t j2;  // Y >= j2 + 1  <=>  r > c
};

ClipPoints clip_points(const NegBin2& d, const HuberConfig& h) {
    const double s = std::sqrt(d.variance());
    const double lo = d.mu() - h.c() * s;
    std::int64_t j1 = floor_index(lo);
    // Integer lower point: Y = lo has r = -c exactly and belongs to the linear part.
    if (std::abs(lo) < kIndexCap && std::abs(lo - std::round(lo)) <= 1e-12 * std::max(1.0, std::abs(lo)))
        j1 = static_cast<std::int64_t>(std::round(lo)) - 1;
    return {j1, floor_index(d.mu() + h.c() * s)};
}

void check_q(double q) {
    if (!(q > 0.0 && q < 1.0))
        throw std::domain_error("quantile order must lie in (0, 1), got " + std::to_string(q));
}

}  // namespace

NegBin2::NegBin2(double mu, double theta) : mu_(mu), theta_(theta) {
    if (!(mu > 0.0) || !std::isfinite(mu))
        throw std::domain_error("NegBin2 mean must be positive and finite, got " + std::to_string(mu));
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw std::domain_error("NegBin2 shape must be positive and finite, got " + std::to_string(theta));
}

HuberConfig::HuberConfig(double c) : c_(c) {
    if (!(c > 0.0)) throw std::domain_error("Huber tuning constant must be positive");
}

IntegerInterval::IntegerInterval(std::int64_t lower, std::optional<std::int64_t> upper)
    : a(lower), b(upper) {
    if (lower < 0) throw std::domain_error("interval lower bound must be nonnegative");
    if (upper && *upper < lower) throw std::domain_error("interval upper bound below lower bound");
}

double nb_log_pmf(std::int64_t y, const NegBin2& d) {
    if (y < 0) throw std::domain_error("negative binomial support is the nonnegative integers");
    const double mu = d.mu();
    const double theta = d.theta();
    const double fy = static_cast<double>(y);
    const double head = -theta * std::log1p(mu / theta);
    if (y < 64 || (theta > 1e5 && y < 100000)) {
        // log[Gamma(y+theta) / Gamma(theta)] + y log(mu / (mu+theta)) term by term; exact for huge theta.
        double acc = fy * std::log(mu);
        for (std::int64_t k = 0; k < y; ++k)
            acc += std::log1p((static_cast<double>(k) - mu) / (mu + theta)) - std::log1p(static_cast<double>(k));
        return head + acc;
    }
    return head + std::lgamma(fy + theta) - std::lgamma(theta) - std::lgamma(fy + 1.0) +
           fy * (std::log(mu) - std::log(mu + theta));
}

double nb_pmf(std::int64_t y, const NegBin2& d) { return std::exp(nb_log_pmf(y, d)); }

double nb_cdf(std::int64_t y, const NegBin2& d) {
    if (y < 0) throw std::domain_error("negative binomial support is the nonnegative integers");
    return cdf_or_zero(y, d);
}

double nb_sf(std::int64_t y, const NegBin2& d) {
    if (y < 0) throw std::domain_error("negative binomial support is the nonnegative integers");
    return sf_or_one(y, d);
}

double interval_probability(const IntegerInterval& A, const NegBin2& d) {
    return interval_moments(A.a, A.b, d).p;
}

double truncated_first_moment(const IntegerInterval& A, const NegBin2& d) {
    return interval_moments(A.a, A.b, d).m1;
}

double truncated_second_moment(const IntegerInterval& A, const NegBin2& d) {
    return interval_moments(A.a, A.b, d).m2;
}

double huber_psi(double r, const HuberConfig& h) noexcept {
    const double c = h.c();
    if (r >= c) return c;
    if (r <= -c) return -c;
    return r;
}

double quantile_weight(double r, double q) {
    check_q(q);
    return r > 0.0 ? 2.0 * q : 2.0 * (1.0 - q);
}

double psi_q(double r, double q, const HuberConfig& h) { return quantile_weight(r, q) * huber_psi(r, h); }

HuberMoments huber_moments(const NegBin2& d, const HuberConfig& h) {
    const double mu = d.mu();
    const double theta = d.theta();
    const double c = h.c();
    const double v = d.variance();
    const double s = std::sqrt(v);
    const auto [j1, j2] = clip_points(d, h);
    const double fj1 = static_cast<double>(j1);
    const double fj2 = static_cast<double>(j2);

    const std::int64_t idx[2] = {j1, j2};
    double pmf[2];
    double cdf[2];
    pmf_cdf_at(d, idx, 2, pmf, cdf);
    const double p1 = pmf[0];
    const double p2 = pmf[1];
    const double lower = cdf[0];  // P(Y <= j1)
    const double upper = j2 > kMaxWalk ? sf_or_one(j2, d) : 1.0 - cdf[1];  // P(Y >= j2 + 1)
    // P(j1 <= Y <= j2 - 1)
    const double shifted_mid = (1.0 - upper - p2) - (lower - p1);

    HuberMoments m;
    m.psi = -c * lower + c * upper + mu / s * p1 * (1.0 + fj1 / theta) - mu / s * p2 * (1.0 + fj2 / theta);

    const double theta2 = theta * theta;
    const double linear = p1 * fj1 / theta * (theta + 1.0 + fj1) - p2 * fj2 / theta * (theta + 1.0 + fj2) +
                          shifted_mid;
    const double quadratic = p1 * (fj1 - fj1 * theta - theta2) / theta2 -
                             p2 * (fj2 - fj2 * theta - theta2) / theta2 + shifted_mid / theta;
    const double v32 = v * s;
    m.psi_score = mu * c / v * (p1 * (fj1 + theta) / theta + p2 * (fj2 + theta) / theta) +
                  mu / v32 * linear + mu * mu / v32 * quadratic;
    m.psi_sq = c * c * (lower + upper) + mu / v * linear + mu * mu / v * quadratic;
    return m;
}

HuberMoments quantile_huber_moments(const NegBin2& d, double q, const HuberConfig& h) {
    check_q(q);
    const double mu = d.mu();
    const double c = h.c();
    const double v = d.variance();
    const double s = std::sqrt(v);
    const auto [j1, j2] = clip_points(d, h);
    const std::int64_t k0 = floor_index(mu);  // r <= 0  <=>  Y <= k0

    // Intervals {0..j1}, {j1+1..k0}, {k0+1..j2}, {j2+1..}.
    const std::int64_t idx[4] = {j1, j1 + 1, k0 + 1, j2 + 1};
    double pmf[4];
    double cdf[4];
    pmf_cdf_at(d, idx, 4, pmf, cdf);
    const double cdf_k0 = cdf[2] - pmf[2];
    const double cdf_j2 = cdf[3] - pmf[3];
    const double tail = j2 + 1 > kMaxWalk ? sf_or_one(j2, d) : 1.0 - cdf_j2;
    const double fj1 = static_cast<double>(j1 + 1);
    const double fk0 = static_cast<double>(k0 + 1);
    const double fj2 = static_cast<double>(j2 + 1);
    const auto clipped_low = interval_moments_from(0.0, 0.0, fj1, pmf[1], cdf[0], d);
    const auto linear_low = interval_moments_from(fj1, pmf[1], fk0, pmf[2], cdf_k0 - cdf[0], d);
    const auto linear_high = interval_moments_from(fk0, pmf[2], fj2, pmf[3], cdf_j2 - cdf_k0, d);
    const auto clipped_high = interval_moments_from(fj2, pmf[3], 0.0, 0.0, tail, d);

    const auto mean_r = [&](const IntervalMoments& m) { return (m.m1 - mu * m.p) / s; };
    const auto mean_r2 = [&](const IntervalMoments& m) { return (m.m2 - 2.0 * mu * m.m1 + mu * mu * m.p) / v; };

    const double wl = 2.0 * (1.0 - q);
    const double wu = 2.0 * q;
    HuberMoments m;
    m.psi = wl * (-c * clipped_low.p + mean_r(linear_low)) + wu * (mean_r(linear_high) + c * clipped_high.p);
    m.psi_score = (wl * (-c * mean_r(clipped_low) + mean_r2(linear_low)) +
                   wu * (mean_r2(linear_high) + c * mean_r(clipped_high))) /
                  s;
    m.psi_sq = wl * wl * (c * c * clipped_low.p + mean_r2(linear_low)) +
               wu * wu * (mean_r2(linear_high) + c * c * clipped_high.p);
    return m;
}

double e_psi(const NegBin2& d, const HuberConfig& h) { return huber_moments(d, h).psi; }
double e_psi_score(const NegBin2& d, const HuberConfig& h) { return huber_moments(d, h).psi_score; }
double e_psi_sq(const NegBin2& d, const HuberConfig& h) { return huber_moments(d, h).psi_sq; }

double e_psi_q_sq(const NegBin2& d, double q, const HuberConfig& h) {
    return quantile_huber_moments(d, q, h).psi_sq;
}

double e_psi_q(const NegBin2& d, double q, const HuberConfig& h, CorrectionMode mode, double observed_residual) {
    if (mode == CorrectionMode::ObservedWeight) return quantile_weight(observed_residual, q) * e_psi(d, h);
    return quantile_huber_moments(d, q, h).psi;
}

double e_psi_q_score(const NegBin2& d, double q, const HuberConfig& h, CorrectionMode mode,
                     double observed_residual) {
    if (mode == CorrectionMode::ObservedWeight) return quantile_weight(observed_residual, q) * e_psi_score(d, h);
    return quantile_huber_moments(d, q, h).psi_score;
}

std::int64_t nb_sample(const NegBin2& d, Rng& rng) {
    std::gamma_distribution<double> mixing(d.theta(), d.mu() / d.theta());
    const double lambda = mixing(rng);
    if (!(lambda > 0.0)) return 0;
    std::poisson_distribution<std::int64_t> counts(lambda);
    return counts(rng);
}

}  // namespace nbmq

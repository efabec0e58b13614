#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace nbmq {

/// Negative Binomial in mean/shape form (NB2): E[Y] = mu, Var[Y] = mu + mu^2 / theta.
class NegBin2 {
public:
    NegBin2(double mu, double theta);

    double mu() const noexcept { return mu_; }
    double theta() const noexcept { return theta_; }
    double variance() const noexcept { return mu_ + mu_ * mu_ / theta_; }

private:
    double mu_;
    double theta_;
};

/// Huber influence function tuning. The default is the usual 95%-efficiency constant.
class HuberConfig {
public:
    HuberConfig() = default;
    explicit HuberConfig(double c);

    double c() const noexcept { return c_; }

private:
    double c_ = 1.345;
};

/// Integer set {a, ..., b-1}; an absent upper bound means {a, a+1, ...}.
struct IntegerInterval {
    std::int64_t a = 0;
    std::optional<std::int64_t> b;

    IntegerInterval() = default;
    IntegerInterval(std::int64_t lower, std::optional<std::int64_t> upper);

    static IntegerInterval all() { return {0, std::nullopt}; }
    bool unbounded() const noexcept { return !b.has_value(); }
};

/// How the Fisher-consistency centring of the asymmetric influence function is computed.
enum class CorrectionMode {
    /// Expectation of the asymmetric function itself, split at Y = mu.
    ExactSplit,
    /// Symmetric expectation scaled by the quantile weight of the observed residual.
    ObservedWeight,
};

double nb_log_pmf(std::int64_t y, const NegBin2& d);
double nb_pmf(std::int64_t y, const NegBin2& d);
double nb_cdf(std::int64_t y, const NegBin2& d);
/// P(Y > y).
double nb_sf(std::int64_t y, const NegBin2& d);

double interval_probability(const IntegerInterval& A, const NegBin2& d);
/// E[Y I(Y in A)] by the one-step recursion identity of the NB2 pmf.
double truncated_first_moment(const IntegerInterval& A, const NegBin2& d);
/// E[Y^2 I(Y in A)].
double truncated_second_moment(const IntegerInterval& A, const NegBin2& d);

double huber_psi(double r, const HuberConfig& h) noexcept;
/// 2[q I(r > 0) + (1 - q) I(r <= 0)].
double quantile_weight(double r, double q);
double psi_q(double r, double q, const HuberConfig& h);

/// Expectations of the Huber function of the Pearson residual (Y - mu) / sqrt(V(mu)).
struct HuberMoments {
    double psi = 0.0;        ///< E[psi(r)]
    double psi_score = 0.0;  ///< E[psi(r) (Y - mu) / V(mu)]
    double psi_sq = 0.0;     ///< E[psi(r)^2]
};

/// Closed forms for all three expectations from one set of pmf/cdf evaluations.
HuberMoments huber_moments(const NegBin2& d, const HuberConfig& h);
/// Same quantities for psi_q, evaluated by splitting the support at Y = mu.
HuberMoments quantile_huber_moments(const NegBin2& d, double q, const HuberConfig& h);

double e_psi(const NegBin2& d, const HuberConfig& h);
double e_psi_score(const NegBin2& d, const HuberConfig& h);
double e_psi_sq(const NegBin2& d, const HuberConfig& h);
double e_psi_q_sq(const NegBin2& d, double q, const HuberConfig& h);

/// E[psi_q(r)]. ObservedWeight returns quantile_weight(observed_residual, q) * e_psi(d, h).
double e_psi_q(const NegBin2& d, double q, const HuberConfig& h,
               CorrectionMode mode = CorrectionMode::ExactSplit, double observed_residual = 0.0);
/// E[psi_q(r) (Y - mu) / V(mu)], with the same mode semantics as e_psi_q.
double e_psi_q_score(const NegBin2& d, double q, const HuberConfig& h,
                     CorrectionMode mode = CorrectionMode::ExactSplit,
                     double observed_residual = 0.0);

using Rng = std::mt19937_64;

/// Gamma(theta, rate theta / mu) mixture of Poissons.
std::int64_t nb_sample(const NegBin2& d, Rng& rng);

}  // namespace nbmq

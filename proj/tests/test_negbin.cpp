#include "nbmq/negbin.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <stdexcept>

using namespace nbmq;
using Catch::Approx;

namespace {

double brute_interval(long long a, long long b, double mu, double theta, int power) {
    double s = 0.0;
    for (long long y = a; y < b; ++y) s += std::pow(static_cast<double>(y), power) * oracle::pmf(y, mu, theta);
    return s;
}

}  // namespace

TEST_CASE("pmf closed cases", "[negbin]") {
    CHECK(nb_pmf(0, NegBin2(1, 1)) == Approx(0.5).margin(1e-15));
    CHECK(nb_pmf(3, NegBin2(1, 1)) == Approx(0.0625).margin(1e-15));
    double total = 0.0;
    for (int y = 0; y <= 200; ++y) total += nb_pmf(y, NegBin2(5, 2));
    CHECK(total == Approx(1.0).margin(1e-10));
}

TEST_CASE("pmf and cdf match direct summation", "[negbin]") {
    CHECK(nb_cdf(0, NegBin2(1, 1)) == Approx(0.5).margin(1e-15));
    double s = 0.0;
    for (int y = 0; y <= 10; ++y) s += oracle::pmf(y, 3, 1.5);
    CHECK(nb_cdf(10, NegBin2(3, 1.5)) == Approx(s).margin(1e-12));
    CHECK(nb_cdf(100000, NegBin2(3, 1.5)) == Approx(1.0).margin(1e-15));
    double prev = 0.0;
    for (int y = 0; y < 60; ++y) {
        const double c = nb_cdf(y, NegBin2(7.5, 0.8));
        CHECK(c >= prev);
        CHECK(nb_sf(y, NegBin2(7.5, 0.8)) == Approx(1.0 - c).margin(1e-14));
        prev = c;
    }
    for (double mu : {0.01, 0.7, 12.0, 300.0})
        for (double theta : {0.3, 2.0, 50.0, 1e6})
            for (int y : {0, 1, 5, 40, 400}) {
                CHECK(nb_pmf(y, NegBin2(mu, theta)) == Approx(oracle::pmf(y, mu, theta)).epsilon(1e-10).margin(1e-300));
                CHECK(nb_log_pmf(y, NegBin2(mu, theta)) ==
                      Approx(static_cast<double>(oracle::log_pmf(y, mu, theta))).epsilon(1e-11));
            }
}

TEST_CASE("invalid distributions and arguments are rejected", "[negbin]") {
    CHECK_THROWS_AS(NegBin2(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(NegBin2(1.0, -1.0), std::domain_error);
    CHECK_THROWS_AS(NegBin2(std::nan(""), 1.0), std::domain_error);
    CHECK_THROWS_AS(nb_pmf(-1, NegBin2(1, 1)), std::domain_error);
    CHECK_THROWS_AS(HuberConfig(0.0), std::domain_error);
    CHECK_THROWS_AS(psi_q(0.1, 0.0, HuberConfig()), std::domain_error);
    CHECK_THROWS_AS(psi_q(0.1, 1.0, HuberConfig()), std::domain_error);
    CHECK_THROWS_AS(e_psi_q_sq(NegBin2(1, 1), 1.5, HuberConfig()), std::domain_error);
    CHECK_THROWS_AS(IntegerInterval(5, 3), std::domain_error);
    CHECK_THROWS_AS(IntegerInterval(-1, 3), std::domain_error);
}

TEST_CASE("truncated moments", "[negbin]") {
    CHECK(truncated_first_moment(IntegerInterval::all(), NegBin2(4, 2)) == Approx(4.0).margin(1e-12));
    CHECK(truncated_first_moment({0, 1}, NegBin2(4, 2)) == Approx(0.0).margin(1e-15));
    CHECK(truncated_first_moment({2, 8}, NegBin2(3, 1.5)) == Approx(brute_interval(2, 8, 3, 1.5, 1)).margin(1e-12));
    CHECK(truncated_second_moment(IntegerInterval::all(), NegBin2(4, 2)) == Approx(28.0).margin(1e-11));
    CHECK(truncated_second_moment({0, 1}, NegBin2(4, 2)) == Approx(0.0).margin(1e-15));
    CHECK(truncated_second_moment({1, 6}, NegBin2(2, 3)) == Approx(brute_interval(1, 6, 2, 3, 2)).margin(1e-12));
    CHECK(interval_probability({3, 9}, NegBin2(5, 2)) == Approx(brute_interval(3, 9, 5, 2, 0)).margin(1e-14));

    SECTION("additive over adjacent intervals") {
        const NegBin2 d(6.3, 1.7);
        for (long long a : {0LL, 2LL, 7LL})
            for (long long m : {a, a + 1, a + 5})
                for (long long b : {m, m + 3, m + 20}) {
                    CHECK(truncated_first_moment({a, b}, d) ==
                          Approx(truncated_first_moment({a, m}, d) + truncated_first_moment({m, b}, d)).margin(1e-12));
                    CHECK(truncated_second_moment({a, b}, d) ==
                          Approx(truncated_second_moment({a, m}, d) + truncated_second_moment({m, b}, d)).margin(1e-10));
                }
        CHECK(truncated_first_moment({4, std::nullopt}, d) + truncated_first_moment({0, 4}, d) ==
              Approx(d.mu()).margin(1e-12));
    }
}

TEST_CASE("huber and quantile influence functions", "[negbin]") {
    const HuberConfig h(1.345);
    CHECK(huber_psi(0.5, h) == 0.5);
    CHECK(huber_psi(2.0, h) == 1.345);
    CHECK(huber_psi(-3.0, HuberConfig(1.0)) == -1.0);
    CHECK(psi_q(0.5, 0.5, h) == 0.5);
    CHECK(psi_q(1.0, 0.75, HuberConfig(2)) == Approx(1.5));
    CHECK(psi_q(-1.0, 0.75, HuberConfig(2)) == Approx(-0.5));
    for (double r = -5; r <= 5; r += 0.37) {
        CHECK(huber_psi(-r, h) == -huber_psi(r, h));
        CHECK(std::abs(huber_psi(r, h)) <= h.c());
        CHECK(std::abs(huber_psi(r + 0.1, h) - huber_psi(r, h)) <= 0.1 + 1e-15);
        CHECK(psi_q(r, 0.5, h) == huber_psi(r, h));
    }
}

TEST_CASE("closed-form expectations: listed cases", "[negbin]") {
    auto brute_psi = [](double mu, double theta, double c) {
        return oracle::expect(mu, theta, [&](long long y) { return oracle::huber(oracle::pearson(y, mu, theta), c); });
    };
    auto brute_score = [](double mu, double theta, double c) {
        const double v = mu + mu * mu / theta;
        return oracle::expect(mu, theta, [&](long long y) {
            return oracle::huber(oracle::pearson(y, mu, theta), c) * (static_cast<double>(y) - mu) / v;
        });
    };
    auto brute_sq = [](double mu, double theta, double c) {
        return oracle::expect(mu, theta, [&](long long y) {
            const double p = oracle::huber(oracle::pearson(y, mu, theta), c);
            return p * p;
        });
    };
    CHECK(e_psi(NegBin2(5, 2), HuberConfig(1e6)) == Approx(0.0).margin(1e-10));
    CHECK(e_psi(NegBin2(3, 1.5), HuberConfig(1.345)) == Approx(brute_psi(3, 1.5, 1.345)).margin(1e-10));
    CHECK(e_psi(NegBin2(0.2, 5), HuberConfig(1.345)) == Approx(brute_psi(0.2, 5, 1.345)).margin(1e-10));
    CHECK(e_psi_score(NegBin2(5, 2), HuberConfig(1e6)) == Approx(1.0 / std::sqrt(17.5)).margin(1e-8));
    CHECK(e_psi_score(NegBin2(3, 1.5), HuberConfig(1.345)) == Approx(brute_score(3, 1.5, 1.345)).margin(1e-10));
    CHECK(e_psi_score(NegBin2(1, 10), HuberConfig(2)) == Approx(brute_score(1, 10, 2)).margin(1e-10));
    CHECK(e_psi_sq(NegBin2(5, 2), HuberConfig(1e6)) == Approx(1.0).margin(1e-8));
    CHECK(e_psi_sq(NegBin2(3, 1.5), HuberConfig(1.345)) == Approx(brute_sq(3, 1.5, 1.345)).margin(1e-10));
    const double tiny = e_psi_sq(NegBin2(3, 1.5), HuberConfig(1e-6));
    CHECK(tiny <= 1e-12 + 1e-24);
    CHECK(tiny > 0.5e-12);

    const HuberConfig h(1.345);
    CHECK(e_psi_q_sq(NegBin2(3, 1.5), 0.5, h) == Approx(e_psi_sq(NegBin2(3, 1.5), h)).margin(1e-14));
    for (double q : {0.25, 0.75}) {
        const double brute = oracle::expect(3, 1.5, [&](long long y) {
            const double r = oracle::pearson(y, 3, 1.5);
            const double v = oracle::weight_q(r, q) * oracle::huber(r, 1.345);
            return v * v;
        });
        CHECK(e_psi_q_sq(NegBin2(3, 1.5), q, h) == Approx(brute).margin(1e-10));
    }
    const NegBin2 d(4.4, 0.9);
    CHECK(e_psi_q(d, 0.5, h) == Approx(e_psi(d, h)).margin(1e-14));
    CHECK(e_psi_q_score(d, 0.5, h) == Approx(e_psi_score(d, h)).margin(1e-14));
    CHECK(e_psi_q(d, 0.8, h, CorrectionMode::ObservedWeight, 0.3) == Approx(1.6 * e_psi(d, h)).margin(1e-14));
    CHECK(e_psi_q(d, 0.8, h, CorrectionMode::ObservedWeight, -0.3) == Approx(0.4 * e_psi(d, h)).margin(1e-14));
    CHECK(e_psi_q_score(d, 0.8, h, CorrectionMode::ObservedWeight, -0.3) ==
          Approx(0.4 * e_psi_score(d, h)).margin(1e-14));
}

TEST_CASE("asymmetric expectations split at the mean", "[negbin]") {
    struct Case {
        double q, mu, theta, c;
    };
    for (const Case& k : {Case{0.7, 4, 2, 1.345}, Case{0.3, 0.5, 3, 1.0}}) {
        const double v = k.mu + k.mu * k.mu / k.theta;
        auto val = [&](long long y) {
            const double r = oracle::pearson(y, k.mu, k.theta);
            return oracle::weight_q(r, k.q) * oracle::huber(r, k.c);
        };
        const double b_psi = oracle::expect(k.mu, k.theta, val);
        const double b_score =
            oracle::expect(k.mu, k.theta, [&](long long y) { return val(y) * (static_cast<double>(y) - k.mu) / v; });
        CHECK(e_psi_q(NegBin2(k.mu, k.theta), k.q, HuberConfig(k.c)) == Approx(b_psi).margin(1e-10));
        CHECK(e_psi_q_score(NegBin2(k.mu, k.theta), k.q, HuberConfig(k.c)) == Approx(b_score).margin(1e-10));
    }
}

TEST_CASE("closed-form expectations: integer and negative boundary positions", "[negbin]") {
    // mu - c sqrt(V) an exact integer: mu = 4, theta = 4 gives V = 8; c = sqrt(2) gives mu - c sqrt V = 0.
    const NegBin2 d(4, 4);
    const double c = std::sqrt(2.0);
    const double brute = oracle::expect(4, 4, [&](long long y) { return oracle::huber(oracle::pearson(y, 4, 4), c); });
    CHECK(e_psi(d, HuberConfig(c)) == Approx(brute).margin(1e-10));
    const double brute_sq = oracle::expect(4, 4, [&](long long y) {
        const double p = oracle::huber(oracle::pearson(y, 4, 4), c);
        return p * p;
    });
    CHECK(e_psi_sq(d, HuberConfig(c)) == Approx(brute_sq).margin(1e-10));
}

TEST_CASE("closed-form expectations: 200 random configurations", "[negbin][property]") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> umu(0.1, 50), uth(0.5, 20), uc(0.5, 3), uq(0.02, 0.98);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double mu = umu(rng), theta = uth(rng), c = uc(rng), q = uq(rng);
        const NegBin2 d(mu, theta);
        const HuberConfig h(c);
        const double v = mu + mu * mu / theta;
        auto r_of = [&](long long y) { return oracle::pearson(y, mu, theta); };
        const double b_psi = oracle::expect(mu, theta, [&](long long y) { return oracle::huber(r_of(y), c); });
        const double b_score = oracle::expect(mu, theta, [&](long long y) {
            return oracle::huber(r_of(y), c) * (static_cast<double>(y) - mu) / v;
        });
        const double b_sq = oracle::expect(mu, theta, [&](long long y) { return std::pow(oracle::huber(r_of(y), c), 2); });
        const double b_q = oracle::expect(mu, theta, [&](long long y) {
            return oracle::weight_q(r_of(y), q) * oracle::huber(r_of(y), c);
        });
        const double b_q_score = oracle::expect(mu, theta, [&](long long y) {
            return oracle::weight_q(r_of(y), q) * oracle::huber(r_of(y), c) * (static_cast<double>(y) - mu) / v;
        });
        const double b_q_sq = oracle::expect(mu, theta, [&](long long y) {
            return std::pow(oracle::weight_q(r_of(y), q) * oracle::huber(r_of(y), c), 2);
        });
        const auto a = static_cast<long long>(mu / 2), b = static_cast<long long>(mu * 1.5) + 3;
        const double b_m1 = brute_interval(a, b, mu, theta, 1);
        const double b_m2 = brute_interval(a, b, mu, theta, 2);
        const double errs[] = {
            std::abs(e_psi(d, h) - b_psi),
            std::abs(e_psi_score(d, h) - b_score),
            std::abs(e_psi_sq(d, h) - b_sq),
            std::abs(e_psi_q(d, q, h) - b_q),
            std::abs(e_psi_q_score(d, q, h) - b_q_score),
            std::abs(e_psi_q_sq(d, q, h) - b_q_sq),
            std::abs(huber_moments(d, h).psi_sq - b_sq),
            std::abs(quantile_huber_moments(d, q, h).psi - b_q),
            std::abs(truncated_first_moment({a, b}, d) - b_m1),
            std::abs(truncated_second_moment({a, b}, d) - b_m2) / std::max(1.0, b_m2),
        };
        for (double e : errs) worst = std::max(worst, e);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("sampling moments", "[negbin]") {
    Rng rng(99);
    const NegBin2 d(5, 2);
    const int n = 1000000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double y = static_cast<double>(nb_sample(d, rng));
        s += y;
        ss += y * y;
    }
    const double mean = s / n, var = ss / n - mean * mean;
    CHECK(std::abs(mean - 5.0) < 0.02);
    CHECK(std::abs(var - 17.5) < 0.3);

    const NegBin2 poissonish(5, 1e8);
    s = ss = 0;
    for (int i = 0; i < 200000; ++i) {
        const double y = static_cast<double>(nb_sample(poissonish, rng));
        s += y;
        ss += y * y;
    }
    const double m2 = s / 200000, v2 = ss / 200000 - m2 * m2;
    CHECK(std::abs(m2 - 5.0) < 0.03);
    CHECK(std::abs(v2 - 5.0) < 0.1);
}

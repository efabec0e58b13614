#include "nbmq/bootstrap.hpp"
#include "nbmq/dataset.hpp"

#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

using namespace nbmq;
using Catch::Approx;

namespace {

RegressionDesign small_design(std::uint64_t seed, Eigen::Index n = 25) {
    Rng rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 1.0), ut(3.0, 12.0);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd t(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = ux(rng);
        t[i] = ut(rng);
        y[i] = static_cast<double>(nb_sample(NegBin2(t[i] * std::exp(0.2 + 0.6 * X(i, 1)), 4.0), rng));
    }
    return RegressionDesign(X, t, y);
}

NbmqOptions fast_options() {
    NbmqOptions o;
    o.grid = QuantileGrid::from_values({0.1, 0.25, 0.4, 0.6, 0.75, 0.9});
    return o;
}

}  // namespace

TEST_CASE("configuration validation", "[bootstrap]") {
    BootstrapConfig c;
    c.replicates = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.replicates = 1;
    c.threads = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.threads = 1;
    c.smoothing.bandwidth = -1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("pool is centred", "[bootstrap]") {
    const auto d = small_design(1);
    const auto fitted = run_nbmq(d, fast_options());
    const auto pool = make_pool(d, fitted, PredictorMode::NBMQ);
    CHECK(std::abs(pool.effects.mean()) < 1e-15);
    CHECK((pool.shapes.array() > 0.0).all());
    CHECK(pool.beta_median == fitted.fit.median.beta);
    CHECK_THROWS_AS(make_pool(d, fitted, PredictorMode::NBMQsp), std::invalid_argument);
}

TEST_CASE("single deterministic replicate equals a hand-rolled pass", "[bootstrap]") {
    const auto d = small_design(2);
    const auto opts = fast_options();
    const auto fitted = run_nbmq(d, opts);
    const auto pool = make_pool(d, fitted, PredictorMode::NBMQ);
    BootstrapConfig cfg;
    cfg.replicates = 1;
    cfg.resampling = Resampling::Identity;
    cfg.sampling = CountSampling::RoundedMean;
    const auto res = run_bootstrap(d, pool, opts, nullptr, cfg);
    REQUIRE(res.successful == 1);

    Eigen::VectorXd y(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        y[i] = std::round(d.offsets()[i] * std::exp(d.X().row(i).dot(pool.beta_median) + pool.effects[i]));
    const auto refit = run_nbmq(d.with_counts(y), opts);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double diff = refit.nbmq[static_cast<std::size_t>(i)].predicted_count - y[i];
        CHECK(res.mse[i] == diff * diff);
        CHECK(res.summaries[static_cast<std::size_t>(i)].mean_target == y[i]);
    }
}

TEST_CASE("determinism and thread independence", "[bootstrap]") {
    const auto d = small_design(3);
    const auto opts = fast_options();
    const auto fitted = run_nbmq(d, opts);
    BootstrapConfig cfg;
    cfg.replicates = 12;
    cfg.seed = 77;
    const auto a = run_bootstrap(d, fitted, opts, nullptr, cfg);
    const auto b = run_bootstrap(d, fitted, opts, nullptr, cfg);
    cfg.threads = 3;
    const auto c = run_bootstrap(d, fitted, opts, nullptr, cfg);
    CHECK(a.mse == b.mse);
    CHECK(a.mse == c.mse);
    CHECK((a.mse.array() >= 0.0).all());
    cfg.seed = 78;
    cfg.threads = 1;
    const auto other = run_bootstrap(d, fitted, opts, nullptr, cfg);
    CHECK(other.mse != a.mse);
}

TEST_CASE("area order does not change the result", "[bootstrap]") {
    const auto d = small_design(4, 20);
    const auto opts = fast_options();
    const auto fitted = run_nbmq(d, opts);
    const auto pool = make_pool(d, fitted, PredictorMode::NBMQ);
    BootstrapConfig cfg;
    cfg.replicates = 6;
    cfg.seed = 5;
    for (Eigen::Index i = 0; i < d.rows(); ++i) cfg.area_keys.push_back("area" + std::to_string(100 + i));
    const auto base = run_bootstrap(d, pool, opts, nullptr, cfg);

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(d.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
    Eigen::MatrixXd X(d.rows(), d.cols());
    Eigen::VectorXd t(d.rows()), y(d.rows()), e(d.rows()), s(d.rows());
    BootstrapConfig pcfg = cfg;
    for (std::size_t k = 0; k < perm.size(); ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        X.row(ki) = d.X().row(perm[k]);
        t[ki] = d.offsets()[perm[k]];
        y[ki] = d.counts()[perm[k]];
        e[ki] = pool.effects[perm[k]];
        s[ki] = pool.shapes[perm[k]];
        pcfg.area_keys[k] = cfg.area_keys[static_cast<std::size_t>(perm[k])];
    }
    const RegressionDesign pd(X, t, y);
    const auto permuted = run_bootstrap(pd, BootstrapPool{e, s, pool.beta_median}, opts, nullptr, pcfg);
    for (std::size_t k = 0; k < perm.size(); ++k)
        CHECK(permuted.mse[static_cast<Eigen::Index>(k)] == Approx(base.mse[perm[k]]).epsilon(1e-6).margin(1e-9));
}

TEST_CASE("no heterogeneity: bootstrap mse matches a direct simulation", "[bootstrap]") {
    const auto d = small_design(6, 30);
    const auto opts = fast_options();
    const auto fitted = run_nbmq(d, opts);
    const double theta = 6.0;
    const BootstrapPool pool{Eigen::VectorXd::Zero(d.rows()), Eigen::VectorXd::Constant(d.rows(), theta),
                             fitted.fit.median.beta};
    BootstrapConfig cfg;
    cfg.replicates = 300;
    cfg.seed = 2024;
    const auto res = run_bootstrap(d, pool, opts, nullptr, cfg);
    REQUIRE(res.successful == 300);

    // Same data-generating process driven by an unrelated generator.
    std::mt19937_64 rng(424242);
    Eigen::VectorXd mc = Eigen::VectorXd::Zero(d.rows());
    const int reps = 300;
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd y(d.rows());
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            const double mu = d.offsets()[i] * std::exp(d.X().row(i).dot(pool.beta_median));
            std::gamma_distribution<double> gamma(theta, mu / theta);
            std::poisson_distribution<long long> pois(gamma(rng));
            y[i] = static_cast<double>(pois(rng));
        }
        const auto fit = run_nbmq(d.with_counts(y), opts);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            mc[i] += std::pow(fit.nbmq[static_cast<std::size_t>(i)].predicted_count - y[i], 2) / reps;
    }
    CHECK(res.mse.mean() == Approx(mc.mean()).epsilon(0.10));
}

TEST_CASE("failed replicates", "[bootstrap]") {
    const auto d = small_design(7);
    const BootstrapPool pool{Eigen::VectorXd::Constant(d.rows(), -30.0), Eigen::VectorXd::Constant(d.rows(), 2.0),
                             Eigen::Vector2d(0.0, 0.0)};
    BootstrapConfig cfg;
    cfg.replicates = 3;
    cfg.sampling = CountSampling::RoundedMean;
    CHECK_THROWS_AS(run_bootstrap(d, pool, fast_options(), nullptr, cfg), FitError);
    cfg.mode = PredictorMode::NBMQsp;
    CHECK_THROWS_AS(run_bootstrap(d, pool, fast_options(), nullptr, cfg), std::invalid_argument);
}

TEST_CASE("smoothed predictor on the lip-cancer data", "[bootstrap]") {
    const auto lip = scottish_lip_cancer();
    const auto adj = scottish_lip_cancer_adjacency();
    const auto fitted = run_nbmq(lip.design, NbmqOptions{}, &adj, SmoothingOptions{});
    BootstrapConfig cfg;
    cfg.replicates = 4;
    cfg.mode = PredictorMode::NBMQsp;
    cfg.area_keys = lip.ids;
    const auto res = run_bootstrap(lip.design, fitted, NbmqOptions{}, &adj, cfg);
    CHECK(res.successful + res.failed == 4);
    CHECK(res.mse.size() == 56);
    CHECK(res.mse.allFinite());
}

TEST_CASE("streams and parallel loop", "[bootstrap]") {
    auto a = stream_for(1, 2, "x"), b = stream_for(1, 2, "x"), c = stream_for(1, 2, "y"), d = stream_for(1, 3, "x");
    const auto va = a(), vb = b(), vc = c(), vd = d();
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(va != vd);

    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 5) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

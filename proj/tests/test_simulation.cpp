#include "nbmq/dataset.hpp"
#include "nbmq/simulation.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <mutex>
#include <set>

using namespace nbmq;
using Catch::Approx;

TEST_CASE("design validation", "[simulation]") {
    auto d = lip_cancer_design(0.15, 10);
    CHECK_NOTHROW(d.validate());
    d.sigma2 = -0.1;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.sigma2 = 0.15;
    d.perturbation.n_areas = 57;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.perturbation.n_areas = 4;
    d.n_reps = 0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.n_reps = 10;
    d.beta_true = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    CHECK_THROWS_AS(run_study(lip_cancer_design(0.1, 2), {}), std::invalid_argument);
}

TEST_CASE("replicate generation", "[simulation]") {
    SECTION("no heterogeneity and no perturbation gives the model risks") {
        auto d = lip_cancer_design(0.0);
        d.perturbation.delta = 0.0;
        Rng rng(1);
        const auto rep = generate_replicate(d, rng);
        const Eigen::VectorXd expected = (d.base_design.X() * d.beta_true).array().exp().matrix();
        CHECK(rep.true_risks.isApprox(expected, 1e-15));
        CHECK(rep.perturbed_x == d.base_design.X());
    }
    SECTION("perturbation bookkeeping") {
        const auto d = lip_cancer_design(0.15);
        const auto& X = d.base_design.X();
        Rng rng(2);
        std::set<std::size_t> seen;
        for (int r = 0; r < 50; ++r) {
            const auto rep = generate_replicate(d, rng);
            REQUIRE(rep.perturbed_areas.size() == 4);
            int differing = 0;
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                if (rep.perturbed_x(i, 1) == X(i, 1)) continue;
                ++differing;
                CHECK(rep.perturbed_x(i, 1) - X(i, 1) == Approx(-0.08).margin(1e-15));
                CHECK(X(i, 1) > 0.08);
                seen.insert(static_cast<std::size_t>(i));
            }
            CHECK(differing == 4);
            CHECK(rep.perturbed_x.col(0) == X.col(0));
        }
        CHECK(seen.size() > 20);
        const auto eligible = (X.col(1).array() > 0.08).count();
        CHECK(eligible == 51);
    }
    SECTION("count means follow the lognormal mean identity") {
        const auto d = lip_cancer_design(0.15);
        Rng rng(3);
        const int draws = 100000;
        const Eigen::Index area = 10;
        double sum = 0.0, sumsq = 0.0;
        for (int k = 0; k < draws; ++k) {
            const double y = generate_replicate(d, rng).counts[area];
            sum += y;
            sumsq += y * y;
        }
        const double mean = sum / draws;
        const double sd = std::sqrt((sumsq / draws - mean * mean) / draws);
        const double expected =
            d.base_design.offsets()[area] * std::exp(d.base_design.X().row(area).dot(d.beta_true) + 0.075);
        CHECK(std::abs(mean - expected) < 4.0 * sd);
    }
}

TEST_CASE("study summaries", "[simulation]") {
    auto d = lip_cancer_design(0.15, 30, 11);
    SECTION("oracle estimator is exact") {
        const auto rep = run_study(d, {oracle_estimator()});
        const auto& s = rep.summary("Oracle");
        CHECK(s.bias.isZero(0.0));
        CHECK(s.rmse.isZero(0.0));
        CHECK(s.replicates_used == 30);
        CHECK_THROWS_AS(rep.summary("nope"), std::out_of_range);
    }
    SECTION("bias and rmse match a direct computation") {
        std::mutex mu;
        std::vector<Eigen::VectorXd> errors;
        Estimator rec{{"Rec"}, [&](const EstimatorInput& in) {
                          Eigen::VectorXd est = smr(in.data);
                          std::lock_guard<std::mutex> lock(mu);
                          errors.push_back(est - in.replicate.true_risks);
                          return std::vector<Eigen::VectorXd>{est};
                      }};
        const auto rep = run_study(d, {rec, smr_estimator()});
        REQUIRE(errors.size() == 30);
        Eigen::VectorXd bias = Eigen::VectorXd::Zero(56), ms = Eigen::VectorXd::Zero(56);
        for (const auto& e : errors) {
            bias += e / 30.0;
            ms.array() += e.array().square() / 30.0;
        }
        const auto& s = rep.summary("Rec");
        CHECK((s.bias - bias).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((s.rmse - ms.cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(s.average_rmse == Approx(s.rmse.mean()));
        CHECK(rep.summary("SMR").rmse == s.rmse);
        const Eigen::ArrayXd var = ms.array() - bias.array().square();
        CHECK((s.rmse.array().square() - (s.bias.array().square() + var)).abs().maxCoeff() < 1e-10);
        CHECK((s.rmse.array() >= s.bias.array().abs() - 1e-15).all());
    }
    SECTION("failures are counted and excluded") {
        int calls = 0;
        Estimator flaky{{"Flaky"}, [&](const EstimatorInput& in) {
                            if (calls++ % 3 == 0) throw FitError("forced");
                            return std::vector<Eigen::VectorXd>{in.replicate.true_risks};
                        }};
        const auto rep = run_study(d, {flaky});
        CHECK(rep.summary("Flaky").failures == 10);
        CHECK(rep.summary("Flaky").replicates_used == 20);
        CHECK(rep.summary("Flaky").rmse.isZero(0.0));
    }
    SECTION("seeded studies are reproducible and thread independent") {
        const auto a = run_study(d, {smr_estimator(), eb_estimator()});
        const auto b = run_study(d, {smr_estimator(), eb_estimator()}, std::nullopt, 3);
        for (const auto* name : {"SMR", "EB"}) {
            CHECK(a.summary(name).bias == b.summary(name).bias);
            CHECK(a.summary(name).rmse == b.summary(name).rmse);
        }
    }
}

TEST_CASE("removing the perturbation does not hurt the covariate-based baseline", "[simulation]") {
    // Four areas shifted by 0.08 move the average RMSE by about 1e-4, so many replicates are needed.
    auto base = lip_cancer_design(0.15, 1000, 5);
    auto clean = base;
    clean.perturbation.delta = 0.0;
    const auto a = run_study(base, {eb_estimator(), smr_estimator()});
    const auto b = run_study(clean, {eb_estimator(), smr_estimator()});
    CHECK(b.summary("EB").average_rmse <= a.summary("EB").average_rmse);
    CHECK(b.summary("SMR").average_rmse == a.summary("SMR").average_rmse);
}

TEST_CASE("bootstrap diagnostics inside the study", "[simulation]") {
    auto d = lip_cancer_design(0.15, 3, 2);
    StudyBootstrap sb;
    sb.config.replicates = 3;
    const auto rep = run_study(d, {}, sb);
    REQUIRE(rep.bootstrap.size() == 2);
    for (const auto& diag : rep.bootstrap) {
        CHECK(diag.replicates_used + diag.failures == 3);
        CHECK(diag.ratio.size() == 56);
        CHECK((diag.coverage.array() >= 0.0).all());
        CHECK((diag.coverage.array() <= 1.0).all());
    }
    CHECK(rep.bootstrap[0].name == "NBMQ");
    CHECK(rep.bootstrap[1].name == "NBMQsp");
}

TEST_CASE("median helper", "[simulation]") {
    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(median({}), std::invalid_argument);
}

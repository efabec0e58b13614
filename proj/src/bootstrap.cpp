#include "nbmq/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace nbmq {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> keys_for(const BootstrapConfig& cfg, std::size_t n) {
    if (!cfg.area_keys.empty()) return cfg.area_keys;
    std::vector<std::string> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = std::to_string(i);
    return keys;
}

struct ReplicateOutcome {
    bool ok = false;
    Eigen::VectorXd prediction;
    Eigen::VectorXd target;
};

}  // namespace

void BootstrapConfig::validate() const {
    if (replicates == 0) throw std::invalid_argument("bootstrap needs at least one replicate");
    if (threads == 0) throw std::invalid_argument("bootstrap needs at least one thread");
    if (!(smoothing.bandwidth > 0.0)) throw std::invalid_argument("smoothing bandwidth must be positive");
}

Rng stream_for(std::uint64_t seed, std::uint64_t replicate, const std::string& key) {
    const std::uint64_t h = fnv1a(key);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

BootstrapPool make_pool(const RegressionDesign& design, const NbmqResult& fitted, PredictorMode mode) {
    const auto& preds = mode == PredictorMode::NBMQ ? fitted.nbmq : fitted.nbmq_sp;
    const auto n = design.rows();
    if (static_cast<Eigen::Index>(preds.size()) != n)
        throw std::invalid_argument(mode == PredictorMode::NBMQ ? "fit has no NBMQ predictions"
                                                                : "fit has no smoothed predictions");
    BootstrapPool pool;
    pool.beta_median = fitted.fit.median.beta;
    pool.effects.resize(n);
    pool.shapes.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = preds[static_cast<std::size_t>(i)];
        pool.effects[i] = design.X().row(i).dot(p.beta - pool.beta_median);
        pool.shapes[i] = p.theta;
    }
    pool.effects.array() -= pool.effects.mean();
    return pool;
}

BootstrapResult run_bootstrap(const RegressionDesign& design, const BootstrapPool& pool, const NbmqOptions& options,
                              const SpatialStructure* spatial, const BootstrapConfig& cfg) {
    cfg.validate();
    const auto n = design.rows();
    const auto un = static_cast<std::size_t>(n);
    if (pool.effects.size() != n || pool.shapes.size() != n || pool.beta_median.size() != design.cols())
        throw std::invalid_argument("bootstrap pool does not match the design");
    if ((pool.shapes.array() <= 0.0).any() || !pool.shapes.allFinite() || !pool.effects.allFinite())
        throw std::invalid_argument("bootstrap pool needs finite effects and positive shapes");
    if (cfg.mode == PredictorMode::NBMQsp && !spatial)
        throw std::invalid_argument("NBMQsp bootstrap needs a spatial structure");
    const auto keys = keys_for(cfg, un);
    if (keys.size() != un) throw std::invalid_argument("one area key per area is required");

    // Index h refers to a position in key order so that resampling does not depend on row order.
    std::vector<std::size_t> by_key(un);
    std::iota(by_key.begin(), by_key.end(), std::size_t{0});
    std::stable_sort(by_key.begin(), by_key.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

    const Eigen::VectorXd eta0 = design.X() * pool.beta_median;
    std::vector<ReplicateOutcome> outcomes(cfg.replicates);

    parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Rng rng = stream_for(cfg.seed, r, keys[static_cast<std::size_t>(i)]);
            std::size_t h = static_cast<std::size_t>(i);
            if (cfg.resampling == Resampling::JointIndex) {
                std::uniform_int_distribution<std::size_t> pick(0, un - 1);
                h = by_key[pick(rng)];
            }
            const auto hi = static_cast<Eigen::Index>(h);
            const double mu = design.offsets()[i] * std::exp(eta0[i] + pool.effects[hi]);
            if (cfg.sampling == CountSampling::RoundedMean)
                y[i] = std::round(mu);
            else
                y[i] = static_cast<double>(nb_sample(NegBin2(mu, pool.shapes[hi]), rng));
        }
        ReplicateOutcome out;
        try {
            const RegressionDesign star = design.with_counts(y);
            const auto fit = cfg.mode == PredictorMode::NBMQ
                                 ? run_nbmq(star, options)
                                 : run_nbmq(star, options, spatial, cfg.smoothing);
            const auto& preds = cfg.mode == PredictorMode::NBMQ ? fit.nbmq : fit.nbmq_sp;
            out.prediction.resize(n);
            for (Eigen::Index i = 0; i < n; ++i) out.prediction[i] = preds[static_cast<std::size_t>(i)].predicted_count;
            out.ok = out.prediction.allFinite();
        } catch (const FitError&) {
            out.ok = false;
        } catch (const std::domain_error&) {
            out.ok = false;
        }
        out.target = std::move(y);
        outcomes[r] = std::move(out);
    });

    BootstrapResult result;
    result.mse = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd mean_pred = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd mean_target = Eigen::VectorXd::Zero(n);
    for (const auto& o : outcomes) {
        if (!o.ok) {
            ++result.failed;
            continue;
        }
        ++result.successful;
        result.mse.array() += (o.prediction - o.target).array().square();
        mean_pred += o.prediction;
        mean_target += o.target;
    }
    result.unreliable = 10 * result.failed > cfg.replicates;
    if (result.successful == 0) throw FitError("every bootstrap replicate failed to fit");
    const double s = static_cast<double>(result.successful);
    result.mse /= s;
    mean_pred /= s;
    mean_target /= s;
    result.summaries.resize(un);
    for (std::size_t i = 0; i < un; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        result.summaries[i] = {mean_pred[ii], mean_target[ii], result.mse[ii]};
    }
    return result;
}

BootstrapResult run_bootstrap(const RegressionDesign& design, const NbmqResult& fitted, const NbmqOptions& options,
                              const SpatialStructure* spatial, const BootstrapConfig& cfg) {
    return run_bootstrap(design, make_pool(design, fitted, cfg.mode), options, spatial, cfg);
}

}  // namespace nbmq

#include "nbmq/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace nbmq {

SpatialStructure SpatialStructure::from_adjacency(std::vector<std::vector<std::size_t>> neighbours) {
    SpatialStructure s;
    s.n_ = neighbours.size();
    for (std::size_t i = 0; i < s.n_; ++i) {
        auto& list = neighbours[i];
        std::sort(list.begin(), list.end());
        if (std::adjacent_find(list.begin(), list.end()) != list.end())
            throw std::invalid_argument("area " + std::to_string(i) + " lists a neighbour twice");
        for (const auto l : list) {
            if (l >= s.n_) throw std::invalid_argument("neighbour index out of range for area " + std::to_string(i));
            if (l == i) throw std::invalid_argument("area " + std::to_string(i) + " is listed as its own neighbour");
        }
    }
    for (std::size_t i = 0; i < s.n_; ++i)
        for (const auto l : neighbours[i])
            if (!std::binary_search(neighbours[l].begin(), neighbours[l].end(), i))
                throw std::invalid_argument("adjacency is not symmetric between areas " + std::to_string(i) +
                                            " and " + std::to_string(l));
    s.neighbours_ = std::move(neighbours);
    s.has_adjacency_ = true;
    return s;
}

SpatialStructure SpatialStructure::from_centroids(std::vector<Point> centroids) {
    SpatialStructure s;
    s.n_ = centroids.size();
    s.neighbours_.assign(s.n_, {});
    return s.with_centroids(std::move(centroids));
}

SpatialStructure SpatialStructure::with_centroids(std::vector<Point> centroids) const {
    if (centroids.size() != n_) throw std::invalid_argument("centroid count does not match the number of areas");
    for (const auto& p : centroids)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("centroid is not finite");
    SpatialStructure s = *this;
    s.centroids_ = std::move(centroids);
    return s;
}

const std::vector<Point>& SpatialStructure::centroids() const {
    if (!centroids_) throw std::invalid_argument("spatial structure has no centroids");
    return *centroids_;
}

Eigen::MatrixXd SpatialStructure::adjacency_matrix() const {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i)
        for (const auto l : neighbours_[i]) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = 1.0;
    return A;
}

Eigen::VectorXd smooth_q_adjacency(const Eigen::VectorXd& q, const SpatialStructure& spatial) {
    if (!spatial.has_adjacency()) throw std::invalid_argument("adjacency smoothing needs an adjacency structure");
    if (static_cast<std::size_t>(q.size()) != spatial.size())
        throw std::invalid_argument("q vector length does not match the spatial structure");
    Eigen::VectorXd out(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        const auto& nb = spatial.neighbours(static_cast<std::size_t>(i));
        if (nb.empty()) {
            out[i] = q[i];
            continue;
        }
        double sum = 0.0;
        for (const auto l : nb) sum += q[static_cast<Eigen::Index>(l)];
        out[i] = 0.5 * (q[i] + sum / static_cast<double>(nb.size()));
    }
    return out;
}

Eigen::VectorXd smooth_q_distance(const Eigen::VectorXd& q, const SpatialStructure& spatial, double bandwidth) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
    const auto& c = spatial.centroids();
    if (static_cast<std::size_t>(q.size()) != c.size())
        throw std::invalid_argument("q vector length does not match the spatial structure");
    const auto n = q.size();
    if (std::isinf(bandwidth)) return Eigen::VectorXd::Constant(n, q.mean());
    const double inv_two_b2 = 1.0 / (2.0 * bandwidth * bandwidth);
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double num = 0.0;
        double den = 0.0;
        for (Eigen::Index l = 0; l < n; ++l) {
            const double dx = c[static_cast<std::size_t>(i)].x - c[static_cast<std::size_t>(l)].x;
            const double dy = c[static_cast<std::size_t>(i)].y - c[static_cast<std::size_t>(l)].y;
            const double w = std::exp(-(dx * dx + dy * dy) * inv_two_b2);
            num += w * q[l];
            den += w;
        }
        out[i] = num / den;
    }
    return out;
}

}  // namespace nbmq

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

namespace nbmq {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Area neighbourhood graph (undirected, no self-loops) with optional planar centroids.
class SpatialStructure {
public:
    SpatialStructure() = default;

    /// Validates symmetry, index range and absence of self-loops; neighbour lists are sorted.
    static SpatialStructure from_adjacency(std::vector<std::vector<std::size_t>> neighbours);
    static SpatialStructure from_centroids(std::vector<Point> centroids);

    SpatialStructure with_centroids(std::vector<Point> centroids) const;

    std::size_t size() const noexcept { return n_; }
    bool has_adjacency() const noexcept { return has_adjacency_; }
    bool has_centroids() const noexcept { return centroids_.has_value(); }
    const std::vector<std::size_t>& neighbours(std::size_t i) const { return neighbours_.at(i); }
    std::size_t degree(std::size_t i) const { return neighbours_.at(i).size(); }
    const std::vector<Point>& centroids() const;
    /// Dense 0/1 adjacency matrix.
    Eigen::MatrixXd adjacency_matrix() const;

private:
    std::size_t n_ = 0;
    bool has_adjacency_ = false;
    std::vector<std::vector<std::size_t>> neighbours_;
    std::optional<std::vector<Point>> centroids_;
};

/// q_i^sp = (q_i + mean of neighbouring q) / 2; isolated areas keep q_i.
Eigen::VectorXd smooth_q_adjacency(const Eigen::VectorXd& q, const SpatialStructure& spatial);

/// Gaussian-kernel weighted mean of q over all areas, w(d) = exp(-d^2 / 2b^2).
/// An infinite bandwidth gives uniform weights.
Eigen::VectorXd smooth_q_distance(const Eigen::VectorXd& q, const SpatialStructure& spatial, double bandwidth);

}  // namespace nbmq

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ccgen/assignment.hpp"
#include "ccgen/dataset.hpp"

namespace ccgen {

struct KMeansParams {
    int C = 1;
    std::uint64_t seed = 0;
    int max_iter = 300;
    double tol = 1e-6;
    int restarts = 10;
};

struct KMeansResult {
    ClusterAssignment assignment;
    Eigen::MatrixXd centroids;          // C x D
    double inertia = 0.0;               // sum of squared distances to assigned centroid
    std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

// k-means++ seeding, Lloyd iterations until the max centroid shift drops
// below tol, best of `restarts` runs by inertia. Empty clusters are kept.
KMeansResult kmeans_fit(const FeatureSet& fs, const KMeansParams& params);

}  // namespace ccgen

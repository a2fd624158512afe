#include "ccgen/kmeans.hpp"

#include <cmath>
#include <limits>

#include "ccgen/common.hpp"
#include "ccgen/rng.hpp"

namespace ccgen {

namespace {

struct LloydRun {
    Eigen::VectorXi assignments;
    Eigen::MatrixXd centroids;
    double inertia = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

// Assigns every point to its nearest centroid (ties to the lower cluster id)
// and returns the resulting inertia.
double assign_points(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids, Eigen::VectorXi& out) {
    const Eigen::Index n = x.rows();
    const int c_count = static_cast<int>(centroids.rows());
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < c_count; ++c) {
            const double d = (x.row(i) - centroids.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        out(i) = best_c;
        inertia += best;
    }
    return inertia;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& x, int c_count, Rng& rng) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centers(c_count, x.cols());
    centers.row(0) = x.row(rng.uniform_int(n));
    Eigen::VectorXd dist2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < c_count; ++c) {
        const double total = dist2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= dist2(i);
                if (target <= 0.0) {
                    pick = i;
                    break;
                }
                pick = i;  // fall back to the last row on rounding leftovers
            }
        } else {
            pick = rng.uniform_int(n);
        }
        centers.row(c) = x.row(pick);
        dist2 = dist2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

LloydRun lloyd(const Eigen::MatrixXd& x, int c_count, int max_iter, double tol, Rng rng) {
    LloydRun run;
    run.centroids = kmeanspp_init(x, c_count, rng);
    run.assignments.resize(x.rows());
    run.inertia = assign_points(x, run.centroids, run.assignments);
    run.trace.push_back(run.inertia);

    for (int it = 0; it < max_iter; ++it) {
        // Update step: empty clusters keep their previous centroid.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(c_count, x.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(c_count);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            sums.row(run.assignments(i)) += x.row(i);
            counts(run.assignments(i)) += 1.0;
        }
        double shift = 0.0;
        for (int c = 0; c < c_count; ++c) {
            if (counts(c) == 0.0) continue;
            const Eigen::RowVectorXd updated = sums.row(c) / counts(c);
            shift = std::max(shift, (updated - run.centroids.row(c)).norm());
            run.centroids.row(c) = updated;
        }
        run.inertia = assign_points(x, run.centroids, run.assignments);
        run.trace.push_back(run.inertia);
        if (shift < tol) break;
    }
    return run;
}

}  // namespace

KMeansResult kmeans_fit(const FeatureSet& fs, const KMeansParams& params) {
    const Eigen::Index n = fs.n();
    if (params.C < 1) throw usage_error("cluster count must be positive");
    if (params.C > n)
        throw usage_error("cluster count C=" + std::to_string(params.C) + " exceeds sample count N=" +
                          std::to_string(n));
    if (params.restarts < 1) throw usage_error("restarts must be positive");

    const Eigen::MatrixXd x = fs.features.cast<double>();

    std::vector<LloydRun> runs(static_cast<std::size_t>(params.restarts));
    parallel_for(params.restarts, [&](std::int64_t r) {
        runs[static_cast<std::size_t>(r)] =
            lloyd(x, params.C, params.max_iter, params.tol,
                  Rng(derive_seed(params.seed, {0x6b6dULL, static_cast<std::uint64_t>(r)})));
    });

    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].inertia < runs[best].inertia) best = r;

    KMeansResult result;
    result.assignment = make_cluster_assignment(runs[best].assignments, params.C, ClusterMethod::kmeans);
    result.centroids = std::move(runs[best].centroids);
    result.inertia = runs[best].inertia;
    result.inertia_trace = std::move(runs[best].trace);
    return result;
}

}  // namespace ccgen

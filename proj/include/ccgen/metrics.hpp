#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccgen/assignment.hpp"
#include "ccgen/dataset.hpp"

namespace ccgen {

// Sufficient statistics for the Frechet distance.
struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric, unbiased
    Eigen::Index n = 0;
};

GaussianStats gaussian_stats(const Eigen::MatrixXd& samples);
GaussianStats gaussian_stats(const FeatureSet& fs);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), matrix
// square roots by symmetric eigendecomposition with eigenvalues clamped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct ContingencyTable {
    Eigen::MatrixXi counts;   // clusters x classes
    Eigen::VectorXi row_sums; // per cluster
    Eigen::VectorXi col_sums; // per class
    long n = 0;
};

ContingencyTable contingency_table(const Eigen::VectorXi& clusters, const Eigen::VectorXi& labels);

// Natural-log mutual information and marginal entropies of a table.
double mutual_information(const ContingencyTable& table);
std::pair<double, double> marginal_entropies(const ContingencyTable& table);

// Exact E[MI] under the fixed-marginal permutation model (hypergeometric sum).
double expected_mutual_information(const ContingencyTable& table);

// Adjusted mutual information with arithmetic-mean normalization:
// (MI - E[MI]) / (mean(H_U, H_V) - E[MI]).
double anmi(const ClusterAssignment& assignment, const Eigen::VectorXi& labels);

struct HungarianResult {
    std::vector<int> mapping;  // cluster -> class, -1 when unmatched
    double accuracy = 0.0;     // matched count sum / n
};

// Maximum-weight one-to-one assignment on the count matrix (rectangular
// tables are padded), O(max(C,K)^3).
HungarianResult hungarian_map(const ContingencyTable& table);

// AUROC of max-cosine-to-train scores, test split positive, generated
// negative; ties get midranks.
double nn_auroc(const FeatureSet& generated, const FeatureSet& train, const FeatureSet& test);

// Cosine-similarity softmax over provided prototype rows; argmax labels.
ClusterAssignment pseudo_label(const FeatureSet& image_feats, const Eigen::MatrixXf& prototypes, double tau);
Eigen::MatrixXd pseudo_label_probs(const FeatureSet& image_feats, const Eigen::MatrixXf& prototypes,
                                   double tau);

// Chi-square goodness-of-fit helpers (regularized incomplete gamma based).
double chi_square_statistic(const Eigen::VectorXd& observed_counts, const Eigen::VectorXd& expected_probs);
double chi_square_cdf(double x, int dof);
double chi_square_quantile(double p, int dof);

}  // namespace ccgen

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace ccgen {

// N x D embedding matrix plus optional ground-truth labels. Immutable after
// construction; safe to share across threads.
struct FeatureSet {
    Eigen::MatrixXf features;                 // N x D, row per sample
    std::optional<Eigen::VectorXi> labels;    // length N when present
    std::vector<std::int64_t> ids;            // stable sample identifiers

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    int label_count() const;  // C_GT = max label + 1, 0 when labels absent
};

// Row i holds the m nearest neighbors of sample i, sorted by descending
// cosine similarity, self excluded, ties broken by lower index.
struct NeighborSets {
    int m = 0;
    Eigen::MatrixXi neighbors;  // N x m
};

struct SyntheticSpec {
    int modes = 1;
    int dim = 2;
    std::vector<int> samples_per_mode;  // length K, all positive
    double mode_separation = 10.0;
    double mode_scale = 0.1;
    std::uint64_t seed = 0;
};

enum class FileFormat { binary, csv };

// Binary layout: "CCFS", u8 version=1, u8 flags (bit0 = labels), u32le N,
// u32le D, N*D f32le row-major, then N u32le labels when flagged.
FeatureSet load_features(const std::filesystem::path& path, FileFormat format,
                         bool csv_has_labels = false);
void save_features(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format,
                   bool include_labels = true);

// Returns a copy whose rows have unit L2 norm.
FeatureSet l2_normalize(const FeatureSet& fs);

// Exact brute-force top-m by cosine similarity. Normalizes a copy internally.
NeighborSets mine_knn(const FeatureSet& fs, int m);

// K isotropic Gaussian modes with centers at pairwise distance >=
// mode_separation (ring for D=2, scaled simplex corners for D>2).
FeatureSet make_synthetic(const SyntheticSpec& spec);

}  // namespace ccgen

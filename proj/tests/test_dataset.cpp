#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ccgen/common.hpp"
#include "ccgen/dataset.hpp"
#include "ccgen/rng.hpp"

using namespace ccgen;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* tag) {
    static int counter = 0;
    return fs::temp_directory_path() / (std::string("ccgen_test_") + tag + "_" + std::to_string(counter++));
}

FeatureSet random_features(int n, int d, std::uint64_t seed, bool with_labels = false) {
    Rng rng(seed);
    FeatureSet out;
    out.features.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.features(i, j) = static_cast<float>(rng.normal());
    if (with_labels) {
        Eigen::VectorXi labels(n);
        for (int i = 0; i < n; ++i) labels(i) = static_cast<int>(rng.uniform_int(5));
        out.labels = labels;
    }
    out.ids.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.ids[static_cast<std::size_t>(i)] = i;
    return out;
}

}  // namespace

TEST_CASE("binary format round-trips bit-exactly") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const FeatureSet fs0 = random_features(17, 5, seed, seed % 2 == 0);
        const auto path = temp_file("roundtrip");
        save_features(fs0, path, FileFormat::binary);
        const FeatureSet fs1 = load_features(path, FileFormat::binary);
        REQUIRE(fs1.n() == fs0.n());
        REQUIRE(fs1.dim() == fs0.dim());
        CHECK(std::memcmp(fs0.features.data(), fs1.features.data(),
                          sizeof(float) * static_cast<std::size_t>(fs0.features.size())) == 0);
        REQUIRE(fs1.labels.has_value() == fs0.labels.has_value());
        if (fs0.labels) CHECK((*fs1.labels == *fs0.labels));
        fs::remove(path);
    }
}

TEST_CASE("binary header example: N=4 D=2, no labels") {
    FeatureSet fs0;
    fs0.features.resize(4, 2);
    fs0.features << 1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f;
    const auto path = temp_file("header");
    save_features(fs0, path, FileFormat::binary);
    const FeatureSet fs1 = load_features(path, FileFormat::binary);
    CHECK(fs1.n() == 4);
    CHECK(fs1.dim() == 2);
    CHECK(!fs1.labels.has_value());
    fs::remove(path);
}

TEST_CASE("csv with trailing label column") {
    const auto path = temp_file("csv");
    {
        std::ofstream out(path);
        out << "0.0,1.0,3\n1.0,0.0,2\n";
    }
    const FeatureSet fs1 = load_features(path, FileFormat::csv, /*csv_has_labels=*/true);
    CHECK(fs1.n() == 2);
    CHECK(fs1.dim() == 2);
    REQUIRE(fs1.labels.has_value());
    CHECK((*fs1.labels)(0) == 3);
    CHECK((*fs1.labels)(1) == 2);
    fs::remove(path);
}

TEST_CASE("truncated payload names the byte offset") {
    const FeatureSet fs0 = random_features(4, 2, 9);
    const auto path = temp_file("trunc");
    save_features(fs0, path, FileFormat::binary);
    // Drop the last 4 bytes so the declared N*D exceeds the payload.
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 4);
    CHECK_THROWS_AS((void)load_features(path, FileFormat::binary), data_error);
    try {
        (void)load_features(path, FileFormat::binary);
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("non-finite values are rejected with an offset") {
    const auto path = temp_file("nan");
    {
        FeatureSet fs0 = random_features(2, 2, 10);
        fs0.features(1, 1) = std::numeric_limits<float>::quiet_NaN();
        std::ofstream out(path, std::ios::binary);
        // Write through the raw layout on purpose; save_features is not
        // required to accept non-finite input.
        out.write("CCFS", 4);
        out.put(1);
        out.put(0);
        const std::uint32_t n = 2, d = 2;
        out.write(reinterpret_cast<const char*>(&n), 4);
        out.write(reinterpret_cast<const char*>(&d), 4);
        out.write(reinterpret_cast<const char*>(fs0.features.row(0).eval().data()), 8);
        const float bad[2] = {1.0f, std::numeric_limits<float>::quiet_NaN()};
        out.write(reinterpret_cast<const char*>(bad), 8);
    }
    CHECK_THROWS_AS((void)load_features(path, FileFormat::binary), data_error);
    fs::remove(path);
}

TEST_CASE("l2_normalize basics") {
    FeatureSet fs0;
    fs0.features.resize(1, 2);
    fs0.features << 3.f, 4.f;
    const FeatureSet unit = l2_normalize(fs0);
    CHECK(unit.features(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(unit.features(0, 1) == doctest::Approx(0.8).epsilon(1e-6));

    FeatureSet axes;
    axes.features.resize(2, 2);
    axes.features << 1.f, 0.f, 0.f, 2.f;
    const FeatureSet unit2 = l2_normalize(axes);
    CHECK(unit2.features(0, 0) == doctest::Approx(1.0));
    CHECK(unit2.features(1, 1) == doctest::Approx(1.0));

    FeatureSet zero;
    zero.features = Eigen::MatrixXf::Zero(1, 2);
    CHECK_THROWS_AS((void)l2_normalize(zero), data_error);
    try {
        (void)l2_normalize(zero);
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("0") != std::string::npos);
    }
}

TEST_CASE("l2_normalize is idempotent within 1e-6 and rows are unit") {
    const FeatureSet fs0 = random_features(40, 7, 11);
    const FeatureSet once = l2_normalize(fs0);
    const FeatureSet twice = l2_normalize(once);
    for (Eigen::Index i = 0; i < once.n(); ++i) {
        CHECK(std::abs(once.features.row(i).cast<double>().norm() - 1.0) < 1e-6);
        CHECK((once.features.row(i) - twice.features.row(i)).cast<double>().norm() < 1e-6);
    }
}

TEST_CASE("mine_knn matches the hand-worked 3-angle example") {
    FeatureSet fs0;
    fs0.features.resize(3, 2);
    const double a1 = 10.0 * M_PI / 180.0;
    fs0.features << 1.f, 0.f, static_cast<float>(std::cos(a1)), static_cast<float>(std::sin(a1)), 0.f, 1.f;
    const NeighborSets nn = mine_knn(fs0, 1);
    CHECK(nn.neighbors(0, 0) == 1);
    CHECK(nn.neighbors(1, 0) == 0);
    CHECK(nn.neighbors(2, 0) == 1);
}

TEST_CASE("mine_knn with m = N-1 visits all other indices") {
    const FeatureSet fs0 = random_features(9, 3, 12);
    const NeighborSets nn = mine_knn(fs0, 8);
    for (int i = 0; i < 9; ++i) {
        std::vector<bool> seen(9, false);
        for (int k = 0; k < 8; ++k) {
            const int j = nn.neighbors(i, k);
            CHECK(j != i);
            CHECK(!seen[static_cast<std::size_t>(j)]);
            seen[static_cast<std::size_t>(j)] = true;
        }
    }
}

TEST_CASE("mine_knn pairs up duplicated points") {
    FeatureSet fs0 = random_features(5, 3, 13);
    fs0.features.row(1) = fs0.features.row(0);
    const NeighborSets nn = mine_knn(fs0, 1);
    CHECK(nn.neighbors(0, 0) == 1);
    CHECK(nn.neighbors(1, 0) == 0);
}

TEST_CASE("mine_knn rejects m >= N") {
    const FeatureSet fs0 = random_features(4, 2, 14);
    CHECK_THROWS_AS((void)mine_knn(fs0, 4), usage_error);
    CHECK_THROWS_AS((void)mine_knn(fs0, 0), usage_error);
}

TEST_CASE("mine_knn agrees with the O(N^2) oracle on random sets") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(63));
        const int d = 1 + static_cast<int>(rng.uniform_int(6));
        const int m = 1 + static_cast<int>(rng.uniform_int(n - 1));
        const FeatureSet fs0 = random_features(n, d, 1000 + static_cast<std::uint64_t>(trial));
        const NeighborSets nn = mine_knn(fs0, m);

        // Oracle: plain loops over normalized rows.
        Eigen::MatrixXd unit(n, d);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd row = fs0.features.row(i).cast<double>();
            unit.row(i) = row / row.norm();
        }
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<double, int>> sims;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double dot = 0.0;
                for (int c = 0; c < d; ++c) dot += unit(i, c) * unit(j, c);
                sims.emplace_back(dot, j);
            }
            std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            for (int k = 0; k < m; ++k) CHECK(nn.neighbors(i, k) == sims[static_cast<std::size_t>(k)].second);
        }
    }
}

TEST_CASE("make_synthetic separates modes and is deterministic") {
    SyntheticSpec spec;
    spec.modes = 2;
    spec.dim = 2;
    spec.samples_per_mode = {10, 10};
    spec.mode_separation = 10.0;
    spec.mode_scale = 0.1;
    spec.seed = 7;
    const FeatureSet a = make_synthetic(spec);
    const FeatureSet b = make_synthetic(spec);
    REQUIRE(a.n() == 20);
    CHECK(std::memcmp(a.features.data(), b.features.data(),
                      sizeof(float) * static_cast<std::size_t>(a.features.size())) == 0);

    // Nearest-center classification over the per-mode sample means.
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(2, 2);
    Eigen::Vector2d counts = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < a.n(); ++i) {
        means.row((*a.labels)(i)) += a.features.row(i).cast<double>();
        counts((*a.labels)(i)) += 1.0;
    }
    means.array().colwise() /= counts.array();
    int correct = 0;
    for (Eigen::Index i = 0; i < a.n(); ++i) {
        const Eigen::RowVector2d x = a.features.row(i).cast<double>();
        const int nearest = (x - means.row(0)).norm() < (x - means.row(1)).norm() ? 0 : 1;
        if (nearest == (*a.labels)(i)) ++correct;
    }
    CHECK(correct == 20);
    CHECK((means.row(0) - means.row(1)).norm() > 0.9 * spec.mode_separation);
}

TEST_CASE("make_synthetic single mode labels zero") {
    SyntheticSpec spec;
    spec.modes = 1;
    spec.dim = 3;
    spec.samples_per_mode = {6};
    spec.seed = 3;
    const FeatureSet a = make_synthetic(spec);
    REQUIRE(a.labels.has_value());
    CHECK(a.labels->maxCoeff() == 0);
}

TEST_CASE("make_synthetic rejects infeasible placements") {
    SyntheticSpec spec;
    spec.modes = 5;
    spec.dim = 3;
    spec.samples_per_mode = {1, 1, 1, 1, 1};
    CHECK_THROWS_AS((void)make_synthetic(spec), usage_error);
}

TEST_CASE("simplex placement keeps pairwise separation in higher dims") {
    SyntheticSpec spec;
    spec.modes = 4;
    spec.dim = 6;
    spec.samples_per_mode = {50, 50, 50, 50};
    spec.mode_separation = 8.0;
    spec.mode_scale = 0.05;
    spec.seed = 21;
    const FeatureSet a = make_synthetic(spec);
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(4, 6);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    for (Eigen::Index i = 0; i < a.n(); ++i) {
        means.row((*a.labels)(i)) += a.features.row(i).cast<double>();
        counts((*a.labels)(i)) += 1.0;
    }
    means.array().colwise() /= counts.array();
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) CHECK((means.row(i) - means.row(j)).norm() > 0.9 * spec.mode_separation);
}

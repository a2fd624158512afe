#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ccgen/common.hpp"
#include "ccgen/metrics.hpp"
#include "ccgen/rng.hpp"

using namespace ccgen;

namespace {

FeatureSet from_rows(const std::vector<std::vector<double>>& rows) {
    FeatureSet fs;
    fs.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            fs.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<float>(rows[i][j]);
    fs.ids.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) fs.ids[i] = static_cast<std::int64_t>(i);
    return fs;
}

// Feature row whose max cosine against a single e1 train row equals s.
std::vector<double> row_with_score(double s) { return {s, std::sqrt(1.0 - s * s)}; }

double brute_force_emi_by_permutations(const Eigen::VectorXi& clusters, const Eigen::VectorXi& labels) {
    std::vector<int> perm(static_cast<std::size_t>(labels.size()));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = labels(static_cast<Eigen::Index>(i));
    std::sort(perm.begin(), perm.end());
    double total = 0.0;
    long count = 0;
    do {
        Eigen::VectorXi permuted(labels.size());
        for (Eigen::Index i = 0; i < labels.size(); ++i) permuted(i) = perm[static_cast<std::size_t>(i)];
        total += mutual_information(contingency_table(clusters, permuted));
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return total / static_cast<double>(count);
}

// Independent E[MI] evaluator using multiplicative binomials.
double oracle_emi(const ContingencyTable& t) {
    const auto binom = [](long n, long k) {
        double v = 1.0;
        for (long i = 1; i <= k; ++i) v *= static_cast<double>(n - k + i) / static_cast<double>(i);
        return v;
    };
    const double n = static_cast<double>(t.n);
    double emi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
        const long ai = t.row_sums(i);
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const long bj = t.col_sums(j);
            if (ai == 0 || bj == 0) continue;
            for (long nij = std::max<long>(1, ai + bj - t.n); nij <= std::min<long>(ai, bj); ++nij) {
                const double p = binom(bj, nij) * binom(t.n - bj, ai - nij) / binom(t.n, ai);
                emi += (nij / n) * std::log(n * nij / (double(ai) * double(bj))) * p;
            }
        }
    }
    return emi;
}

double brute_force_assignment_value(const Eigen::MatrixXi& counts) {
    const int rows = static_cast<int>(counts.rows());
    const int cols = static_cast<int>(counts.cols());
    const int dim = std::max(rows, cols);
    std::vector<int> perm(static_cast<std::size_t>(dim));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1.0;
    do {
        double value = 0.0;
        for (int i = 0; i < rows; ++i)
            if (perm[static_cast<std::size_t>(i)] < cols) value += counts(i, perm[static_cast<std::size_t>(i)]);
        best = std::max(best, value);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("gaussian_stats two-point formula") {
    Eigen::MatrixXd samples(2, 2);
    samples << 0, 0, 2, 0;
    const GaussianStats s = gaussian_stats(samples);
    CHECK(s.mean(0) == doctest::Approx(1.0));
    CHECK(s.mean(1) == doctest::Approx(0.0));
    CHECK(s.cov(0, 0) == doctest::Approx(2.0));
    CHECK(s.cov(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("gaussian_stats degenerate and Monte-Carlo cases") {
    Eigen::MatrixXd same(5, 3);
    same.setConstant(1.5);
    CHECK(gaussian_stats(same).cov.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    Eigen::MatrixXd one(1, 2);
    CHECK_THROWS_AS((void)gaussian_stats(one), usage_error);

    Rng rng(11);
    Eigen::MatrixXd draws(100000, 2);
    rng.fill_normal(draws);
    const GaussianStats s = gaussian_stats(draws);
    CHECK(s.mean.cwiseAbs().maxCoeff() < 0.02);
    CHECK((s.cov - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("frechet distance closed forms") {
    Rng rng(12);
    Eigen::MatrixXd draws(500, 2);
    rng.fill_normal(draws);
    const GaussianStats a = gaussian_stats(draws);
    CHECK(frechet_distance(a, a) < 1e-8);

    GaussianStats b = a;
    b.mean(0) += 3.0;
    b.mean(1) += 4.0;
    CHECK(frechet_distance(a, b) == doctest::Approx(25.0).epsilon(1e-6));

    GaussianStats da, db;
    da.mean = Eigen::VectorXd::Zero(2);
    db.mean = Eigen::VectorXd::Zero(2);
    da.cov = Eigen::Vector2d(1, 4).asDiagonal();
    db.cov = Eigen::Vector2d(4, 1).asDiagonal();
    da.n = db.n = 10;
    CHECK(frechet_distance(da, db) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(frechet_distance(db, da) == doctest::Approx(frechet_distance(da, db)).epsilon(1e-8));
}

TEST_CASE("frechet matches the 1-D scalar closed form") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        GaussianStats a, b;
        a.mean = Eigen::VectorXd::Constant(1, rng.normal());
        b.mean = Eigen::VectorXd::Constant(1, rng.normal());
        const double sa = 0.1 + 2.0 * rng.uniform();
        const double sb = 0.1 + 2.0 * rng.uniform();
        a.cov = Eigen::MatrixXd::Constant(1, 1, sa * sa);
        b.cov = Eigen::MatrixXd::Constant(1, 1, sb * sb);
        a.n = b.n = 10;
        const double expected = (a.mean(0) - b.mean(0)) * (a.mean(0) - b.mean(0)) + (sa - sb) * (sa - sb);
        CHECK(frechet_distance(a, b) == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("frechet rejects invalid covariance inputs") {
    GaussianStats a, b;
    a.mean = Eigen::VectorXd::Zero(2);
    b.mean = Eigen::VectorXd::Zero(2);
    a.cov = Eigen::MatrixXd::Identity(2, 2);
    b.cov = Eigen::MatrixXd::Identity(2, 2);
    a.n = b.n = 4;

    GaussianStats bad = a;
    bad.cov(0, 1) = 0.5;  // asymmetric
    CHECK_THROWS_AS((void)frechet_distance(bad, b), numeric_error);

    bad = a;
    bad.cov = -Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS((void)frechet_distance(bad, b), numeric_error);
}

TEST_CASE("anmi scores perfect agreement as 1") {
    Eigen::VectorXi labels(6), clusters(6);
    labels << 0, 0, 1, 1, 2, 2;
    clusters << 2, 2, 0, 0, 1, 1;  // identical up to renaming
    const auto a = make_cluster_assignment(clusters, 3, ClusterMethod::kmeans);
    CHECK(anmi(a, labels) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("expected MI agrees with full permutation enumeration") {
    Eigen::VectorXi clusters(7), labels(7);
    clusters << 0, 0, 1, 1, 2, 2, 0;
    labels << 0, 1, 0, 1, 0, 1, 1;
    const ContingencyTable t = contingency_table(clusters, labels);
    const double emi = expected_mutual_information(t);
    const double brute = brute_force_emi_by_permutations(clusters, labels);
    CHECK(emi == doctest::Approx(brute).epsilon(1e-10));
}

TEST_CASE("anmi matches the hypergeometric oracle on the spec instance") {
    Eigen::VectorXi clusters(6), labels(6);
    clusters << 0, 0, 0, 1, 1, 1;
    labels << 0, 1, 0, 1, 0, 1;
    const ContingencyTable t = contingency_table(clusters, labels);
    const double emi = expected_mutual_information(t);
    CHECK(emi == doctest::Approx(oracle_emi(t)).epsilon(1e-12));

    const double mi = mutual_information(t);
    const auto [hu, hv] = marginal_entropies(t);
    const double expected = (mi - emi) / (0.5 * (hu + hv) - emi);
    const auto a = make_cluster_assignment(clusters, 2, ClusterMethod::kmeans);
    CHECK(anmi(a, labels) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("anmi is invariant under relabeling and near zero for random partitions") {
    Rng rng(17);
    Eigen::VectorXi labels(60), clusters(60);
    for (Eigen::Index i = 0; i < 60; ++i) {
        labels(i) = static_cast<int>(rng.uniform_int(4));
        clusters(i) = static_cast<int>(rng.uniform_int(5));
    }
    const auto a = make_cluster_assignment(clusters, 5, ClusterMethod::kmeans);
    const double base = anmi(a, labels);

    // Swap label names 0 <-> 3.
    Eigen::VectorXi renamed = labels;
    for (Eigen::Index i = 0; i < 60; ++i) {
        if (labels(i) == 0) renamed(i) = 3;
        if (labels(i) == 3) renamed(i) = 0;
    }
    CHECK(anmi(a, renamed) == doctest::Approx(base).epsilon(1e-12));

    double total = 0.0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        Eigen::VectorXi l(200), c(200);
        for (Eigen::Index i = 0; i < 200; ++i) {
            l(i) = static_cast<int>(rng.uniform_int(4));
            c(i) = static_cast<int>(rng.uniform_int(6));
        }
        total += anmi(make_cluster_assignment(c, 6, ClusterMethod::kmeans), l);
    }
    CHECK(std::abs(total / trials) < 0.05);
}

TEST_CASE("anmi trivial partitions") {
    Eigen::VectorXi ones = Eigen::VectorXi::Zero(5);
    const auto a = make_cluster_assignment(ones, 1, ClusterMethod::kmeans);
    CHECK(anmi(a, ones) == doctest::Approx(1.0));
    Eigen::VectorXi labels(5);
    labels << 0, 1, 0, 1, 0;
    CHECK(anmi(a, labels) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("hungarian diagonal and swap tables") {
    Eigen::VectorXi clusters(30), labels(30);
    for (int i = 0; i < 30; ++i) {
        clusters(i) = i % 3;
        labels(i) = i % 3;
    }
    const HungarianResult diag = hungarian_map(contingency_table(clusters, labels));
    CHECK(diag.mapping[0] == 0);
    CHECK(diag.mapping[1] == 1);
    CHECK(diag.mapping[2] == 2);
    CHECK(diag.accuracy == doctest::Approx(1.0));

    Eigen::VectorXi swapped(20), swapped_labels(20);
    for (int i = 0; i < 20; ++i) {
        swapped(i) = i < 10 ? 0 : 1;
        swapped_labels(i) = i < 10 ? 1 : 0;
    }
    const HungarianResult swap = hungarian_map(contingency_table(swapped, swapped_labels));
    CHECK(swap.mapping[0] == 1);
    CHECK(swap.mapping[1] == 0);
    CHECK(swap.accuracy == doctest::Approx(1.0));
}

TEST_CASE("hungarian equals brute-force enumeration on random tables") {
    Rng rng(19);
    for (int trial = 0; trial < 40; ++trial) {
        const int rows = 2 + static_cast<int>(rng.uniform_int(4));
        const int cols = 2 + static_cast<int>(rng.uniform_int(4));
        ContingencyTable t;
        t.counts.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t.counts(i, j) = static_cast<int>(rng.uniform_int(20));
        t.row_sums = t.counts.rowwise().sum();
        t.col_sums = t.counts.colwise().sum();
        t.n = t.counts.sum();
        if (t.n == 0) continue;

        const HungarianResult result = hungarian_map(t);
        double got = 0.0;
        for (int i = 0; i < rows; ++i)
            if (result.mapping[static_cast<std::size_t>(i)] >= 0)
                got += t.counts(i, result.mapping[static_cast<std::size_t>(i)]);
        CHECK(got == doctest::Approx(brute_force_assignment_value(t.counts)));
        CHECK(result.accuracy == doctest::Approx(got / static_cast<double>(t.n)));
    }
}

TEST_CASE("hungarian accuracy is invariant under simultaneous permutation") {
    Rng rng(23);
    ContingencyTable t;
    t.counts.resize(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t.counts(i, j) = static_cast<int>(rng.uniform_int(15));
    t.row_sums = t.counts.rowwise().sum();
    t.col_sums = t.counts.colwise().sum();
    t.n = t.counts.sum();
    const double base = hungarian_map(t).accuracy;

    ContingencyTable p = t;
    const int perm[4] = {2, 0, 3, 1};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) p.counts(perm[i], perm[j]) = t.counts(i, j);
    p.row_sums = p.counts.rowwise().sum();
    p.col_sums = p.counts.colwise().sum();
    CHECK(hungarian_map(p).accuracy == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("nn_auroc hand-worked rank cases") {
    const FeatureSet train = from_rows({{1, 0}});
    const FeatureSet test1 = from_rows({row_with_score(0.9), row_with_score(0.8)});
    const FeatureSet gen1 = from_rows({row_with_score(0.7), row_with_score(0.6)});
    CHECK(nn_auroc(gen1, train, test1) == doctest::Approx(1.0));

    const FeatureSet test2 = from_rows({row_with_score(0.9), row_with_score(0.7)});
    const FeatureSet gen2 = from_rows({row_with_score(0.8), row_with_score(0.6)});
    CHECK(nn_auroc(gen2, train, test2) == doctest::Approx(0.75));
}

TEST_CASE("nn_auroc edges and monotone-transform invariance") {
    const FeatureSet train = from_rows({{1, 0}, {0.9, 0.1}});
    const FeatureSet same = from_rows({row_with_score(0.5), row_with_score(0.3)});
    CHECK(nn_auroc(same, train, same) == doctest::Approx(0.5));

    const FeatureSet ortho = from_rows({{0, 1}});
    const FeatureSet dup = from_rows({{1, 0}});
    CHECK(nn_auroc(ortho, train, dup) == doctest::Approx(1.0));

    // Strictly increasing transform of the score values leaves AUROC alone.
    const auto transform = [](double s) { return 0.2 + 0.5 * s; };
    const FeatureSet testA = from_rows({row_with_score(0.9), row_with_score(0.4)});
    const FeatureSet genA = from_rows({row_with_score(0.6), row_with_score(0.2)});
    const FeatureSet testB = from_rows({row_with_score(transform(0.9)), row_with_score(transform(0.4))});
    const FeatureSet genB = from_rows({row_with_score(transform(0.6)), row_with_score(transform(0.2))});
    const FeatureSet train1 = from_rows({{1, 0}});
    CHECK(nn_auroc(genA, train1, testA) == doctest::Approx(nn_auroc(genB, train1, testB)));
}

TEST_CASE("pseudo_label picks the dominant prototype with low-index ties") {
    Eigen::MatrixXf protos(2, 2);
    protos << 1, 0, 0, 1;
    const FeatureSet feats = from_rows({{1.0, 0.1}, {0.5, 0.5}});
    const ClusterAssignment a = pseudo_label(feats, protos, 0.1);
    CHECK(a.assignments(0) == 0);
    CHECK(a.assignments(1) == 0);  // exact tie, lower index wins
    CHECK(a.method_tag == ClusterMethod::pseudo);

    for (double tau : {0.01, 0.1, 1.0}) {
        const ClusterAssignment b = pseudo_label(feats, protos, tau);
        CHECK((b.assignments == a.assignments));
    }

    Eigen::MatrixXf bad = protos;
    bad.row(1).setZero();
    CHECK_THROWS_AS((void)pseudo_label(feats, bad, 0.1), data_error);
}

TEST_CASE("chi-square quantiles match reference values") {
    CHECK(chi_square_quantile(0.999, 1) == doctest::Approx(10.828).epsilon(1e-3));
    CHECK(chi_square_quantile(0.999, 3) == doctest::Approx(16.266).epsilon(1e-3));
    CHECK(chi_square_quantile(0.95, 2) == doctest::Approx(5.991).epsilon(1e-3));
    CHECK(chi_square_cdf(chi_square_quantile(0.5, 4), 4) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("chi-square statistic arithmetic") {
    Eigen::VectorXd observed(2), probs(2);
    observed << 60, 40;
    probs << 0.5, 0.5;
    CHECK(chi_square_statistic(observed, probs) == doctest::Approx(4.0));
}

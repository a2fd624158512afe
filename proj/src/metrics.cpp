#include "ccgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ccgen/common.hpp"

namespace ccgen {

namespace {

// Symmetric PSD square root; eigenvalues below -1e-8 * trace are treated as
// genuinely invalid input, smaller negatives are numerical noise and clamp.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw numeric_error(std::string("eigendecomposition failed for ") + what);
    const Eigen::VectorXd& evals = solver.eigenvalues();
    const double tol = 1e-8 * std::max(std::abs(sym.trace()), 1e-12);
    if (evals.minCoeff() < -tol)
        throw numeric_error(std::string("matrix is not PSD in ") + what + ": min eigenvalue " +
                            std::to_string(evals.minCoeff()));
    const Eigen::VectorXd roots = evals.cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

void require_valid_cov(const GaussianStats& s, const char* name) {
    if (!s.cov.allFinite() || !s.mean.allFinite())
        throw numeric_error(std::string("non-finite Gaussian stats for ") + name);
    if (s.cov.rows() != s.cov.cols() || s.cov.rows() != s.mean.size())
        throw usage_error(std::string("inconsistent Gaussian stats shapes for ") + name);
    const double scale = std::max(1.0, s.cov.cwiseAbs().maxCoeff());
    if ((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw numeric_error(std::string("asymmetric covariance for ") + name);
}

double log_binomial(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Regularized lower incomplete gamma P(a, x): series for x < a+1, continued
// fraction otherwise.
double reg_lower_gamma(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw usage_error("invalid incomplete gamma arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

Eigen::MatrixXd unit_rows(const FeatureSet& fs) { return l2_normalize(fs).features.cast<double>(); }

}  // namespace

GaussianStats gaussian_stats(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) throw usage_error("gaussian_stats needs at least 2 samples");
    GaussianStats s;
    s.n = samples.rows();
    s.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
    s.cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
    s.cov = 0.5 * (s.cov + s.cov.transpose());
    return s;
}

GaussianStats gaussian_stats(const FeatureSet& fs) { return gaussian_stats(fs.features.cast<double>()); }

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    require_valid_cov(a, "first argument");
    require_valid_cov(b, "second argument");
    if (a.mean.size() != b.mean.size()) throw usage_error("Gaussian stats dimensions differ");

    const double mean_term = (a.mean - b.mean).squaredNorm();
    const Eigen::MatrixXd root_a = psd_sqrt(a.cov, "covariance");
    const Eigen::MatrixXd inner = root_a * b.cov * root_a;
    const Eigen::MatrixXd cross = psd_sqrt(inner, "cross term");
    const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    // Exact-zero distances can land a hair below zero after clamping.
    return std::max(value, 0.0);
}

ContingencyTable contingency_table(const Eigen::VectorXi& clusters, const Eigen::VectorXi& labels) {
    if (clusters.size() != labels.size()) throw usage_error("cluster/label vectors differ in length");
    if (clusters.size() == 0) throw usage_error("empty partition vectors");
    if (clusters.minCoeff() < 0 || labels.minCoeff() < 0)
        throw data_error("negative id in partition vectors");
    ContingencyTable t;
    const int c_count = clusters.maxCoeff() + 1;
    const int k_count = labels.maxCoeff() + 1;
    t.counts = Eigen::MatrixXi::Zero(c_count, k_count);
    for (Eigen::Index i = 0; i < clusters.size(); ++i) t.counts(clusters(i), labels(i)) += 1;
    t.row_sums = t.counts.rowwise().sum();
    t.col_sums = t.counts.colwise().sum();
    t.n = clusters.size();
    return t;
}

double mutual_information(const ContingencyTable& t) {
    const double n = static_cast<double>(t.n);
    double mi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const double nij = t.counts(i, j);
            if (nij == 0.0) continue;
            mi += (nij / n) * std::log(n * nij / (double(t.row_sums(i)) * double(t.col_sums(j))));
        }
    }
    return mi;
}

std::pair<double, double> marginal_entropies(const ContingencyTable& t) {
    const double n = static_cast<double>(t.n);
    double hu = 0.0, hv = 0.0;
    for (Eigen::Index i = 0; i < t.row_sums.size(); ++i)
        if (t.row_sums(i) > 0) hu -= (t.row_sums(i) / n) * std::log(t.row_sums(i) / n);
    for (Eigen::Index j = 0; j < t.col_sums.size(); ++j)
        if (t.col_sums(j) > 0) hv -= (t.col_sums(j) / n) * std::log(t.col_sums(j) / n);
    return {hu, hv};
}

double expected_mutual_information(const ContingencyTable& t) {
    const double n = static_cast<double>(t.n);
    double emi = 0.0;
    for (Eigen::Index i = 0; i < t.counts.rows(); ++i) {
        const double ai = t.row_sums(i);
        if (ai == 0.0) continue;
        for (Eigen::Index j = 0; j < t.counts.cols(); ++j) {
            const double bj = t.col_sums(j);
            if (bj == 0.0) continue;
            const long lo = std::max<long>(1, static_cast<long>(ai + bj - n));
            const long hi = static_cast<long>(std::min(ai, bj));
            for (long nij = lo; nij <= hi; ++nij) {
                const double x = static_cast<double>(nij);
                // hypergeometric pmf: C(bj, nij) C(n-bj, ai-nij) / C(n, ai)
                const double log_p = log_binomial(bj, x) + log_binomial(n - bj, ai - x) - log_binomial(n, ai);
                emi += (x / n) * std::log(n * x / (ai * bj)) * std::exp(log_p);
            }
        }
    }
    return emi;
}

double anmi(const ClusterAssignment& assignment, const Eigen::VectorXi& labels) {
    if (labels.size() != assignment.n()) throw usage_error("labels do not match assignment length");
    const ContingencyTable t = contingency_table(assignment.assignments, labels);
    const auto [hu, hv] = marginal_entropies(t);
    if (hu == 0.0 && hv == 0.0) return 1.0;  // two identical trivial partitions
    const double mi = mutual_information(t);
    const double emi = expected_mutual_information(t);
    double denom = 0.5 * (hu + hv) - emi;
    const double numer = mi - emi;
    if (std::abs(denom) < std::numeric_limits<double>::epsilon())
        denom = std::copysign(std::numeric_limits<double>::epsilon(), denom == 0.0 ? 1.0 : denom);
    return numer / denom;
}

HungarianResult hungarian_map(const ContingencyTable& table) {
    const int rows = static_cast<int>(table.counts.rows());
    const int cols = static_cast<int>(table.counts.cols());
    const int dim = std::max(rows, cols);

    // Min-cost formulation on negated counts, padded square.
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) cost(i + 1, j + 1) = -static_cast<double>(table.counts(i, j));

    std::vector<double> u(dim + 1, 0.0), v(dim + 1, 0.0);
    std::vector<int> match(dim + 1, 0), way(dim + 1, 0);
    for (int i = 1; i <= dim; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(dim + 1, std::numeric_limits<double>::infinity());
        std::vector<bool> used(dim + 1, false);
        do {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = -1;
            for (int j = 1; j <= dim; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= dim; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }

    HungarianResult result;
    result.mapping.assign(static_cast<std::size_t>(rows), -1);
    long matched = 0;
    for (int j = 1; j <= dim; ++j) {
        const int i = match[j];
        if (i >= 1 && i <= rows && j <= cols) {
            result.mapping[static_cast<std::size_t>(i - 1)] = j - 1;
            matched += table.counts(i - 1, j - 1);
        }
    }
    result.accuracy = table.n > 0 ? static_cast<double>(matched) / static_cast<double>(table.n) : 0.0;
    return result;
}

double nn_auroc(const FeatureSet& generated, const FeatureSet& train, const FeatureSet& test) {
    if (generated.n() == 0 || train.n() == 0 || test.n() == 0) throw usage_error("nn_auroc: empty feature set");
    if (generated.dim() != train.dim() || test.dim() != train.dim())
        throw usage_error("nn_auroc: feature dimensions differ");

    const Eigen::MatrixXd train_unit = unit_rows(train);
    const auto scores_of = [&](const FeatureSet& fs) {
        const Eigen::MatrixXd unit = unit_rows(fs);
        Eigen::VectorXd scores(unit.rows());
        for (Eigen::Index i = 0; i < unit.rows(); ++i)
            scores(i) = (train_unit * unit.row(i).transpose()).maxCoeff();
        return scores;
    };
    const Eigen::VectorXd pos = scores_of(test);       // in-distribution
    const Eigen::VectorXd neg = scores_of(generated);  // out-of-distribution candidates

    struct Entry {
        double score;
        bool positive;
    };
    std::vector<Entry> all;
    all.reserve(static_cast<std::size_t>(pos.size() + neg.size()));
    for (Eigen::Index i = 0; i < pos.size(); ++i) all.push_back({pos(i), true});
    for (Eigen::Index i = 0; i < neg.size(); ++i) all.push_back({neg(i), false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Midranks for ties, then the rank-sum statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j + 1 < all.size() && all[j + 1].score == all[i].score) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (all[k].positive) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double p = static_cast<double>(pos.size());
    const double n = static_cast<double>(neg.size());
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

Eigen::MatrixXd pseudo_label_probs(const FeatureSet& image_feats, const Eigen::MatrixXf& prototypes,
                                   double tau) {
    if (tau <= 0.0) throw usage_error("pseudo_label: temperature must be positive");
    if (prototypes.rows() < 1) throw usage_error("pseudo_label: no prototypes");
    if (prototypes.cols() != image_feats.dim()) throw usage_error("pseudo_label: dimension mismatch");

    Eigen::MatrixXd protos = prototypes.cast<double>();
    for (Eigen::Index k = 0; k < protos.rows(); ++k) {
        const double norm = protos.row(k).norm();
        if (norm == 0.0) throw data_error("zero-norm prototype at index " + std::to_string(k));
        protos.row(k) /= norm;
    }
    const Eigen::MatrixXd unit = unit_rows(image_feats);
    Eigen::MatrixXd scaled = (unit * protos.transpose()) / tau;
    for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
        const double mx = scaled.row(r).maxCoeff();
        scaled.row(r) = (scaled.row(r).array() - mx).exp();
        scaled.row(r) /= scaled.row(r).sum();
    }
    return scaled;
}

ClusterAssignment pseudo_label(const FeatureSet& image_feats, const Eigen::MatrixXf& prototypes, double tau) {
    const Eigen::MatrixXd probs = pseudo_label_probs(image_feats, prototypes, tau);
    Eigen::VectorXi assignments(probs.rows());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int arg = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, arg)) arg = static_cast<int>(c);
        assignments(r) = arg;
    }
    return make_cluster_assignment(std::move(assignments), static_cast<int>(prototypes.rows()),
                                   ClusterMethod::pseudo);
}

double chi_square_statistic(const Eigen::VectorXd& observed_counts, const Eigen::VectorXd& expected_probs) {
    if (observed_counts.size() != expected_probs.size()) throw usage_error("chi-square: size mismatch");
    const double total = observed_counts.sum();
    if (total <= 0.0) throw usage_error("chi-square: empty observation vector");
    double stat = 0.0;
    for (Eigen::Index i = 0; i < observed_counts.size(); ++i) {
        const double expected = total * expected_probs(i);
        if (expected <= 0.0) {
            if (observed_counts(i) > 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        const double diff = observed_counts(i) - expected;
        stat += diff * diff / expected;
    }
    return stat;
}

double chi_square_cdf(double x, int dof) {
    if (dof < 1) throw usage_error("chi-square dof must be positive");
    if (x <= 0.0) return 0.0;
    return reg_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi_square_quantile(double p, int dof) {
    if (!(p >= 0.0 && p < 1.0)) throw usage_error("chi-square quantile needs p in [0, 1)");
    if (p == 0.0) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (chi_square_cdf(hi, dof) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi_square_cdf(mid, dof) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace ccgen

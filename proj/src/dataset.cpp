#include "ccgen/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "ccgen/common.hpp"
#include "ccgen/rng.hpp"

namespace ccgen {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'F', 'S'};
constexpr std::uint8_t kVersion = 1;

void put_u32le(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t get_u32le(std::istream& in, std::size_t offset, const char* what) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4))
        throw data_error("truncated " + std::string(what) + " at byte offset " + std::to_string(offset));
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::vector<std::int64_t> default_ids(Eigen::Index n) {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
    return ids;
}

FeatureSet load_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open feature file: " + path.string());

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("bad magic in " + path.string() + " at byte offset 0");
    char version = 0, flags = 0;
    if (!in.get(version) || !in.get(flags))
        throw data_error("truncated header in " + path.string() + " at byte offset 4");
    if (static_cast<std::uint8_t>(version) != kVersion)
        throw data_error("unsupported version " + std::to_string(int(version)) + " in " + path.string());

    const std::uint32_t n = get_u32le(in, 6, "sample count");
    const std::uint32_t d = get_u32le(in, 10, "dimension");
    if (n == 0 || d == 0) throw data_error("empty feature file: " + path.string());

    FeatureSet fs;
    fs.features.resize(n, d);
    const std::size_t payload = std::size_t(n) * d * 4;
    std::vector<unsigned char> buf(payload);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload))) {
        const std::size_t got = static_cast<std::size_t>(in.gcount());
        throw data_error("declared N*D exceeds payload in " + path.string() + ": truncated at byte offset " +
                         std::to_string(14 + got));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            const std::size_t off = (std::size_t(i) * d + j) * 4;
            const std::uint32_t word = static_cast<std::uint32_t>(buf[off]) |
                                       (static_cast<std::uint32_t>(buf[off + 1]) << 8) |
                                       (static_cast<std::uint32_t>(buf[off + 2]) << 16) |
                                       (static_cast<std::uint32_t>(buf[off + 3]) << 24);
            const float v = std::bit_cast<float>(word);
            if (!std::isfinite(v))
                throw data_error("non-finite value in " + path.string() + " at byte offset " +
                                 std::to_string(14 + off));
            fs.features(i, j) = v;
        }
    }
    if (flags & 1) {
        Eigen::VectorXi labels(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t off = 14 + payload + std::size_t(i) * 4;
            labels(i) = static_cast<int>(get_u32le(in, off, "label block"));
        }
        fs.labels = std::move(labels);
    }
    fs.ids = default_ids(n);
    return fs;
}

FeatureSet load_csv(const std::filesystem::path& path, bool has_labels) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open feature file: " + path.string());

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    Eigen::Index dim = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v = 0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw data_error("unparsable value '" + cell + "' in " + path.string() + " at line " +
                                 std::to_string(lineno));
            }
            if (!std::isfinite(v))
                throw data_error("non-finite value in " + path.string() + " at line " + std::to_string(lineno));
            vals.push_back(v);
        }
        if (has_labels) {
            if (vals.size() < 2)
                throw data_error("too few columns in " + path.string() + " at line " + std::to_string(lineno));
            const double lab = vals.back();
            vals.pop_back();
            if (lab < 0 || lab != std::floor(lab))
                throw data_error("invalid label in " + path.string() + " at line " + std::to_string(lineno));
            labels.push_back(static_cast<int>(lab));
        }
        if (dim < 0) dim = static_cast<Eigen::Index>(vals.size());
        if (static_cast<Eigen::Index>(vals.size()) != dim)
            throw data_error("dimension mismatch in " + path.string() + " at line " + std::to_string(lineno));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw data_error("empty feature file: " + path.string());

    FeatureSet fs;
    fs.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < dim; ++j)
            fs.features(static_cast<Eigen::Index>(i), j) = static_cast<float>(rows[i][static_cast<std::size_t>(j)]);
    if (has_labels) {
        Eigen::VectorXi l(static_cast<Eigen::Index>(labels.size()));
        for (std::size_t i = 0; i < labels.size(); ++i) l(static_cast<Eigen::Index>(i)) = labels[i];
        fs.labels = std::move(l);
    }
    fs.ids = default_ids(fs.n());
    return fs;
}

}  // namespace

int FeatureSet::label_count() const {
    if (!labels || labels->size() == 0) return 0;
    return labels->maxCoeff() + 1;
}

FeatureSet load_features(const std::filesystem::path& path, FileFormat format, bool csv_has_labels) {
    return format == FileFormat::binary ? load_binary(path) : load_csv(path, csv_has_labels);
}

void save_features(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format,
                   bool include_labels) {
    const bool with_labels = include_labels && fs.labels.has_value();
    if (format == FileFormat::csv) {
        std::ofstream out(path);
        if (!out) throw data_error("cannot write feature file: " + path.string());
        out.precision(9);
        for (Eigen::Index i = 0; i < fs.n(); ++i) {
            for (Eigen::Index j = 0; j < fs.dim(); ++j) {
                if (j) out << ',';
                out << fs.features(i, j);
            }
            if (with_labels) out << ',' << (*fs.labels)(i);
            out << '\n';
        }
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write feature file: " + path.string());
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    out.put(static_cast<char>(with_labels ? 1 : 0));
    put_u32le(out, static_cast<std::uint32_t>(fs.n()));
    put_u32le(out, static_cast<std::uint32_t>(fs.dim()));
    for (Eigen::Index i = 0; i < fs.n(); ++i)
        for (Eigen::Index j = 0; j < fs.dim(); ++j) put_u32le(out, std::bit_cast<std::uint32_t>(fs.features(i, j)));
    if (with_labels)
        for (Eigen::Index i = 0; i < fs.n(); ++i) put_u32le(out, static_cast<std::uint32_t>((*fs.labels)(i)));
}

FeatureSet l2_normalize(const FeatureSet& fs) {
    FeatureSet out = fs;
    for (Eigen::Index i = 0; i < fs.n(); ++i) {
        const double norm = fs.features.row(i).cast<double>().norm();
        if (norm == 0.0) throw data_error("zero-norm row at index " + std::to_string(i));
        out.features.row(i) = (fs.features.row(i).cast<double>() / norm).cast<float>();
    }
    return out;
}

NeighborSets mine_knn(const FeatureSet& fs, int m) {
    const Eigen::Index n = fs.n();
    if (m < 1) throw usage_error("neighbor count m must be positive");
    if (m >= n) throw usage_error("neighbor count m=" + std::to_string(m) + " must be < N=" + std::to_string(n));

    const Eigen::MatrixXd unit = l2_normalize(fs).features.cast<double>();
    NeighborSets result;
    result.m = m;
    result.neighbors.resize(n, m);

    parallel_for(n, [&](std::int64_t i) {
        const Eigen::VectorXd sims = unit * unit.row(i).transpose();
        std::vector<int> order;
        order.reserve(static_cast<std::size_t>(n - 1));
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) order.push_back(static_cast<int>(j));
        std::partial_sort(order.begin(), order.begin() + m, order.end(), [&](int a, int b) {
            return sims(a) > sims(b) || (sims(a) == sims(b) && a < b);
        });
        for (int k = 0; k < m; ++k) result.neighbors(i, k) = order[static_cast<std::size_t>(k)];
    });
    return result;
}

FeatureSet make_synthetic(const SyntheticSpec& spec) {
    const int k = spec.modes;
    const int d = spec.dim;
    if (k < 1 || d < 1) throw usage_error("synthetic spec requires modes >= 1 and dim >= 1");
    if (static_cast<int>(spec.samples_per_mode.size()) != k)
        throw usage_error("samples_per_mode must list one count per mode");
    for (int c : spec.samples_per_mode)
        if (c < 1) throw usage_error("samples_per_mode entries must be positive");
    if (spec.mode_separation <= 0 || spec.mode_scale <= 0)
        throw usage_error("mode_separation and mode_scale must be positive");

    // Center placement: ring for D=2 (any K), scaled simplex corners for
    // D>2 (K <= D), the two endpoints for D=1.
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, d);
    if (k > 1) {
        if (d == 1) {
            if (k > 2) throw usage_error("at most 2 modes fit in 1 dimension");
            centers(0, 0) = -spec.mode_separation / 2.0;
            centers(1, 0) = spec.mode_separation / 2.0;
        } else if (d == 2) {
            const double radius = spec.mode_separation / (2.0 * std::sin(std::numbers::pi / k));
            for (int c = 0; c < k; ++c) {
                const double angle = 2.0 * std::numbers::pi * c / k;
                centers(c, 0) = radius * std::cos(angle);
                centers(c, 1) = radius * std::sin(angle);
            }
        } else {
            if (k > d)
                throw usage_error("at most dim modes fit on the simplex placement (got K=" + std::to_string(k) +
                                  ", D=" + std::to_string(d) + ")");
            const double side = spec.mode_separation / std::sqrt(2.0);
            for (int c = 0; c < k; ++c) centers(c, c) = side;
            const Eigen::RowVectorXd centroid = centers.colwise().mean();
            centers.rowwise() -= centroid;
        }
    }

    Eigen::Index total = 0;
    for (int c : spec.samples_per_mode) total += c;

    FeatureSet fs;
    fs.features.resize(total, d);
    Eigen::VectorXi labels(total);
    Rng rng(spec.seed);
    Eigen::Index row = 0;
    for (int c = 0; c < k; ++c) {
        for (int s = 0; s < spec.samples_per_mode[static_cast<std::size_t>(c)]; ++s) {
            for (int j = 0; j < d; ++j)
                fs.features(row, j) = static_cast<float>(centers(c, j) + spec.mode_scale * rng.normal());
            labels(row) = c;
            ++row;
        }
    }
    fs.labels = std::move(labels);
    fs.ids.resize(static_cast<std::size_t>(total));
    for (Eigen::Index i = 0; i < total; ++i) fs.ids[static_cast<std::size_t>(i)] = i;
    return fs;
}

}  // namespace ccgen

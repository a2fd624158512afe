#include "ccgen/bounds.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "ccgen/common.hpp"
#include "ccgen/rng.hpp"

namespace ccgen {

namespace {

BoundProbe run_probe(const FeatureSet& fs, const NeighborSets& neighbors, const BoundSearchConfig& cfg,
                     int c_probe, double gamma) {
    TemiConfig tc = cfg.temi_template;
    tc.C = c_probe;
    tc.gamma = gamma;
    tc.epochs = cfg.probe_epochs;
    tc.seed = derive_seed(cfg.seed, {0x626eULL, static_cast<std::uint64_t>(c_probe)});

    const auto start = std::chrono::steady_clock::now();
    TemiModel model = temi_init(tc, static_cast<int>(fs.dim()));
    temi_train(model, fs, neighbors);
    const ClusterAssignment assignment = temi_assign(model, fs);
    const auto stop = std::chrono::steady_clock::now();

    BoundProbe probe;
    probe.C = c_probe;
    probe.utilized = assignment.utilized;
    probe.r = utilization_ratio(assignment);
    probe.wall_time = std::chrono::duration<double>(stop - start).count();
    probe.passed = probe.r > cfg.alpha;
    return probe;
}

}  // namespace

void BoundSearchConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("alpha must lie in (0, 1]");
    if (C_start < 2) throw usage_error("C_start must be at least 2");
    if (max_doublings < 1) throw usage_error("max_doublings must be positive");
    if (probe_epochs < 1) throw usage_error("probe_epochs must be positive");
}

double utilization_ratio(const ClusterAssignment& a) {
    if (a.C < 1) throw usage_error("invalid assignment");
    return static_cast<double>(a.utilized) / static_cast<double>(a.C);
}

BoundReport find_upper_bound(const FeatureSet& fs, const NeighborSets& neighbors,
                             const BoundSearchConfig& cfg) {
    cfg.validate();
    if (cfg.C_start >= fs.n()) throw usage_error("C_start must be smaller than the dataset");

    BoundReport report;
    int last_pass = -1;
    int first_fail = -1;

    int c_probe = cfg.C_start;
    for (int step = 0; step <= cfg.max_doublings; ++step) {
        const BoundProbe probe = run_probe(fs, neighbors, cfg, c_probe, cfg.temi_template.gamma);
        report.probes.push_back(probe);
        if (probe.passed) {
            last_pass = c_probe;
        } else {
            first_fail = c_probe;
            break;
        }
        c_probe *= 2;
    }

    if (first_fail == -1)
        throw numeric_error("bound not found: r_C stayed above alpha through " +
                            std::to_string(cfg.max_doublings) + " doublings");

    if (last_pass == -1) {
        // Already below the threshold at C_start.
        report.C_max = cfg.C_start;
        report.warning = true;
        return report;
    }

    const int step = cfg.refine_step > 0 ? cfg.refine_step : std::max(1, last_pass / 8);
    for (int c = last_pass + step; c < first_fail; c += step)
        report.probes.push_back(run_probe(fs, neighbors, cfg, c, cfg.temi_template.gamma));

    std::sort(report.probes.begin(), report.probes.end(),
              [](const BoundProbe& a, const BoundProbe& b) { return a.C < b.C; });
    int c_max = cfg.C_start;
    for (const auto& probe : report.probes)
        if (probe.passed) c_max = std::max(c_max, probe.C);
    report.C_max = c_max;
    return report;
}

int find_lower_bound(const FeatureSet& fs, const NeighborSets& neighbors, int C_big,
                     const BoundSearchConfig& cfg) {
    cfg.validate();
    if (C_big < 2) throw usage_error("C_big must be at least 2");
    const BoundProbe probe = run_probe(fs, neighbors, cfg, C_big, 1.0);
    return probe.utilized;
}

nlohmann::json to_json(const BoundReport& report) {
    nlohmann::json j;
    j["C_max"] = report.C_max;
    j["warning"] = report.warning;
    if (report.C_lower) j["C_lower"] = *report.C_lower;
    auto& probes = j["probes"] = nlohmann::json::array();
    for (const auto& p : report.probes) {
        probes.push_back({{"C", p.C},
                          {"utilized", p.utilized},
                          {"r", p.r},
                          {"wall_time", p.wall_time},
                          {"passed", p.passed}});
    }
    return j;
}

void write_bound_csv(const BoundReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write bound csv: " + path.string());
    out << "C,r_C,passed,wall_time\n";
    out.precision(12);
    for (const auto& p : report.probes)
        out << p.C << ',' << p.r << ',' << (p.passed ? 1 : 0) << ',' << p.wall_time << '\n';
}

}  // namespace ccgen

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ccgen/assignment.hpp"
#include "ccgen/dataset.hpp"
#include "ccgen/temi.hpp"

namespace ccgen {

struct BoundSearchConfig {
    double alpha = 0.96;
    int C_start = 2;
    int max_doublings = 16;
    int refine_step = 0;  // 0 = auto: last passing doubling probe / 8, min 1
    TemiConfig temi_template;
    int probe_epochs = 50;  // shortened training per probe
    std::uint64_t seed = 0;

    void validate() const;
};

struct BoundProbe {
    int C = 0;
    int utilized = 0;
    double r = 0.0;
    double wall_time = 0.0;
    bool passed = false;  // r > alpha
};

struct BoundReport {
    std::vector<BoundProbe> probes;  // sorted by C
    int C_max = 0;
    std::optional<int> C_lower;
    bool warning = false;  // r already <= alpha at C_start
};

// r_C = C^u / C.
double utilization_ratio(const ClusterAssignment& a);

// Doubling search over C until r_C <= alpha, then an even refinement grid
// between the bracketing probes. Each probe is an independent TEMI run with
// a seed derived from (cfg.seed, C). Never touches the generative model.
BoundReport find_upper_bound(const FeatureSet& fs, const NeighborSets& neighbors,
                             const BoundSearchConfig& cfg);

// Utilized-cluster count of a gamma = 1 run at a large overestimate C_big.
int find_lower_bound(const FeatureSet& fs, const NeighborSets& neighbors, int C_big,
                     const BoundSearchConfig& cfg);

nlohmann::json to_json(const BoundReport& report);
void write_bound_csv(const BoundReport& report, const std::filesystem::path& path);

}  // namespace ccgen

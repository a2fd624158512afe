#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

namespace ccgen {

enum class ClusterMethod { kmeans, temi, labels, pseudo };

std::string to_string(ClusterMethod m);
ClusterMethod cluster_method_from_string(const std::string& s);

// Per-sample cluster ids plus the empirical distribution q(c) and the
// utilized-cluster count C^u.
struct ClusterAssignment {
    Eigen::VectorXi assignments;  // length N, values in [0, C)
    int C = 0;
    Eigen::VectorXd q;            // length C, sums to 1
    int utilized = 0;             // |{c : q[c] > 0}|
    ClusterMethod method_tag = ClusterMethod::kmeans;

    Eigen::Index n() const { return assignments.size(); }
};

// Frequency vector of `assignments` over C clusters; throws on out-of-range ids.
Eigen::VectorXd empirical_distribution(const Eigen::VectorXi& assignments, int C);

// Builds a full ClusterAssignment (q and utilized derived from assignments).
ClusterAssignment make_cluster_assignment(Eigen::VectorXi assignments, int C, ClusterMethod tag);

nlohmann::json to_json(const ClusterAssignment& a);
ClusterAssignment cluster_assignment_from_json(const nlohmann::json& j);

}  // namespace ccgen

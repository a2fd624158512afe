#include "ccgen/assignment.hpp"

#include "ccgen/common.hpp"

namespace ccgen {

std::string to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::kmeans: return "kmeans";
        case ClusterMethod::temi: return "temi";
        case ClusterMethod::labels: return "labels";
        case ClusterMethod::pseudo: return "pseudo";
    }
    return "kmeans";
}

ClusterMethod cluster_method_from_string(const std::string& s) {
    if (s == "kmeans") return ClusterMethod::kmeans;
    if (s == "temi") return ClusterMethod::temi;
    if (s == "labels") return ClusterMethod::labels;
    if (s == "pseudo") return ClusterMethod::pseudo;
    throw usage_error("unknown clustering method: " + s);
}

Eigen::VectorXd empirical_distribution(const Eigen::VectorXi& assignments, int C) {
    if (C < 1) throw usage_error("cluster count must be positive");
    if (assignments.size() == 0) throw usage_error("empty assignment vector");
    Eigen::VectorXd q = Eigen::VectorXd::Zero(C);
    for (Eigen::Index i = 0; i < assignments.size(); ++i) {
        const int c = assignments(i);
        if (c < 0 || c >= C)
            throw data_error("assignment " + std::to_string(c) + " at index " + std::to_string(i) +
                             " out of range [0, " + std::to_string(C) + ")");
        q(c) += 1.0;
    }
    q /= static_cast<double>(assignments.size());
    return q;
}

ClusterAssignment make_cluster_assignment(Eigen::VectorXi assignments, int C, ClusterMethod tag) {
    ClusterAssignment a;
    a.q = empirical_distribution(assignments, C);
    a.assignments = std::move(assignments);
    a.C = C;
    a.utilized = static_cast<int>((a.q.array() > 0.0).count());
    a.method_tag = tag;
    return a;
}

nlohmann::json to_json(const ClusterAssignment& a) {
    nlohmann::json j;
    j["method"] = to_string(a.method_tag);
    j["C"] = a.C;
    j["assignments"] = std::vector<int>(a.assignments.data(), a.assignments.data() + a.assignments.size());
    j["q"] = std::vector<double>(a.q.data(), a.q.data() + a.q.size());
    j["utilized"] = a.utilized;
    return j;
}

ClusterAssignment cluster_assignment_from_json(const nlohmann::json& j) {
    const auto ids = j.at("assignments").get<std::vector<int>>();
    Eigen::VectorXi assignments(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) assignments(static_cast<Eigen::Index>(i)) = ids[i];
    auto a = make_cluster_assignment(std::move(assignments), j.at("C").get<int>(),
                                     cluster_method_from_string(j.at("method").get<std::string>()));
    return a;
}

}  // namespace ccgen

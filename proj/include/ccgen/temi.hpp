#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ccgen/assignment.hpp"
#include "ccgen/dataset.hpp"
#include "ccgen/mlp.hpp"

namespace ccgen {

struct TemiConfig {
    int C = 10;
    int H = 50;
    int hidden_dim = 512;
    int bottleneck_dim = 256;
    double gamma = 0.6;        // in (0.5, 1]
    double momentum = 0.996;   // EMA lambda, in (0, 1)
    double temperature = 0.1;
    int m = 50;                // nearest-neighbor count
    int epochs = 200;
    int batch_size = 512;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

// H student/teacher head pairs over frozen embeddings. Heads are 3-layer
// MLPs D -> hidden -> hidden -> bottleneck plus a final linear projection
// to C logits (no activation after the bottleneck).
struct TemiModel {
    TemiConfig config;
    int input_dim = 0;
    std::vector<Mlp> student;      // H heads
    std::vector<Mlp> teacher;      // same shapes as student
    Eigen::MatrixXd qt_tilde;      // H x C EMA cluster-distribution estimates
    Eigen::VectorXd per_head_loss; // running mean loss per head (last epoch)
    long step = 0;
};

// Anchor/neighbor index pairs; neighbors[j] must be in the anchor's NN set.
struct PairBatch {
    std::vector<int> anchors;
    std::vector<int> neighbors;

    std::size_t size() const { return anchors.size(); }
};

TemiModel temi_init(const TemiConfig& config, int feature_dim);

// softmax(logits / tau) with max-subtraction.
Eigen::VectorXd head_probs(const Mlp& head, const Eigen::VectorXd& z, double tau);
Eigen::MatrixXd head_probs_batch(const Mlp& head, const Eigen::MatrixXd& z, double tau);

// The pointwise-mutual-information pair objective for head i, one direction:
//   -(1/H) sum_j sum_c' qt_j(c'|x) qt_j(c'|x')  *  log sum_c (qs_i(c|x) qt_i(c|x'))^gamma / qt_tilde_i(c)
// evaluated from explicit probability tables. qt_tilde entries are floored
// at 1e-12 before division.
double temi_pair_loss_from_probs(const Eigen::MatrixXd& qt_x, const Eigen::MatrixXd& qt_xp,
                                 const Eigen::VectorXd& qs_x, int head, const Eigen::MatrixXd& qt_tilde,
                                 double gamma);

// Model-level wrapper of the above for feature rows x, x'.
double temi_pair_loss(const TemiModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& xp, int head);

struct TemiBatchLoss {
    Eigen::VectorXd per_head;  // mean symmetrized loss per head
    double mean = 0.0;         // grand mean over heads, the training objective
};

// Symmetrized batch loss, no gradients.
TemiBatchLoss temi_loss(const TemiModel& model, const Eigen::MatrixXd& features, const PairBatch& batch);

struct TemiOptimizer {
    AdamParams hp;
    std::vector<MlpAdam> per_head;

    static TemiOptimizer create(const TemiModel& model);
};

// Analytic gradients of the grand-mean symmetrized objective w.r.t. every
// student head's parameters (teacher terms are constants).
std::vector<MlpGrads> temi_batch_gradients(const TemiModel& model, const Eigen::MatrixXd& features,
                                           const PairBatch& batch, Eigen::VectorXd* per_head_out = nullptr,
                                           Eigen::MatrixXd* batch_teacher_mean_out = nullptr);

// One training step: analytic gradients of the symmetrized objective w.r.t.
// student parameters, AdamW update, then teacher and cluster-distribution
// EMA updates. Returns the batch objective.
double temi_train_step(TemiModel& model, const Eigen::MatrixXd& features, const PairBatch& batch,
                       TemiOptimizer& opt, Eigen::VectorXd* per_head_out = nullptr);

void teacher_ema_update(TemiModel& model);

// qt_tilde <- lambda qt_tilde + (1 - lambda) * batch_mean, rows kept normalized.
void cluster_dist_ema_update(TemiModel& model, const Eigen::MatrixXd& batch_teacher_mean /* H x C */);

struct TemiCurvePoint {
    long step = 0;
    double mean_loss = 0.0;
    double per_head_min = 0.0;
};

struct TemiTrainResult {
    std::vector<TemiCurvePoint> curve;
    double final_mean_loss = 0.0;
};

// Full training loop: per epoch, anchors are shuffled and each anchor is
// paired with a uniformly drawn neighbor from its NN set.
TemiTrainResult temi_train(TemiModel& model, const FeatureSet& fs, const NeighborSets& neighbors);

// Assignments from the teacher of the head with the lowest running loss.
ClusterAssignment temi_assign(const TemiModel& model, const FeatureSet& fs);

// Max softmax probability of the selected head's teacher, per sample.
Eigen::VectorXd msp_confidence(const TemiModel& model, const FeatureSet& fs);

void save_temi(const TemiModel& model, const std::filesystem::path& path);
TemiModel load_temi(const std::filesystem::path& path);

void write_temi_curve_csv(const TemiTrainResult& result, const std::filesystem::path& path);

}  // namespace ccgen

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccgen/assignment.hpp"
#include "ccgen/dataset.hpp"
#include "ccgen/mlp.hpp"
#include "ccgen/rng.hpp"

namespace ccgen {

// Karras-style sigma parameterization: rho-spaced sampling grid plus a
// log-normal training-noise density exp(p_mean + p_std * n).
struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double p_mean = -1.2;
    double p_std = 1.2;
    int num_steps = 32;

    void validate() const;
};

// num_steps descending noise levels followed by a terminal 0.
Eigen::VectorXd sigma_grid(const NoiseSchedule& schedule);

enum class Solver { heun, euler };
enum class ConditionSource { cluster, labels, none };

ConditionSource condition_source_from_string(const std::string& s);
std::string to_string(ConditionSource s);

struct DenoiserConfig {
    int hidden = 64;
    int hidden_layers = 3;
    int fourier_pairs = 4;  // sin/cos pairs in the sigma embedding
    double sigma_data = 0.5;
};

// Conditional denoiser: MLP over [c_in * x, sigma embedding] with a learned
// condition embedding added to the first hidden layer. Row C of the table is
// the reserved unconditional id.
struct DiffusionModel {
    Mlp net;
    Eigen::MatrixXd condition_table;  // (C+1) x hidden
    int data_dim = 0;
    int condition_count = 0;  // C
    double sigma_data = 0.5;
    Eigen::VectorXd fourier_freqs;

    int embedding_dim() const { return 1 + 2 * static_cast<int>(fourier_freqs.size()); }
};

DiffusionModel diffusion_init(int data_dim, int condition_count, const DenoiserConfig& cfg,
                              std::uint64_t seed);

// EDM preconditioning coefficients.
double precond_c_skip(double sigma, double sigma_data);
double precond_c_out(double sigma, double sigma_data);
double precond_c_in(double sigma, double sigma_data);
double precond_c_noise(double sigma);
double edm_loss_weight(double sigma, double sigma_data);

double sample_training_sigma(const NoiseSchedule& schedule, Rng& rng);

// Denoised estimate D(x, sigma, c) for a batch at one noise level.
Eigen::MatrixXd denoise(const DiffusionModel& model, const Eigen::MatrixXd& x, double sigma,
                        const Eigen::VectorXi& cond);
Eigen::VectorXd denoise(const DiffusionModel& model, const Eigen::VectorXd& x, double sigma, int cond);

// Score recovery: (x_hat - x) / sigma^2.
Eigen::MatrixXd score_from_denoiser(const Eigen::MatrixXd& x, double sigma, const Eigen::MatrixXd& x_hat);

struct DiffusionBatch {
    Eigen::MatrixXd y;      // clean rows, B x D
    Eigen::VectorXi cond;   // B condition ids in [0, C]
    Eigen::VectorXd sigma;  // B noise levels
    Eigen::MatrixXd noise;  // B x D, scaled N(0, sigma^2 I)
};

struct DiffusionGrads {
    MlpGrads net;
    Eigen::MatrixXd cond_table;
};

DiffusionGrads diffusion_zero_grads(const DiffusionModel& model);

// Weighted L2 denoising loss w(sigma) ||D(y + n, sigma, c) - y||^2, batch
// mean; analytic gradients when out_grads is non-null.
double diffusion_loss(const DiffusionModel& model, const DiffusionBatch& batch, DiffusionGrads* out_grads);

struct TrainRunConfig {
    long m_img = 200000;  // total samples seen
    int batch_size = 256;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    ConditionSource condition_source = ConditionSource::none;
    double divergence_threshold = 1e6;

    void validate() const;
};

// Full training state; checkpointing it reproduces interrupted runs bitwise.
struct DiffusionTrainer {
    DiffusionModel model;
    TrainRunConfig cfg;
    NoiseSchedule schedule;
    AdamParams hp;
    MlpAdam net_opt;
    AdamMoments table_mom;
    Rng order_rng{0};
    Rng noise_rng{0};
    long samples_seen = 0;
    long step = 0;
    std::vector<int> perm;
    std::size_t perm_pos = 0;
};

DiffusionTrainer make_diffusion_trainer(DiffusionModel model, const TrainRunConfig& cfg,
                                        const NoiseSchedule& schedule);

using MilestoneHook = std::function<void(long samples_seen, const DiffusionTrainer&)>;
using TrainObserver = std::function<void(long step, const std::vector<int>& batch_indices, double loss)>;

struct DiffusionTrainResult {
    std::vector<std::pair<long, double>> loss_curve;  // (samples_seen, loss)
};

// Runs until cfg.m_img samples are seen. Conditions come from the
// assignment, the dataset labels, or the reserved unconditional id.
DiffusionTrainResult train_diffusion(DiffusionTrainer& trainer, const FeatureSet& data,
                                     const ClusterAssignment* assignment,
                                     const std::vector<long>& milestones = {},
                                     const MilestoneHook& on_milestone = {},
                                     const TrainObserver& observer = {});

std::vector<long> milestone_schedule(long m_img, int count);

Eigen::VectorXd uniform_distribution(int C);

// i.i.d. categorical draws from q.
Eigen::VectorXi sample_conditions(const Eigen::VectorXd& q, int n, Rng& rng);

using DenoiserFn =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double sigma, const Eigen::VectorXi& cond)>;

// Deterministic probability-flow sampling on the rho grid; Heun trapezoidal
// correction except on the final step to sigma = 0. x0_out, when non-null,
// receives the initial noise draws.
Eigen::MatrixXd heun_sample(const DenoiserFn& denoiser, int data_dim, const Eigen::VectorXi& conditions,
                            const NoiseSchedule& schedule, Rng& rng, Solver solver = Solver::heun,
                            Eigen::MatrixXd* x0_out = nullptr);
Eigen::MatrixXd heun_sample(const DiffusionModel& model, const Eigen::VectorXi& conditions,
                            const NoiseSchedule& schedule, Rng& rng, Solver solver = Solver::heun,
                            Eigen::MatrixXd* x0_out = nullptr);

void save_diffusion_checkpoint(const DiffusionTrainer& trainer, const std::filesystem::path& path);
DiffusionTrainer load_diffusion_checkpoint(const std::filesystem::path& path);

void write_diffusion_curve_csv(const DiffusionTrainResult& result, const std::filesystem::path& path);

}  // namespace ccgen

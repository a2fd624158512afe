#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ccgen/rng.hpp"

namespace ccgen {

enum class Activation { none, gelu };

// y = 0.5 x (1 + erf(x / sqrt(2))), the exact form, so finite-difference
// gradient checks see a smooth function.
double gelu(double x);
double gelu_grad(double x);

struct LinearLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
    Activation act = Activation::none;
};

// Plain fully connected net over row-major batches (B x dim). All math in
// 64-bit; weights live in 64-bit too so gradient checks are exact.
struct Mlp {
    std::vector<LinearLayer> layers;

    Eigen::Index in_dim() const { return layers.front().W.cols(); }
    Eigen::Index out_dim() const { return layers.back().W.rows(); }
};

struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

struct MlpGrads {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
};

Mlp mlp_init(const std::vector<int>& sizes, const std::vector<Activation>& acts, Rng& rng,
             double last_layer_scale = 1.0);

// extra0, when given, is added to the first layer's pre-activation (one row
// per batch row); the conditioning hook for the diffusion denoiser.
Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache = nullptr,
                            const Eigen::MatrixXd* extra0 = nullptr);

// Backpropagates dLoss/dOutput. Accumulates into grads (caller zeroes).
// When d_extra0 is non-null it receives dLoss/dExtra0.
void mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& d_out, MlpGrads& grads,
                  Eigen::MatrixXd* d_extra0 = nullptr);

MlpGrads mlp_zero_grads(const Mlp& net);

// Visits every parameter in declaration order (W row-major, then b, per layer).
template <class F>
void for_each_param(Mlp& net, F&& f) {
    for (auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) f(layer.W(r, c));
        for (Eigen::Index i = 0; i < layer.b.size(); ++i) f(layer.b(i));
    }
}

Eigen::VectorXd flatten_grads(const MlpGrads& grads);

// Adam with decoupled weight decay; weight_decay = 0 gives plain Adam.
struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamMoments {
    Eigen::MatrixXd m, v;
};

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad, AdamMoments& mom,
                 const AdamParams& hp, long t);

// Optimizer state for one Mlp.
struct MlpAdam {
    std::vector<AdamMoments> w_mom;
    std::vector<AdamMoments> b_mom;
    long t = 0;

    void init(const Mlp& net);
    void step(Mlp& net, const MlpGrads& grads, const AdamParams& hp);
};

}  // namespace ccgen

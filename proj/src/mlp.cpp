#include "ccgen/mlp.hpp"

#include <cmath>

#include "ccgen/common.hpp"

namespace ccgen {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mlp mlp_init(const std::vector<int>& sizes, const std::vector<Activation>& acts, Rng& rng,
             double last_layer_scale) {
    if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
        throw usage_error("mlp_init: sizes must list >=2 dims with one activation per layer");
    Mlp net;
    net.layers.resize(sizes.size() - 1);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        const bool last = l + 1 == net.layers.size();
        const double scale = std::sqrt(2.0 / in) * (last ? last_layer_scale : 1.0);
        auto& layer = net.layers[l];
        layer.W.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) layer.W(r, c) = scale * rng.normal();
        layer.b = Eigen::VectorXd::Zero(out);
        layer.act = acts[l];
    }
    return net;
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache,
                            const Eigen::MatrixXd* extra0) {
    if (cache) {
        cache->inputs.assign(net.layers.size(), {});
        cache->pre.assign(net.layers.size(), {});
    }
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        if (cache) cache->inputs[l] = h;
        Eigen::MatrixXd pre = h * layer.W.transpose();
        pre.rowwise() += layer.b.transpose();
        if (l == 0 && extra0) pre += *extra0;
        if (cache) cache->pre[l] = pre;
        if (layer.act == Activation::gelu)
            h = pre.unaryExpr([](double v) { return gelu(v); });
        else
            h = std::move(pre);
    }
    return h;
}

void mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& d_out, MlpGrads& grads,
                  Eigen::MatrixXd* d_extra0) {
    Eigen::MatrixXd d_post = d_out;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& layer = net.layers[li];
        Eigen::MatrixXd d_pre;
        if (layer.act == Activation::gelu)
            d_pre = d_post.cwiseProduct(cache.pre[li].unaryExpr([](double v) { return gelu_grad(v); }));
        else
            d_pre = std::move(d_post);
        grads.dW[li].noalias() += d_pre.transpose() * cache.inputs[li];
        grads.db[li] += d_pre.colwise().sum().transpose();
        if (li == 0) {
            if (d_extra0) *d_extra0 = d_pre;
        } else {
            d_post.noalias() = d_pre * layer.W;
        }
    }
}

MlpGrads mlp_zero_grads(const Mlp& net) {
    MlpGrads g;
    g.dW.reserve(net.layers.size());
    g.db.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        g.dW.emplace_back(Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()));
        g.db.emplace_back(Eigen::VectorXd::Zero(layer.b.size()));
    }
    return g;
}

Eigen::VectorXd flatten_grads(const MlpGrads& grads) {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) total += grads.dW[l].size() + grads.db[l].size();
    Eigen::VectorXd flat(total);
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) {
        const auto& dw = grads.dW[l];
        for (Eigen::Index r = 0; r < dw.rows(); ++r)
            for (Eigen::Index c = 0; c < dw.cols(); ++c) flat(at++) = dw(r, c);
        for (Eigen::Index i = 0; i < grads.db[l].size(); ++i) flat(at++) = grads.db[l](i);
    }
    return flat;
}

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad, AdamMoments& mom,
                 const AdamParams& hp, long t) {
    mom.m = hp.beta1 * mom.m + (1.0 - hp.beta1) * grad;
    mom.v = hp.beta2 * mom.v + (1.0 - hp.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    if (hp.weight_decay > 0.0) param -= hp.lr * hp.weight_decay * param;
    param.array() -= hp.lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + hp.eps);
}

void MlpAdam::init(const Mlp& net) {
    w_mom.clear();
    b_mom.clear();
    for (const auto& layer : net.layers) {
        w_mom.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                         Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols())});
        b_mom.push_back({Eigen::MatrixXd::Zero(layer.b.size(), 1), Eigen::MatrixXd::Zero(layer.b.size(), 1)});
    }
    t = 0;
}

void MlpAdam::step(Mlp& net, const MlpGrads& grads, const AdamParams& hp) {
    ++t;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        adam_update(net.layers[l].W, grads.dW[l], w_mom[l], hp, t);
        Eigen::Map<Eigen::MatrixXd> b_view(net.layers[l].b.data(), net.layers[l].b.size(), 1);
        adam_update(b_view, grads.db[l], b_mom[l], hp, t);
    }
}

}  // namespace ccgen

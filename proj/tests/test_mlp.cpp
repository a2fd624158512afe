#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccgen/mlp.hpp"
#include "ccgen/rng.hpp"

using namespace ccgen;

namespace {

// Scalar probe loss: sum of squared outputs.
double probe_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd* extra0 = nullptr) {
    return mlp_forward(net, x, nullptr, extra0).squaredNorm();
}

}  // namespace

TEST_CASE("gelu matches its derivative by finite differences") {
    const double h = 1e-6;
    for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 2.5}) {
        const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
        CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(10.0) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("backprop matches central finite differences") {
    Rng rng(5);
    Mlp net = mlp_init({3, 8, 8, 2}, {Activation::gelu, Activation::gelu, Activation::none}, rng);
    Eigen::MatrixXd x(4, 3);
    rng.fill_normal(x);

    MlpCache cache;
    const Eigen::MatrixXd out = mlp_forward(net, x, &cache);
    MlpGrads grads = mlp_zero_grads(net);
    mlp_backward(net, cache, 2.0 * out, grads);
    const Eigen::VectorXd flat = flatten_grads(grads);

    const double h = 1e-5;
    Eigen::Index at = 0;
    double max_rel = 0.0;
    for_each_param(net, [&](double& p) {
        const double saved = p;
        p = saved + h;
        const double up = probe_loss(net, x);
        p = saved - h;
        const double dn = probe_loss(net, x);
        p = saved;
        const double fd = (up - dn) / (2 * h);
        const double rel = std::abs(fd - flat(at)) / std::max(1.0, std::abs(fd));
        max_rel = std::max(max_rel, rel);
        ++at;
    });
    CHECK(max_rel < 1e-6);
}

TEST_CASE("extra0 gradients match finite differences") {
    Rng rng(6);
    Mlp net = mlp_init({2, 6, 2}, {Activation::gelu, Activation::none}, rng);
    Eigen::MatrixXd x(3, 2), extra0(3, 6);
    rng.fill_normal(x);
    rng.fill_normal(extra0);

    MlpCache cache;
    const Eigen::MatrixXd out = mlp_forward(net, x, &cache, &extra0);
    MlpGrads grads = mlp_zero_grads(net);
    Eigen::MatrixXd d_extra0;
    mlp_backward(net, cache, 2.0 * out, grads, &d_extra0);

    const double h = 1e-5;
    for (Eigen::Index r = 0; r < extra0.rows(); ++r) {
        for (Eigen::Index c = 0; c < extra0.cols(); ++c) {
            const double saved = extra0(r, c);
            extra0(r, c) = saved + h;
            const double up = probe_loss(net, x, &extra0);
            extra0(r, c) = saved - h;
            const double dn = probe_loss(net, x, &extra0);
            extra0(r, c) = saved;
            const double fd = (up - dn) / (2 * h);
            CHECK(d_extra0(r, c) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    Rng rng(7);
    Mlp net = mlp_init({2, 4, 1}, {Activation::gelu, Activation::none}, rng);
    const Eigen::MatrixXd w0 = net.layers[0].W;
    MlpAdam opt;
    opt.init(net);
    AdamParams hp;
    opt.step(net, mlp_zero_grads(net), hp);
    CHECK((net.layers[0].W - w0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoupled weight decay shrinks parameters without gradients") {
    Rng rng(8);
    Mlp net = mlp_init({2, 4, 1}, {Activation::gelu, Activation::none}, rng);
    const Eigen::MatrixXd w0 = net.layers[0].W;
    MlpAdam opt;
    opt.init(net);
    AdamParams hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.5;
    opt.step(net, mlp_zero_grads(net), hp);
    CHECK((net.layers[0].W - (1.0 - hp.lr * hp.weight_decay) * w0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mlp_init is deterministic per seed") {
    Rng rng1(9), rng2(9);
    const Mlp a = mlp_init({3, 5, 2}, {Activation::gelu, Activation::none}, rng1);
    const Mlp b = mlp_init({3, 5, 2}, {Activation::gelu, Activation::none}, rng2);
    CHECK((a.layers[0].W - b.layers[0].W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.layers[1].W - b.layers[1].W).cwiseAbs().maxCoeff() == 0.0);
}

#include "ccgen/temi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ccgen/binio.hpp"
#include "ccgen/common.hpp"
#include "ccgen/rng.hpp"

namespace ccgen {

namespace {

constexpr double kDistFloor = 1e-12;  // q~_t floor before division
constexpr char kMagic[4] = {'C', 'C', 'T', 'M'};

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd scaled) {
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
        const double mx = scaled.row(i).maxCoeff();
        scaled.row(i) = (scaled.row(i).array() - mx).exp();
        scaled.row(i) /= scaled.row(i).sum();
    }
    return scaled;
}

Eigen::MatrixXd probs_from_logits(const Eigen::MatrixXd& logits, double tau) {
    if (!logits.allFinite()) throw numeric_error("non-finite head logits");
    return softmax_rows(logits / tau);
}

std::vector<int> head_sizes(const TemiConfig& cfg, int feature_dim) {
    return {feature_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.bottleneck_dim, cfg.C};
}

// Everything both loss directions need, computed once per batch.
struct BatchTeacher {
    Eigen::MatrixXd a, p;                 // B x D feature rows
    std::vector<Eigen::MatrixXd> qt_a;    // per head, B x C
    std::vector<Eigen::MatrixXd> qt_p;
    Eigen::VectorXd pair_weight;          // B
};

BatchTeacher teacher_pass(const TemiModel& model, const Eigen::MatrixXd& features, const PairBatch& batch) {
    const int h_count = model.config.H;
    const auto b = static_cast<Eigen::Index>(batch.size());
    BatchTeacher out;
    out.a.resize(b, features.cols());
    out.p.resize(b, features.cols());
    for (Eigen::Index r = 0; r < b; ++r) {
        out.a.row(r) = features.row(batch.anchors[static_cast<std::size_t>(r)]);
        out.p.row(r) = features.row(batch.neighbors[static_cast<std::size_t>(r)]);
    }
    out.qt_a.resize(static_cast<std::size_t>(h_count));
    out.qt_p.resize(static_cast<std::size_t>(h_count));
    parallel_for(h_count, [&](std::int64_t j) {
        const auto ju = static_cast<std::size_t>(j);
        out.qt_a[ju] = head_probs_batch(model.teacher[ju], out.a, model.config.temperature);
        out.qt_p[ju] = head_probs_batch(model.teacher[ju], out.p, model.config.temperature);
    });
    out.pair_weight = Eigen::VectorXd::Zero(b);
    for (int j = 0; j < h_count; ++j)
        out.pair_weight += out.qt_a[static_cast<std::size_t>(j)]
                               .cwiseProduct(out.qt_p[static_cast<std::size_t>(j)])
                               .rowwise()
                               .sum();
    out.pair_weight /= static_cast<double>(h_count);
    return out;
}

Eigen::VectorXd floored_dist(const TemiModel& model, int head) {
    return model.qt_tilde.row(head).transpose().cwiseMax(kDistFloor);
}

// One direction of the pair loss for head i across the batch. Returns the
// per-pair loss vector; optionally the gradient w.r.t. the student logits
// that produced qs (including the 1/(2 B H) objective scaling). The inner
// sum is floored like the distribution estimate so hand-built one-hot
// disagreements stay finite.
Eigen::VectorXd direction_loss(const Eigen::MatrixXd& qs, const Eigen::MatrixXd& qt,
                               const Eigen::VectorXd& dist_floor, const Eigen::VectorXd& pair_weight,
                               double gamma, double tau, double grad_scale, Eigen::MatrixXd* d_logits) {
    // terms(b,c) = (qs qt)^gamma / q~, summed to s_b
    Eigen::MatrixXd terms = (qs.cwiseProduct(qt)).array().pow(gamma).matrix();
    terms.array().rowwise() /= dist_floor.transpose().array();
    const Eigen::VectorXd s = terms.rowwise().sum().cwiseMax(kDistFloor);
    const Eigen::VectorXd loss = -pair_weight.cwiseProduct(s.array().log().matrix());
    if (d_logits) {
        // dL_b/dqs(b,c) = -w_b * gamma * terms(b,c) / (s_b * qs(b,c))
        Eigen::MatrixXd g = terms;
        g.array() *= (-gamma * grad_scale) * (pair_weight.array() / s.array()).replicate(1, qs.cols());
        g.array() /= qs.array();
        // softmax-with-temperature backward
        const Eigen::VectorXd dot = g.cwiseProduct(qs).rowwise().sum();
        *d_logits = (qs.array() * (g.array().colwise() - dot.array())).matrix() / tau;
    }
    return loss;
}

void require_valid_batch(const PairBatch& batch, Eigen::Index n) {
    if (batch.anchors.empty()) throw usage_error("empty pair batch");
    if (batch.anchors.size() != batch.neighbors.size())
        throw usage_error("pair batch index vectors differ in length");
    for (std::size_t j = 0; j < batch.anchors.size(); ++j) {
        if (batch.anchors[j] < 0 || batch.anchors[j] >= n || batch.neighbors[j] < 0 || batch.neighbors[j] >= n)
            throw usage_error("pair batch index out of range");
    }
}

}  // namespace

void TemiConfig::validate() const {
    if (C < 1) throw usage_error("temi: cluster count must be positive");
    if (H < 1) throw usage_error("temi: head count must be positive");
    if (hidden_dim < 1 || bottleneck_dim < 1) throw usage_error("temi: layer dims must be positive");
    if (!(gamma > 0.5 && gamma <= 1.0)) throw usage_error("temi: gamma must lie in (0.5, 1]");
    if (!(momentum > 0.0 && momentum < 1.0)) throw usage_error("temi: momentum must lie in (0, 1)");
    if (temperature <= 0.0) throw usage_error("temi: temperature must be positive");
    if (m < 1) throw usage_error("temi: neighbor count must be positive");
    if (epochs < 1 || batch_size < 1) throw usage_error("temi: epochs and batch_size must be positive");
}

TemiModel temi_init(const TemiConfig& config, int feature_dim) {
    config.validate();
    if (feature_dim < 1) throw usage_error("temi: feature dim must be positive");

    TemiModel model;
    model.config = config;
    model.input_dim = feature_dim;
    const std::vector<Activation> acts = {Activation::gelu, Activation::gelu, Activation::none,
                                          Activation::none};
    const auto sizes = head_sizes(config, feature_dim);
    Rng rng(derive_seed(config.seed, {0x7465ULL}));
    model.student.reserve(static_cast<std::size_t>(config.H));
    for (int h = 0; h < config.H; ++h) model.student.push_back(mlp_init(sizes, acts, rng));
    model.teacher = model.student;
    model.qt_tilde = Eigen::MatrixXd::Constant(config.H, config.C, 1.0 / config.C);
    model.per_head_loss = Eigen::VectorXd::Zero(config.H);
    return model;
}

Eigen::VectorXd head_probs(const Mlp& head, const Eigen::VectorXd& z, double tau) {
    return head_probs_batch(head, z.transpose(), tau).row(0).transpose();
}

Eigen::MatrixXd head_probs_batch(const Mlp& head, const Eigen::MatrixXd& z, double tau) {
    if (tau <= 0.0) throw usage_error("temperature must be positive");
    return probs_from_logits(mlp_forward(head, z), tau);
}

double temi_pair_loss_from_probs(const Eigen::MatrixXd& qt_x, const Eigen::MatrixXd& qt_xp,
                                 const Eigen::VectorXd& qs_x, int head, const Eigen::MatrixXd& qt_tilde,
                                 double gamma) {
    const int h_count = static_cast<int>(qt_x.rows());
    const int c_count = static_cast<int>(qt_x.cols());
    double weight = 0.0;
    for (int j = 0; j < h_count; ++j) weight += qt_x.row(j).dot(qt_xp.row(j));
    weight /= static_cast<double>(h_count);
    double s = 0.0;
    for (int c = 0; c < c_count; ++c) {
        const double denom = std::max(qt_tilde(head, c), kDistFloor);
        s += std::pow(qs_x(c) * qt_xp(head, c), gamma) / denom;
    }
    return -weight * std::log(std::max(s, kDistFloor));
}

double temi_pair_loss(const TemiModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& xp, int head) {
    if (head < 0 || head >= model.config.H) throw usage_error("head index out of range");
    const int h_count = model.config.H;
    Eigen::MatrixXd qt_x(h_count, model.config.C), qt_xp(h_count, model.config.C);
    for (int j = 0; j < h_count; ++j) {
        qt_x.row(j) = head_probs(model.teacher[static_cast<std::size_t>(j)], x, model.config.temperature)
                          .transpose();
        qt_xp.row(j) = head_probs(model.teacher[static_cast<std::size_t>(j)], xp, model.config.temperature)
                           .transpose();
    }
    const Eigen::VectorXd qs_x =
        head_probs(model.student[static_cast<std::size_t>(head)], x, model.config.temperature);
    return temi_pair_loss_from_probs(qt_x, qt_xp, qs_x, head, model.qt_tilde, model.config.gamma);
}

TemiBatchLoss temi_loss(const TemiModel& model, const Eigen::MatrixXd& features, const PairBatch& batch) {
    require_valid_batch(batch, features.rows());
    const auto teacher = teacher_pass(model, features, batch);
    const int h_count = model.config.H;
    const auto b = static_cast<double>(batch.size());

    TemiBatchLoss out;
    out.per_head = Eigen::VectorXd::Zero(h_count);
    parallel_for(h_count, [&](std::int64_t i) {
        const auto iu = static_cast<std::size_t>(i);
        const Eigen::MatrixXd qs_a = head_probs_batch(model.student[iu], teacher.a, model.config.temperature);
        const Eigen::MatrixXd qs_p = head_probs_batch(model.student[iu], teacher.p, model.config.temperature);
        const Eigen::VectorXd dist = floored_dist(model, static_cast<int>(i));
        const Eigen::VectorXd l1 = direction_loss(qs_a, teacher.qt_p[iu], dist, teacher.pair_weight,
                                                  model.config.gamma, model.config.temperature, 0.0, nullptr);
        const Eigen::VectorXd l2 = direction_loss(qs_p, teacher.qt_a[iu], dist, teacher.pair_weight,
                                                  model.config.gamma, model.config.temperature, 0.0, nullptr);
        out.per_head(i) = 0.5 * (l1.sum() + l2.sum()) / b;
    });
    out.mean = out.per_head.mean();
    return out;
}

TemiOptimizer TemiOptimizer::create(const TemiModel& model) {
    TemiOptimizer opt;
    opt.hp.lr = model.config.learning_rate;
    opt.hp.weight_decay = model.config.weight_decay;
    opt.per_head.resize(static_cast<std::size_t>(model.config.H));
    for (int h = 0; h < model.config.H; ++h)
        opt.per_head[static_cast<std::size_t>(h)].init(model.student[static_cast<std::size_t>(h)]);
    return opt;
}

std::vector<MlpGrads> temi_batch_gradients(const TemiModel& model, const Eigen::MatrixXd& features,
                                           const PairBatch& batch, Eigen::VectorXd* per_head_out,
                                           Eigen::MatrixXd* batch_teacher_mean_out) {
    require_valid_batch(batch, features.rows());
    const auto teacher = teacher_pass(model, features, batch);
    const int h_count = model.config.H;
    const auto b = static_cast<double>(batch.size());
    const double tau = model.config.temperature;
    // Gradient of the grand-mean objective: mean over pairs, halves of both
    // directions, mean over heads.
    const double grad_scale = 1.0 / (2.0 * b * static_cast<double>(h_count));

    Eigen::VectorXd per_head = Eigen::VectorXd::Zero(h_count);
    std::vector<MlpGrads> all_grads(static_cast<std::size_t>(h_count));
    parallel_for(h_count, [&](std::int64_t i) {
        const auto iu = static_cast<std::size_t>(i);
        const Mlp& net = model.student[iu];
        MlpCache cache_a, cache_p;
        const Eigen::MatrixXd logits_a = mlp_forward(net, teacher.a, &cache_a);
        const Eigen::MatrixXd logits_p = mlp_forward(net, teacher.p, &cache_p);
        const Eigen::MatrixXd qs_a = probs_from_logits(logits_a, tau);
        const Eigen::MatrixXd qs_p = probs_from_logits(logits_p, tau);
        const Eigen::VectorXd dist = floored_dist(model, static_cast<int>(i));

        Eigen::MatrixXd d_logits_a, d_logits_p;
        const Eigen::VectorXd l1 = direction_loss(qs_a, teacher.qt_p[iu], dist, teacher.pair_weight,
                                                  model.config.gamma, tau, grad_scale, &d_logits_a);
        const Eigen::VectorXd l2 = direction_loss(qs_p, teacher.qt_a[iu], dist, teacher.pair_weight,
                                                  model.config.gamma, tau, grad_scale, &d_logits_p);
        per_head(i) = 0.5 * (l1.sum() + l2.sum()) / b;

        MlpGrads grads = mlp_zero_grads(net);
        mlp_backward(net, cache_a, d_logits_a, grads);
        mlp_backward(net, cache_p, d_logits_p, grads);
        for (const auto& dw : grads.dW)
            if (!dw.allFinite()) throw numeric_error("non-finite gradient in temi head " + std::to_string(i));
        all_grads[iu] = std::move(grads);
    });

    if (per_head_out) *per_head_out = per_head;
    if (batch_teacher_mean_out) {
        batch_teacher_mean_out->resize(h_count, model.config.C);
        for (int j = 0; j < h_count; ++j)
            batch_teacher_mean_out->row(j) = teacher.qt_a[static_cast<std::size_t>(j)].colwise().mean();
    }
    return all_grads;
}

double temi_train_step(TemiModel& model, const Eigen::MatrixXd& features, const PairBatch& batch,
                       TemiOptimizer& opt, Eigen::VectorXd* per_head_out) {
    Eigen::VectorXd per_head;
    Eigen::MatrixXd batch_teacher_mean;
    const std::vector<MlpGrads> grads =
        temi_batch_gradients(model, features, batch, &per_head, &batch_teacher_mean);

    parallel_for(model.config.H, [&](std::int64_t i) {
        const auto iu = static_cast<std::size_t>(i);
        opt.per_head[iu].step(model.student[iu], grads[iu], opt.hp);
    });
    teacher_ema_update(model);
    cluster_dist_ema_update(model, batch_teacher_mean);

    ++model.step;
    if (per_head_out) *per_head_out = per_head;
    return per_head.mean();
}

void teacher_ema_update(TemiModel& model) {
    const double lambda = model.config.momentum;
    for (int h = 0; h < model.config.H; ++h) {
        auto& t = model.teacher[static_cast<std::size_t>(h)];
        const auto& s = model.student[static_cast<std::size_t>(h)];
        for (std::size_t l = 0; l < t.layers.size(); ++l) {
            t.layers[l].W = lambda * t.layers[l].W + (1.0 - lambda) * s.layers[l].W;
            t.layers[l].b = lambda * t.layers[l].b + (1.0 - lambda) * s.layers[l].b;
        }
    }
}

void cluster_dist_ema_update(TemiModel& model, const Eigen::MatrixXd& batch_teacher_mean) {
    if (batch_teacher_mean.rows() != model.config.H || batch_teacher_mean.cols() != model.config.C)
        throw usage_error("batch teacher mean has wrong shape");
    const double lambda = model.config.momentum;
    model.qt_tilde = lambda * model.qt_tilde + (1.0 - lambda) * batch_teacher_mean;
}

TemiTrainResult temi_train(TemiModel& model, const FeatureSet& fs, const NeighborSets& neighbors) {
    const Eigen::Index n = fs.n();
    if (neighbors.neighbors.rows() != n) throw usage_error("neighbor table does not match dataset");
    const int m = std::min(model.config.m, neighbors.m);
    if (m < 1) throw usage_error("neighbor table is empty");

    const Eigen::MatrixXd features = fs.features.cast<double>();
    TemiOptimizer opt = TemiOptimizer::create(model);
    Rng rng(derive_seed(model.config.seed, {0x7472ULL}));

    std::vector<int> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);

    TemiTrainResult result;
    const int batch_size = std::min<int>(model.config.batch_size, static_cast<int>(n));
    for (int epoch = 0; epoch < model.config.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        Eigen::VectorXd epoch_sum = Eigen::VectorXd::Zero(model.config.H);
        int batches = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
            PairBatch batch;
            const std::size_t hi = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
            batch.anchors.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                                 order.begin() + static_cast<std::ptrdiff_t>(hi));
            batch.neighbors.reserve(batch.anchors.size());
            for (int a : batch.anchors)
                batch.neighbors.push_back(neighbors.neighbors(a, static_cast<int>(rng.uniform_int(m))));
            Eigen::VectorXd per_head;
            temi_train_step(model, features, batch, opt, &per_head);
            epoch_sum += per_head;
            ++batches;
        }
        model.per_head_loss = epoch_sum / std::max(1, batches);
        result.curve.push_back({model.step, model.per_head_loss.mean(), model.per_head_loss.minCoeff()});
    }
    result.final_mean_loss = result.curve.empty() ? 0.0 : result.curve.back().mean_loss;
    return result;
}

ClusterAssignment temi_assign(const TemiModel& model, const FeatureSet& fs) {
    int best_head = 0;
    for (int h = 1; h < model.config.H; ++h)
        if (model.per_head_loss(h) < model.per_head_loss(best_head)) best_head = h;

    const Eigen::MatrixXd probs = head_probs_batch(model.teacher[static_cast<std::size_t>(best_head)],
                                                   fs.features.cast<double>(), model.config.temperature);
    Eigen::VectorXi assignments(fs.n());
    for (Eigen::Index i = 0; i < fs.n(); ++i) {
        int arg = 0;
        for (int c = 1; c < model.config.C; ++c)
            if (probs(i, c) > probs(i, arg)) arg = c;
        assignments(i) = arg;
    }
    return make_cluster_assignment(std::move(assignments), model.config.C, ClusterMethod::temi);
}

Eigen::VectorXd msp_confidence(const TemiModel& model, const FeatureSet& fs) {
    int best_head = 0;
    for (int h = 1; h < model.config.H; ++h)
        if (model.per_head_loss(h) < model.per_head_loss(best_head)) best_head = h;
    const Eigen::MatrixXd probs = head_probs_batch(model.teacher[static_cast<std::size_t>(best_head)],
                                                   fs.features.cast<double>(), model.config.temperature);
    return probs.rowwise().maxCoeff();
}

namespace {

void put_mlp_f32(std::ostream& out, const Mlp& net) {
    for (const auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
                binio::put_f32(out, static_cast<float>(layer.W(r, c)));
        for (Eigen::Index i = 0; i < layer.b.size(); ++i) binio::put_f32(out, static_cast<float>(layer.b(i)));
    }
}

void get_mlp_f32(std::istream& in, Mlp& net) {
    for (auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = binio::get_f32(in, "tensor");
        for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) = binio::get_f32(in, "tensor");
    }
}

}  // namespace

void save_temi(const TemiModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    binio::put_u32(out, 1);  // version
    const auto& c = model.config;
    binio::put_i32(out, c.C);
    binio::put_i32(out, c.H);
    binio::put_i32(out, c.hidden_dim);
    binio::put_i32(out, c.bottleneck_dim);
    binio::put_f64(out, c.gamma);
    binio::put_f64(out, c.momentum);
    binio::put_f64(out, c.temperature);
    binio::put_i32(out, c.m);
    binio::put_i32(out, c.epochs);
    binio::put_i32(out, c.batch_size);
    binio::put_f64(out, c.learning_rate);
    binio::put_f64(out, c.weight_decay);
    binio::put_u64(out, c.seed);
    binio::put_i32(out, model.input_dim);
    binio::put_i64(out, model.step);
    for (const auto& head : model.student) put_mlp_f32(out, head);
    for (const auto& head : model.teacher) put_mlp_f32(out, head);
    for (Eigen::Index r = 0; r < model.qt_tilde.rows(); ++r)
        for (Eigen::Index c2 = 0; c2 < model.qt_tilde.cols(); ++c2)
            binio::put_f32(out, static_cast<float>(model.qt_tilde(r, c2)));
    for (Eigen::Index i = 0; i < model.per_head_loss.size(); ++i)
        binio::put_f32(out, static_cast<float>(model.per_head_loss(i)));
}

TemiModel load_temi(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("bad checkpoint magic in " + path.string());
    if (binio::get_u32(in, "version") != 1)
        throw data_error("unsupported checkpoint version in " + path.string());

    TemiConfig c;
    c.C = binio::get_i32(in, "config");
    c.H = binio::get_i32(in, "config");
    c.hidden_dim = binio::get_i32(in, "config");
    c.bottleneck_dim = binio::get_i32(in, "config");
    c.gamma = binio::get_f64(in, "config");
    c.momentum = binio::get_f64(in, "config");
    c.temperature = binio::get_f64(in, "config");
    c.m = binio::get_i32(in, "config");
    c.epochs = binio::get_i32(in, "config");
    c.batch_size = binio::get_i32(in, "config");
    c.learning_rate = binio::get_f64(in, "config");
    c.weight_decay = binio::get_f64(in, "config");
    c.seed = binio::get_u64(in, "config");
    const int input_dim = binio::get_i32(in, "config");
    const long step = static_cast<long>(binio::get_i64(in, "config"));

    TemiModel model = temi_init(c, input_dim);
    model.step = step;
    for (auto& head : model.student) get_mlp_f32(in, head);
    for (auto& head : model.teacher) get_mlp_f32(in, head);
    for (Eigen::Index r = 0; r < model.qt_tilde.rows(); ++r)
        for (Eigen::Index c2 = 0; c2 < model.qt_tilde.cols(); ++c2)
            model.qt_tilde(r, c2) = binio::get_f32(in, "qt_tilde");
    for (Eigen::Index i = 0; i < model.per_head_loss.size(); ++i)
        model.per_head_loss(i) = binio::get_f32(in, "per_head_loss");
    return model;
}

void write_temi_curve_csv(const TemiTrainResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write loss curve: " + path.string());
    out << "step,mean_loss,per_head_min\n";
    out.precision(12);
    for (const auto& p : result.curve) out << p.step << ',' << p.mean_loss << ',' << p.per_head_min << '\n';
}

}  // namespace ccgen

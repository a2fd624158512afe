#include "ccgen/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ccgen/binio.hpp"
#include "ccgen/common.hpp"

namespace ccgen {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'D', 'M'};

// [c_noise, sin(f_k c_noise), cos(f_k c_noise) ...] per row.
Eigen::MatrixXd noise_embedding(const DiffusionModel& model, const Eigen::VectorXd& sigmas) {
    const Eigen::Index b = sigmas.size();
    const Eigen::Index pairs = model.fourier_freqs.size();
    Eigen::MatrixXd emb(b, 1 + 2 * pairs);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double t = precond_c_noise(sigmas(i));
        emb(i, 0) = t;
        for (Eigen::Index k = 0; k < pairs; ++k) {
            emb(i, 1 + 2 * k) = std::sin(model.fourier_freqs(k) * t);
            emb(i, 2 + 2 * k) = std::cos(model.fourier_freqs(k) * t);
        }
    }
    return emb;
}

void require_conditions(const DiffusionModel& model, const Eigen::VectorXi& cond, Eigen::Index rows) {
    if (cond.size() != rows) throw usage_error("condition vector length does not match batch");
    for (Eigen::Index i = 0; i < cond.size(); ++i)
        if (cond(i) < 0 || cond(i) > model.condition_count)
            throw usage_error("condition id " + std::to_string(cond(i)) + " out of range [0, " +
                              std::to_string(model.condition_count) + "]");
}

struct ForwardState {
    Eigen::MatrixXd input;    // B x (D + emb)
    Eigen::MatrixXd extra0;   // B x hidden
    Eigen::MatrixXd raw_out;  // F, B x D
    MlpCache cache;
};

// Shared forward pass for arbitrary per-row sigmas.
Eigen::MatrixXd denoise_rows(const DiffusionModel& model, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& sigmas, const Eigen::VectorXi& cond,
                             ForwardState* state) {
    require_conditions(model, cond, x.rows());
    if (x.cols() != model.data_dim) throw usage_error("sample dimension does not match model");
    for (Eigen::Index i = 0; i < sigmas.size(); ++i)
        if (!(sigmas(i) > 0.0)) throw usage_error("sigma must be positive");

    const Eigen::Index b = x.rows();
    const Eigen::Index d = model.data_dim;
    Eigen::MatrixXd input(b, d + model.embedding_dim());
    for (Eigen::Index i = 0; i < b; ++i)
        input.block(i, 0, 1, d) = precond_c_in(sigmas(i), model.sigma_data) * x.row(i);
    input.rightCols(model.embedding_dim()) = noise_embedding(model, sigmas);

    Eigen::MatrixXd extra0(b, model.condition_table.cols());
    for (Eigen::Index i = 0; i < b; ++i) extra0.row(i) = model.condition_table.row(cond(i));

    Eigen::MatrixXd raw =
        mlp_forward(model.net, input, state ? &state->cache : nullptr, &extra0);

    Eigen::MatrixXd out(b, d);
    for (Eigen::Index i = 0; i < b; ++i)
        out.row(i) = precond_c_skip(sigmas(i), model.sigma_data) * x.row(i) +
                     precond_c_out(sigmas(i), model.sigma_data) * raw.row(i);
    if (!out.allFinite()) throw numeric_error("non-finite denoiser output");
    if (state) {
        state->input = std::move(input);
        state->extra0 = std::move(extra0);
        state->raw_out = std::move(raw);
    }
    return out;
}

}  // namespace

void NoiseSchedule::validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw usage_error("need 0 < sigma_min < sigma_max");
    if (rho <= 0.0) throw usage_error("rho must be positive");
    if (p_std < 0.0) throw usage_error("p_std must be non-negative");
    if (num_steps < 2) throw usage_error("num_steps must be at least 2");
}

Eigen::VectorXd sigma_grid(const NoiseSchedule& schedule) {
    schedule.validate();
    const int n = schedule.num_steps;
    Eigen::VectorXd grid(n + 1);
    const double max_r = std::pow(schedule.sigma_max, 1.0 / schedule.rho);
    const double min_r = std::pow(schedule.sigma_min, 1.0 / schedule.rho);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        grid(i) = std::pow(max_r + t * (min_r - max_r), schedule.rho);
    }
    grid(n) = 0.0;
    return grid;
}

ConditionSource condition_source_from_string(const std::string& s) {
    if (s == "cluster") return ConditionSource::cluster;
    if (s == "labels") return ConditionSource::labels;
    if (s == "none") return ConditionSource::none;
    throw usage_error("unknown condition source: " + s);
}

std::string to_string(ConditionSource s) {
    switch (s) {
        case ConditionSource::cluster: return "cluster";
        case ConditionSource::labels: return "labels";
        case ConditionSource::none: return "none";
    }
    return "none";
}

DiffusionModel diffusion_init(int data_dim, int condition_count, const DenoiserConfig& cfg,
                              std::uint64_t seed) {
    if (data_dim < 1) throw usage_error("data dim must be positive");
    if (condition_count < 0) throw usage_error("condition count must be non-negative");
    if (cfg.hidden < 1 || cfg.hidden_layers < 1 || cfg.fourier_pairs < 0)
        throw usage_error("invalid denoiser config");
    if (cfg.sigma_data <= 0.0) throw usage_error("sigma_data must be positive");

    DiffusionModel model;
    model.data_dim = data_dim;
    model.condition_count = condition_count;
    model.sigma_data = cfg.sigma_data;
    model.fourier_freqs.resize(cfg.fourier_pairs);
    for (int k = 0; k < cfg.fourier_pairs; ++k) model.fourier_freqs(k) = std::pow(2.0, k);

    std::vector<int> sizes;
    sizes.push_back(data_dim + model.embedding_dim());
    for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden);
    sizes.push_back(data_dim);
    std::vector<Activation> acts(sizes.size() - 1, Activation::gelu);
    acts.back() = Activation::none;

    Rng rng(derive_seed(seed, {0x6466ULL}));
    model.net = mlp_init(sizes, acts, rng, /*last_layer_scale=*/0.0);
    model.condition_table.resize(condition_count + 1, cfg.hidden);
    const double table_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (Eigen::Index r = 0; r < model.condition_table.rows(); ++r)
        for (Eigen::Index c = 0; c < model.condition_table.cols(); ++c)
            model.condition_table(r, c) = table_scale * rng.normal();
    return model;
}

double precond_c_skip(double sigma, double sigma_data) {
    const double sd2 = sigma_data * sigma_data;
    return sd2 / (sigma * sigma + sd2);
}

double precond_c_out(double sigma, double sigma_data) {
    const double sd2 = sigma_data * sigma_data;
    return sigma * sigma_data / std::sqrt(sigma * sigma + sd2);
}

double precond_c_in(double sigma, double sigma_data) {
    const double sd2 = sigma_data * sigma_data;
    return 1.0 / std::sqrt(sigma * sigma + sd2);
}

double precond_c_noise(double sigma) { return 0.25 * std::log(sigma); }

double edm_loss_weight(double sigma, double sigma_data) {
    const double prod = sigma * sigma_data;
    return (sigma * sigma + sigma_data * sigma_data) / (prod * prod);
}

double sample_training_sigma(const NoiseSchedule& schedule, Rng& rng) {
    return std::exp(schedule.p_mean + schedule.p_std * rng.normal());
}

Eigen::MatrixXd denoise(const DiffusionModel& model, const Eigen::MatrixXd& x, double sigma,
                        const Eigen::VectorXi& cond) {
    return denoise_rows(model, x, Eigen::VectorXd::Constant(x.rows(), sigma), cond, nullptr);
}

Eigen::VectorXd denoise(const DiffusionModel& model, const Eigen::VectorXd& x, double sigma, int cond) {
    Eigen::VectorXi ids(1);
    ids(0) = cond;
    return denoise(model, Eigen::MatrixXd(x.transpose()), sigma, ids).row(0).transpose();
}

Eigen::MatrixXd score_from_denoiser(const Eigen::MatrixXd& x, double sigma, const Eigen::MatrixXd& x_hat) {
    if (sigma <= 0.0) throw usage_error("sigma must be positive");
    return (x_hat - x) / (sigma * sigma);
}

DiffusionGrads diffusion_zero_grads(const DiffusionModel& model) {
    DiffusionGrads g;
    g.net = mlp_zero_grads(model.net);
    g.cond_table = Eigen::MatrixXd::Zero(model.condition_table.rows(), model.condition_table.cols());
    return g;
}

double diffusion_loss(const DiffusionModel& model, const DiffusionBatch& batch, DiffusionGrads* out_grads) {
    const Eigen::Index b = batch.y.rows();
    if (b == 0) throw usage_error("empty diffusion batch");
    if (batch.noise.rows() != b || batch.sigma.size() != b) throw usage_error("diffusion batch shape mismatch");

    const Eigen::MatrixXd x = batch.y + batch.noise;
    ForwardState state;
    const Eigen::MatrixXd x_hat = denoise_rows(model, x, batch.sigma, batch.cond, &state);

    double loss = 0.0;
    Eigen::MatrixXd d_raw(b, model.data_dim);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double w = edm_loss_weight(batch.sigma(i), model.sigma_data);
        const Eigen::RowVectorXd err = x_hat.row(i) - batch.y.row(i);
        loss += w * err.squaredNorm();
        if (out_grads)
            d_raw.row(i) =
                (2.0 * w / static_cast<double>(b)) * precond_c_out(batch.sigma(i), model.sigma_data) * err;
    }
    loss /= static_cast<double>(b);
    if (!std::isfinite(loss)) {
        throw numeric_error("non-finite diffusion loss (sigma range [" +
                            std::to_string(batch.sigma.minCoeff()) + ", " +
                            std::to_string(batch.sigma.maxCoeff()) + "])");
    }

    if (out_grads) {
        Eigen::MatrixXd d_extra0;
        mlp_backward(model.net, state.cache, d_raw, out_grads->net, &d_extra0);
        for (Eigen::Index i = 0; i < b; ++i) out_grads->cond_table.row(batch.cond(i)) += d_extra0.row(i);
    }
    return loss;
}

void TrainRunConfig::validate() const {
    if (m_img < 1) throw usage_error("m_img must be positive");
    if (batch_size < 1) throw usage_error("batch_size must be positive");
    if (m_img < batch_size) throw usage_error("m_img must be at least batch_size");
    if (learning_rate <= 0.0) throw usage_error("learning_rate must be positive");
}

DiffusionTrainer make_diffusion_trainer(DiffusionModel model, const TrainRunConfig& cfg,
                                        const NoiseSchedule& schedule) {
    cfg.validate();
    schedule.validate();
    DiffusionTrainer t;
    t.model = std::move(model);
    t.cfg = cfg;
    t.schedule = schedule;
    t.hp.lr = cfg.learning_rate;
    t.net_opt.init(t.model.net);
    t.table_mom = {Eigen::MatrixXd::Zero(t.model.condition_table.rows(), t.model.condition_table.cols()),
                   Eigen::MatrixXd::Zero(t.model.condition_table.rows(), t.model.condition_table.cols())};
    t.order_rng = Rng(derive_seed(cfg.seed, {0x6f72ULL}));
    t.noise_rng = Rng(derive_seed(cfg.seed, {0x6e6fULL}));
    return t;
}

std::vector<long> milestone_schedule(long m_img, int count) {
    if (count < 1) return {};
    std::vector<long> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 1; k <= count; ++k)
        out.push_back(static_cast<long>(static_cast<double>(m_img) * k / count));
    out.back() = m_img;
    return out;
}

DiffusionTrainResult train_diffusion(DiffusionTrainer& trainer, const FeatureSet& data,
                                     const ClusterAssignment* assignment,
                                     const std::vector<long>& milestones, const MilestoneHook& on_milestone,
                                     const TrainObserver& observer) {
    const Eigen::Index n = data.n();
    const auto& cfg = trainer.cfg;
    if (data.dim() != trainer.model.data_dim) throw usage_error("dataset dimension does not match model");
    if (cfg.condition_source == ConditionSource::cluster) {
        if (!assignment) throw usage_error("cluster conditioning requires an assignment");
        if (assignment->n() != n) throw usage_error("assignment does not cover the dataset");
    }
    if (cfg.condition_source == ConditionSource::labels && !data.labels)
        throw usage_error("label conditioning requires dataset labels");

    const Eigen::MatrixXd rows = data.features.cast<double>();
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(n));

    if (trainer.perm.empty()) {
        trainer.perm.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) trainer.perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
        trainer.perm_pos = trainer.perm.size();  // forces a shuffle on first use
    }

    DiffusionTrainResult result;
    std::size_t milestone_at = 0;
    while (milestone_at < milestones.size() && milestones[milestone_at] <= trainer.samples_seen)
        ++milestone_at;

    std::vector<int> indices(static_cast<std::size_t>(batch));
    while (trainer.samples_seen < cfg.m_img) {
        for (int k = 0; k < batch; ++k) {
            if (trainer.perm_pos >= trainer.perm.size()) {
                trainer.order_rng.shuffle(trainer.perm.begin(), trainer.perm.end());
                trainer.perm_pos = 0;
            }
            indices[static_cast<std::size_t>(k)] = trainer.perm[trainer.perm_pos++];
        }

        DiffusionBatch db;
        db.y.resize(batch, trainer.model.data_dim);
        db.cond.resize(batch);
        db.sigma.resize(batch);
        db.noise.resize(batch, trainer.model.data_dim);
        for (int k = 0; k < batch; ++k) {
            const int idx = indices[static_cast<std::size_t>(k)];
            db.y.row(k) = rows.row(idx);
            switch (cfg.condition_source) {
                case ConditionSource::cluster: db.cond(k) = assignment->assignments(idx); break;
                case ConditionSource::labels: db.cond(k) = (*data.labels)(idx); break;
                case ConditionSource::none: db.cond(k) = trainer.model.condition_count; break;
            }
            db.sigma(k) = sample_training_sigma(trainer.schedule, trainer.noise_rng);
            for (int dcol = 0; dcol < trainer.model.data_dim; ++dcol)
                db.noise(k, dcol) = db.sigma(k) * trainer.noise_rng.normal();
        }

        DiffusionGrads grads = diffusion_zero_grads(trainer.model);
        const double loss = diffusion_loss(trainer.model, db, &grads);
        if (loss > cfg.divergence_threshold)
            throw numeric_error("diffusion training diverged: loss " + std::to_string(loss));

        trainer.net_opt.step(trainer.model.net, grads.net, trainer.hp);
        adam_update(trainer.model.condition_table, grads.cond_table, trainer.table_mom, trainer.hp,
                    trainer.net_opt.t);

        trainer.samples_seen += batch;
        ++trainer.step;
        result.loss_curve.emplace_back(trainer.samples_seen, loss);
        if (observer) observer(trainer.step, indices, loss);
        while (milestone_at < milestones.size() && trainer.samples_seen >= milestones[milestone_at]) {
            if (on_milestone) on_milestone(milestones[milestone_at], trainer);
            ++milestone_at;
        }
    }
    return result;
}

Eigen::VectorXd uniform_distribution(int C) {
    if (C < 1) throw usage_error("cluster count must be positive");
    return Eigen::VectorXd::Constant(C, 1.0 / C);
}

Eigen::VectorXi sample_conditions(const Eigen::VectorXd& q, int n, Rng& rng) {
    if (q.size() == 0) throw usage_error("empty condition distribution");
    if (q.minCoeff() < 0.0 || std::abs(q.sum() - 1.0) > 1e-6)
        throw usage_error("condition distribution must be non-negative and sum to 1");
    Eigen::VectorXd cumulative(q.size());
    double acc = 0.0;
    for (Eigen::Index c = 0; c < q.size(); ++c) {
        acc += q(c);
        cumulative(c) = acc;
    }
    cumulative(q.size() - 1) = 1.0;

    Eigen::VectorXi out(n);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        int c = 0;
        while (c + 1 < q.size() && u >= cumulative(c)) ++c;
        out(i) = c;
    }
    return out;
}

Eigen::MatrixXd heun_sample(const DenoiserFn& denoiser, int data_dim, const Eigen::VectorXi& conditions,
                            const NoiseSchedule& schedule, Rng& rng, Solver solver,
                            Eigen::MatrixXd* x0_out) {
    schedule.validate();
    const Eigen::Index n = conditions.size();
    const Eigen::VectorXd grid = sigma_grid(schedule);

    Eigen::MatrixXd x(n, data_dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < data_dim; ++j) x(i, j) = schedule.sigma_max * rng.normal();
    if (x0_out) *x0_out = x;
    if (n == 0) return x;

    for (int i = 0; i < schedule.num_steps; ++i) {
        const double s_cur = grid(i);
        const double s_next = grid(i + 1);
        const double h = s_next - s_cur;
        const Eigen::MatrixXd drift = (x - denoiser(x, s_cur, conditions)) / s_cur;
        Eigen::MatrixXd x_euler = x + h * drift;
        if (s_next > 0.0 && solver == Solver::heun) {
            const Eigen::MatrixXd drift2 = (x_euler - denoiser(x_euler, s_next, conditions)) / s_next;
            x += h * 0.5 * (drift + drift2);
        } else {
            x = std::move(x_euler);
        }
    }
    if (!x.allFinite()) throw numeric_error("non-finite samples from the probability-flow solve");
    return x;
}

Eigen::MatrixXd heun_sample(const DiffusionModel& model, const Eigen::VectorXi& conditions,
                            const NoiseSchedule& schedule, Rng& rng, Solver solver,
                            Eigen::MatrixXd* x0_out) {
    require_conditions(model, conditions, conditions.size());
    const DenoiserFn fn = [&model](const Eigen::MatrixXd& x, double sigma, const Eigen::VectorXi& cond) {
        return denoise(model, x, sigma, cond);
    };
    return heun_sample(fn, model.data_dim, conditions, schedule, rng, solver, x0_out);
}

namespace {

void put_matrix_f64(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) binio::put_f64(out, m(r, c));
}

void get_matrix_f64(std::istream& in, Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = binio::get_f64(in, "tensor");
}

void put_rng(std::ostream& out, const Rng& rng) {
    for (std::uint64_t w : rng.serialize()) binio::put_u64(out, w);
}

Rng get_rng(std::istream& in) {
    std::array<std::uint64_t, 6> words{};
    for (auto& w : words) w = binio::get_u64(in, "rng state");
    Rng rng(0);
    rng.deserialize(words);
    return rng;
}

}  // namespace

void save_diffusion_checkpoint(const DiffusionTrainer& trainer, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    binio::put_u32(out, 1);  // version

    const auto& model = trainer.model;
    binio::put_i32(out, model.data_dim);
    binio::put_i32(out, model.condition_count);
    binio::put_f64(out, model.sigma_data);
    binio::put_i32(out, static_cast<int>(model.fourier_freqs.size()));
    for (Eigen::Index i = 0; i < model.fourier_freqs.size(); ++i)
        binio::put_f64(out, model.fourier_freqs(i));
    binio::put_i32(out, static_cast<int>(model.net.layers.size()));
    for (const auto& layer : model.net.layers) {
        binio::put_i32(out, static_cast<int>(layer.W.rows()));
        binio::put_i32(out, static_cast<int>(layer.W.cols()));
        binio::put_i32(out, layer.act == Activation::gelu ? 1 : 0);
    }
    for (const auto& layer : model.net.layers) {
        put_matrix_f64(out, layer.W);
        put_matrix_f64(out, layer.b);
    }
    put_matrix_f64(out, model.condition_table);

    const auto& cfg = trainer.cfg;
    binio::put_i64(out, cfg.m_img);
    binio::put_i32(out, cfg.batch_size);
    binio::put_f64(out, cfg.learning_rate);
    binio::put_u64(out, cfg.seed);
    binio::put_i32(out, static_cast<int>(cfg.condition_source));
    binio::put_f64(out, cfg.divergence_threshold);

    const auto& sch = trainer.schedule;
    binio::put_f64(out, sch.sigma_min);
    binio::put_f64(out, sch.sigma_max);
    binio::put_f64(out, sch.rho);
    binio::put_f64(out, sch.p_mean);
    binio::put_f64(out, sch.p_std);
    binio::put_i32(out, sch.num_steps);

    binio::put_i64(out, trainer.net_opt.t);
    for (std::size_t l = 0; l < trainer.net_opt.w_mom.size(); ++l) {
        put_matrix_f64(out, trainer.net_opt.w_mom[l].m);
        put_matrix_f64(out, trainer.net_opt.w_mom[l].v);
        put_matrix_f64(out, trainer.net_opt.b_mom[l].m);
        put_matrix_f64(out, trainer.net_opt.b_mom[l].v);
    }
    put_matrix_f64(out, trainer.table_mom.m);
    put_matrix_f64(out, trainer.table_mom.v);

    put_rng(out, trainer.order_rng);
    put_rng(out, trainer.noise_rng);
    binio::put_i64(out, trainer.samples_seen);
    binio::put_i64(out, trainer.step);
    binio::put_i64(out, static_cast<std::int64_t>(trainer.perm.size()));
    for (int v : trainer.perm) binio::put_i32(out, v);
    binio::put_i64(out, static_cast<std::int64_t>(trainer.perm_pos));
}

DiffusionTrainer load_diffusion_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("bad checkpoint magic in " + path.string());
    if (binio::get_u32(in, "version") != 1)
        throw data_error("unsupported checkpoint version in " + path.string());

    DiffusionTrainer trainer;
    auto& model = trainer.model;
    model.data_dim = binio::get_i32(in, "model");
    model.condition_count = binio::get_i32(in, "model");
    model.sigma_data = binio::get_f64(in, "model");
    const int pairs = binio::get_i32(in, "model");
    model.fourier_freqs.resize(pairs);
    for (int i = 0; i < pairs; ++i) model.fourier_freqs(i) = binio::get_f64(in, "model");
    const int layer_count = binio::get_i32(in, "model");
    model.net.layers.resize(static_cast<std::size_t>(layer_count));
    for (auto& layer : model.net.layers) {
        const int rows = binio::get_i32(in, "layer");
        const int cols = binio::get_i32(in, "layer");
        layer.act = binio::get_i32(in, "layer") == 1 ? Activation::gelu : Activation::none;
        layer.W.resize(rows, cols);
        layer.b.resize(rows);
    }
    for (auto& layer : model.net.layers) {
        get_matrix_f64(in, layer.W);
        Eigen::MatrixXd b(layer.b.size(), 1);
        get_matrix_f64(in, b);
        layer.b = b.col(0);
    }
    model.condition_table.resize(model.condition_count + 1, model.net.layers.front().W.rows());
    get_matrix_f64(in, model.condition_table);

    auto& cfg = trainer.cfg;
    cfg.m_img = binio::get_i64(in, "config");
    cfg.batch_size = binio::get_i32(in, "config");
    cfg.learning_rate = binio::get_f64(in, "config");
    cfg.seed = binio::get_u64(in, "config");
    cfg.condition_source = static_cast<ConditionSource>(binio::get_i32(in, "config"));
    cfg.divergence_threshold = binio::get_f64(in, "config");

    auto& sch = trainer.schedule;
    sch.sigma_min = binio::get_f64(in, "schedule");
    sch.sigma_max = binio::get_f64(in, "schedule");
    sch.rho = binio::get_f64(in, "schedule");
    sch.p_mean = binio::get_f64(in, "schedule");
    sch.p_std = binio::get_f64(in, "schedule");
    sch.num_steps = binio::get_i32(in, "schedule");

    trainer.hp.lr = cfg.learning_rate;
    trainer.net_opt.init(model.net);
    trainer.net_opt.t = binio::get_i64(in, "optimizer");
    for (std::size_t l = 0; l < trainer.net_opt.w_mom.size(); ++l) {
        get_matrix_f64(in, trainer.net_opt.w_mom[l].m);
        get_matrix_f64(in, trainer.net_opt.w_mom[l].v);
        get_matrix_f64(in, trainer.net_opt.b_mom[l].m);
        get_matrix_f64(in, trainer.net_opt.b_mom[l].v);
    }
    trainer.table_mom = {Eigen::MatrixXd::Zero(model.condition_table.rows(), model.condition_table.cols()),
                         Eigen::MatrixXd::Zero(model.condition_table.rows(), model.condition_table.cols())};
    get_matrix_f64(in, trainer.table_mom.m);
    get_matrix_f64(in, trainer.table_mom.v);

    trainer.order_rng = get_rng(in);
    trainer.noise_rng = get_rng(in);
    trainer.samples_seen = binio::get_i64(in, "progress");
    trainer.step = binio::get_i64(in, "progress");
    const auto perm_size = static_cast<std::size_t>(binio::get_i64(in, "progress"));
    trainer.perm.resize(perm_size);
    for (auto& v : trainer.perm) v = binio::get_i32(in, "progress");
    trainer.perm_pos = static_cast<std::size_t>(binio::get_i64(in, "progress"));
    return trainer;
}

void write_diffusion_curve_csv(const DiffusionTrainResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write loss curve: " + path.string());
    out << "samples_seen,loss\n";
    out.precision(12);
    for (const auto& [seen, loss] : result.loss_curve) out << seen << ',' << loss << '\n';
}

}  // namespace ccgen

#include "diver/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diver/checkpoint.hpp"

namespace diver {

size_t null_label(const EpsilonModel& model) { return model.num_classes; }

EpsilonModel make_eps_model(size_t latent_dim, size_t num_classes, size_t num_sample_steps,
                            Rng& rng) {
    EpsilonModel m;
    m.latent_dim = latent_dim;
    m.num_classes = num_classes;
    m.num_sample_steps = num_sample_steps;
    size_t in = latent_dim + kTimeEmbedDim + kClassEmbedDim;
    m.trunk = make_mlp({in, kTrunkWidth, kTrunkWidth, kTrunkWidth, latent_dim}, Act::Tanh, rng);
    m.time_embed = Matrix(num_sample_steps + 1, kTimeEmbedDim);
    m.class_embed = Matrix(num_classes + 1, kClassEmbedDim);
    for (double& v : m.time_embed.data) v = rng.normal() * 0.1;
    for (double& v : m.class_embed.data) v = rng.normal() * 0.1;
    return m;
}

static void check_step_label(const EpsilonModel& model, size_t t, size_t label) {
    if (t < 1 || t > model.num_sample_steps)
        throw std::runtime_error("predict_eps: step " + std::to_string(t) +
                                 " outside sample grid [1, " +
                                 std::to_string(model.num_sample_steps) + "]");
    if (label > model.num_classes)
        throw std::runtime_error("predict_eps: label " + std::to_string(label) +
                                 " exceeds null index " + std::to_string(model.num_classes));
}

static Matrix build_input(const EpsilonModel& model, const Matrix& z_t,
                          const std::vector<size_t>& t, const std::vector<size_t>& labels) {
    size_t in = model.latent_dim + kTimeEmbedDim + kClassEmbedDim;
    Matrix x(z_t.rows, in);
    for (size_t i = 0; i < z_t.rows; ++i) {
        double* row = x.row(i);
        const double* zr = z_t.row(i);
        std::copy(zr, zr + model.latent_dim, row);
        const double* te = model.time_embed.row(t[i]);
        std::copy(te, te + kTimeEmbedDim, row + model.latent_dim);
        const double* ce = model.class_embed.row(labels[i]);
        std::copy(ce, ce + kClassEmbedDim, row + model.latent_dim + kTimeEmbedDim);
    }
    return x;
}

Matrix predict_eps(const EpsilonModel& model, const Matrix& z_t, const std::vector<size_t>& t,
                   const std::vector<size_t>& labels) {
    if (z_t.cols != model.latent_dim)
        throw std::runtime_error("predict_eps: input dim " + std::to_string(z_t.cols) +
                                 " vs model latent dim " + std::to_string(model.latent_dim));
    if (t.size() != z_t.rows || labels.size() != z_t.rows)
        throw std::runtime_error("predict_eps: rows, steps, and labels must align");
    for (size_t i = 0; i < z_t.rows; ++i) check_step_label(model, t[i], labels[i]);
    Matrix x = build_input(model, z_t, t, labels);
    MlpCache cache;
    return mlp_forward(model.trunk, x, cache);
}

std::vector<double> predict_eps(const EpsilonModel& model, const std::vector<double>& z_t,
                                size_t t, size_t label) {
    Matrix z(1, z_t.size());
    z.data = z_t;
    Matrix out = predict_eps(model, z, {t}, {label});
    return out.data;
}

std::vector<double> cfg_eps(const EpsilonModel& model, const std::vector<double>& z_t, size_t t,
                            size_t label, double omega) {
    if (label >= model.num_classes)
        throw std::runtime_error("cfg_eps: label " + std::to_string(label) +
                                 " is not a real class (num_classes = " +
                                 std::to_string(model.num_classes) + ")");
    std::vector<double> e_null = predict_eps(model, z_t, t, null_label(model));
    std::vector<double> e_cond = predict_eps(model, z_t, t, label);
    std::vector<double> out(e_null.size());
    // (1-w)*null + w*cond rather than null + w*(cond-null): reduces exactly to
    // the base predictions at w=0 and w=1.
    for (size_t k = 0; k < out.size(); ++k)
        out[k] = (1.0 - omega) * e_null[k] + omega * e_cond[k];
    return out;
}

// Gradient bundle covering trunk weights and both embedding tables.
struct DenoiserGrads {
    MlpGrads trunk;
    Matrix time_embed;
    Matrix class_embed;
};

static double full_norm(const DenoiserGrads& g) {
    double s = 0.0;
    for (const Matrix& m : g.trunk.W)
        for (double v : m.data) s += v * v;
    for (const auto& b : g.trunk.b)
        for (double v : b) s += v * v;
    for (double v : g.time_embed.data) s += v * v;
    for (double v : g.class_embed.data) s += v * v;
    return std::sqrt(s);
}

EpsilonModel train_denoiser(const Matrix& latents, const std::vector<int>& labels,
                            const NoiseSchedule& schedule, const StepGrid& grid,
                            const DenoiserTrainConfig& cfg) {
    size_t n = latents.rows, d = latents.cols;
    if (n == 0) throw std::runtime_error("train_denoiser: no latents");
    if (labels.size() != n)
        throw std::runtime_error("train_denoiser: " + std::to_string(n) + " latents vs " +
                                 std::to_string(labels.size()) + " labels");
    int num_classes = 0;
    for (int y : labels) {
        if (y < 0) throw std::runtime_error("train_denoiser: negative label");
        num_classes = std::max(num_classes, y + 1);
    }
    for (double v : latents.data)
        if (!std::isfinite(v)) throw std::runtime_error("train_denoiser: non-finite latent");

    Rng root(cfg.seed);
    Rng init_rng = root.stream(0);
    Rng train_rng = root.stream(1);
    EpsilonModel model =
        make_eps_model(d, size_t(num_classes), size_t(grid.num_sample_steps), init_rng);
    if (cfg.epochs == 0) return model;

    size_t batch = std::min(cfg.batch_size, n);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    DenoiserGrads grads;
    grads.time_embed = Matrix(model.time_embed.rows, model.time_embed.cols);
    grads.class_embed = Matrix(model.class_embed.rows, model.class_embed.cols);
    MlpCache cache;

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates reshuffle each epoch.
        for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[train_rng.below(i + 1)]);
        double epoch_loss = 0.0;
        size_t num_batches = 0;
        for (size_t start = 0; start < n; start += batch) {
            size_t bs = std::min(batch, n - start);
            Matrix z_t(bs, d), eps(bs, d);
            std::vector<size_t> steps(bs), cond(bs);
            for (size_t b = 0; b < bs; ++b) {
                size_t idx = order[start + b];
                size_t k = 1 + train_rng.below(uint64_t(grid.num_sample_steps));
                steps[b] = k;
                bool drop = train_rng.uniform() < cfg.null_drop_prob;
                cond[b] = drop ? size_t(num_classes) : size_t(labels[idx]);
                double ab = alpha_bar_at(schedule, grid, int(k));
                double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
                for (size_t j = 0; j < d; ++j) {
                    double e = train_rng.normal();
                    eps(b, j) = e;
                    z_t(b, j) = sa * latents(idx, j) + sb * e;
                }
            }
            Matrix x = build_input(model, z_t, steps, cond);
            const Matrix& out = mlp_forward(model.trunk, x, cache);
            double loss = 0.0;
            Matrix dout(bs, d);
            double scale = 2.0 / double(bs * d);
            for (size_t k = 0; k < out.size(); ++k) {
                double diff = out.data[k] - eps.data[k];
                loss += diff * diff;
                dout.data[k] = scale * diff;
            }
            loss /= double(bs * d);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_denoiser: loss diverged at epoch " +
                                         std::to_string(epoch));
            epoch_loss += loss;
            ++num_batches;

            zero_grads(model.trunk, grads.trunk);
            grads.time_embed.data.assign(grads.time_embed.size(), 0.0);
            grads.class_embed.data.assign(grads.class_embed.size(), 0.0);
            Matrix dx;
            mlp_backward(model.trunk, cache, dout, grads.trunk, &dx);
            for (size_t b = 0; b < bs; ++b) {
                const double* dr = dx.row(b);
                double* tg = grads.time_embed.row(steps[b]);
                for (size_t j = 0; j < kTimeEmbedDim; ++j) tg[j] += dr[d + j];
                double* cg = grads.class_embed.row(cond[b]);
                for (size_t j = 0; j < kClassEmbedDim; ++j) cg[j] += dr[d + kTimeEmbedDim + j];
            }

            double gn = full_norm(grads);
            double clip = (gn > cfg.clip_norm && gn > 0.0) ? cfg.clip_norm / gn : 1.0;
            double step_lr = cfg.lr * clip;
            sgd_step(model.trunk, grads.trunk, step_lr);
            for (size_t k = 0; k < model.time_embed.size(); ++k)
                model.time_embed.data[k] -= step_lr * grads.time_embed.data[k];
            for (size_t k = 0; k < model.class_embed.size(); ++k)
                model.class_embed.data[k] -= step_lr * grads.class_embed.data[k];
        }
        model.loss_trace.push_back(epoch_loss / double(num_batches));
    }
    return model;
}

void save_denoiser(const std::string& path, const EpsilonModel& model) {
    Checkpoint ckpt;
    ckpt.meta = {{"kind", "denoiser"},
                 {"latent_dim", model.latent_dim},
                 {"num_classes", model.num_classes},
                 {"num_sample_steps", model.num_sample_steps},
                 {"loss_trace", model.loss_trace}};
    for (size_t i = 0; i < model.trunk.W.size(); ++i) {
        ckpt.tensors.push_back({"trunk.W" + std::to_string(i),
                                {model.trunk.W[i].rows, model.trunk.W[i].cols},
                                model.trunk.W[i].data});
        ckpt.tensors.push_back(
            {"trunk.b" + std::to_string(i), {model.trunk.b[i].size()}, model.trunk.b[i]});
    }
    ckpt.tensors.push_back(
        {"time_embed", {model.time_embed.rows, model.time_embed.cols}, model.time_embed.data});
    ckpt.tensors.push_back(
        {"class_embed", {model.class_embed.rows, model.class_embed.cols}, model.class_embed.data});
    save_checkpoint(path, ckpt);
}

EpsilonModel load_denoiser(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "denoiser")
        throw std::runtime_error(path + " is not a denoiser checkpoint");
    EpsilonModel m;
    m.latent_dim = ckpt.meta.at("latent_dim").get<size_t>();
    m.num_classes = ckpt.meta.at("num_classes").get<size_t>();
    m.num_sample_steps = ckpt.meta.at("num_sample_steps").get<size_t>();
    if (ckpt.meta.contains("loss_trace"))
        m.loss_trace = ckpt.meta.at("loss_trace").get<std::vector<double>>();
    m.trunk.act = Act::Tanh;
    for (size_t i = 0;; ++i) {
        const NamedTensor* w = ckpt.find("trunk.W" + std::to_string(i));
        if (w == nullptr) break;
        Matrix mat(w->shape[0], w->shape[1]);
        mat.data = w->data;
        m.trunk.W.push_back(std::move(mat));
        m.trunk.b.push_back(ckpt.get("trunk.b" + std::to_string(i)).data);
    }
    const NamedTensor& te = ckpt.get("time_embed");
    m.time_embed = Matrix(te.shape[0], te.shape[1]);
    m.time_embed.data = te.data;
    const NamedTensor& ce = ckpt.get("class_embed");
    m.class_embed = Matrix(ce.shape[0], ce.shape[1]);
    m.class_embed.data = ce.data;
    return m;
}

} // namespace diver

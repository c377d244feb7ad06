#include "diver/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diver {

static constexpr size_t kEmbedWidth = 64;

PriorEmbedder make_identity_embedder() {
    PriorEmbedder e;
    e.identity = true;
    return e;
}

PriorEmbedder sample_embedder(size_t data_dim, size_t embed_dim, Rng& rng) {
    PriorEmbedder e;
    e.net = make_mlp({data_dim, kEmbedWidth, embed_dim}, Act::Tanh, rng);
    return e;
}

Matrix embed(const PriorEmbedder& e, const Matrix& x) {
    if (e.identity) return x;
    MlpCache cache;
    return mlp_forward(e.net, x, cache);
}

// Per-class mean rows of an embedded dataset; throws on an empty class.
static Matrix class_means(const Matrix& feats, const std::vector<int>& labels, int num_classes,
                          const char* which) {
    Matrix means(size_t(num_classes), feats.cols);
    std::vector<size_t> counts(size_t(num_classes), 0);
    for (size_t i = 0; i < feats.rows; ++i) {
        int c = labels[i];
        ++counts[size_t(c)];
        for (size_t j = 0; j < feats.cols; ++j) means(size_t(c), j) += feats(i, j);
    }
    for (int c = 0; c < num_classes; ++c) {
        if (counts[size_t(c)] == 0)
            throw std::runtime_error(std::string("dm_loss: class ") + std::to_string(c) +
                                     " absent from " + which + " dataset");
        for (size_t j = 0; j < feats.cols; ++j) means(size_t(c), j) /= double(counts[size_t(c)]);
    }
    return means;
}

static void check_compatible(const LabeledDataset& real, const LabeledDataset& distilled) {
    if (real.num_classes != distilled.num_classes)
        throw std::runtime_error("dm_loss: class counts differ (" +
                                 std::to_string(real.num_classes) + " vs " +
                                 std::to_string(distilled.num_classes) + ")");
    if (real.dim() != distilled.dim())
        throw std::runtime_error("dm_loss: dims differ (" + std::to_string(real.dim()) + " vs " +
                                 std::to_string(distilled.dim()) + ")");
}

double dm_loss(const LabeledDataset& real, const LabeledDataset& distilled,
               const PriorEmbedder& e) {
    check_compatible(real, distilled);
    Matrix fr = embed(e, real.features);
    Matrix fd = embed(e, distilled.features);
    Matrix mr = class_means(fr, real.labels, real.num_classes, "real");
    Matrix md = class_means(fd, distilled.labels, distilled.num_classes, "distilled");
    double loss = 0.0;
    for (size_t k = 0; k < mr.size(); ++k) {
        double d = md.data[k] - mr.data[k];
        loss += d * d;
    }
    return loss;
}

double dm_loss_grad(const LabeledDataset& real, const LabeledDataset& distilled,
                    const PriorEmbedder& e, Matrix& grad) {
    check_compatible(real, distilled);
    Matrix fr = embed(e, real.features);
    Matrix mr = class_means(fr, real.labels, real.num_classes, "real");

    MlpCache cache;
    const Matrix* fd;
    Matrix fd_identity;
    if (e.identity) {
        fd_identity = distilled.features;
        fd = &fd_identity;
    } else {
        fd = &mlp_forward(e.net, distilled.features, cache);
    }
    Matrix md = class_means(*fd, distilled.labels, distilled.num_classes, "distilled");

    std::vector<size_t> counts(size_t(distilled.num_classes), 0);
    for (int y : distilled.labels) ++counts[size_t(y)];

    double loss = 0.0;
    for (size_t k = 0; k < mr.size(); ++k) {
        double d = md.data[k] - mr.data[k];
        loss += d * d;
    }

    // d(loss)/d(embedded point i) = 2 (mean_c - real mean_c) / n_c for i in class c.
    Matrix dfd(fd->rows, fd->cols);
    for (size_t i = 0; i < fd->rows; ++i) {
        int c = distilled.labels[i];
        double inv = 1.0 / double(counts[size_t(c)]);
        for (size_t j = 0; j < fd->cols; ++j)
            dfd(i, j) = 2.0 * (md(size_t(c), j) - mr(size_t(c), j)) * inv;
    }

    if (e.identity) {
        grad = std::move(dfd);
    } else {
        MlpGrads dummy;
        zero_grads(e.net, dummy);
        mlp_backward(e.net, cache, dfd, dummy, &grad);
    }
    return loss;
}

LabeledDataset init_distilled(const LabeledDataset& real, const DistillConfig& cfg) {
    if (cfg.ipc < 1) throw std::runtime_error("init_distilled: ipc must be >= 1");
    int C = real.num_classes;
    size_t d = real.dim();
    Rng rng = Rng(cfg.seed).stream(0);

    std::vector<std::vector<size_t>> by_class;
    by_class.resize(size_t(C));
    for (size_t i = 0; i < real.n(); ++i) by_class[size_t(real.labels[i])].push_back(i);

    LabeledDataset out;
    out.num_classes = C;
    out.name = "distilled";
    out.features = Matrix(cfg.ipc * size_t(C), d);
    out.labels.reserve(cfg.ipc * size_t(C));

    if (cfg.init == DistillInit::Noise) {
        // Per-dimension std of the real features sets the noise scale.
        std::vector<double> sd(d, 0.0), mean(d, 0.0);
        for (size_t i = 0; i < real.n(); ++i)
            for (size_t j = 0; j < d; ++j) mean[j] += real.features(i, j);
        for (size_t j = 0; j < d; ++j) mean[j] /= double(real.n());
        for (size_t i = 0; i < real.n(); ++i)
            for (size_t j = 0; j < d; ++j) {
                double e = real.features(i, j) - mean[j];
                sd[j] += e * e;
            }
        for (size_t j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] / double(real.n()));
        size_t row = 0;
        for (int c = 0; c < C; ++c)
            for (size_t k = 0; k < cfg.ipc; ++k, ++row) {
                for (size_t j = 0; j < d; ++j) out.features(row, j) = rng.normal() * sd[j];
                out.labels.push_back(c);
            }
        return out;
    }

    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const std::vector<size_t>& pool = by_class[size_t(c)];
        if (pool.empty())
            throw std::runtime_error("init_distilled: class " + std::to_string(c) + " is empty");
        if (cfg.init == DistillInit::RandomReal) {
            if (pool.size() < cfg.ipc)
                throw std::runtime_error("init_distilled: class " + std::to_string(c) + " has " +
                                         std::to_string(pool.size()) + " points, ipc is " +
                                         std::to_string(cfg.ipc));
            // Partial Fisher-Yates: first ipc entries are a draw without replacement.
            std::vector<size_t> pick = pool;
            for (size_t k = 0; k < cfg.ipc; ++k) {
                size_t r = k + rng.below(pick.size() - k);
                std::swap(pick[k], pick[r]);
                for (size_t j = 0; j < d; ++j) out.features(row, j) = real.features(pick[k], j);
                out.labels.push_back(c);
                ++row;
            }
        } else { // Mix: average of 4 same-class draws
            for (size_t k = 0; k < cfg.ipc; ++k, ++row) {
                for (int s = 0; s < 4; ++s) {
                    size_t src = pool[rng.below(pool.size())];
                    for (size_t j = 0; j < d; ++j) out.features(row, j) += real.features(src, j);
                }
                for (size_t j = 0; j < d; ++j) out.features(row, j) *= 0.25;
                out.labels.push_back(c);
            }
        }
    }
    return out;
}

// Pushes distilled points apart in one fixed embedder's feature space: ascent
// on within-class feature spread with unit-norm steps, displacement capped at
// hook_radius around the entry positions, class means restored afterwards.
static void apply_hook(LabeledDataset& distilled, const DistillConfig& cfg, Rng& rng) {
    size_t n = distilled.n(), d = distilled.dim();
    int C = distilled.num_classes;
    PriorEmbedder efix = sample_embedder(d, cfg.embed_dim, rng);

    Matrix anchor = distilled.features;
    Matrix means0 = class_means(anchor, distilled.labels, C, "distilled");
    std::vector<size_t> counts(size_t(C), 0);
    for (int y : distilled.labels) ++counts[size_t(y)];

    MlpCache cache;
    for (size_t it = 0; it < cfg.hook_iters; ++it) {
        const Matrix& g = mlp_forward(efix.net, distilled.features, cache);
        Matrix mc = class_means(g, distilled.labels, C, "distilled");
        Matrix dg(g.rows, g.cols);
        for (size_t i = 0; i < n; ++i) {
            int c = distilled.labels[i];
            double inv = 2.0 / double(counts[size_t(c)]);
            for (size_t j = 0; j < g.cols; ++j) dg(i, j) = (g(i, j) - mc(size_t(c), j)) * inv;
        }
        MlpGrads dummy;
        zero_grads(efix.net, dummy);
        Matrix gx;
        mlp_backward(efix.net, cache, dg, dummy, &gx);

        for (size_t i = 0; i < n; ++i) {
            double norm = 0.0;
            for (size_t j = 0; j < d; ++j) norm += gx(i, j) * gx(i, j);
            norm = std::max(std::sqrt(norm), 1e-12);
            for (size_t j = 0; j < d; ++j)
                distilled.features(i, j) += cfg.hook_step * gx(i, j) / norm;
            double disp = 0.0;
            for (size_t j = 0; j < d; ++j) {
                double e = distilled.features(i, j) - anchor(i, j);
                disp += e * e;
            }
            disp = std::sqrt(disp);
            if (disp > cfg.hook_radius) {
                double s = cfg.hook_radius / disp;
                for (size_t j = 0; j < d; ++j)
                    distilled.features(i, j) =
                        anchor(i, j) + (distilled.features(i, j) - anchor(i, j)) * s;
            }
        }
    }
    Matrix mnow = class_means(distilled.features, distilled.labels, C, "distilled");
    for (size_t i = 0; i < n; ++i) {
        int c = distilled.labels[i];
        for (size_t j = 0; j < d; ++j)
            distilled.features(i, j) += means0(size_t(c), j) - mnow(size_t(c), j);
    }
}

LabeledDataset distill(const LabeledDataset& real, const DistillConfig& cfg,
                       std::vector<double>* trace) {
    real.validate();
    LabeledDataset out = init_distilled(real, cfg);
    Rng emb_rng = Rng(cfg.seed).stream(1);
    size_t d = real.dim();

    for (size_t it = 0; it < cfg.iterations; ++it) {
        Matrix g(out.features.rows, out.features.cols);
        double loss = 0.0;
        for (size_t e = 0; e < cfg.num_embedders; ++e) {
            PriorEmbedder emb = sample_embedder(d, cfg.embed_dim, emb_rng);
            Matrix gi;
            loss += dm_loss_grad(real, out, emb, gi);
            for (size_t k = 0; k < g.size(); ++k) g.data[k] += gi.data[k];
        }
        double inv = 1.0 / double(cfg.num_embedders);
        loss *= inv;
        if (!std::isfinite(loss))
            throw std::runtime_error("distill: loss diverged at iteration " + std::to_string(it));
        for (size_t k = 0; k < g.size(); ++k) out.features.data[k] -= cfg.lr * g.data[k] * inv;
        if (trace != nullptr) trace->push_back(loss);
    }

    if (cfg.hook) {
        Rng hook_rng = Rng(cfg.seed).stream(2);
        apply_hook(out, cfg, hook_rng);
    }
    return out;
}

} // namespace diver

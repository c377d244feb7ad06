#pragma once
#include <vector>

#include "diver/dataset.hpp"
#include "diver/nn.hpp"

namespace diver {

enum class DistillInit { RandomReal, Noise, Mix };

struct DistillConfig {
    size_t ipc = 10;
    size_t iterations = 500;
    double lr = 0.5;
    size_t num_embedders = 4;
    size_t embed_dim = 32;
    DistillInit init = DistillInit::RandomReal;
    uint64_t seed = 1;
    // Optional post-pass that pushes points apart in one fixed random embedder's
    // feature space (bounded displacement, class means preserved), giving the
    // distilled set feature-level structure tied to that embedder family.
    bool hook = false;
    double hook_radius = 2.6;
    size_t hook_iters = 60;
    double hook_step = 0.1;
};

// Frozen random feature network (data -> 64 tanh -> embed_dim linear), or the
// identity map for tests.
struct PriorEmbedder {
    bool identity = false;
    Mlp net;
};

PriorEmbedder make_identity_embedder();
PriorEmbedder sample_embedder(size_t data_dim, size_t embed_dim, Rng& rng);

Matrix embed(const PriorEmbedder& e, const Matrix& x);

// Sum over classes of the squared distance between per-class embedded means.
double dm_loss(const LabeledDataset& real, const LabeledDataset& distilled,
               const PriorEmbedder& e);

// Same value, plus the gradient with respect to the distilled features.
double dm_loss_grad(const LabeledDataset& real, const LabeledDataset& distilled,
                    const PriorEmbedder& e, Matrix& grad);

LabeledDataset init_distilled(const LabeledDataset& real, const DistillConfig& cfg);

// Gradient descent on dm_loss averaged over freshly sampled embedders each
// iteration. iterations=0 returns the initialization unchanged (the random
// coreset baseline under init=random-real). The averaged loss per iteration is
// appended to `trace` when non-null.
LabeledDataset distill(const LabeledDataset& real, const DistillConfig& cfg,
                       std::vector<double>* trace = nullptr);

} // namespace diver

#pragma once
#include <string>
#include <vector>

#include "diver/nn.hpp"
#include "diver/schedule.hpp"
#include "diver/tensor.hpp"

namespace diver {

// Conditional noise predictor. The trunk consumes concat(z_t, time_embed[t],
// class_embed[label]); time embeddings are learned per sample step, class
// embeddings have one extra row (index num_classes) acting as the null label
// for classifier-free guidance.
struct EpsilonModel {
    Mlp trunk;
    Matrix time_embed;  // (num_sample_steps + 1) x kTimeEmbedDim, row 0 unused
    Matrix class_embed; // (num_classes + 1) x kClassEmbedDim, last row = null
    size_t latent_dim = 0;
    size_t num_classes = 0;
    size_t num_sample_steps = 0;
    std::vector<double> loss_trace; // mean loss per training epoch
};

constexpr size_t kTimeEmbedDim = 16;
constexpr size_t kClassEmbedDim = 16;
constexpr size_t kTrunkWidth = 128;

struct DenoiserTrainConfig {
    size_t epochs = 400;
    size_t batch_size = 256;
    double lr = 0.06;
    double null_drop_prob = 0.1;
    double clip_norm = 10.0;
    uint64_t seed = 1;
};

size_t null_label(const EpsilonModel& model);

EpsilonModel make_eps_model(size_t latent_dim, size_t num_classes, size_t num_sample_steps,
                            Rng& rng);

// Single-sample forward pass. t is a sample-step index in [1, num_sample_steps];
// label in [0, num_classes] where num_classes selects the null embedding.
std::vector<double> predict_eps(const EpsilonModel& model, const std::vector<double>& z_t,
                                size_t t, size_t label);

// Batched forward: one (t, label) pair per row.
Matrix predict_eps(const EpsilonModel& model, const Matrix& z_t, const std::vector<size_t>& t,
                   const std::vector<size_t>& labels);

// Classifier-free combination eps_null + omega * (eps_cond - eps_null).
std::vector<double> cfg_eps(const EpsilonModel& model, const std::vector<double>& z_t, size_t t,
                            size_t label, double omega);

// Minimizes E||eps - model(sqrt(abar) z0 + sqrt(1-abar) eps, t, c)||^2 with the
// label replaced by null at rate null_drop_prob. Steps t are drawn uniformly
// from the sample grid. Throws on non-finite loss, naming the epoch.
EpsilonModel train_denoiser(const Matrix& latents, const std::vector<int>& labels,
                            const NoiseSchedule& schedule, const StepGrid& grid,
                            const DenoiserTrainConfig& cfg);

void save_denoiser(const std::string& path, const EpsilonModel& model);
EpsilonModel load_denoiser(const std::string& path);

} // namespace diver

#pragma once
#include <functional>
#include <utility>
#include <vector>

#include "diver/codec.hpp"
#include "diver/dataset.hpp"
#include "diver/denoiser.hpp"
#include "diver/schedule.hpp"

namespace diver {

enum class GuidanceSigma { Marginal, Ddim };

struct RefineConfig {
    size_t t_f = 25; // forward-noise level for inheritance (grid index)
    size_t t_r = 50; // reverse process starts at this grid index
    size_t t_h = 40; // semantic window upper bound
    size_t t_l = 25; // semantic window lower bound
    double gamma = 0.1;
    double omega = 2.0;
    GuidanceSigma guidance_sigma = GuidanceSigma::Marginal;
    double eta = 0.0;
    uint64_t seed = 1;
    // Ablations: start the reverse loop at t_f instead of t_r; drop the
    // unconditional mix (plain conditional prediction) inside the window.
    bool start_at_tf = false;
    bool cfg_semantic_off = false;
};

void validate_refine_config(const RefineConfig& cfg, const StepGrid& grid);

// Encode a data-space point and noise it to level t_f. Returns (z0, z_init).
std::pair<std::vector<double>, std::vector<double>> inherit(const Codec& codec,
                                                            const NoiseSchedule& schedule,
                                                            const StepGrid& grid,
                                                            const std::vector<double>& x0,
                                                            size_t t_f, Rng& rng);

// One reverse step t -> t_prev given the predicted noise: form the clean
// estimate (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t), then re-noise it to
// t_prev, injecting fresh noise only when the schedule's eta makes sigma > 0.
std::vector<double> ddim_step(const std::vector<double>& eps, const std::vector<double>& z_t,
                              size_t t, size_t t_prev, const NoiseSchedule& schedule,
                              const StepGrid& grid, Rng& rng);

// Combined noise prediction as a function of (z_t, t, label, omega); lets tests
// substitute closed-form predictors for the trained model.
using GuidedEps =
    std::function<std::vector<double>(const std::vector<double>&, size_t, size_t, double)>;

GuidedEps model_eps(const EpsilonModel& model);

// ddim_step on the guided prediction, plus the semantic correction
// -gamma * (z_t - z0) * sigma_hat whenever t lies in [t_l, t_h].
std::vector<double> guided_step(const GuidedEps& eps_fn, const std::vector<double>& z_t, size_t t,
                                size_t t_prev, const std::vector<double>& z0, size_t label,
                                const RefineConfig& cfg, const NoiseSchedule& schedule,
                                const StepGrid& grid, Rng& rng);

// Full per-sample loop: inherit, reverse from t_r (or t_f) down to 1, decode.
// Each sample draws from its own stream of cfg.seed, so any `threads` count
// produces bitwise identical output.
LabeledDataset refine_dataset(const LabeledDataset& distilled, const Codec& codec,
                              const GuidedEps& eps_fn, const NoiseSchedule& schedule,
                              const StepGrid& grid, const RefineConfig& cfg, size_t threads = 1);

LabeledDataset refine_dataset(const LabeledDataset& distilled, const Codec& codec,
                              const EpsilonModel& model, const NoiseSchedule& schedule,
                              const StepGrid& grid, const RefineConfig& cfg, size_t threads = 1);

} // namespace diver
